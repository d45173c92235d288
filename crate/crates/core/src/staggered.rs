//! Staircase partitioning of staggered designs and effect aggregation.
//!
//! Units are reordered so never-treated units come first, followed by
//! adopters from latest to earliest. With `k − 1` distinct adoption times the
//! reordered panel splits into `k` groups (rows) and `k` stages (column
//! ranges). Using 0-based indices, group `i` is observed in stages
//! `0..=k−1−i`, and each unobserved block `(i0, j0)` (with `j0 >= k − i0`) is
//! estimated from its own four-block sub-problem:
//!
//! * control rows: groups `0..k−j0`, treated rows: groups `k−j0..=i0`
//! * pre-period: stages `0..k−i0`, post-period: stages `k−i0..=j0`
//!
//! The target block is the last `N_{i0}` rows and last `T_{j0}` columns of
//! that sub-problem's imputed block.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourblock::{
    self, bilinear_variance, cell_ci, estimate_residuals, four_block_estimate, CellInference,
    FourBlockFit, FourBlockProblem, ResidualMatrix,
};
use crate::lowrank::check_finite;
use crate::normal;
use crate::par;

/// Outcome matrix with unit and time labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    values: DMatrix<f64>,
    units: Vec<String>,
    times: Vec<String>,
}

impl PanelData {
    pub fn new(values: DMatrix<f64>, units: Vec<String>, times: Vec<String>) -> Result<Self> {
        if units.len() != values.nrows() || times.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} unit labels and {} time labels for a {}x{} matrix",
                units.len(),
                times.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = units.iter().find(|u| !seen.insert(u.as_str())) {
            return Err(Error::Input(format!("duplicate unit label {dup:?}")));
        }
        check_finite(&values, "panel")?;
        Ok(Self {
            values,
            units,
            times,
        })
    }

    /// Panel with labels `0, 1, ...` on both axes.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let units = (0..values.nrows()).map(|i| i.to_string()).collect();
        let times = (0..values.ncols()).map(|t| t.to_string()).collect();
        Self::new(values, units, times)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn units(&self) -> &[String] {
        &self.units
    }
    pub fn times(&self) -> &[String] {
        &self.times
    }
    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-unit adoption column (0-based), `None` for never-treated units.
///
/// Unit `i` is treated at every column `t >= adoption[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdoptionSchedule {
    adoption: Vec<Option<usize>>,
}

impl AdoptionSchedule {
    pub fn new(adoption: Vec<Option<usize>>) -> Self {
        Self { adoption }
    }

    /// First `n1` units never treated, the rest treated from column `t1`.
    pub fn four_block(n: usize, n1: usize, t1: usize) -> Self {
        Self::new((0..n).map(|i| (i >= n1).then_some(t1)).collect())
    }

    pub fn len(&self) -> usize {
        self.adoption.len()
    }
    pub fn is_empty(&self) -> bool {
        self.adoption.is_empty()
    }
    pub fn adoption(&self, unit: usize) -> Option<usize> {
        self.adoption[unit]
    }
    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.adoption
    }

    pub fn is_treated(&self, unit: usize, time: usize) -> bool {
        matches!(self.adoption[unit], Some(a) if time >= a)
    }

    /// Units treated at `time`, in original order.
    pub fn treated_at(&self, time: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_treated(i, time)).collect()
    }

    /// Reorders units: unit `order[p]` moves to position `p`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self::new(order.iter().map(|&i| self.adoption[i]).collect())
    }
}

/// Group/stage decomposition of a staggered design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StaircasePartition {
    k: usize,
    group_sizes: Vec<usize>,
    stage_lengths: Vec<usize>,
    /// Staircase position → original unit.
    row_order: Vec<usize>,
    /// Original unit → staircase position.
    row_position: Vec<usize>,
    /// Original unit → group.
    unit_group: Vec<usize>,
    /// Distinct adoption columns, ascending.
    stage_boundaries: Vec<usize>,
    group_offsets: Vec<usize>,
    stage_offsets: Vec<usize>,
}

impl StaircasePartition {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }
    pub fn stage_lengths(&self) -> &[usize] {
        &self.stage_lengths
    }
    pub fn stage_boundaries(&self) -> &[usize] {
        &self.stage_boundaries
    }
    /// Original unit at staircase position `pos`.
    pub fn unit_at(&self, pos: usize) -> usize {
        self.row_order[pos]
    }
    /// Staircase position of original unit `unit`.
    pub fn position_of(&self, unit: usize) -> usize {
        self.row_position[unit]
    }
    pub fn row_order(&self) -> &[usize] {
        &self.row_order
    }
    pub fn group_of(&self, unit: usize) -> usize {
        self.unit_group[unit]
    }
    /// Original units of group `g` in staircase order.
    pub fn group_units(&self, g: usize) -> &[usize] {
        &self.row_order[self.group_offsets[g]..self.group_offsets[g + 1]]
    }
    /// Column range of stage `j`.
    pub fn stage_range(&self, j: usize) -> std::ops::Range<usize> {
        self.stage_offsets[j]..self.stage_offsets[j + 1]
    }
    pub fn stage_of(&self, time: usize) -> usize {
        self.stage_offsets[1..].iter().position(|&end| time < end).unwrap_or(self.k - 1)
    }
    pub fn n_units(&self) -> usize {
        self.row_order.len()
    }
    pub fn n_times(&self) -> usize {
        *self.stage_offsets.last().unwrap()
    }

    /// Whether group `g` is observed (untreated) during stage `j`.
    pub fn is_observed(&self, g: usize, j: usize) -> bool {
        g + j < self.k
    }

    /// All unobserved blocks `(i0, j0)`, in the order the estimator visits them.
    pub fn subproblem_ids(&self) -> Vec<SubproblemId> {
        let k = self.k;
        let mut ids = Vec::new();
        for group in 0..k {
            for stage in (k - group)..k {
                ids.push(SubproblemId { group, stage });
            }
        }
        ids
    }

    fn check_id(&self, id: SubproblemId) -> Result<()> {
        if id.group >= self.k || id.stage >= self.k || id.group + id.stage < self.k {
            return Err(Error::Domain(format!(
                "block {id} is not an unobserved block of a k={} staircase",
                self.k
            )));
        }
        Ok(())
    }

    /// Sizes `(N1, T1, N2, T2)` of the four-block problem for block `id`.
    pub fn subproblem_dims(&self, id: SubproblemId) -> Result<(usize, usize, usize, usize)> {
        self.check_id(id)?;
        let (k1, k2) = (self.k - id.stage, self.k - id.group);
        let n1 = self.group_offsets[k1];
        let n2 = self.group_offsets[id.group + 1] - n1;
        let t1 = self.stage_offsets[k2];
        let t2 = self.stage_offsets[id.stage + 1] - t1;
        Ok((n1, t1, n2, t2))
    }
}

/// An unobserved block of the staircase, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SubproblemId {
    pub group: usize,
    pub stage: usize,
}

impl std::fmt::Display for SubproblemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(group {}, stage {})", self.group, self.stage)
    }
}

/// Builds the staircase for `schedule` over `n_times` columns.
pub fn build_staircase(schedule: &AdoptionSchedule, n_times: usize) -> Result<StaircasePartition> {
    if schedule.is_empty() {
        return Err(Error::Input("adoption schedule is empty".into()));
    }
    if n_times == 0 {
        return Err(Error::Input("panel has no time periods".into()));
    }
    for (unit, a) in schedule.as_slice().iter().enumerate() {
        match *a {
            Some(0) => {
                return Err(Error::UnsupportedDesign(format!(
                    "unit {unit} adopts in the first period and has no pre-treatment observations"
                )))
            }
            Some(a) if a >= n_times => {
                return Err(Error::Input(format!(
                    "unit {unit} adopts at column {a}, beyond the last column {}",
                    n_times - 1
                )))
            }
            _ => {}
        }
    }
    if schedule.as_slice().iter().all(Option::is_some) {
        return Err(Error::UnsupportedDesign(
            "no never-treated units; at least one control unit is required".into(),
        ));
    }

    let mut boundaries: Vec<usize> = schedule.as_slice().iter().flatten().copied().collect();
    boundaries.sort_unstable();
    boundaries.dedup();
    let k = boundaries.len() + 1;

    // Group 0 never treated; group g >= 1 adopts at boundaries[k - 1 - g].
    let unit_group: Vec<usize> = schedule
        .as_slice()
        .iter()
        .map(|a| match a {
            None => 0,
            Some(a) => k - 1 - boundaries.binary_search(a).expect("boundary present"),
        })
        .collect();

    let mut row_order: Vec<usize> = (0..schedule.len()).collect();
    row_order.sort_by_key(|&u| unit_group[u]);
    let mut row_position = vec![0; row_order.len()];
    for (pos, &u) in row_order.iter().enumerate() {
        row_position[u] = pos;
    }

    let mut group_sizes = vec![0; k];
    for &g in &unit_group {
        group_sizes[g] += 1;
    }
    let mut group_offsets = vec![0; k + 1];
    for g in 0..k {
        group_offsets[g + 1] = group_offsets[g] + group_sizes[g];
    }

    let mut stage_offsets = Vec::with_capacity(k + 1);
    stage_offsets.push(0);
    stage_offsets.extend(boundaries.iter().copied());
    stage_offsets.push(n_times);
    let stage_lengths = stage_offsets.windows(2).map(|w| w[1] - w[0]).collect();

    Ok(StaircasePartition {
        k,
        group_sizes,
        stage_lengths,
        row_order,
        row_position,
        unit_group,
        stage_boundaries: boundaries,
        group_offsets,
        stage_offsets,
    })
}

/// Original units forming the rows of sub-problem `id` (controls first).
pub fn subproblem_units(part: &StaircasePartition, id: SubproblemId) -> Result<Vec<usize>> {
    let (n1, _, n2, _) = part.subproblem_dims(id)?;
    Ok(part.row_order[..n1 + n2].to_vec())
}

/// Observed blocks of the four-block sub-problem for unobserved block `id`.
pub fn extract_subproblem(
    y: &DMatrix<f64>,
    part: &StaircasePartition,
    id: SubproblemId,
) -> Result<FourBlockProblem> {
    if y.shape() != (part.n_units(), part.n_times()) {
        return Err(Error::Dimension(format!(
            "panel is {:?} but partition covers {:?}",
            y.shape(),
            (part.n_units(), part.n_times())
        )));
    }
    let (n1, t1, n2, t2) = part.subproblem_dims(id)?;
    let rows = &part.row_order;
    let y_a = DMatrix::from_fn(n1, t1, |i, t| y[(rows[i], t)]);
    let y_b = DMatrix::from_fn(n1, t2, |i, t| y[(rows[i], t1 + t)]);
    let y_c = DMatrix::from_fn(n2, t1, |i, t| y[(rows[n1 + i], t)]);
    FourBlockProblem::new(y_a, y_b, y_c)
}

/// Summary numbers for one fitted sub-problem.
#[derive(Debug, Clone, Serialize)]
pub struct SubproblemDiagnostics {
    pub id: SubproblemId,
    pub n1: usize,
    pub t1: usize,
    pub n2: usize,
    pub t2: usize,
    pub target_rows: usize,
    pub target_cols: usize,
    pub unit_gram_condition: f64,
    pub time_gram_condition: f64,
    pub isnr: f64,
}

/// A fitted sub-problem retained for bilinear inference.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub id: SubproblemId,
    /// Original units of the sub-problem's rows.
    pub units: Vec<usize>,
    pub fit: FourBlockFit,
    pub residuals: ResidualMatrix,
    pub diagnostics: SubproblemDiagnostics,
}

impl Subproblem {
    /// Local block-d row of the target block's first row.
    fn target_row_offset(&self, part: &StaircasePartition) -> usize {
        self.fit.n2() - part.group_sizes[self.id.group]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridCell {
    point: f64,
    variance: f64,
    subproblem: usize,
    // block-d coordinates within the sub-problem
    local_row: usize,
    local_col: usize,
}

/// Counterfactual estimates and variances for every treated cell.
#[derive(Debug, Clone)]
pub struct InferenceGrid {
    panel: PanelData,
    schedule: AdoptionSchedule,
    partition: StaircasePartition,
    rank: usize,
    alpha: f64,
    cells: Vec<Option<GridCell>>,
    subproblems: Vec<Subproblem>,
}

/// How variances of effects spanning several sub-problems are combined.
pub const CROSS_BLOCK_VARIANCE: &str = "sum of per-sub-problem variances (independence approximation)";

/// Runs four-block estimation and inference on every unobserved block.
pub fn staggered_conf(
    panel: &PanelData,
    schedule: &AdoptionSchedule,
    rank: usize,
    alpha: f64,
) -> Result<InferenceGrid> {
    fourblock::check_alpha(alpha)?;
    if schedule.len() != panel.n_units() {
        return Err(Error::Dimension(format!(
            "schedule has {} units, panel has {}",
            schedule.len(),
            panel.n_units()
        )));
    }
    let part = build_staircase(schedule, panel.n_times())?;
    let ids = part.subproblem_ids();

    for &id in &ids {
        let (n1, t1, _, _) = part.subproblem_dims(id)?;
        if rank == 0 || rank > n1.min(t1) {
            return Err(Error::RankInfeasible {
                rank,
                n1,
                t1,
                context: format!("sub-problem {id}"),
            });
        }
    }

    let y = panel.values();
    let subproblems: Vec<Subproblem> = par::try_map_indices(ids.len(), |s| {
        let id = ids[s];
        let ctx = || format!("sub-problem {id}");
        let problem = extract_subproblem(y, &part, id)?;
        let fit = four_block_estimate(&problem, rank).map_err(|e| e.in_context(ctx()))?;
        let residuals = estimate_residuals(&problem, &fit)?;
        let (ucond, vcond) = fit.gram_conditions();
        let diagnostics = SubproblemDiagnostics {
            id,
            n1: fit.n1(),
            t1: fit.t1(),
            n2: fit.n2(),
            t2: fit.t2(),
            target_rows: part.group_sizes[id.group],
            target_cols: part.stage_lengths[id.stage],
            unit_gram_condition: ucond,
            time_gram_condition: vcond,
            isnr: fourblock::isnr(&fit, &residuals),
        };
        Ok(Subproblem {
            id,
            units: subproblem_units(&part, id)?,
            fit,
            residuals,
            diagnostics,
        })
    })?;

    let (n, t) = y.shape();
    let mut cells: Vec<Option<GridCell>> = vec![None; n * t];
    for (s, sub) in subproblems.iter().enumerate() {
        let row0 = sub.target_row_offset(&part);
        let col0 = sub.fit.t2() - part.stage_lengths[sub.id.stage];
        let rows: Vec<usize> = (row0..sub.fit.n2()).collect();
        let cols: Vec<usize> = (col0..sub.fit.t2()).collect();
        let block = par::map_indices(rows.len(), |a| {
            cols.iter()
                .map(|&c| {
                    fourblock::cell_variance(
                        &sub.fit,
                        &sub.residuals,
                        sub.fit.n1() + rows[a],
                        sub.fit.t1() + c,
                    )
                    .expect("target cell lies in block d")
                })
                .collect::<Vec<_>>()
        });
        for (a, &lr) in rows.iter().enumerate() {
            let unit = sub.units[sub.fit.n1() + lr];
            for (b, &lc) in cols.iter().enumerate() {
                let time = sub.fit.t1() + lc;
                let slot = &mut cells[time * n + unit];
                assert!(slot.is_none(), "cell ({unit}, {time}) written twice");
                *slot = Some(GridCell {
                    point: sub.fit.m_hat_d[(lr, lc)],
                    variance: block[a][b],
                    subproblem: s,
                    local_row: lr,
                    local_col: lc,
                });
            }
        }
    }

    Ok(InferenceGrid {
        panel: panel.clone(),
        schedule: schedule.clone(),
        partition: part,
        rank,
        alpha,
        cells,
        subproblems,
    })
}

impl InferenceGrid {
    pub fn panel(&self) -> &PanelData {
        &self.panel
    }
    pub fn schedule(&self) -> &AdoptionSchedule {
        &self.schedule
    }
    pub fn partition(&self) -> &StaircasePartition {
        &self.partition
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn subproblems(&self) -> &[Subproblem] {
        &self.subproblems
    }
    pub fn diagnostics(&self) -> Vec<SubproblemDiagnostics> {
        self.subproblems.iter().map(|s| s.diagnostics.clone()).collect()
    }

    fn slot(&self, unit: usize, time: usize) -> Option<&GridCell> {
        let n = self.panel.n_units();
        if unit >= n || time >= self.panel.n_times() {
            return None;
        }
        self.cells[time * n + unit].as_ref()
    }

    /// Number of cells carrying an estimate.
    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the sub-problem that produced cell `(unit, time)`.
    pub fn source(&self, unit: usize, time: usize) -> Option<SubproblemId> {
        self.slot(unit, time).map(|c| self.subproblems[c.subproblem].id)
    }

    /// Counterfactual interval for a treated cell at the grid's level.
    pub fn cell(&self, unit: usize, time: usize) -> Option<CellInference> {
        self.cell_at(unit, time, self.alpha).ok()
    }

    /// Counterfactual interval for a treated cell at level `alpha`.
    pub fn cell_at(&self, unit: usize, time: usize, alpha: f64) -> Result<CellInference> {
        let c = self.slot(unit, time).ok_or_else(|| {
            Error::Domain(format!("cell ({unit}, {time}) is not a treated cell"))
        })?;
        cell_ci(c.point, c.variance, alpha)
    }

    /// Individual treatment effect `Y − M̂` with the reflected interval.
    pub fn ite(&self, unit: usize, time: usize) -> Result<CellInference> {
        self.ite_at(unit, time, self.alpha)
    }

    pub fn ite_at(&self, unit: usize, time: usize, alpha: f64) -> Result<CellInference> {
        let m = self.cell_at(unit, time, alpha)?;
        Ok(m.reflect(self.panel.values()[(unit, time)]))
    }

    /// Weighted effect `Σ_i w_i τ̂_{i,t}` over units treated at `time`.
    pub fn weighted_effect(&self, weights: &[f64], time: usize) -> Result<CellInference> {
        self.weighted_effect_at(weights, time, self.alpha)
    }

    pub fn weighted_effect_at(&self, weights: &[f64], time: usize, alpha: f64) -> Result<CellInference> {
        if weights.len() != self.panel.n_units() {
            return Err(Error::Input(format!(
                "{} weights for {} units",
                weights.len(),
                self.panel.n_units()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Input("weights must be finite".into()));
        }
        if time >= self.panel.n_times() {
            return Err(Error::Domain(format!("time {time} out of range")));
        }
        let treated = self.schedule.treated_at(time);
        if treated.is_empty() {
            return Err(Error::Domain(format!("no treated units at time {time}")));
        }

        let y = self.panel.values();
        let mut point = 0.0;
        // per sub-problem: (c1, local column)
        let mut blocks: Vec<(usize, Vec<f64>, usize)> = Vec::new();
        for &unit in &treated {
            let c = self.slot(unit, time).expect("treated cells are filled");
            point += weights[unit] * (y[(unit, time)] - c.point);
            let entry = match blocks.iter_mut().find(|b| b.0 == c.subproblem) {
                Some(e) => e,
                None => {
                    let n2 = self.subproblems[c.subproblem].fit.n2();
                    blocks.push((c.subproblem, vec![0.0; n2], c.local_col));
                    blocks.last_mut().unwrap()
                }
            };
            entry.1[c.local_row] = weights[unit];
        }
        let mut variance = 0.0;
        for (s, c1, col) in &blocks {
            let sub = &self.subproblems[*s];
            let mut c2 = vec![0.0; sub.fit.t2()];
            c2[*col] = 1.0;
            variance += bilinear_variance(&sub.fit, &sub.residuals, c1, &c2)?;
        }
        cell_ci(point, variance, alpha)
    }

    /// Average treatment effect on the units treated at `time`.
    pub fn atet(&self, time: usize) -> Result<CellInference> {
        self.atet_at(time, self.alpha)
    }

    pub fn atet_at(&self, time: usize, alpha: f64) -> Result<CellInference> {
        let weights = self.uniform_weights(time)?;
        self.weighted_effect_at(&weights, time, alpha)
    }

    fn uniform_weights(&self, time: usize) -> Result<Vec<f64>> {
        if time >= self.panel.n_times() {
            return Err(Error::Domain(format!("time {time} out of range")));
        }
        let treated = self.schedule.treated_at(time);
        if treated.is_empty() {
            return Err(Error::Domain(format!("no treated units at time {time}")));
        }
        let w = 1.0 / treated.len() as f64;
        let mut weights = vec![0.0; self.panel.n_units()];
        for u in treated {
            weights[u] = w;
        }
        Ok(weights)
    }

    /// Average effect over all treated cells.
    ///
    /// Within each target block the uniform weight is rank one, so every block
    /// contributes one bilinear variance; blocks are summed as independent.
    pub fn pooled_atet(&self, alpha: f64) -> Result<CellInference> {
        let total = self.len();
        if total == 0 {
            return Err(Error::Domain("design has no treated cells".into()));
        }
        let w = 1.0 / total as f64;
        let y = self.panel.values();
        let mut point = 0.0;
        for unit in 0..self.panel.n_units() {
            for time in 0..self.panel.n_times() {
                if let Some(c) = self.slot(unit, time) {
                    point += w * (y[(unit, time)] - c.point);
                }
            }
        }
        let mut variance = 0.0;
        for sub in &self.subproblems {
            let rows = self.partition.group_sizes[sub.id.group];
            let cols = self.partition.stage_lengths[sub.id.stage];
            let mut c1 = vec![0.0; sub.fit.n2()];
            let mut c2 = vec![0.0; sub.fit.t2()];
            for v in &mut c1[sub.fit.n2() - rows..] {
                *v = w;
            }
            for v in &mut c2[sub.fit.t2() - cols..] {
                *v = 1.0;
            }
            variance += bilinear_variance(&sub.fit, &sub.residuals, &c1, &c2)?;
        }
        cell_ci(point, variance, alpha)
    }
}

/// Whether rows of the significance report are per time period or pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportGrouping {
    PerTime,
    Pooled,
}

/// One row of the significance table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceRow {
    /// Time label, or `"all"` for the pooled row.
    pub time: String,
    pub treated: usize,
    pub positive: usize,
    pub negative: usize,
    pub null: usize,
    pub atet: f64,
    pub atet_se: f64,
    pub population_effect: Option<f64>,
    pub population_se: Option<f64>,
}

/// Relative resolution below which an interval is not considered to clear zero.
///
/// Scaled by the largest absolute outcome; keeps rounding error of noiseless
/// fits from being reported as an effect.
pub const SIGNIFICANCE_RESOLUTION: f64 = 1e-12;

/// Counts of significantly positive/negative/null ITEs plus ATET and
/// (optionally) a weighted population effect.
///
/// A unit is positive when its ITE interval at `alpha` lies above zero by
/// more than `SIGNIFICANCE_RESOLUTION · max|Y|`, negative when likewise below,
/// null otherwise. The pooled grouping
/// counts every treated cell once and leaves the population columns empty.
pub fn significance_report(
    grid: &InferenceGrid,
    alpha: f64,
    grouping: ReportGrouping,
    scale_weights: Option<&[f64]>,
) -> Result<Vec<SignificanceRow>> {
    fourblock::check_alpha(alpha)?;
    if let Some(w) = scale_weights {
        if w.len() != grid.panel.n_units() {
            return Err(Error::Input(format!(
                "{} scale weights for {} units",
                w.len(),
                grid.panel.n_units()
            )));
        }
    }
    let tol = SIGNIFICANCE_RESOLUTION * grid.panel.values().amax();
    let classify = |ci: &CellInference, counts: &mut (usize, usize, usize)| {
        if ci.lower > tol {
            counts.0 += 1;
        } else if ci.upper < -tol {
            counts.1 += 1;
        } else {
            counts.2 += 1;
        }
    };

    match grouping {
        ReportGrouping::PerTime => {
            let mut rows = Vec::new();
            for time in 0..grid.panel.n_times() {
                let treated = grid.schedule.treated_at(time);
                if treated.is_empty() {
                    continue;
                }
                let mut counts = (0, 0, 0);
                for &u in &treated {
                    classify(&grid.ite_at(u, time, alpha)?, &mut counts);
                }
                let atet = grid.atet_at(time, alpha)?;
                let pop = scale_weights
                    .map(|w| grid.weighted_effect_at(w, time, alpha))
                    .transpose()?;
                rows.push(SignificanceRow {
                    time: grid.panel.times()[time].clone(),
                    treated: treated.len(),
                    positive: counts.0,
                    negative: counts.1,
                    null: counts.2,
                    atet: atet.point,
                    atet_se: atet.se(),
                    population_effect: pop.map(|p| p.point),
                    population_se: pop.map(|p| p.se()),
                });
            }
            Ok(rows)
        }
        ReportGrouping::Pooled => {
            let mut counts = (0, 0, 0);
            let mut treated = 0;
            for time in 0..grid.panel.n_times() {
                for u in grid.schedule.treated_at(time) {
                    treated += 1;
                    classify(&grid.ite_at(u, time, alpha)?, &mut counts);
                }
            }
            let atet = grid.pooled_atet(alpha)?;
            Ok(vec![SignificanceRow {
                time: "all".into(),
                treated,
                positive: counts.0,
                negative: counts.1,
                null: counts.2,
                atet: atet.point,
                atet_se: atet.se(),
                population_effect: None,
                population_se: None,
            }])
        }
    }
}

/// Two-sided critical value used for the grid's intervals.
pub fn critical_value(alpha: f64) -> f64 {
    normal::two_sided_critical(alpha)
}
