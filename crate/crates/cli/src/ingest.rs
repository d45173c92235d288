//! Wide panel, adoption and weight CSV files.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use panelci_core::staggered::{AdoptionSchedule, PanelData};

use crate::error::{CliError, Result};
use crate::format::num;

/// Literal used in adoption files for units that never adopt.
pub const NEVER: &str = "never";

/// A wide panel file as read, before any columns are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    pub units: Vec<String>,
    pub times: Vec<String>,
    /// `cells[i][t]`, `None` where the file has an empty cell.
    pub cells: Vec<Vec<Option<f64>>>,
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| format!(":{}", p.line())).unwrap_or_default();
    CliError::Data(format!("{}{line}: {e}", path.display()))
}

/// Ordering key: numeric when every label parses as a number, text otherwise.
fn labels_increasing(labels: &[String]) -> std::result::Result<(), (usize, usize)> {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    let bad = match numeric {
        Some(v) => v.windows(2).position(|w| !(w[0] < w[1])),
        None => labels.windows(2).position(|w| w[0] >= w[1]),
    };
    match bad {
        Some(i) => Err((i, i + 1)),
        None => Ok(()),
    }
}

/// Reads a wide panel: first column unit ids, one column per time label.
pub fn read_panel(path: &Path) -> Result<RawPanel> {
    let mut rdr = open(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 {
        return Err(CliError::Data(format!(
            "{}: header needs a unit column and at least one time column",
            path.display()
        )));
    }
    let times: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Err((a, b)) = labels_increasing(&times) {
        return Err(CliError::Data(format!(
            "{}: time labels must be strictly increasing, got {:?} before {:?}",
            path.display(),
            times[a],
            times[b]
        )));
    }

    let mut units = Vec::new();
    let mut cells = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let unit = record[0].to_string();
        if unit.is_empty() {
            return Err(CliError::Data(format!("{}:{line}: empty unit id", path.display())));
        }
        let mut row = Vec::with_capacity(times.len());
        for (j, field) in record.iter().skip(1).enumerate() {
            if field.is_empty() {
                row.push(None);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}:{line}: value {field:?} for unit {unit:?}, time {:?} is not a number",
                    path.display(),
                    times[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{}:{line}: value for unit {unit:?}, time {:?} is not finite",
                    path.display(),
                    times[j]
                )));
            }
            row.push(Some(v));
        }
        units.push(unit);
        cells.push(row);
    }
    if units.is_empty() {
        return Err(CliError::Data(format!("{}: no unit rows", path.display())));
    }
    let mut seen = HashMap::new();
    for (i, u) in units.iter().enumerate() {
        if let Some(j) = seen.insert(u.as_str(), i) {
            return Err(CliError::Data(format!(
                "{}: unit {u:?} appears in rows {} and {}",
                path.display(),
                j + 1,
                i + 1
            )));
        }
    }
    Ok(RawPanel { units, times, cells })
}

/// Adoption label per unit: `Some(time label)` or `None` for never.
pub fn read_adoption(path: &Path) -> Result<Vec<(String, Option<String>)>> {
    let mut rdr = open(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 2 {
        return Err(CliError::Data(format!(
            "{}: expected two columns (unit id, adoption time), found {}",
            path.display(),
            header.len()
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let label = &record[1];
        let adoption = if label == NEVER { None } else { Some(label.to_string()) };
        out.push((record[0].to_string(), adoption));
    }
    Ok(out)
}

/// Per-unit weights, e.g. population counts.
pub fn read_weights(path: &Path, units: &[String]) -> Result<Vec<f64>> {
    let mut rdr = open(path)?;
    let mut map: HashMap<String, f64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(CliError::Data(format!(
                "{}:{line}: expected unit id and weight",
                path.display()
            )));
        }
        let w: f64 = record[1].parse().ok().filter(|w: &f64| w.is_finite()).ok_or_else(|| {
            CliError::Data(format!("{}:{line}: weight {:?} is not a finite number", path.display(), &record[1]))
        })?;
        if map.insert(record[0].to_string(), w).is_some() {
            return Err(CliError::Data(format!(
                "{}:{line}: unit {:?} listed twice",
                path.display(),
                &record[0]
            )));
        }
    }
    units
        .iter()
        .map(|u| {
            map.get(u)
                .copied()
                .ok_or_else(|| CliError::Data(format!("{}: no weight for unit {u:?}", path.display())))
        })
        .collect()
}

/// Panel and schedule ready for analysis.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub panel: PanelData,
    pub schedule: AdoptionSchedule,
    /// Time labels dropped before analysis, in file order.
    pub excluded: Vec<String>,
}

/// Assembles the analysis matrix in file unit order.
///
/// Excluded time columns are dropped first; a missing cell in any remaining
/// column is an error listing every such cell. Adoption labels are mapped to
/// column indices after exclusion; a unit adopting in an excluded period is
/// treated from the next kept period, or never if none follows.
pub fn assemble(
    raw: &RawPanel,
    adoption: &[(String, Option<String>)],
    exclude: &[String],
) -> Result<Ingested> {
    for label in exclude {
        if !raw.times.contains(label) {
            return Err(CliError::Config(format!(
                "excluded time {label:?} is not a time label of the panel"
            )));
        }
    }
    let kept: Vec<usize> = (0..raw.times.len())
        .filter(|&j| !exclude.contains(&raw.times[j]))
        .collect();
    if kept.is_empty() {
        return Err(CliError::Config("every time column is excluded".into()));
    }

    let mut missing = Vec::new();
    for (i, row) in raw.cells.iter().enumerate() {
        for &j in &kept {
            if row[j].is_none() {
                missing.push(format!("({}, {})", raw.units[i], raw.times[j]));
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "{} missing cell(s) in non-excluded columns: {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let values = DMatrix::from_fn(raw.units.len(), kept.len(), |i, c| {
        raw.cells[i][kept[c]].expect("checked above")
    });
    let times: Vec<String> = kept.iter().map(|&j| raw.times[j].clone()).collect();

    let index: HashMap<&str, usize> = raw.units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut schedule: Vec<Option<Option<usize>>> = vec![None; raw.units.len()];
    for (unit, label) in adoption {
        let &i = index
            .get(unit.as_str())
            .ok_or_else(|| CliError::Data(format!("adoption file names unknown unit {unit:?}")))?;
        if schedule[i].is_some() {
            return Err(CliError::Data(format!("unit {unit:?} appears twice in the adoption file")));
        }
        let column = match label {
            None => None,
            Some(l) => {
                let pos = raw.times.iter().position(|t| t == l).ok_or_else(|| {
                    CliError::Data(format!(
                        "adoption time {l:?} of unit {unit:?} is neither a time label nor {NEVER:?}"
                    ))
                })?;
                kept.iter().position(|&j| j >= pos)
            }
        };
        schedule[i] = Some(column);
    }
    if let Some(i) = schedule.iter().position(Option::is_none) {
        return Err(CliError::Data(format!(
            "unit {:?} has no row in the adoption file",
            raw.units[i]
        )));
    }

    let panel = PanelData::new(values, raw.units.clone(), times)?;
    Ok(Ingested {
        panel,
        schedule: AdoptionSchedule::new(schedule.into_iter().map(Option::unwrap).collect()),
        excluded: exclude.to_vec(),
    })
}

/// Reads panel and adoption files and assembles them.
pub fn ingest(panel: &Path, adoption: &Path, exclude: &[String]) -> Result<Ingested> {
    let raw = read_panel(panel)?;
    let adopt = read_adoption(adoption)?;
    assemble(&raw, &adopt, exclude)
}

/// Writes a panel as a wide CSV that [`read_panel`] reads back bit-exactly.
pub fn write_panel(path: &Path, panel: &PanelData) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["unit".to_string()];
        header.extend(panel.times().iter().cloned());
        w.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
        let y = panel.values();
        for (i, unit) in panel.units().iter().enumerate() {
            let mut row = vec![unit.clone()];
            row.extend((0..panel.n_times()).map(|t| num(y[(i, t)])));
            w.write_record(&row).map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_file(path, &out)
}

/// Writes the adoption schedule with the panel's labels.
pub fn write_adoption(path: &Path, panel: &PanelData, schedule: &AdoptionSchedule) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["unit", "adoption"]).map_err(|e| CliError::Data(e.to_string()))?;
        for (i, unit) in panel.units().iter().enumerate() {
            let label = schedule
                .adoption(i)
                .map_or(NEVER.to_string(), |t| panel.times()[t].clone());
            w.write_record([unit.as_str(), label.as_str()])
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_file(path, &out)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

/// Converts a long `unit,time,value` file into a wide panel.
///
/// Units keep their order of first appearance; time labels are sorted
/// numerically when all are numbers, as text otherwise. Absent pairs become
/// empty cells.
pub fn long_to_wide(path: &Path) -> Result<RawPanel> {
    let mut rdr = open(path)?;
    let mut units: Vec<String> = Vec::new();
    let mut times: Vec<String> = Vec::new();
    let mut entries: HashMap<(String, String), f64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(CliError::Data(format!("{}:{line}: expected unit,time,value", path.display())));
        }
        let (u, t) = (record[0].to_string(), record[1].to_string());
        let v: f64 = record[2].parse().map_err(|_| {
            CliError::Data(format!("{}:{line}: value {:?} is not a number", path.display(), &record[2]))
        })?;
        if !units.contains(&u) {
            units.push(u.clone());
        }
        if !times.contains(&t) {
            times.push(t.clone());
        }
        if entries.insert((u.clone(), t.clone()), v).is_some() {
            return Err(CliError::Data(format!(
                "{}:{line}: duplicate entry for unit {u:?}, time {t:?}",
                path.display()
            )));
        }
    }
    let numeric: Option<Vec<f64>> = times.iter().map(|t| t.parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => times.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap())),
        None => times.sort(),
    }
    let cells = units
        .iter()
        .map(|u| times.iter().map(|t| entries.get(&(u.clone(), t.clone())).copied()).collect())
        .collect();
    Ok(RawPanel { units, times, cells })
}

/// Writes a raw panel, leaving missing cells empty.
pub fn write_raw_panel(path: &Path, raw: &RawPanel) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["unit".to_string()];
        header.extend(raw.times.iter().cloned());
        w.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
        for (unit, row) in raw.units.iter().zip(&raw.cells) {
            let mut rec = vec![unit.clone()];
            rec.extend(row.iter().map(|c| c.map(num).unwrap_or_default()));
            w.write_record(&rec).map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_file(path, &out)
}
