//! Seeded fixtures written to temporary directories.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use panelci_cli::ingest::{write_adoption, write_panel};
use panelci_core::staggered::{AdoptionSchedule, PanelData};
use panelci_core::synth::{SimRng, Stream};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub panel: PathBuf,
    pub adoption: PathBuf,
    pub signal: DMatrix<f64>,
    pub schedule: AdoptionSchedule,
}

impl Fixture {
    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn labels(prefix: &str, n: usize, start: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{}", start + i)).collect()
}

/// Writes `y` and `schedule` with unit labels `U00..` and years from 2001.
pub fn write_fixture(y: &DMatrix<f64>, signal: DMatrix<f64>, schedule: AdoptionSchedule) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let units: Vec<String> = (0..y.nrows()).map(|i| format!("U{i:02}")).collect();
    let panel = PanelData::new(y.clone(), units, labels("", y.ncols(), 2001)).unwrap();
    let panel_path = dir.path().join("panel.csv");
    let adoption_path = dir.path().join("adoption.csv");
    write_panel(&panel_path, &panel).unwrap();
    write_adoption(&adoption_path, &panel, &schedule).unwrap();
    Fixture {
        dir,
        panel: panel_path,
        adoption: adoption_path,
        signal,
        schedule,
    }
}

fn rank_two(rng: &mut SimRng, n: usize, t: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 3.0 + rng.standard_normal() } else { rng.standard_normal() });
    let b = DMatrix::from_fn(t, 2, |_, j| if j == 0 { 3.0 + rng.standard_normal() } else { rng.standard_normal() });
    a * b.transpose()
}

/// Three adoption groups (never, 2013, 2017) in shuffled unit order, rank-2
/// signal, unit noise and an effect of `effect` on treated cells.
pub fn k3(seed: u64, effect: f64) -> Fixture {
    let (n, t) = (30, 20);
    let mut rng = SimRng::new(seed, Stream::Generate, 0);
    let signal = rank_two(&mut rng, n, t);
    let mut adoption: Vec<Option<usize>> = (0..n)
        .map(|i| match i % 3 {
            0 => None,
            1 => Some(12),
            _ => Some(16),
        })
        .collect();
    for i in 0..n {
        let j = rng.int_inclusive(i, n - 1);
        adoption.swap(i, j);
    }
    let schedule = AdoptionSchedule::new(adoption);
    let y = DMatrix::from_fn(n, t, |i, j| {
        let e = if schedule.is_treated(i, j) { effect } else { 0.0 };
        signal[(i, j)] + e + rng.standard_normal()
    });
    write_fixture(&y, signal, schedule)
}

/// Noiseless rank-1 four-block panel: 6 controls, 4 treated from column 5.
pub fn noiseless_four_block() -> Fixture {
    let a = [1.0, 2.0, -1.0, 0.5, 3.0, 1.5, -2.0, 2.5, 0.75, 1.25];
    let b = [2.0, -1.0, 0.5, 1.0, 3.0, -0.5, 1.5, 2.0];
    let signal = DMatrix::from_fn(10, 8, |i, j| a[i] * b[j]);
    let schedule = AdoptionSchedule::four_block(10, 6, 5);
    write_fixture(&signal.clone(), signal, schedule)
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Parsed CSV: header and rows of fields.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

pub fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

pub const MODEL_TOML: &str = r#"
[model]
u_mean = [1.0, 0.0]
v_mean = [1.0, 0.0]
u_cov = [[0.25, 0.0], [0.0, 1.0]]
v_cov = [[0.25, 0.0], [0.0, 1.0]]
noise_var = 1.0
"#;
