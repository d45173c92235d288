//! Number formatting for machine and human tables.

/// 17 significant digits; parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rounded companion for human-facing tables.
pub fn rounded(x: f64) -> String {
    format!("{x:.3}")
}

pub fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_default()
}
