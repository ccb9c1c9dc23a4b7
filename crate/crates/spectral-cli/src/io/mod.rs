pub mod config;
pub mod csv;
pub mod model;

/// Decimal float formatting used by every text format: 17 significant
/// digits, which round-trips any `f64` exactly.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
