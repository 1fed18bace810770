//! Text formatting shared by the CSV writers.

/// Scientific notation with 17 significant digits, enough to round-trip `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
