//! Tolerances and reporting shared by the acceptance suite in
//! `tests/acceptance.rs`.

use std::io::Write;

/// Monte Carlo trials per grid point.
pub const TRIALS: usize = 2000;
/// Sample sizes 2^10 through 2^15.
pub const N_GRID: [f64; 6] = [1024.0, 2048.0, 4096.0, 8192.0, 16384.0, 32768.0];
/// Allowed deviation of a fitted exponent in n.
pub const N_SLOPE_TOL: f64 = 0.15;
/// Allowed deviation of a fitted exponent in K.
pub const K_SLOPE_TOL: f64 = 0.3;
pub const R2_MIN: f64 = 0.95;
/// Upper 5% point of the standard normal.
pub const Z_95: f64 = 1.644_853_626_951_472_2;

/// Writes the one-line verdict for a criterion, then fails the calling
/// test if it did not pass. The line goes straight to the stderr handle so
/// the test harness does not swallow it for passing tests.
pub fn verdict(criterion: u32, pass: bool, detail: &str) {
    let line = format!("[criterion {criterion}] {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

pub fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}
