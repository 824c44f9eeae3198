//! Inner bounds on the joint time-rate region of discrete memoryless
//! network communication problems.
//!
//! The toolkit works in four stages:
//!
//! 1. [`model`] — domain types for finite-alphabet memoryless networks:
//!    a channel table, message side-information and demand matrices, and
//!    per-demand decoding-time constraints.
//! 2. [`expansion`] — the time-expansion reduction: each message is split
//!    into sub-messages indexed by per-node decoding schedules, producing
//!    an expanded problem and one classical phase problem per distinct
//!    decoding time.
//! 3. [`oracles`] / [`bound`] — single-shot capacity computations for the
//!    tractable phase classes (point-to-point, common-message multicast,
//!    two-receiver degraded broadcast) composed into an achievable-rate
//!    frontier by linear programming over the per-phase constraints.
//! 4. [`sim`] — seeded Monte Carlo simulation of concrete phase-concatenated
//!    codes with staged decoding deadlines over erasure-type broadcast
//!    channels, validating computed rate points empirically.
//!
//! Rates are in bits per blocklength-normalized channel use; logs are base 2
//! throughout.

pub mod bound;
pub mod expansion;
pub mod linprog;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod sim;
pub mod specfile;

pub use model::{
    time_partition, validate_problem, Channel, NetworkProblem, RateVector, TimeConstraints,
    TimePartition, ValidationReport,
};

/// Errors produced across the toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid problem: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("sub-message cap exceeded: {total} sub-messages, cap {cap}")]
    SubMessageCap { total: usize, cap: usize },
    #[error("grid cap exceeded: {points} grid points, cap {cap}")]
    GridCap { points: u128, cap: u128 },
    #[error("unsupported phase structure in phase {phase}: {detail}")]
    UnsupportedPhase { phase: usize, detail: String },
    #[error("unsupported channel class: {0}")]
    UnsupportedChannel(String),
    #[error("rate exceeds phase budget: {0}")]
    RateBudget(String),
    #[error("non-integral rescaling: {0}")]
    NonIntegralRescale(String),
    #[error("no trials")]
    NoTrials,
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rounds `x` to 9 significant digits.
///
/// All floating-point values that end up in reports pass through here so
/// that repeated runs produce byte-identical output.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x + 0.0; // normalize -0.0
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(8 - mag);
    (x * scale).round() / scale
}

/// Formats `x` with 9 significant digits for text reports.
pub fn fmt_sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_sig9_stability() {
        assert_eq!(round_sig9(0.375), 0.375);
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(12345.678949), 12345.6789);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(round_sig9(-0.5), -0.5);
    }

    #[test]
    fn fmt_sig9_format() {
        assert_eq!(fmt_sig9(0.375), "3.75000000e-1");
        assert_eq!(fmt_sig9(1.0), "1.00000000e0");
    }
}
