//! Centralized numerical tolerances.

/// Tolerances used by state validation, channel validation and the
/// verification suite. One tuning point for all property tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Eigenvalues of density operators may dip this far below zero.
    pub positivity: f64,
    /// Allowed deviation for trace-one checks.
    pub trace: f64,
    /// Allowed deviation for Hermiticity checks.
    pub hermiticity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            positivity: 1e-9,
            trace: 1e-10,
            hermiticity: 1e-10,
        }
    }
}

impl Tolerances {
    /// Default tolerances, optionally scaled by the `BSMCERT_TOL`
    /// environment variable (interpreted as the positivity tolerance;
    /// trace and Hermiticity tolerances are scaled by the same factor).
    pub fn from_env() -> Self {
        let base = Tolerances::default();
        match std::env::var("BSMCERT_TOL").ok().and_then(|s| s.parse::<f64>().ok()) {
            Some(t) if t > 0.0 => {
                let scale = t / base.positivity;
                Tolerances {
                    positivity: t,
                    trace: base.trace * scale,
                    hermiticity: base.hermiticity * scale,
                }
            }
            _ => base,
        }
    }
}

pub const DEFAULT_TOL: Tolerances = Tolerances {
    positivity: 1e-9,
    trace: 1e-10,
    hermiticity: 1e-10,
};
