//! Closed-form certification bounds: from observed statistics (four CHSH
//! values β_k, outcome probabilities p_k, four-partite Bell value δ) to
//! certified fidelities of the extracted states, the sources, and the Bell
//! state measurement itself, plus the probabilistic/partial variants.

use serde::{Deserialize, Serialize};

use crate::scenario::{ExperimentStatistics, MAX_CHSH};
use crate::{Error, Result};

/// Constants entering the bounds.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstants;

impl BoundConstants {
    /// CHSH threshold β* = 2(8+7√2)/17 above which the single-outcome
    /// certificate becomes nontrivial.
    pub fn beta_star() -> f64 {
        2.0 * (8.0 + 7.0 * 2f64.sqrt()) / 17.0
    }

    /// Threshold of the source certificate.
    pub const DELTA_STAR: f64 = 0.744;

    /// Slope of the linear fidelity-squared bound F² ≥ sβ + μ.
    pub fn s() -> f64 {
        (4.0 + 5.0 * 2f64.sqrt()) / 16.0
    }

    /// Offset of the linear fidelity-squared bound.
    pub fn mu() -> f64 {
        -(1.0 + 2.0 * 2f64.sqrt()) / 4.0
    }
}

/// Qualifiers attached to a computed bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// The bound does not certify anything beyond the trivial value.
    pub non_certifying: bool,
    /// The regime condition of the bound is violated; the data are
    /// compatible with a vanishing rate.
    pub regime_violated: bool,
    /// An intermediate value was clamped into its valid range.
    pub clamped: bool,
}

impl Flags {
    pub fn merge(self, other: Flags) -> Flags {
        Flags {
            non_certifying: self.non_certifying || other.non_certifying,
            regime_violated: self.regime_violated || other.regime_violated,
            clamped: self.clamped || other.clamped,
        }
    }
}

/// A certified lower bound in [0, 1] with qualifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub flags: Flags,
}

impl Bound {
    fn plain(value: f64) -> Bound {
        Bound {
            value,
            flags: Flags::default(),
        }
    }
}

/// Extracted-state fidelity F°_k = √(1 − ½(2√2−β)/(2√2−β*)) from a CHSH
/// value. Returns 0 with the `clamped` flag when the radicand is negative,
/// and sets `non_certifying` when the result does not beat 1/√2.
pub fn f_o_from_chsh(beta: f64) -> Result<Bound> {
    if beta.abs() > MAX_CHSH + 1e-9 {
        return Err(Error::ParameterOutOfRange {
            name: "beta",
            value: beta,
            min: -MAX_CHSH,
            max: MAX_CHSH,
        });
    }
    let radicand = 1.0 - 0.5 * (MAX_CHSH - beta) / (MAX_CHSH - BoundConstants::beta_star());
    let mut flags = Flags::default();
    let value = if radicand < 0.0 {
        flags.clamped = true;
        0.0
    } else {
        radicand.min(1.0).sqrt()
    };
    if value <= 1.0 / 2f64.sqrt() + 1e-12 {
        flags.non_certifying = true;
    }
    Ok(Bound { value, flags })
}

/// Combined output certificate F° = Σ_k √(p_k/4) F°_k.
pub fn f_o_combined(p: &[f64; 4], f_o_k: &[f64; 4]) -> Bound {
    let value: f64 = (0..4).map(|k| (p[k].max(0.0) / 4.0).sqrt() * f_o_k[k]).sum();
    Bound::plain(value.clamp(0.0, 1.0))
}

/// Source certificate F^i = √(¼(1 + 3(δ−δ*)/(1−δ*))) from the four-partite
/// Bell value δ.
pub fn f_i_from_delta(delta: f64) -> Result<Bound> {
    if !(-1e-9..=1.0 + 1e-9).contains(&delta) {
        return Err(Error::ParameterOutOfRange {
            name: "delta",
            value: delta,
            min: 0.0,
            max: 1.0,
        });
    }
    let ds = BoundConstants::DELTA_STAR;
    let radicand = 0.25 * (1.0 + 3.0 * (delta - ds) / (1.0 - ds));
    let mut flags = Flags::default();
    let value = if radicand < 0.0 {
        flags.clamped = true;
        0.0
    } else {
        radicand.min(1.0).sqrt()
    };
    Ok(Bound { value, flags })
}

fn acos_clamped(x: f64, flags: &mut Flags) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        flags.clamped = true;
    }
    x.clamp(0.0, 1.0).acos()
}

/// BSM certificate F(M,M̄) ≥ cos(arccos F° + arccos F^i). Returns 0 with
/// `non_certifying` when the angle sum exceeds π/2.
pub fn bsm_fidelity_bound(f_o: f64, f_i: f64) -> Bound {
    let mut flags = Flags::default();
    let angle = acos_clamped(f_o, &mut flags) + acos_clamped(f_i, &mut flags);
    if angle > std::f64::consts::FRAC_PI_2 {
        flags.non_certifying = true;
        return Bound {
            value: 0.0,
            flags,
        };
    }
    Bound {
        value: angle.cos().clamp(0.0, 1.0),
        flags,
    }
}

/// BSM certificate from post-measurement statistics only, valid for two
/// independent sources: cos(arccos F° + arccos((Σ_k p_k (F°_k)²)²)).
pub fn bsm_fidelity_independent_sources(p: &[f64; 4], f_o_k: &[f64; 4]) -> Bound {
    let f_o = f_o_combined(p, f_o_k);
    let inner: f64 = (0..4).map(|k| p[k].max(0.0) * f_o_k[k] * f_o_k[k]).sum();
    let mut flags = f_o.flags;
    let angle = acos_clamped(f_o.value, &mut flags) + acos_clamped(inner * inner, &mut flags);
    if angle > std::f64::consts::FRAC_PI_2 {
        flags.non_certifying = true;
        return Bound { value: 0.0, flags };
    }
    Bound {
        value: angle.cos().clamp(0.0, 1.0),
        flags,
    }
}

/// Conditional fidelity bound for one branch of a probabilistic/partial
/// BSM. Valid in the regime (F^i)² + p₀ ≥ 1; otherwise the observed values
/// are compatible with a vanishing rate and the bound is 0 with
/// `regime_violated`.
pub fn conditional_fidelity_bound(f_o_0: f64, f_i: f64, p_0: f64) -> Result<Bound> {
    if !(p_0 > 0.0 && p_0 <= 1.0 + 1e-12) {
        return Err(Error::ParameterOutOfRange {
            name: "p_0",
            value: p_0,
            min: f64::MIN_POSITIVE,
            max: 1.0,
        });
    }
    let mut flags = Flags::default();
    if f_i * f_i + p_0 < 1.0 {
        flags.regime_violated = true;
        return Ok(Bound { value: 0.0, flags });
    }
    let inner = ((p_0 + f_i * f_i - 1.0) / p_0).max(0.0).sqrt();
    let angle = acos_clamped(f_o_0, &mut flags) + acos_clamped(inner, &mut flags);
    if angle > std::f64::consts::FRAC_PI_2 {
        flags.non_certifying = true;
        return Ok(Bound { value: 0.0, flags });
    }
    Ok(Bound {
        value: angle.cos().clamp(0.0, 1.0),
        flags,
    })
}

/// Success-factor bound ζ₀ ≥ 4(√(p₀(F^i)²) − √((1−p₀)(1−(F^i)²)))²,
/// floored at 0 and capped at 1 (with `clamped`) since ζ₀ ≤ 1.
pub fn zeta_lower_bound(f_i: f64, p_0: f64) -> Result<Bound> {
    if !(p_0 > 0.0 && p_0 <= 1.0 + 1e-12) {
        return Err(Error::ParameterOutOfRange {
            name: "p_0",
            value: p_0,
            min: f64::MIN_POSITIVE,
            max: 1.0,
        });
    }
    let fi2 = (f_i * f_i).clamp(0.0, 1.0);
    let diff = (p_0 * fi2).sqrt() - ((1.0 - p_0).max(0.0) * (1.0 - fi2)).sqrt();
    let raw = if diff > 0.0 { 4.0 * diff * diff } else { 0.0 };
    let mut flags = Flags::default();
    let value = if raw > 1.0 {
        flags.clamped = true;
        1.0
    } else {
        raw
    };
    Ok(Bound { value, flags })
}

/// Lemma-1 lower bound on the fidelity of conditional states:
/// (F − √((1−p₀)(1−q₀)))/√(q₀p₀). May be negative (vacuous).
pub fn lemma1_rhs(f: f64, p_0: f64, q_0: f64) -> Result<f64> {
    if p_0 * q_0 <= 0.0 {
        return Err(Error::ParameterOutOfRange {
            name: "p_0*q_0",
            value: p_0 * q_0,
            min: f64::MIN_POSITIVE,
            max: 1.0,
        });
    }
    Ok((f - ((1.0 - p_0) * (1.0 - q_0)).max(0.0).sqrt()) / (q_0 * p_0).sqrt())
}

/// Certification mode selecting which bounds are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificationMode {
    Deterministic,
    IndependentSources,
    Partial,
}

/// All certified quantities computed from one set of statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateReport {
    pub mode: CertificationMode,
    /// Per-outcome extracted-state fidelities F°_k.
    pub f_o_k: [f64; 4],
    /// Combined output certificate F°.
    pub f_o: f64,
    /// Source certificate F^i (requires δ).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_i: Option<f64>,
    /// Deterministic BSM certificate cos(arccos F° + arccos F^i).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_bsm: Option<f64>,
    /// BSM certificate from post-measurement statistics only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_bsm_independent_sources: Option<f64>,
    /// Conditional fidelity bound for outcome 0.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_cond: Option<f64>,
    /// Success-factor bound ζ₀.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub zeta_0: Option<f64>,
    pub flags: Flags,
}

/// Evaluates the bounds selected by `mode` on the given statistics.
///
/// Deterministic mode requires all four β_k, the p_k and δ; independent
/// sources mode requires β_k and p_k; partial mode requires β₀, p₀ and δ.
pub fn certificate_report(
    stats: &ExperimentStatistics,
    mode: CertificationMode,
) -> Result<CertificateReport> {
    stats.validate()?;
    let mut flags = Flags::default();
    let mut f_o_k = [0.0f64; 4];
    let needed: &[usize] = match mode {
        CertificationMode::Partial => &[0],
        _ => &[0, 1, 2, 3],
    };
    for &k in needed {
        if !stats.beta_defined[k] {
            return Err(Error::ZeroProbability(k));
        }
        let b = f_o_from_chsh(stats.beta[k])?;
        f_o_k[k] = b.value;
        flags = flags.merge(b.flags);
    }
    let f_o = f_o_combined(&stats.p, &f_o_k);
    flags = flags.merge(f_o.flags);

    let f_i = match stats.delta {
        Some(d) => {
            let b = f_i_from_delta(d)?;
            flags = flags.merge(b.flags);
            Some(b.value)
        }
        None => None,
    };

    let mut report = CertificateReport {
        mode,
        f_o_k,
        f_o: f_o.value,
        f_i,
        f_bsm: None,
        f_bsm_independent_sources: None,
        f_cond: None,
        zeta_0: None,
        flags,
    };

    match mode {
        CertificationMode::Deterministic => {
            let fi = f_i.ok_or(Error::ParameterOutOfRange {
                name: "delta",
                value: f64::NAN,
                min: 0.0,
                max: 1.0,
            })?;
            let b = bsm_fidelity_bound(f_o.value, fi);
            report.flags = report.flags.merge(b.flags);
            report.f_bsm = Some(b.value);
            // the independent-sources bound needs no extra data; report it too
            let ind = bsm_fidelity_independent_sources(&stats.p, &f_o_k);
            report.f_bsm_independent_sources = Some(ind.value);
        }
        CertificationMode::IndependentSources => {
            let b = bsm_fidelity_independent_sources(&stats.p, &f_o_k);
            report.flags = report.flags.merge(b.flags);
            report.f_bsm_independent_sources = Some(b.value);
        }
        CertificationMode::Partial => {
            let fi = f_i.ok_or(Error::ParameterOutOfRange {
                name: "delta",
                value: f64::NAN,
                min: 0.0,
                max: 1.0,
            })?;
            let p0 = stats.p[0];
            let fc = conditional_fidelity_bound(f_o_k[0], fi, p0)?;
            let z = zeta_lower_bound(fi, p0)?;
            report.flags = report.flags.merge(fc.flags).merge(z.flags);
            report.f_cond = Some(fc.value);
            report.zeta_0 = Some(z.value);
        }
    }
    Ok(report)
}

/// Finds the CHSH value at which the independent-sources certificate
/// crosses `target` (with p_k = 1/4 and β_k = β), by bisection to `tol`.
pub fn independent_sources_crossing(target: f64, tol: f64) -> f64 {
    let p = [0.25f64; 4];
    let value = |beta: f64| -> f64 {
        let f = f_o_from_chsh(beta).unwrap().value;
        bsm_fidelity_independent_sources(&p, &[f, f, f, f]).value
    };
    let mut lo = 2.0;
    let mut hi = MAX_CHSH;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if value(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
