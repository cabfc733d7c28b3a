//! Numerical verification layer: the qubit extraction channel and the
//! operator inequality behind the linear CHSH–fidelity tradeoff, the
//! relabeling/unitary bookkeeping, the teleportation-based injection map,
//! and end-to-end soundness of every certified bound against brute-force
//! fidelity oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{self, CertificationMode};
use crate::linalg::{
    self, bell_ket_k, c, cr, identity, kron, min_eigenvalue, projector, sigma_x, sigma_z,
    trace, uhlmann_fidelity_raw, CMat, CVec,
};
use crate::scenario::{
    self, noisy_bsm, run_protocol, standard_settings, werner_source, DeltaModel,
    NoiseModel,
};
use crate::tol::Tolerances;
use crate::{Error, QuantumState, Result};

/// Which sign variant of the extraction weight g(λ) to use. The corrected
/// form is g(λ) = (1+√2)(sin λ + cos λ − 1); the sign-flipped variant
/// (1+√2)(sin λ + cos λ + 1) exceeds 1 on the whole domain and is kept only
/// as a deliberate negative control for channel validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GSign {
    Corrected,
    Printed,
}

/// Extraction weight g(λ) = (1+√2)(sin λ + cos λ − 1): zero at the
/// endpoints of [0, π/2], one at λ = π/4.
pub fn extraction_weight(lambda: f64) -> f64 {
    (1.0 + 2f64.sqrt()) * (lambda.sin() + lambda.cos() - 1.0)
}

/// The sign-flipped variant of the extraction weight (negative control).
pub fn extraction_weight_printed(lambda: f64) -> f64 {
    (1.0 + 2f64.sqrt()) * (lambda.sin() + lambda.cos() + 1.0)
}

/// Human-readable notice attached to verification reports.
pub fn g_correction_notice() -> String {
    "extraction weight implemented as g(λ) = (1+√2)(sin λ + cos λ − 1); the sign-flipped \
     variant (1+√2)(sin λ + cos λ + 1) exceeds 1 everywhere and fails channel validation \
     (available as a negative control)"
        .to_string()
}

/// Dephasing-style extraction channel Λ_λ[ρ] = ((1+g)/2)ρ + ((1−g)/2)σ_λρσ_λ
/// with σ_λ = σ_X for λ ≤ π/4 and σ_Z otherwise.
#[derive(Debug, Clone)]
pub struct ExtractionChannel {
    pub lambda: f64,
    pub g: f64,
    kraus: [CMat; 2],
}

impl ExtractionChannel {
    pub fn new(lambda: f64, sign: GSign) -> Result<Self> {
        let sigma_z_branch = lambda > std::f64::consts::FRAC_PI_4;
        Self::with_sigma(lambda, sigma_z_branch, sign)
    }

    /// Constructor with an explicit σ_λ branch choice, used to exercise the
    /// λ = π/4 boundary on both branches.
    pub fn with_sigma(lambda: f64, sigma_z_branch: bool, sign: GSign) -> Result<Self> {
        if !(-1e-12..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&lambda) {
            return Err(Error::ParameterOutOfRange {
                name: "lambda",
                value: lambda,
                min: 0.0,
                max: std::f64::consts::FRAC_PI_2,
            });
        }
        let g = match sign {
            GSign::Corrected => extraction_weight(lambda),
            GSign::Printed => extraction_weight_printed(lambda),
        };
        if !(-1e-12..=1.0 + 1e-12).contains(&g) {
            return Err(Error::InvalidExtractionWeight { lambda, g });
        }
        let g = g.clamp(0.0, 1.0);
        let sigma = if sigma_z_branch { sigma_z() } else { sigma_x() };
        let kraus = [
            identity(2).scale(((1.0 + g) / 2.0).sqrt()),
            sigma.scale(((1.0 - g) / 2.0).sqrt()),
        ];
        Ok(ExtractionChannel { lambda, g, kraus })
    }

    pub fn kraus(&self) -> &[CMat; 2] {
        &self.kraus
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(rho.nrows(), rho.ncols());
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// ‖Σ K†K − 𝟙‖, zero for a valid channel.
    pub fn completeness_deviation(&self) -> f64 {
        let mut total = CMat::zeros(2, 2);
        for k in &self.kraus {
            total += k.adjoint() * k;
        }
        (total - identity(2)).norm()
    }
}

/// Applies Λ_a ⊗ Λ_b to a two-qubit operator.
pub fn apply_product_channel(a: &ExtractionChannel, b: &ExtractionChannel, rho: &CMat) -> CMat {
    let mut out = CMat::zeros(4, 4);
    for ka in a.kraus() {
        for kb in b.kraus() {
            let op = kron(ka, kb);
            out += &op * rho * op.adjoint();
        }
    }
    out
}

/// Qubit measurement pair at Jordan angle a: A_r(a) = cos(a)σ_X + (−1)^r sin(a)σ_Z.
#[derive(Debug, Clone)]
pub struct JordanMeasurement {
    pub angle: f64,
    pub observables: [CMat; 2],
}

impl JordanMeasurement {
    pub fn new(angle: f64) -> Result<Self> {
        if !(-1e-12..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&angle) {
            return Err(Error::ParameterOutOfRange {
                name: "angle",
                value: angle,
                min: 0.0,
                max: std::f64::consts::FRAC_PI_2,
            });
        }
        Ok(JordanMeasurement {
            angle,
            observables: [jordan_observable(angle, 0), jordan_observable(angle, 1)],
        })
    }
}

pub fn jordan_observable(a: f64, r: usize) -> CMat {
    let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
    sigma_x().scale(a.cos()) + sigma_z().scale(sign * a.sin())
}

/// CHSH operator W_{a,b} = Σ_{r,t} (−1)^{rt} A_r(a) ⊗ B_t(b) in the Jordan
/// parametrization.
pub fn chsh_operator(a: f64, b: f64) -> CMat {
    let mut w = CMat::zeros(4, 4);
    for r in 0..2 {
        for t in 0..2 {
            let sign = if r * t == 1 { -1.0 } else { 1.0 };
            w += kron(&jordan_observable(a, r), &jordan_observable(b, t)).scale(sign);
        }
    }
    w
}

/// The local frame unitary U = −e^{iπ/8 σ_Y} σ_X = −cos(π/8)σ_X − sin(π/8)σ_Z.
pub fn frame_unitary() -> CMat {
    let c8 = (std::f64::consts::PI / 8.0).cos();
    let s8 = (std::f64::consts::PI / 8.0).sin();
    -(sigma_x().scale(c8) + sigma_z().scale(s8))
}

/// Reference two-qubit state |Ψ⟩ = (U ⊗ 𝟙)|φ₀₀⟩ maximizing ⟨W_{π/4,π/4}⟩.
pub fn reference_state() -> CVec {
    let u = frame_unitary();
    let phi = bell_ket_k(0);
    let big = kron(&u, &identity(2));
    &big * phi
}

/// Relabeling unitary U_A = e^{−iπ/4 σ_Y} σ_X = (σ_X − σ_Z)/√2.
pub fn relabel_unitary_a() -> CMat {
    let r = scenario::rotation_y(std::f64::consts::FRAC_PI_2);
    r * sigma_x()
}

/// Relabeling unitary U_B = σ_X.
pub fn relabel_unitary_b() -> CMat {
    sigma_x()
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorInequalityReport {
    pub grid_points: usize,
    pub min_eigenvalue: f64,
    pub worst_a: f64,
    pub worst_b: f64,
    pub passed: bool,
}

/// Checks (Λ_a⊗Λ_b)[|Ψ⟩⟨Ψ|] − s·W_{a,b} − μ𝟙 ⪰ 0 over a uniform
/// grid on [0, π/2]²; passes iff the global minimum eigenvalue ≥ −1e-9.
/// With [`GSign::Printed`] the channel construction itself fails.
pub fn verify_operator_inequality(grid_points: usize, sign: GSign) -> Result<OperatorInequalityReport> {
    assert!(grid_points >= 2, "grid needs at least two points");
    let s = bounds::BoundConstants::s();
    let mu = bounds::BoundConstants::mu();
    let psi = projector(&reference_state());
    let angles: Vec<f64> = (0..grid_points)
        .map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (grid_points - 1) as f64)
        .collect();
    let channels: Vec<ExtractionChannel> = angles
        .iter()
        .map(|&a| ExtractionChannel::new(a, sign))
        .collect::<Result<_>>()?;

    let mut min_eig = f64::INFINITY;
    let mut worst = (0.0, 0.0);
    for (i, ca) in channels.iter().enumerate() {
        for (j, cb) in channels.iter().enumerate() {
            let lhs = apply_product_channel(ca, cb, &psi)
                - chsh_operator(angles[i], angles[j]).scale(s)
                - identity(4).scale(mu);
            let e = min_eigenvalue(&lhs)?;
            if e < min_eig {
                min_eig = e;
                worst = (angles[i], angles[j]);
            }
        }
    }
    Ok(OperatorInequalityReport {
        grid_points,
        min_eigenvalue: min_eig,
        worst_a: worst.0,
        worst_b: worst.1,
        passed: min_eig >= -1e-9,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceCheck {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelabelingCovarianceReport {
    pub checks: Vec<CovarianceCheck>,
    pub passed: bool,
}

/// Verifies the relabeling bookkeeping over an angle grid:
/// (i) conjugation by 𝟙⊗σ_X swaps party B's settings in W_{a,b};
/// (ii) conjugation by U_A⊗𝟙 together with a → π/2−a negates party A's
/// first observable; (iii) the channel commutation relations
/// U_B∘Λ_b = Λ_b∘U_B and U_A∘Λ_a = Λ_{π/2−a}∘U_A; (iv) the four reference
/// states (U_A^j⊗U_B^ℓ)|Ψ⟩ match (U⊗𝟙)|φ_jℓ⟩, via U†U_A U = σ_Z.
pub fn verify_relabeling_covariance(grid_points: usize) -> RelabelingCovarianceReport {
    assert!(grid_points >= 2);
    let tol = 1e-10;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let angles: Vec<f64> = (0..grid_points)
        .map(|i| half_pi * i as f64 / (grid_points - 1) as f64)
        .collect();
    let ua = relabel_unitary_a();
    let ub = relabel_unitary_b();
    let mut checks = Vec::new();

    // (i) W with B's settings swapped equals the 𝟙⊗σ_X conjugation.
    let mut dev = 0.0f64;
    for &a in &angles {
        for &b in &angles {
            let conj = kron(&identity(2), &ub) * chsh_operator(a, b) * kron(&identity(2), &ub);
            let mut swapped = CMat::zeros(4, 4);
            for r in 0..2 {
                for t in 0..2 {
                    let sign = if r * t == 1 { -1.0 } else { 1.0 };
                    swapped +=
                        kron(&jordan_observable(a, r), &jordan_observable(b, 1 - t)).scale(sign);
                }
            }
            dev = dev.max((conj - swapped).norm());
        }
    }
    checks.push(CovarianceCheck {
        name: "setting_swap_conjugation".into(),
        max_deviation: dev,
        tolerance: tol,
        passed: dev <= tol,
    });

    // (ii) U_A conjugation with the angle flip negates A's first observable.
    let mut dev = 0.0f64;
    for &a in &angles {
        for &b in &angles {
            let conj = kron(&ua, &identity(2))
                * chsh_operator(half_pi - a, b)
                * kron(&ua, &identity(2)).adjoint();
            let mut negated = CMat::zeros(4, 4);
            for r in 0..2 {
                for t in 0..2 {
                    let mut sign = if r * t == 1 { -1.0 } else { 1.0 };
                    if r == 0 {
                        sign = -sign;
                    }
                    negated += kron(&jordan_observable(a, r), &jordan_observable(b, t)).scale(sign);
                }
            }
            dev = dev.max((conj - negated).norm());
        }
    }
    checks.push(CovarianceCheck {
        name: "output_flip_conjugation".into(),
        max_deviation: dev,
        tolerance: tol,
        passed: dev <= tol,
    });

    // (iii) channel commutation, probed on random states.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let probes: Vec<CMat> = (0..3).map(|_| random_density_matrix(2, &mut rng)).collect();
    let mut dev_b = 0.0f64;
    let mut dev_a = 0.0f64;
    for &lam in &angles {
        for (zb_left, zb_right) in branch_pairs(lam) {
            let ch = ExtractionChannel::with_sigma(lam, zb_left, GSign::Corrected).unwrap();
            let ch_flip =
                ExtractionChannel::with_sigma(half_pi - lam, zb_right, GSign::Corrected).unwrap();
            for rho in &probes {
                let lhs = &ub * ch.apply(rho) * ub.adjoint();
                let rhs = ch.apply(&(&ub * rho * ub.adjoint()));
                dev_b = dev_b.max((lhs - rhs).norm());

                let lhs = &ua * ch.apply(rho) * ua.adjoint();
                let rhs = ch_flip.apply(&(&ua * rho * ua.adjoint()));
                dev_a = dev_a.max((lhs - rhs).norm());
            }
        }
    }
    checks.push(CovarianceCheck {
        name: "channel_commutation_b".into(),
        max_deviation: dev_b,
        tolerance: tol,
        passed: dev_b <= tol,
    });
    checks.push(CovarianceCheck {
        name: "channel_commutation_a".into(),
        max_deviation: dev_a,
        tolerance: tol,
        passed: dev_a <= tol,
    });

    // (iv) relabeled reference states match rotated Bell states.
    let u = frame_unitary();
    let psi = reference_state();
    let mut dev = 0.0f64;
    for j in 0..2usize {
        for l in 0..2usize {
            let mut op_a = identity(2);
            if j == 1 {
                op_a = ua.clone();
            }
            let mut op_b = identity(2);
            if l == 1 {
                op_b = ub.clone();
            }
            let relabeled = kron(&op_a, &op_b) * &psi;
            let rotated = kron(&u, &identity(2)) * linalg::bell_ket(j, l);
            dev = dev.max((projector(&relabeled) - projector(&rotated)).norm());
        }
    }
    // the algebraic ingredient behind (iv)
    let alg = (u.adjoint() * &ua * &u - sigma_z()).norm();
    let dev = dev.max(alg);
    checks.push(CovarianceCheck {
        name: "reference_state_relabeling".into(),
        max_deviation: dev,
        tolerance: tol,
        passed: dev <= tol,
    });

    let passed = checks.iter().all(|c| c.passed);
    RelabelingCovarianceReport { checks, passed }
}

/// σ_λ branch choices to exercise at angle `lam`: both at the π/4 boundary,
/// the canonical one elsewhere. Returns (branch for λ, branch for π/2−λ).
fn branch_pairs(lam: f64) -> Vec<(bool, bool)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let canonical = |l: f64| l > std::f64::consts::FRAC_PI_4 + 1e-12;
    let at_boundary = (lam - std::f64::consts::FRAC_PI_4).abs() < 1e-12;
    if at_boundary {
        vec![(false, false), (false, true), (true, false), (true, true)]
    } else {
        vec![(canonical(lam), canonical(half_pi - lam))]
    }
}

/// Teleportation-based injection channel Λ_A built from a bipartite source
/// state ρ' on A⊗B with qubit B side: purify ρ' over an environment E,
/// Bell-measure the input qubit against the B qubit in its marginal
/// eigenbasis, apply the conditional σ_z/σ_x correction inside the
/// two-dimensional {|u₀⟩, |u₁⟩} subspace of A⊗E, and trace out E.
#[derive(Debug, Clone)]
pub struct TeleportInjection {
    /// Kraus operators per Bell outcome (outer index k, inner index the
    /// environment basis label); each maps C² to H_A.
    kraus: [Vec<CMat>; 4],
    /// Larger eigenvalue of the B marginal (the Schmidt weight).
    q: f64,
    source: QuantumState,
    basis_b: CMat,
    u: [CVec; 2],
    env_dim: usize,
    a_dim: usize,
}

impl TeleportInjection {
    pub fn new(source: &QuantumState, tol: &Tolerances) -> Result<Self> {
        let dims = source.dims();
        if dims.len() != 2 || dims[1] != 2 {
            return Err(Error::BadFactorization {
                dim: source.dim(),
                dims: dims.to_vec(),
            });
        }
        let a_dim = dims[0];
        let marg = source.partial_trace(&[1])?;
        let (eigs, vecs) = linalg::hermitian_eigen(marg.rho())?;
        // column 0 carries the larger eigenvalue
        let q_pair = [eigs[1].clamp(0.0, 1.0), eigs[0].clamp(0.0, 1.0)];
        let mut basis_b = CMat::zeros(2, 2);
        basis_b.set_column(0, &vecs.column(1).into_owned());
        basis_b.set_column(1, &vecs.column(0).into_owned());

        let (psi, env_dim) = linalg::purify(source.rho(), tol)?;

        // |u_i⟩ ∈ A⊗E from contracting the purification with ⟨b_i|.
        let mut u: [CVec; 2] = [CVec::zeros(a_dim * env_dim), CVec::zeros(a_dim * env_dim)];
        for i in 0..2 {
            let mut w = CVec::zeros(a_dim * env_dim);
            for a in 0..a_dim {
                for b in 0..2 {
                    let coeff = basis_b[(b, i)].conj();
                    for e in 0..env_dim {
                        w[a * env_dim + e] += coeff * psi[(a * 2 + b) * env_dim + e];
                    }
                }
            }
            let norm = w.norm();
            u[i] = if norm > 1e-7 {
                w.scale(1.0 / norm)
            } else {
                orthogonal_unit(&u[1 - i], a_dim * env_dim)
            };
        }
        // degenerate order: if q₁ ≈ 0 the first loop pass may have needed
        // the fallback before u[1] existed; redo it now that both are set.
        if u[0].norm() < 0.5 {
            u[0] = orthogonal_unit(&u[1], a_dim * env_dim);
        }

        // Kraus operators: outcome k = 2j+ℓ, correction σ_z^j σ_x^ℓ in the
        // u-subspace.
        let kraus = std::array::from_fn(|k| {
            let (j, l) = (k >> 1, k & 1);
            let phi = bell_ket_k(k);
            // b[i][m]: amplitude routed from input basis state m to u_i
            let mut bmat = [[c(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for m in 0..2 {
                    bmat[i][m] = phi[2 * m + i].conj() * cr(q_pair[i].sqrt());
                }
            }
            // correction G = σ_z^j σ_x^ℓ acting on the u index
            let mut cmat = [[c(0.0, 0.0); 2]; 2];
            for m in 0..2 {
                for i in 0..2 {
                    let target = i ^ l;
                    let phase = if j == 1 && target == 1 { -1.0 } else { 1.0 };
                    cmat[target][m] += bmat[i][m] * cr(phase);
                }
            }
            (0..env_dim)
                .map(|e| {
                    let mut kr = CMat::zeros(a_dim, 2);
                    for m in 0..2 {
                        for ix in 0..2 {
                            let coeff = cmat[ix][m];
                            for a in 0..a_dim {
                                kr[(a, m)] += coeff * u[ix][a * env_dim + e];
                            }
                        }
                    }
                    kr
                })
                .collect::<Vec<_>>()
        });

        let inj = TeleportInjection {
            kraus,
            q: q_pair[0],
            source: source.clone(),
            basis_b,
            u,
            env_dim,
            a_dim,
        };
        let dev = inj.completeness_deviation();
        if dev > 1e-9 {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(inj)
    }

    /// Schmidt weight q (larger eigenvalue of the B marginal).
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn kraus(&self) -> &[Vec<CMat>; 4] {
        &self.kraus
    }

    /// ‖Σ_{k,e} K†K − 𝟙₂‖; zero by construction up to rounding.
    pub fn completeness_deviation(&self) -> f64 {
        let mut total = CMat::zeros(2, 2);
        for branch in &self.kraus {
            for k in branch {
                total += k.adjoint() * k;
            }
        }
        (total - identity(2)).norm()
    }

    /// Feeds one half of |φ₀₀⟩ through the channel: per Bell outcome the
    /// probability and the normalized output state on A⊗B (the reference
    /// qubit rotated back into the B marginal eigenbasis).
    pub fn branch_outputs(&self, tol: &Tolerances) -> Result<Vec<(f64, QuantumState)>> {
        let phi = projector(&bell_ket_k(0));
        let rot = kron(&identity(self.a_dim), &self.basis_b);
        let mut out = Vec::with_capacity(4);
        for branch in &self.kraus {
            let mut acc = CMat::zeros(2 * self.a_dim, 2 * self.a_dim);
            for k in branch {
                let big = kron(k, &identity(2));
                acc += &big * &phi * big.adjoint();
            }
            let acc = &rot * acc * rot.adjoint();
            let p = trace(&acc).re;
            let state = QuantumState::new(acc.scale(1.0 / p), vec![self.a_dim, 2], tol)?;
            out.push((p, state));
        }
        Ok(out)
    }

    /// Outcome-averaged fidelity of the heralded teleported states with the
    /// source: Σ_k p_k F(ρ_k, ρ'). For a source with Schmidt weight q this
    /// equals 1/2 + √(q(1−q)).
    pub fn fidelity_with_source(&self, tol: &Tolerances) -> Result<f64> {
        let mut f = 0.0;
        for (p, state) in self.branch_outputs(tol)? {
            f += p * state.fidelity(&self.source, tol)?;
        }
        Ok(f.clamp(0.0, 1.0))
    }

    /// The outcome-averaged channel output Σ_k p_k ρ_k on A⊗B.
    pub fn average_output(&self, tol: &Tolerances) -> Result<QuantumState> {
        let mut acc = CMat::zeros(2 * self.a_dim, 2 * self.a_dim);
        for (p, state) in self.branch_outputs(tol)? {
            acc += state.rho().scale(p);
        }
        QuantumState::new(acc, vec![self.a_dim, 2], tol)
    }

    /// Uhlmann fidelity of the averaged channel output with the source; by
    /// concavity this is at least [`Self::fidelity_with_source`].
    pub fn traced_fidelity_with_source(&self, tol: &Tolerances) -> Result<f64> {
        self.average_output(tol)?.fidelity(&self.source, tol)
    }

    /// ‖ Σ_k p_k ρ_k − ½(ρ' + (σ̃_x⊗σ_x)ρ'(σ̃_x⊗σ_x)) ‖ with σ̃_x the bit
    /// flip in the {|u₀⟩,|u₁⟩} basis of A and σ_x in the B marginal
    /// eigenbasis. Requires a pure source (trivial environment).
    pub fn symmetrization_deviation(&self, tol: &Tolerances) -> Result<f64> {
        if self.env_dim != 1 {
            return Err(Error::DimensionMismatch(self.env_dim, 1));
        }
        let flip_a = &self.u[0] * self.u[1].adjoint() + &self.u[1] * self.u[0].adjoint();
        let flip_b = &self.basis_b * sigma_x() * self.basis_b.adjoint();
        let op = kron(&flip_a, &flip_b);
        let sym = (self.source.rho() + &op * self.source.rho() * op.adjoint()).scale(0.5);
        Ok((self.average_output(tol)?.rho() - sym).norm())
    }
}

fn orthogonal_unit(other: &CVec, dim: usize) -> CVec {
    for j in 0..dim {
        let mut v = CVec::zeros(dim);
        v[j] = cr(1.0);
        let overlap = other.dotc(&v);
        let v = v - other.scale(1.0) * overlap;
        if v.norm() > 0.5 {
            return v.scale(1.0 / v.norm());
        }
    }
    unreachable!("dimension ≥ 2 always admits an orthogonal direction")
}

#[derive(Debug, Clone, Serialize)]
pub struct TeleportReport {
    pub samples: usize,
    pub max_fidelity_deviation: f64,
    pub max_identity_deviation: f64,
    pub passed: bool,
}

/// Builds the injection channel for random pure two-qubit sources with
/// Schmidt weight q ∈ [0, 1] and checks that the outcome-averaged fidelity
/// equals 1/2 + √(q(1−q)) and that the averaged output equals the
/// σ_x⊗σ_x symmetrization of the source.
pub fn verify_teleport_identity(samples: usize, seed: u64, tol: &Tolerances) -> Result<TeleportReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_fid = 0.0f64;
    let mut max_id = 0.0f64;
    for _ in 0..samples {
        let q: f64 = rng.gen();
        let ua = random_unitary(2, &mut rng);
        let ub = random_unitary(2, &mut rng);
        let mut chi = CVec::zeros(4);
        for a in 0..2 {
            for b in 0..2 {
                chi[a * 2 + b] = cr(q.sqrt()) * ua[(a, 0)] * ub[(b, 0)]
                    + cr((1.0 - q).sqrt()) * ua[(a, 1)] * ub[(b, 1)];
            }
        }
        let source = QuantumState::from_ket(&chi, vec![2, 2], tol)?;
        let inj = TeleportInjection::new(&source, tol)?;
        let expected = 0.5 + (q * (1.0 - q)).sqrt();
        max_fid = max_fid.max((inj.fidelity_with_source(tol)? - expected).abs());
        max_id = max_id.max(inj.symmetrization_deviation(tol)?);
    }
    Ok(TeleportReport {
        samples,
        max_fidelity_deviation: max_fid,
        max_identity_deviation: max_id,
        passed: max_fid <= 1e-8 && max_id <= 1e-10,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub instances: usize,
    pub max_violation: f64,
    pub passed: bool,
}

/// Random-instance check of the block-fidelity inequality: for classical
/// mixtures ρ = Σ_k p_k ρ_k⊗|k⟩⟨k|, σ = Σ_k q_k σ_k⊗|k⟩⟨k| the joint
/// fidelity F = Σ_k √(p_k q_k) F(ρ_k, σ_k) obeys
/// √(q₀p₀)F(ρ₀,σ₀) ≥ F − √((1−p₀)(1−q₀)).
pub fn verify_lemma1(instances: usize, seed: u64, tol: &Tolerances) -> Result<Lemma1Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    for t in 0..instances {
        let blocks = 2 + t % 3;
        let p = random_simplex(blocks, &mut rng);
        let q = random_simplex(blocks, &mut rng);
        let mut f = 0.0;
        let mut f0 = 0.0;
        for k in 0..blocks {
            let rho = random_density_matrix(2, &mut rng);
            let sig = random_density_matrix(2, &mut rng);
            let fk = uhlmann_fidelity_raw(&rho, &sig, tol)?;
            if k == 0 {
                f0 = fk;
            }
            f += (p[k] * q[k]).sqrt() * fk;
        }
        let lhs = (q[0] * p[0]).sqrt() * f0 + ((1.0 - p[0]) * (1.0 - q[0])).max(0.0).sqrt();
        max_violation = max_violation.max(f - lhs);
    }
    Ok(Lemma1Report {
        instances,
        max_violation,
        passed: max_violation <= 1e-9,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SoundnessReport {
    pub points: usize,
    pub checks: usize,
    pub max_violation: f64,
    pub worst_noise: Option<NoiseModel>,
    pub passed: bool,
}

/// Default sweep grid: Werner visibility v ∈ [0.9, 1] × BSM depolarization
/// w ∈ [0, 0.1], 54 points.
pub fn default_noise_grid() -> Vec<NoiseModel> {
    let mut grid = Vec::new();
    for i in 0..6 {
        let v = 0.9 + 0.02 * i as f64;
        for j in 0..9 {
            let w = 0.0125 * j as f64;
            grid.push(NoiseModel {
                source_visibility: [v, v],
                bsm_depolarization: w,
                setting_misalignment: 0.0,
            });
        }
    }
    grid
}

/// Fidelity with a pure target: √⟨φ|ρ|φ⟩.
pub fn fidelity_with_pure(rho: &CMat, ket: &CVec) -> f64 {
    let val = (ket.adjoint() * rho * ket)[(0, 0)].re;
    val.max(0.0).sqrt().min(1.0)
}

/// Largest ζ with E − ζ|φ₀₀⟩⟨φ₀₀| ⪰ 0, by bisection.
pub fn true_success_factor(povm_element: &CMat) -> Result<f64> {
    let phi = projector(&bell_ket_k(0));
    let upper = trace(&(povm_element * &phi)).re.max(0.0);
    let mut lo = 0.0f64;
    let mut hi = upper + 1e-12;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if min_eigenvalue(&(povm_element - phi.scale(mid)))? >= -1e-12 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// End-to-end soundness: for each noise configuration, simulate the
/// protocol, evaluate every certified bound, and compare against
/// brute-force fidelity oracles computed from the known simulated states
/// and instruments. Every bound must stay below its oracle (within 1e-9).
pub fn soundness_sweep(grid: &[NoiseModel], tol: &Tolerances) -> Result<SoundnessReport> {
    let (a_set, b_set) = standard_settings(0.0);
    let phis: Vec<CVec> = (0..4).map(bell_ket_k).collect();
    let ideal_source = werner_source(1.0, tol)?;
    let slack = 1e-9;

    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = None;
    let mut checks = 0usize;
    let note = |violation: f64, model: &NoiseModel, worst: &mut Option<NoiseModel>, max: &mut f64| {
        if violation > *max {
            *max = violation;
            *worst = Some(*model);
        }
    };

    for model in grid {
        model.validate()?;
        let bsm = noisy_bsm(model.bsm_depolarization, tol)?;
        let s1 = werner_source(model.source_visibility[0], tol)?;
        let s2 = werner_source(model.source_visibility[1], tol)?;
        let out = run_protocol(&s1, &s2, &bsm, &a_set, &b_set, DeltaModel::ChshScaled, tol)?;
        let det = bounds::certificate_report(&out.stats, CertificationMode::Deterministic)?;
        let part = bounds::certificate_report(&out.stats, CertificationMode::Partial)?;

        // per-outcome truths on the simulated conditional states
        let mut truth_k = [0.0f64; 4];
        for k in 0..4 {
            let cond = out.conditionals[k].as_ref().ok_or(Error::ZeroProbability(k))?;
            truth_k[k] = fidelity_with_pure(cond.rho(), &phis[k]);
            note(det.f_o_k[k] - truth_k[k] - slack, model, &mut worst, &mut max_violation);
            checks += 1;
        }
        let truth_choi: f64 = (0..4)
            .map(|k| (out.stats.p[k] / 4.0).sqrt() * truth_k[k])
            .sum();
        note(det.f_o - truth_choi - slack, model, &mut worst, &mut max_violation);
        checks += 1;

        // measurement-quality truths with ideal inputs
        let ideal = run_protocol(
            &ideal_source,
            &ideal_source,
            &bsm,
            &a_set,
            &b_set,
            DeltaModel::ChshScaled,
            tol,
        )?;
        let truth_bsm: f64 = (0..4)
            .map(|k| {
                let cond = ideal.conditionals[k].as_ref().unwrap();
                (ideal.stats.p[k] / 4.0).sqrt() * fidelity_with_pure(cond.rho(), &phis[k])
            })
            .sum();
        note(det.f_bsm.unwrap() - truth_bsm - slack, model, &mut worst, &mut max_violation);
        note(
            det.f_bsm_independent_sources.unwrap() - truth_bsm - slack,
            model,
            &mut worst,
            &mut max_violation,
        );
        checks += 2;

        let truth_cond0 =
            fidelity_with_pure(ideal.conditionals[0].as_ref().unwrap().rho(), &phis[0]);
        note(part.f_cond.unwrap() - truth_cond0 - slack, model, &mut worst, &mut max_violation);
        checks += 1;

        let truth_zeta = true_success_factor(&bsm.povm_element(0))?;
        note(part.zeta_0.unwrap() - truth_zeta - slack, model, &mut worst, &mut max_violation);
        checks += 1;

        // source-side consistency: √(q(1−q)) ≥ Σ_k p_k (F°_k)² − 1/2, and
        // the injection channel reproduces 1/2 + √(q(1−q)) exactly.
        let post_sum: f64 = (0..4)
            .map(|k| out.stats.p[k] * det.f_o_k[k] * det.f_o_k[k])
            .sum();
        for src in [&s1, &s2] {
            let inj = TeleportInjection::new(src, tol)?;
            let qq = (inj.q() * (1.0 - inj.q())).max(0.0).sqrt();
            note(post_sum - 0.5 - qq - slack, model, &mut worst, &mut max_violation);
            let fid_dev = (inj.fidelity_with_source(tol)? - (0.5 + qq)).abs();
            note(fid_dev - 1e-8, model, &mut worst, &mut max_violation);
            checks += 2;
        }
    }
    Ok(SoundnessReport {
        points: grid.len(),
        checks,
        max_violation,
        worst_noise: worst,
        passed: max_violation <= 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub g_correction_notice: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator_inequality: Option<OperatorInequalityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relabeling: Option<RelabelingCovarianceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teleport: Option<TeleportReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma1: Option<Lemma1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soundness: Option<SoundnessReport>,
    pub passed: bool,
}

/// Which verification properties to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifySuite {
    All,
    OperatorInequality,
    Relabeling,
    Teleport,
    Lemma1,
    Soundness,
}

/// Runs the selected verification suite with default parameters.
pub fn run_verification(suite: VerifySuite, sign: GSign, tol: &Tolerances) -> Result<VerificationReport> {
    let mut report = VerificationReport {
        g_correction_notice: g_correction_notice(),
        operator_inequality: None,
        relabeling: None,
        teleport: None,
        lemma1: None,
        soundness: None,
        passed: true,
    };
    let want = |s: VerifySuite| suite == VerifySuite::All || suite == s;
    if want(VerifySuite::OperatorInequality) {
        let r = verify_operator_inequality(101, sign)?;
        report.passed &= r.passed;
        report.operator_inequality = Some(r);
    }
    if want(VerifySuite::Relabeling) {
        let r = verify_relabeling_covariance(51);
        report.passed &= r.passed;
        report.relabeling = Some(r);
    }
    if want(VerifySuite::Teleport) {
        let r = verify_teleport_identity(100, 7, tol)?;
        report.passed &= r.passed;
        report.teleport = Some(r);
    }
    if want(VerifySuite::Lemma1) {
        let r = verify_lemma1(500, 11, tol)?;
        report.passed &= r.passed;
        report.lemma1 = Some(r);
    }
    if want(VerifySuite::Soundness) {
        let r = soundness_sweep(&default_noise_grid(), tol)?;
        report.passed &= r.passed;
        report.soundness = Some(r);
    }
    Ok(report)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random full-rank density matrix (normalized GG† with Gaussian G).
pub fn random_density_matrix(dim: usize, rng: &mut impl Rng) -> CMat {
    let g = CMat::from_fn(dim, dim, |_, _| c(standard_normal(rng), standard_normal(rng)));
    let rho = &g * g.adjoint();
    let t = trace(&rho).re;
    rho.scale(1.0 / t)
}

/// Haar-ish random unitary via Gram–Schmidt on a Gaussian matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMat {
    let mut m = CMat::from_fn(dim, dim, |_, _| c(standard_normal(rng), standard_normal(rng)));
    for j in 0..dim {
        for i in 0..j {
            let prev = m.column(i).into_owned();
            let overlap = prev.dotc(&m.column(j).into_owned());
            let corrected = m.column(j).into_owned() - prev.scale(1.0) * overlap;
            m.set_column(j, &corrected);
        }
        let col = m.column(j).into_owned();
        let norm = col.norm();
        m.set_column(j, &col.scale(1.0 / norm));
    }
    m
}

/// Random probability vector.
pub fn random_simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random pure state.
pub fn random_pure_ket(dim: usize, rng: &mut impl Rng) -> CVec {
    let v = CVec::from_fn(dim, |_, _| c(standard_normal(rng), standard_normal(rng)));
    let n = v.norm();
    v.scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ideal_bsm;
    use crate::tol::DEFAULT_TOL;

    const MAX_CHSH: f64 = crate::scenario::MAX_CHSH;

    #[test]
    fn extraction_weight_endpoints() {
        assert!(extraction_weight(0.0).abs() < 1e-12);
        assert!(extraction_weight(std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((extraction_weight(std::f64::consts::FRAC_PI_4) - 1.0).abs() < 1e-12);
        for i in 0..=100 {
            let lam = std::f64::consts::FRAC_PI_2 * i as f64 / 100.0;
            let g = extraction_weight(lam);
            assert!((-1e-12..=1.0 + 1e-12).contains(&g), "g({lam}) = {g}");
            let ch = ExtractionChannel::new(lam, GSign::Corrected).unwrap();
            assert!(ch.completeness_deviation() < 1e-12);
        }
    }

    #[test]
    fn printed_sign_is_rejected() {
        for lam in [0.0, 0.3, std::f64::consts::FRAC_PI_4, 1.2] {
            let err = ExtractionChannel::new(lam, GSign::Printed);
            assert!(matches!(err, Err(Error::InvalidExtractionWeight { .. })));
        }
        assert!(extraction_weight_printed(0.0) > 4.8);
    }

    #[test]
    fn chsh_operator_spectrum() {
        let w = chsh_operator(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4);
        let (eigs, _) = linalg::hermitian_eigen(&w).unwrap();
        assert!((eigs[3] - MAX_CHSH).abs() < 1e-12);
        assert!(trace(&w).norm() < 1e-12);

        // a = 0 degenerates to 2σ_X⊗B_0 with spectrum {±2}
        let w = chsh_operator(0.0, 0.7);
        let (eigs, _) = linalg::hermitian_eigen(&w).unwrap();
        assert!((eigs[0] + 2.0).abs() < 1e-12 && (eigs[3] - 2.0).abs() < 1e-12);
        let expected = kron(&sigma_x(), &jordan_observable(0.7, 0)).scale(2.0);
        assert!((w - expected).norm() < 1e-12);
    }

    #[test]
    fn reference_state_maximizes_chsh() {
        let psi = reference_state();
        let w = chsh_operator(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4);
        let val = (psi.adjoint() * &w * &psi)[(0, 0)].re;
        assert!((val - MAX_CHSH).abs() < 1e-12);
    }

    #[test]
    fn jordan_observables_are_involutions() {
        for i in 0..=20 {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / 20.0;
            let m = JordanMeasurement::new(a).unwrap();
            for o in &m.observables {
                assert!((o * o - identity(2)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn operator_inequality_coarse_grid() {
        let r = verify_operator_inequality(21, GSign::Corrected).unwrap();
        assert!(r.passed, "min eigenvalue {}", r.min_eigenvalue);
        assert!(verify_operator_inequality(21, GSign::Printed).is_err());
    }

    #[test]
    fn relabeling_covariance_holds() {
        let r = verify_relabeling_covariance(21);
        for c in &r.checks {
            assert!(c.passed, "{} deviates by {}", c.name, c.max_deviation);
        }
    }

    #[test]
    fn frame_unitary_algebra() {
        let u = frame_unitary();
        assert!((&u * &u - identity(2)).norm() < 1e-12); // Hermitian involution
        let ua = relabel_unitary_a();
        assert!((u.adjoint() * ua * &u - sigma_z()).norm() < 1e-12);
    }

    #[test]
    fn teleport_perfect_source() {
        let phi = bell_ket_k(0);
        let source = QuantumState::from_ket(&phi, vec![2, 2], &DEFAULT_TOL).unwrap();
        let inj = TeleportInjection::new(&source, &DEFAULT_TOL).unwrap();
        assert!((inj.q() - 0.5).abs() < 1e-9);
        assert!((inj.fidelity_with_source(&DEFAULT_TOL).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn teleport_product_source() {
        let mut ket = CVec::zeros(4);
        ket[0] = cr(1.0);
        let source = QuantumState::from_ket(&ket, vec![2, 2], &DEFAULT_TOL).unwrap();
        let inj = TeleportInjection::new(&source, &DEFAULT_TOL).unwrap();
        assert!((inj.q() - 1.0).abs() < 1e-9);
        assert!((inj.fidelity_with_source(&DEFAULT_TOL).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn teleport_q_08() {
        let q: f64 = 0.8;
        let mut ket = CVec::zeros(4);
        ket[0] = cr(q.sqrt());
        ket[3] = cr((1.0 - q).sqrt());
        let source = QuantumState::from_ket(&ket, vec![2, 2], &DEFAULT_TOL).unwrap();
        let inj = TeleportInjection::new(&source, &DEFAULT_TOL).unwrap();
        assert!((inj.fidelity_with_source(&DEFAULT_TOL).unwrap() - 0.9).abs() < 1e-9);
        // averaging a fixed output can only help the joint fidelity
        let traced = inj.traced_fidelity_with_source(&DEFAULT_TOL).unwrap();
        assert!(traced >= 0.9 - 1e-9);
        assert!(inj.symmetrization_deviation(&DEFAULT_TOL).unwrap() < 1e-10);
    }

    #[test]
    fn teleport_random_sources() {
        let r = verify_teleport_identity(25, 3, &DEFAULT_TOL).unwrap();
        assert!(
            r.passed,
            "fid dev {}, identity dev {}",
            r.max_fidelity_deviation, r.max_identity_deviation
        );
    }

    #[test]
    fn teleport_mixed_werner_source() {
        let source = werner_source(0.9, &DEFAULT_TOL).unwrap();
        let inj = TeleportInjection::new(&source, &DEFAULT_TOL).unwrap();
        assert!((inj.q() - 0.5).abs() < 1e-9);
        // q = 1/2 makes every heralded branch reproduce the source exactly
        assert!((inj.fidelity_with_source(&DEFAULT_TOL).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lemma1_random_instances() {
        let r = verify_lemma1(100, 5, &DEFAULT_TOL).unwrap();
        assert!(r.passed, "max violation {}", r.max_violation);
    }

    #[test]
    fn true_success_factor_closed_form() {
        let ideal = ideal_bsm();
        assert!((true_success_factor(&ideal.povm_element(0)).unwrap() - 1.0).abs() < 1e-9);
        let w = 0.2;
        let noisy = noisy_bsm(w, &DEFAULT_TOL).unwrap();
        let z = true_success_factor(&noisy.povm_element(0)).unwrap();
        assert!((z - (1.0 - 0.75 * w)).abs() < 1e-9);
    }

    #[test]
    fn soundness_small_grid() {
        let grid = vec![
            NoiseModel::default(),
            NoiseModel {
                source_visibility: [0.95, 0.95],
                bsm_depolarization: 0.05,
                setting_misalignment: 0.0,
            },
            NoiseModel {
                source_visibility: [0.9, 1.0],
                bsm_depolarization: 0.1,
                setting_misalignment: 0.0,
            },
        ];
        let r = soundness_sweep(&grid, &DEFAULT_TOL).unwrap();
        assert!(r.passed, "max violation {:?} at {:?}", r.max_violation, r.worst_noise);
    }

    #[test]
    fn random_helpers_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density_matrix(4, &mut rng);
        assert!((trace(&rho).re - 1.0).abs() < 1e-12);
        assert!(min_eigenvalue(&rho).unwrap() > -1e-12);
        let u = random_unitary(3, &mut rng);
        assert!((u.adjoint() * &u - identity(3)).norm() < 1e-10);
        let p = random_simplex(5, &mut rng);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((random_pure_ket(4, &mut rng).norm() - 1.0).abs() < 1e-12);
    }
}
