//! End-to-end acceptance gate: one test per criterion, each printing a
//! single pass/fail line. Tolerances are pinned in the assertions.

use bsmcert_core::bounds::{
    bsm_fidelity_bound, bsm_fidelity_independent_sources, conditional_fidelity_bound,
    f_i_from_delta, f_o_combined, f_o_from_chsh, independent_sources_crossing, zeta_lower_bound,
    BoundConstants,
};
use bsmcert_core::linalg::{bell_ket_k, projector, trace};
use bsmcert_core::scenario::{
    chsh_value, ideal_bsm, relabeling_for_outcome, run_protocol, standard_settings, werner_source,
    DeltaModel, MAX_CHSH,
};
use bsmcert_core::tol::DEFAULT_TOL;
use bsmcert_core::verify::{
    default_noise_grid, random_density_matrix, soundness_sweep, verify_lemma1,
    verify_operator_inequality, verify_relabeling_covariance, verify_teleport_identity, GSign,
};
use bsmcert_core::{Error, QuantumState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Criterion {
    label: &'static str,
}

impl Criterion {
    fn new(label: &'static str) -> Self {
        Criterion { label }
    }

    fn check(&self, ok: bool, detail: &str) {
        println!(
            "acceptance {}: {}",
            self.label,
            if ok { "PASS" } else { "FAIL" }
        );
        assert!(ok, "criterion '{}' failed: {}", self.label, detail);
    }
}

#[test]
fn criterion_01_ideal_point() {
    let c = Criterion::new("01 ideal-point reproduction");
    let src = werner_source(1.0, &DEFAULT_TOL).unwrap();
    let (a, b) = standard_settings(0.0);
    let out = run_protocol(
        &src,
        &src,
        &ideal_bsm(),
        &a,
        &b,
        DeltaModel::Explicit(1.0),
        &DEFAULT_TOL,
    )
    .unwrap();
    let betas_ok = out.stats.beta.iter().all(|&x| (x - MAX_CHSH).abs() <= 1e-9);
    let probs_ok = out.stats.p.iter().all(|&x| (x - 0.25).abs() <= 1e-12);
    let f_o_k: Vec<f64> = out
        .stats
        .beta
        .iter()
        .map(|&x| f_o_from_chsh(x).unwrap().value)
        .collect();
    let f_o = f_o_combined(&out.stats.p, &[f_o_k[0], f_o_k[1], f_o_k[2], f_o_k[3]]).value;
    let f_i = f_i_from_delta(1.0).unwrap().value;
    let f_bsm = bsm_fidelity_bound(f_o, f_i).value;
    c.check(
        betas_ok && probs_ok && (f_bsm - 1.0).abs() <= 1e-9,
        &format!("beta={:?} p={:?} f_bsm={f_bsm}", out.stats.beta, out.stats.p),
    );
}

#[test]
fn criterion_02_deterministic_curves() {
    let c = Criterion::new("02 deterministic bound curves");
    let beta_star = BoundConstants::beta_star();
    let mut ok = true;
    let mut detail = String::new();
    for i in 0..=500 {
        let beta = 2.0 + (MAX_CHSH - 2.0) * i as f64 / 500.0;
        let f_o = f_o_from_chsh(beta).unwrap().value;
        let closed = (1.0 - 0.5 * (MAX_CHSH - beta) / (MAX_CHSH - beta_star))
            .max(0.0)
            .sqrt();
        // δ = 1 curve collapses to the output certificate itself
        let full_knowledge = bsm_fidelity_bound(f_o, 1.0).value;
        if (full_knowledge - closed).abs() > 1e-12 {
            ok = false;
            detail = format!("delta=1 curve off at beta={beta}");
        }
        // δ = β/(2√2) curve is the arccos composition
        let f_i = f_i_from_delta(beta / MAX_CHSH).unwrap().value;
        let curve = bsm_fidelity_bound(f_o, f_i).value;
        let direct = {
            let angle = f_o.clamp(0.0, 1.0).acos() + f_i.clamp(0.0, 1.0).acos();
            if angle > std::f64::consts::FRAC_PI_2 {
                0.0
            } else {
                angle.cos()
            }
        };
        if (curve - direct).abs() > 1e-12 {
            ok = false;
            detail = format!("scaled-delta curve off at beta={beta}");
        }
    }
    let crossing = independent_sources_crossing(1.0 / 2f64.sqrt(), 1e-6);
    if !(2.72..=2.74).contains(&crossing) {
        ok = false;
        detail = format!("independent-sources crossing at {crossing}");
    }
    c.check(ok, &detail);
}

#[test]
fn criterion_03_threshold_constants() {
    let c = Criterion::new("03 threshold constants");
    let beta_star = 2.0 * (8.0 + 7.0 * 2f64.sqrt()) / 17.0;
    let mut ok = (f_o_from_chsh(beta_star).unwrap().value - 1.0 / 2f64.sqrt()).abs() <= 1e-12;
    ok &= (f_i_from_delta(0.744).unwrap().value - 0.5).abs() <= 1e-12;
    let s = BoundConstants::s();
    let mu = BoundConstants::mu();
    for i in 0..1000 {
        let beta = 2.0 + (MAX_CHSH - 2.0) * i as f64 / 999.0;
        let f = f_o_from_chsh(beta).unwrap().value;
        ok &= (f * f - (s * beta + mu)).abs() <= 1e-12;
    }
    c.check(ok, "threshold constant identities");
}

#[test]
fn criterion_04_operator_inequality() {
    let c = Criterion::new("04 operator inequality (101x101 grid)");
    let report = verify_operator_inequality(101, GSign::Corrected).unwrap();
    let control = verify_operator_inequality(101, GSign::Printed);
    let control_fails = matches!(control, Err(Error::InvalidExtractionWeight { .. }));
    c.check(
        report.passed && control_fails,
        &format!(
            "min eigenvalue {} at ({}, {}); negative control failed-as-expected: {}",
            report.min_eigenvalue, report.worst_a, report.worst_b, control_fails
        ),
    );
}

#[test]
fn criterion_05_relabeling_covariance() {
    let c = Criterion::new("05 relabeling covariance");
    let report = verify_relabeling_covariance(51);
    let mut ok = report.passed;
    let (a, b) = standard_settings(0.0);
    for k in 0..4 {
        let state = QuantumState::from_ket(&bell_ket_k(k), vec![2, 2], &DEFAULT_TOL).unwrap();
        let beta = chsh_value(&state, &a, &b, relabeling_for_outcome(k)).unwrap();
        ok &= (beta - MAX_CHSH).abs() <= 1e-9;
    }
    c.check(ok, &format!("{:?}", report.checks));
}

#[test]
fn criterion_06_teleport_identity() {
    let c = Criterion::new("06 teleportation injection identity");
    let report = verify_teleport_identity(100, 17, &DEFAULT_TOL).unwrap();
    c.check(
        report.max_fidelity_deviation <= 1e-8,
        &format!("max fidelity deviation {}", report.max_fidelity_deviation),
    );
}

#[test]
fn criterion_07_negativity_bound() {
    let c = Criterion::new("07 negativity lower bound");
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let phi = projector(&bell_ket_k(0));
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let rho = random_density_matrix(4, &mut rng);
        let overlap = trace(&(&rho * &phi)).re;
        let state = QuantumState::new(rho, vec![2, 2], &DEFAULT_TOL).unwrap();
        let n = state.negativity(&[1]).unwrap();
        worst = worst.min(n - (overlap - 0.5));
    }
    c.check(worst >= -1e-9, &format!("worst margin {worst}"));
}

#[test]
fn criterion_08_lemma1() {
    let c = Criterion::new("08 block-fidelity lemma");
    let report = verify_lemma1(500, 29, &DEFAULT_TOL).unwrap();
    c.check(
        report.passed,
        &format!("max violation {}", report.max_violation),
    );
}

#[test]
fn criterion_09_soundness_sweep() {
    let c = Criterion::new("09 soundness sweep");
    let grid = default_noise_grid();
    assert!(grid.len() >= 50);
    let report = soundness_sweep(&grid, &DEFAULT_TOL).unwrap();
    c.check(
        report.passed,
        &format!(
            "max violation {} at {:?} over {} checks",
            report.max_violation, report.worst_noise, report.checks
        ),
    );
}

#[test]
fn criterion_10_partial_bsm_curves() {
    let c = Criterion::new("10 partial-measurement curves");
    let f_i = f_i_from_delta(1.0).unwrap().value;
    let f_o_0 = f_o_from_chsh(MAX_CHSH).unwrap().value;
    let f_cond = conditional_fidelity_bound(f_o_0, f_i, 0.25).unwrap().value;
    let zeta = zeta_lower_bound(f_i, 0.25).unwrap().value;
    let mut ok = (f_cond - 1.0).abs() <= 1e-9 && (zeta - 1.0).abs() <= 1e-9;
    let mut detail = format!("ideal point: f_cond={f_cond} zeta={zeta}");

    for &p0 in &[0.25, 0.1, 0.01] {
        let mut last_cond = f64::NEG_INFINITY;
        let mut last_zeta = f64::NEG_INFINITY;
        for i in 0..=400 {
            let beta0 = 2.0 + (MAX_CHSH - 2.0) * i as f64 / 400.0;
            let f_i = f_i_from_delta(beta0 / MAX_CHSH).unwrap().value;
            let bound = conditional_fidelity_bound(
                f_o_from_chsh(beta0).unwrap().value,
                f_i,
                p0,
            )
            .unwrap();
            if bound.flags.regime_violated {
                continue;
            }
            let z = zeta_lower_bound(f_i, p0).unwrap().value;
            if bound.value < last_cond - 1e-12 || z < last_zeta - 1e-12 {
                ok = false;
                detail = format!("non-monotone at p0={p0} beta0={beta0}");
            }
            last_cond = bound.value;
            last_zeta = z;
        }
        // the regime-valid domain must be non-empty for every p0
        if last_cond == f64::NEG_INFINITY {
            ok = false;
            detail = format!("empty regime-valid domain at p0={p0}");
        }
    }
    // sanity: the independent-sources bound also reaches 1 at the ideal point
    let ones = [1.0f64; 4];
    ok &= (bsm_fidelity_independent_sources(&[0.25; 4], &ones).value - 1.0).abs() <= 1e-9;
    c.check(ok, &detail);
}
