//! Property-based tests for the linear-algebra and bound layers.

use bsmcert_core::bounds::BoundConstants;
use bsmcert_core::linalg::{kron, partial_trace_raw, trace, uhlmann_fidelity_raw, CMat};
use bsmcert_core::tol::DEFAULT_TOL;
use bsmcert_core::verify::{
    apply_product_channel, chsh_operator, random_density_matrix, random_pure_ket,
    reference_state, verify_lemma1, ExtractionChannel, GSign,
};
use bsmcert_core::QuantumState;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_state(seed: u64, dim: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_density_matrix(dim, &mut rng)
}

proptest! {
    #[test]
    fn fidelity_range_and_symmetry(seed in any::<u64>()) {
        let rho = rand_state(seed, 4);
        let sigma = rand_state(seed.wrapping_add(1), 4);
        let f = uhlmann_fidelity_raw(&rho, &sigma, &DEFAULT_TOL).unwrap();
        let g = uhlmann_fidelity_raw(&sigma, &rho, &DEFAULT_TOL).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - g).abs() <= 1e-9);
        let self_f = uhlmann_fidelity_raw(&rho, &rho, &DEFAULT_TOL).unwrap();
        prop_assert!((self_f - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn fidelity_monotone_under_partial_trace(seed in any::<u64>()) {
        let rho = rand_state(seed, 4);
        let sigma = rand_state(seed.wrapping_add(7), 4);
        let f_full = uhlmann_fidelity_raw(&rho, &sigma, &DEFAULT_TOL).unwrap();
        let rho_a = partial_trace_raw(&rho, &[2, 2], &[0]).unwrap();
        let sigma_a = partial_trace_raw(&sigma, &[2, 2], &[0]).unwrap();
        let f_marg = uhlmann_fidelity_raw(&rho_a, &sigma_a, &DEFAULT_TOL).unwrap();
        prop_assert!(f_marg >= f_full - 1e-9);
    }

    #[test]
    fn partial_trace_composes(seed in any::<u64>()) {
        let rho = rand_state(seed, 8);
        // tracing out factors one at a time matches tracing them together
        let step1 = partial_trace_raw(&rho, &[2, 2, 2], &[0, 1]).unwrap();
        let step2 = partial_trace_raw(&step1, &[2, 2], &[0]).unwrap();
        let direct = partial_trace_raw(&rho, &[2, 2, 2], &[0]).unwrap();
        prop_assert!((step2 - direct).norm() <= 1e-12);
        // and the trace is preserved throughout
        let full = partial_trace_raw(&rho, &[2, 2, 2], &[]).unwrap();
        prop_assert!((full[(0, 0)].re - trace(&rho).re).abs() <= 1e-12);
    }

    #[test]
    fn negativity_dominates_singlet_overlap(seed in any::<u64>()) {
        let rho = rand_state(seed, 4);
        let phi = bsmcert_core::linalg::projector(&bsmcert_core::linalg::bell_ket_k(0));
        let overlap = trace(&(&rho * &phi)).re;
        let state = QuantumState::new(rho, vec![2, 2], &DEFAULT_TOL).unwrap();
        let n = state.negativity(&[1]).unwrap();
        prop_assert!(n >= overlap - 0.5 - 1e-9);
    }

    #[test]
    fn extracted_fidelity_dominates_linear_chsh_form(
        seed in any::<u64>(),
        a in 0.0..std::f64::consts::FRAC_PI_2,
        b in 0.0..std::f64::consts::FRAC_PI_2,
    ) {
        let rho = rand_state(seed, 4);
        let beta = trace(&(&chsh_operator(a, b) * &rho)).re;
        let ca = ExtractionChannel::new(a, GSign::Corrected).unwrap();
        let cb = ExtractionChannel::new(b, GSign::Corrected).unwrap();
        let extracted = apply_product_channel(&ca, &cb, &rho);
        let psi = reference_state();
        let f2 = (psi.adjoint() * &extracted * &psi)[(0, 0)].re;
        let s = BoundConstants::s();
        let mu = BoundConstants::mu();
        prop_assert!(f2 >= s * beta + mu - 1e-9, "f2={f2}, rhs={}", s * beta + mu);
    }

    #[test]
    fn pure_state_fidelity_is_overlap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_pure_ket(4, &mut rng);
        let w = random_pure_ket(4, &mut rng);
        let f = uhlmann_fidelity_raw(&(&v * v.adjoint()), &(&w * w.adjoint()), &DEFAULT_TOL).unwrap();
        let overlap = v.dotc(&w).norm();
        prop_assert!((f - overlap).abs() <= 1e-9);
    }

    #[test]
    fn kron_is_multiplicative_on_traces(seed in any::<u64>()) {
        let a = rand_state(seed, 2);
        let b = rand_state(seed.wrapping_add(3), 3);
        let prod = kron(&a, &b);
        prop_assert!((trace(&prod).re - trace(&a).re * trace(&b).re).abs() <= 1e-12);
    }
}

#[test]
fn lemma1_five_hundred_instances() {
    let report = verify_lemma1(500, 41, &DEFAULT_TOL).unwrap();
    assert!(report.passed, "max violation {}", report.max_violation);
}
