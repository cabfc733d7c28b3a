//! The physical setup: entangled-pair sources, Bell state measurement
//! instruments, local CHSH tests, and the two-step certification protocol
//! producing observable statistics (β_k, p_k, δ).

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    self, bell_ket_k, identity, kron, partial_trace_raw, permute_subsystems_raw, projector,
    sigma_x, sigma_y, sigma_z, sqrtm_psd, trace, CMat, QuantumState,
};
use crate::tol::Tolerances;
use crate::{Error, Result};

pub const MAX_CHSH: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Probability floor below which a conditional state is treated as undefined.
pub const P_FLOOR: f64 = 1e-12;

/// A dichotomic ±1 observable assigned to a party and a setting slot.
#[derive(Debug, Clone)]
pub struct BinaryObservableSetting {
    pub observable: CMat,
    pub party: u8,
    pub setting_index: u8,
}

impl BinaryObservableSetting {
    pub fn new(observable: CMat, party: u8, setting_index: u8) -> Result<Self> {
        let dev = (&observable * &observable - identity(observable.nrows())).norm();
        if dev > 1e-9 || linalg::hermiticity_deviation(&observable) > 1e-9 {
            return Err(Error::NotBinaryObservable(dev));
        }
        Ok(BinaryObservableSetting {
            observable,
            party,
            setting_index,
        })
    }
}

/// Classical relabeling of inputs/outputs applied before evaluating CHSH.
///
/// `TA` negates the outputs of the first observable of party B¹;
/// `TB` swaps the two settings of party B².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relabeling {
    None,
    TA,
    TB,
    TATB,
}

/// The relabeling under which outcome k's conditional Bell state reaches the
/// maximal CHSH value with the fixed measurement boxes.
pub fn relabeling_for_outcome(k: usize) -> Relabeling {
    match k {
        0 => Relabeling::None,
        1 => Relabeling::TB,
        2 => Relabeling::TA,
        3 => Relabeling::TATB,
        _ => Relabeling::None,
    }
}

/// Standard measurement boxes of the protocol. Party B¹ measures
/// {σ_X, σ_Z} (setting 0 is σ_X), party B² measures {(σ_X±σ_Z)/√2}.
/// A misalignment angle rotates party B²'s observables about σ_Y.
pub fn standard_settings(
    misalignment: f64,
) -> ([BinaryObservableSetting; 2], [BinaryObservableSetting; 2]) {
    let inv = 1.0 / 2f64.sqrt();
    let d_plus = (sigma_x() + sigma_z()).scale(inv);
    let d_minus = (sigma_x() - sigma_z()).scale(inv);
    let rot = rotation_y(misalignment);
    let rotate = |o: CMat| &rot * o * rot.adjoint();
    (
        [
            BinaryObservableSetting::new(sigma_x(), 1, 0).unwrap(),
            BinaryObservableSetting::new(sigma_z(), 1, 1).unwrap(),
        ],
        [
            BinaryObservableSetting::new(rotate(d_plus), 2, 0).unwrap(),
            BinaryObservableSetting::new(rotate(d_minus), 2, 1).unwrap(),
        ],
    )
}

/// exp(−i θ/2 σ_Y).
pub fn rotation_y(theta: f64) -> CMat {
    identity(2).scale((theta / 2.0).cos()) - sigma_y().scale((theta / 2.0).sin()) * crate::linalg::c(0.0, 1.0)
}

/// CHSH value β = Σ (−1)^{y₁y₂} ⟨A_{y₁} ⊗ B_{y₂}⟩ after the requested
/// classical relabeling.
pub fn chsh_value(
    state: &QuantumState,
    a_settings: &[BinaryObservableSetting; 2],
    b_settings: &[BinaryObservableSetting; 2],
    relabeling: Relabeling,
) -> Result<f64> {
    if state.dim() != a_settings[0].observable.nrows() * b_settings[0].observable.nrows() {
        return Err(Error::DimensionMismatch(
            state.dim(),
            a_settings[0].observable.nrows() * b_settings[0].observable.nrows(),
        ));
    }
    let flip_a0 = matches!(relabeling, Relabeling::TA | Relabeling::TATB);
    let swap_b = matches!(relabeling, Relabeling::TB | Relabeling::TATB);
    let a_obs = |y: usize| -> CMat {
        let o = a_settings[y].observable.clone();
        if flip_a0 && y == 0 {
            -o
        } else {
            o
        }
    };
    let b_obs = |y: usize| -> &CMat {
        let y = if swap_b { 1 - y } else { y };
        &b_settings[y].observable
    };
    let mut beta = 0.0;
    for y1 in 0..2 {
        for y2 in 0..2 {
            let sign = if y1 * y2 == 1 { -1.0 } else { 1.0 };
            let op = kron(&a_obs(y1), b_obs(y2));
            beta += sign * trace(&(state.rho() * op)).re;
        }
    }
    Ok(beta)
}

/// One branch of a measurement instrument, in Kraus form on the measured
/// side. The branch map is ρ ↦ Tr_meas[(K⊗𝟙)ρ(K†⊗𝟙)] summed over Kraus
/// operators.
#[derive(Debug, Clone)]
pub struct InstrumentBranch {
    pub label: usize,
    pub kraus: Vec<CMat>,
}

/// A finite collection of outcome-labeled completely positive maps whose
/// sum is trace preserving.
#[derive(Debug, Clone)]
pub struct MeasurementInstrument {
    branches: Vec<InstrumentBranch>,
    input_dims: Vec<usize>,
}

impl MeasurementInstrument {
    pub fn new(branches: Vec<InstrumentBranch>, input_dims: Vec<usize>) -> Result<Self> {
        let dim: usize = input_dims.iter().product();
        let mut total = CMat::zeros(dim, dim);
        for b in &branches {
            for k in &b.kraus {
                if k.ncols() != dim {
                    return Err(Error::DimensionMismatch(k.ncols(), dim));
                }
                total += k.adjoint() * k;
            }
        }
        let dev = (total - identity(dim)).norm();
        if dev > 1e-9 {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(MeasurementInstrument {
            branches,
            input_dims,
        })
    }

    pub fn branches(&self) -> &[InstrumentBranch] {
        &self.branches
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn input_dim(&self) -> usize {
        self.input_dims.iter().product()
    }

    /// POVM element E_k = Σ_j K†K of branch k.
    pub fn povm_element(&self, k: usize) -> CMat {
        let d = self.input_dim();
        let mut e = CMat::zeros(d, d);
        for kr in &self.branches[k].kraus {
            e += kr.adjoint() * kr;
        }
        e
    }

    /// Applies the instrument to the leading subsystems of `rho` (the first
    /// `n_meas` factors of `dims`, whose product must equal the instrument
    /// input dimension). Returns per outcome the probability and the
    /// unnormalized post-measurement operator on the remaining factors.
    pub fn apply_leading(
        &self,
        rho: &CMat,
        dims: &[usize],
        n_meas: usize,
    ) -> Result<Vec<(f64, CMat)>> {
        let meas_dim: usize = dims[..n_meas].iter().product();
        if meas_dim != self.input_dim() {
            return Err(Error::DimensionMismatch(meas_dim, self.input_dim()));
        }
        let rest_dim: usize = dims[n_meas..].iter().product();
        let keep: Vec<usize> = (n_meas..dims.len()).collect();
        let mut out = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let mut acc = CMat::zeros(rest_dim, rest_dim);
            for k in &b.kraus {
                let big = kron(k, &identity(rest_dim));
                let moved = &big * rho * big.adjoint();
                acc += partial_trace_raw(&moved, dims, &keep)?;
            }
            let p = trace(&acc).re;
            out.push((p, acc));
        }
        Ok(out)
    }
}

/// The ideal Bell state measurement: four outcomes projecting onto the four
/// Bell states |φ_k⟩.
pub fn ideal_bsm() -> MeasurementInstrument {
    let branches = (0..4)
        .map(|k| InstrumentBranch {
            label: k,
            kraus: vec![projector(&bell_ket_k(k))],
        })
        .collect();
    MeasurementInstrument::new(branches, vec![2, 2]).expect("ideal BSM is trace preserving")
}

/// BSM with depolarized POVM elements E_k' = (1−w)|φ_k⟩⟨φ_k| + w·𝟙/4.
pub fn noisy_bsm(w: f64, tol: &Tolerances) -> Result<MeasurementInstrument> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::ParameterOutOfRange {
            name: "bsm_depolarization",
            value: w,
            min: 0.0,
            max: 1.0,
        });
    }
    let branches = (0..4)
        .map(|k| {
            let e = projector(&bell_ket_k(k)).scale(1.0 - w) + identity(4).scale(w / 4.0);
            Ok(InstrumentBranch {
                label: k,
                kraus: vec![sqrtm_psd(&e, tol)?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementInstrument::new(branches, vec![2, 2])
}

/// Werner state v|φ₀₀⟩⟨φ₀₀| + (1−v)𝟙/4.
pub fn werner_source(v: f64, tol: &Tolerances) -> Result<QuantumState> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::ParameterOutOfRange {
            name: "source_visibility",
            value: v,
            min: 0.0,
            max: 1.0,
        });
    }
    let rho = projector(&bell_ket_k(0)).scale(v) + identity(4).scale((1.0 - v) / 4.0);
    QuantumState::new(rho, vec![2, 2], tol)
}

/// Noise configuration of a simulated run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NoiseModel {
    /// Werner mixing weight per source.
    pub source_visibility: [f64; 2],
    /// Mixes the ideal BSM POVM with white noise 𝟙/4 per element.
    pub bsm_depolarization: f64,
    /// Rotates party B²'s observables about σ_Y (radians).
    pub setting_misalignment: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            source_visibility: [1.0, 1.0],
            bsm_depolarization: 0.0,
            setting_misalignment: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (i, &v) in self.source_visibility.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ParameterOutOfRange {
                    name: if i == 0 { "visibility[0]" } else { "visibility[1]" },
                    value: v,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.bsm_depolarization) {
            return Err(Error::ParameterOutOfRange {
                name: "bsm_depolarization",
                value: self.bsm_depolarization,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(())
    }
}

/// How the four-partite Bell value δ is obtained: supplied explicitly, or
/// modeled as β̄/(2√2) with β̄ the p-weighted mean of the four CHSH values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DeltaModel {
    Explicit(f64),
    ChshScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaModelKind {
    Explicit,
    ChshScaled,
}

/// Observed quantities of the protocol.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentStatistics {
    /// CHSH values β_0..β_3 (each in [−2√2, 2√2]).
    pub beta: [f64; 4],
    /// Whether each β_k is defined (false when p_k vanishes).
    pub beta_defined: [bool; 4],
    /// Outcome probabilities.
    pub p: [f64; 4],
    /// Four-partite Bell value δ ∈ [0, 1], if available.
    pub delta: Option<f64>,
    pub delta_model: DeltaModelKind,
    /// Standard errors, present for sampled statistics.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_std_err: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_std_err: Option<[f64; 4]>,
}

impl ExperimentStatistics {
    pub fn validate(&self) -> Result<()> {
        for &b in &self.beta {
            if b.abs() > MAX_CHSH + 1e-9 {
                return Err(Error::ParameterOutOfRange {
                    name: "beta",
                    value: b,
                    min: -MAX_CHSH,
                    max: MAX_CHSH,
                });
            }
        }
        let sum: f64 = self.p.iter().sum();
        if self.p.iter().any(|&p| p < -1e-12) || sum > 1.0 + 1e-9 {
            return Err(Error::ParameterOutOfRange {
                name: "p",
                value: sum,
                min: 0.0,
                max: 1.0,
            });
        }
        if let Some(d) = self.delta {
            if !(-1e-9..=1.0 + 1e-9).contains(&d) {
                return Err(Error::ParameterOutOfRange {
                    name: "delta",
                    value: d,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        Ok(())
    }
}

/// Result of an analytic protocol run: statistics plus the conditional
/// states of side B for each outcome.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub stats: ExperimentStatistics,
    pub conditionals: Vec<Option<QuantumState>>,
}

fn resolve_delta(model: DeltaModel, beta: &[f64; 4], p: &[f64; 4], defined: &[bool; 4]) -> (Option<f64>, DeltaModelKind) {
    match model {
        DeltaModel::Explicit(d) => (Some(d), DeltaModelKind::Explicit),
        DeltaModel::ChshScaled => {
            let wsum: f64 = (0..4).filter(|&k| defined[k]).map(|k| p[k]).sum();
            if wsum <= 0.0 {
                return (None, DeltaModelKind::ChshScaled);
            }
            let mean: f64 =
                (0..4).filter(|&k| defined[k]).map(|k| p[k] * beta[k]).sum::<f64>() / wsum;
            (Some((mean / MAX_CHSH).clamp(0.0, 1.0)), DeltaModelKind::ChshScaled)
        }
    }
}

/// Runs the two-source protocol analytically: the BSM acts on the A halves,
/// the conditional B states are extracted, and the four relabeled CHSH
/// values are evaluated exactly.
///
/// Subsystem ordering is A¹, A², B¹, B²; each source emits (A, B).
pub fn run_protocol(
    source1: &QuantumState,
    source2: &QuantumState,
    bsm: &MeasurementInstrument,
    a_settings: &[BinaryObservableSetting; 2],
    b_settings: &[BinaryObservableSetting; 2],
    delta_model: DeltaModel,
    tol: &Tolerances,
) -> Result<ProtocolOutcome> {
    let joint = joint_source_state(source1, source2, bsm)?;
    let dims = [2usize, 2, 2, 2];
    let branches = bsm.apply_leading(&joint, &dims, 2)?;
    let mut beta = [0.0f64; 4];
    let mut defined = [false; 4];
    let mut p = [0.0f64; 4];
    let mut conditionals: Vec<Option<QuantumState>> = vec![None; 4];
    for (k, (pk, op)) in branches.iter().enumerate() {
        p[k] = *pk;
        if *pk < P_FLOOR {
            continue;
        }
        let rho_k = op.scale(1.0 / pk);
        let state = QuantumState::new(rho_k, vec![2, 2], tol)?;
        beta[k] = chsh_value(&state, a_settings, b_settings, relabeling_for_outcome(k))?;
        defined[k] = true;
        conditionals[k] = Some(state);
    }
    let (delta, kind) = resolve_delta(delta_model, &beta, &p, &defined);
    Ok(ProtocolOutcome {
        stats: ExperimentStatistics {
            beta,
            beta_defined: defined,
            p,
            delta,
            delta_model: kind,
            beta_std_err: None,
            p_std_err: None,
        },
        conditionals,
    })
}

/// The joint four-partite state in A¹A²B¹B² order.
pub fn joint_source_state(
    source1: &QuantumState,
    source2: &QuantumState,
    bsm: &MeasurementInstrument,
) -> Result<CMat> {
    if source1.dims() != [2, 2] || source2.dims() != [2, 2] {
        return Err(Error::BadFactorization {
            dim: source1.dim(),
            dims: source1.dims().to_vec(),
        });
    }
    if bsm.input_dim() != 4 {
        return Err(Error::DimensionMismatch(bsm.input_dim(), 4));
    }
    // kron gives A¹B¹A²B² order; bring the A factors to the front.
    let prod = kron(source1.rho(), source2.rho());
    permute_subsystems_raw(&prod, &[2, 2, 2, 2], &[0, 2, 1, 3])
}

/// Finite-statistics protocol run: multinomial sampling of the joint
/// distribution p(k, b₁, b₂ | y₁, y₂) under uniformly random settings.
/// Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn sample_statistics(
    source1: &QuantumState,
    source2: &QuantumState,
    bsm: &MeasurementInstrument,
    a_settings: &[BinaryObservableSetting; 2],
    b_settings: &[BinaryObservableSetting; 2],
    delta_model: DeltaModel,
    shots: u64,
    seed: u64,
) -> Result<ExperimentStatistics> {
    assert!(shots >= 1, "shots must be positive");
    let joint = joint_source_state(source1, source2, bsm)?;
    let dims = [2usize, 2, 2, 2];
    let branches = bsm.apply_leading(&joint, &dims, 2)?;

    // Outcome projectors Π_b = (1 + (−1)^b O)/2 for each party and setting.
    let proj = |o: &CMat, b: usize| -> CMat {
        let sign = if b == 0 { 1.0 } else { -1.0 };
        (identity(2) + o.scale(sign)).scale(0.5)
    };

    // Joint distribution over (y1, y2, k, b1, b2); settings drawn uniformly.
    let mut weights = Vec::with_capacity(64);
    for y1 in 0..2 {
        for y2 in 0..2 {
            for k in 0..4 {
                for b1 in 0..2 {
                    for b2 in 0..2 {
                        let pa = proj(&a_settings[y1].observable, b1);
                        let pb = proj(&b_settings[y2].observable, b2);
                        let meas = kron(&pa, &pb);
                        let pr = trace(&(&branches[k].1 * meas)).re.max(0.0);
                        weights.push(0.25 * pr);
                    }
                }
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let dist = WeightedIndex::new(weights.iter().map(|w| w / total)).expect("valid weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [[[[[0u64; 2]; 2]; 4]; 2]; 2];
    for _ in 0..shots {
        let idx = dist.sample(&mut rng);
        let b2 = idx % 2;
        let b1 = (idx / 2) % 2;
        let k = (idx / 4) % 4;
        let y2 = (idx / 16) % 2;
        let y1 = idx / 32;
        counts[y1][y2][k][b1][b2] += 1;
    }

    let mut beta = [0.0f64; 4];
    let mut beta_defined = [false; 4];
    let mut beta_var = [0.0f64; 4];
    let mut p = [0.0f64; 4];
    let mut p_se = [0.0f64; 4];
    let k_total: Vec<u64> = (0..4)
        .map(|k| {
            (0..2)
                .flat_map(|y1| (0..2).map(move |y2| (y1, y2)))
                .map(|(y1, y2)| {
                    counts[y1][y2][k].iter().flatten().sum::<u64>()
                })
                .sum()
        })
        .collect();
    for k in 0..4 {
        p[k] = k_total[k] as f64 / shots as f64;
        p_se[k] = (p[k] * (1.0 - p[k]) / shots as f64).sqrt();
        let rel = relabeling_for_outcome(k);
        let flip_a0 = matches!(rel, Relabeling::TA | Relabeling::TATB);
        let swap_b = matches!(rel, Relabeling::TB | Relabeling::TATB);
        let mut ok = true;
        let mut b_acc = 0.0;
        let mut var_acc = 0.0;
        for y1 in 0..2 {
            for y2 in 0..2 {
                // the correlator entering CHSH slot (y1, y2) after relabeling
                let data_y2 = if swap_b { 1 - y2 } else { y2 };
                let cell = &counts[y1][data_y2][k];
                let n: u64 = cell.iter().flatten().sum();
                if n == 0 {
                    ok = false;
                    continue;
                }
                let mut e = 0.0;
                for b1 in 0..2 {
                    for b2 in 0..2 {
                        let mut sign = if (b1 + b2) % 2 == 0 { 1.0 } else { -1.0 };
                        if flip_a0 && y1 == 0 {
                            sign = -sign;
                        }
                        e += sign * cell[b1][b2] as f64;
                    }
                }
                e /= n as f64;
                let slot_sign = if y1 * y2 == 1 { -1.0 } else { 1.0 };
                b_acc += slot_sign * e;
                var_acc += (1.0 - e * e).max(0.0) / n as f64;
            }
        }
        if ok {
            beta[k] = b_acc.clamp(-MAX_CHSH, MAX_CHSH);
            beta_var[k] = var_acc;
            beta_defined[k] = true;
        }
    }
    let (delta, kind) = resolve_delta(delta_model, &beta, &p, &beta_defined);
    Ok(ExperimentStatistics {
        beta,
        beta_defined,
        p,
        delta,
        delta_model: kind,
        beta_std_err: Some([
            beta_var[0].sqrt(),
            beta_var[1].sqrt(),
            beta_var[2].sqrt(),
            beta_var[3].sqrt(),
        ]),
        p_std_err: Some(p_se),
    })
}
