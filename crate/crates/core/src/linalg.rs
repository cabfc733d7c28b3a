//! Dense complex linear algebra for small multipartite quantum systems.
//!
//! Everything is built on `nalgebra::DMatrix<Complex<f64>>`. Subsystem
//! structure is carried explicitly as an ordered list of factor dimensions;
//! indices are row-major (the left tensor factor is the first subsystem).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::tol::Tolerances;
use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Complex scalar from real and imaginary parts.
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Real scalar promoted to complex.
pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

/// Bell state |φ_jℓ⟩ = (σ_Z)^j ⊗ (σ_X)^ℓ |φ₀₀⟩ with |φ₀₀⟩ = (|00⟩+|11⟩)/√2.
pub fn bell_ket(j: usize, l: usize) -> CVec {
    let inv = 1.0 / 2f64.sqrt();
    let mut v = CVec::zeros(4);
    // (σ_Z)^j ⊗ (σ_X)^ℓ applied to (|00⟩+|11⟩)/√2, written out directly:
    // the ℓ bit flips the second qubit, the j bit adds a phase on |1x⟩.
    v[l] = cr(inv);
    v[2 + (1 - l)] = cr(if j == 0 { inv } else { -inv });
    v
}

/// Bell state by outcome label k = jℓ (binary, j the σ_Z bit).
pub fn bell_ket_k(k: usize) -> CVec {
    bell_ket((k >> 1) & 1, k & 1)
}

pub fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().sum()
}

/// Kronecker product; the left factor is the first subsystem.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list of matrices, left to right.
pub fn kron_all(ms: &[&CMat]) -> CMat {
    let mut out = ms[0].clone();
    for m in &ms[1..] {
        out = out.kronecker(m);
    }
    out
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}

pub fn hermiticity_deviation(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    hermiticity_deviation(m) <= tol
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching eigenvector columns.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let dev = hermiticity_deviation(m);
    if dev > 1e-8 {
        return Err(Error::NotHermitian(dev));
    }
    // Symmetrize to wash out round-off before factorizing.
    let h = (m + m.adjoint()).scale(0.5);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(m.nrows(), m.ncols());
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> Result<f64> {
    let (vals, _) = hermitian_eigen(m)?;
    Ok(vals[0])
}

/// Square root of a positive semi-definite matrix via Hermitian
/// eigendecomposition. Eigenvalues in [−tol, 0) are clamped to 0;
/// anything more negative is an error.
pub fn sqrtm_psd(m: &CMat, tol: &Tolerances) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(m)?;
    if vals[0] < -tol.positivity {
        return Err(Error::NotPositive(vals[0]));
    }
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for (i, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        if s > 0.0 {
            let col = vecs.column(i);
            out += (col * col.adjoint()).scale(s);
        }
    }
    Ok(out)
}

/// Trace norm ‖m‖₁ of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMat) -> Result<f64> {
    let (vals, _) = hermitian_eigen(m)?;
    Ok(vals.iter().map(|v| v.abs()).sum())
}

/// Uhlmann fidelity F(ρ,σ) = Tr √(√ρ σ √ρ), computed as the nuclear norm
/// of √ρ·√σ. Result is clamped to [0, 1].
pub fn uhlmann_fidelity_raw(rho: &CMat, sigma: &CMat, tol: &Tolerances) -> Result<f64> {
    if rho.nrows() != sigma.nrows() {
        return Err(Error::DimensionMismatch(rho.nrows(), sigma.nrows()));
    }
    let a = sqrtm_psd(rho, tol)?;
    let b = sqrtm_psd(sigma, tol)?;
    let svd = (a * b).svd(false, false);
    let f: f64 = svd.singular_values.iter().sum();
    Ok(f.clamp(0.0, 1.0))
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

fn decode(idx: usize, dims: &[usize], st: &[usize]) -> Vec<usize> {
    dims.iter()
        .zip(st.iter())
        .map(|(&d, &s)| (idx / s) % d)
        .collect()
}

/// Partial trace over the subsystems NOT listed in `keep` (sorted indices).
pub fn partial_trace_raw(m: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let n = dims.len();
    for &k in keep {
        if k >= n {
            return Err(Error::IndexOutOfRange(k, n));
        }
    }
    let full: usize = dims.iter().product();
    if m.nrows() != full {
        return Err(Error::BadFactorization {
            dim: m.nrows(),
            dims: dims.to_vec(),
        });
    }
    let st = strides(dims);
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let kst = strides(&kept_dims);
    let out_dim: usize = kept_dims.iter().product();
    let traced: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let mut out = CMat::zeros(out_dim, out_dim);
    for r in 0..full {
        let rc = decode(r, dims, &st);
        for cidx in 0..full {
            let cc = decode(cidx, dims, &st);
            if traced.iter().any(|&t| rc[t] != cc[t]) {
                continue;
            }
            let ro: usize = keep.iter().enumerate().map(|(i, &k)| rc[k] * kst[i]).sum();
            let co: usize = keep.iter().enumerate().map(|(i, &k)| cc[k] * kst[i]).sum();
            out[(ro, co)] += m[(r, cidx)];
        }
    }
    Ok(out)
}

/// Partial transpose on the subsystems listed in `part`.
pub fn partial_transpose_raw(m: &CMat, dims: &[usize], part: &[usize]) -> Result<CMat> {
    let n = dims.len();
    for &k in part {
        if k >= n {
            return Err(Error::IndexOutOfRange(k, n));
        }
    }
    let full: usize = dims.iter().product();
    if m.nrows() != full {
        return Err(Error::BadFactorization {
            dim: m.nrows(),
            dims: dims.to_vec(),
        });
    }
    let st = strides(dims);
    let mut out = CMat::zeros(full, full);
    for r in 0..full {
        let rc = decode(r, dims, &st);
        for cidx in 0..full {
            let cc = decode(cidx, dims, &st);
            let mut ro = 0usize;
            let mut co = 0usize;
            for f in 0..n {
                if part.contains(&f) {
                    ro += cc[f] * st[f];
                    co += rc[f] * st[f];
                } else {
                    ro += rc[f] * st[f];
                    co += cc[f] * st[f];
                }
            }
            out[(ro, co)] = m[(r, cidx)];
        }
    }
    Ok(out)
}

/// Reorder subsystems: output factor i is input factor `perm[i]`.
pub fn permute_subsystems_raw(m: &CMat, dims: &[usize], perm: &[usize]) -> Result<CMat> {
    let n = dims.len();
    if perm.len() != n {
        return Err(Error::IndexOutOfRange(perm.len(), n));
    }
    let st = strides(dims);
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let ost = strides(&out_dims);
    let full: usize = dims.iter().product();
    let mut out = CMat::zeros(full, full);
    for r in 0..full {
        let rc = decode(r, dims, &st);
        let ro: usize = (0..n).map(|i| rc[perm[i]] * ost[i]).sum();
        for cidx in 0..full {
            let cc = decode(cidx, dims, &st);
            let co: usize = (0..n).map(|i| cc[perm[i]] * ost[i]).sum();
            out[(ro, co)] = m[(r, cidx)];
        }
    }
    Ok(out)
}

/// Purification of a density operator: a unit vector on system ⊗ environment
/// with the environment dimension equal to the rank (eigenvalues below
/// 1e-14 are dropped). Returns the vector and the environment dimension.
pub fn purify(rho: &CMat, tol: &Tolerances) -> Result<(CVec, usize)> {
    let (vals, vecs) = hermitian_eigen(rho)?;
    if vals[0] < -tol.positivity {
        return Err(Error::NotPositive(vals[0]));
    }
    let kept: Vec<(f64, usize)> = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-14)
        .map(|(i, &v)| (v, i))
        .collect();
    let env = kept.len().max(1);
    let d = rho.nrows();
    let mut psi = CVec::zeros(d * env);
    for (e, &(lam, col)) in kept.iter().enumerate() {
        let w = lam.max(0.0).sqrt();
        for s in 0..d {
            psi[s * env + e] += vecs[(s, col)] * cr(w);
        }
    }
    let norm = psi.norm();
    if norm > 0.0 {
        psi.unscale_mut(norm);
    }
    Ok((psi, env))
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct KetVector {
    amplitudes: CVec,
}

impl KetVector {
    pub fn new(amplitudes: CVec, tol: &Tolerances) -> Result<Self> {
        let n2 = amplitudes.norm_squared();
        if (n2 - 1.0).abs() > tol.trace.max(1e-10) {
            return Err(Error::NotNormalized(n2));
        }
        Ok(KetVector { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn projector(&self) -> CMat {
        projector(&self.amplitudes)
    }
}

/// A density operator with a declared tensor factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    rho: CMat,
    dims: Vec<usize>,
}

impl QuantumState {
    /// Validates trace one, Hermiticity and positivity against `tol`.
    pub fn new(rho: CMat, dims: Vec<usize>, tol: &Tolerances) -> Result<Self> {
        let full: usize = dims.iter().product();
        if rho.nrows() != full || rho.ncols() != full {
            return Err(Error::BadFactorization {
                dim: rho.nrows(),
                dims,
            });
        }
        let tr = trace(&rho);
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::InvalidTrace(tr.re));
        }
        let dev = hermiticity_deviation(&rho);
        if dev > tol.hermiticity {
            return Err(Error::NotHermitian(dev));
        }
        let min = min_eigenvalue(&rho)?;
        if min < -tol.positivity {
            return Err(Error::NotPositive(min));
        }
        Ok(QuantumState { rho, dims })
    }

    pub fn from_ket(ket: &CVec, dims: Vec<usize>, tol: &Tolerances) -> Result<Self> {
        QuantumState::new(projector(ket), dims, tol)
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Reduced state on the kept subsystems (sorted indices).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<QuantumState> {
        let rho = partial_trace_raw(&self.rho, &self.dims, keep)?;
        let dims = keep.iter().map(|&k| self.dims[k]).collect();
        Ok(QuantumState { rho, dims })
    }

    /// Negativity across the bipartition: `part` lists the transposed
    /// subsystems, which must be a proper nonempty subset of the factors.
    pub fn negativity(&self, part: &[usize]) -> Result<f64> {
        if part.is_empty() || part.len() >= self.dims.len() {
            return Err(Error::IndexOutOfRange(part.len(), self.dims.len()));
        }
        let pt = partial_transpose_raw(&self.rho, &self.dims, part)?;
        let n1 = trace_norm_hermitian(&pt)?;
        Ok(((n1 - 1.0) / 2.0).max(0.0))
    }

    pub fn fidelity(&self, other: &QuantumState, tol: &Tolerances) -> Result<f64> {
        uhlmann_fidelity_raw(&self.rho, &other.rho, tol)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<QuantumState> {
        let rho = permute_subsystems_raw(&self.rho, &self.dims, perm)?;
        let dims = perm.iter().map(|&p| self.dims[p]).collect();
        Ok(QuantumState { rho, dims })
    }
}

/// Uhlmann fidelity between two declared states.
pub fn uhlmann_fidelity(rho: &QuantumState, sigma: &QuantumState, tol: &Tolerances) -> Result<f64> {
    uhlmann_fidelity_raw(rho.rho(), sigma.rho(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::DEFAULT_TOL;

    fn werner(v: f64) -> CMat {
        let phi = projector(&bell_ket(0, 0));
        phi.scale(v) + identity(4).scale((1.0 - v) / 4.0)
    }

    #[test]
    fn kron_identity() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
    }

    #[test]
    fn kron_sz_sx_maps_phi00_to_phi11() {
        let op = kron(&sigma_z(), &sigma_x());
        let out = &op * bell_ket(0, 0);
        let target = bell_ket(1, 1);
        // equal up to global phase
        let overlap = (target.adjoint() * &out)[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kron_sx_sx_is_antidiagonal() {
        // direct 4x4 expansion by hand: ones on the antidiagonal
        let m = kron(&sigma_x(), &sigma_x());
        for r in 0..4 {
            for c in 0..4 {
                let want = if r + c == 3 { 1.0 } else { 0.0 };
                assert!((m[(r, c)] - cr(want)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_bell_marginal() {
        let rho = projector(&bell_ket(0, 0));
        let red = partial_trace_raw(&rho, &[2, 2], &[1]).unwrap();
        assert!((red - identity(2).scale(0.5)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_product_state() {
        let rho1 = werner(0.3);
        let rho2 = werner(0.9);
        let joint = kron(&rho1, &rho2);
        let red = partial_trace_raw(&joint, &[4, 4], &[0]).unwrap();
        assert!((red - rho1).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_matches_bruteforce_contraction() {
        // independent double-loop index contraction on a random 2x2 pure state
        let raw = CVec::from_fn(4, |i, _| c(0.3 + i as f64, 0.7 - 0.2 * i as f64));
        let psi = raw.clone().unscale(raw.norm());
        let rho = projector(&psi);
        let red = partial_trace_raw(&rho, &[2, 2], &[0]).unwrap();
        let mut brute = CMat::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                for t in 0..2 {
                    brute[(a, b)] += rho[(a * 2 + t, b * 2 + t)];
                }
            }
        }
        assert!((red - brute).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_complement_composes_to_full_trace() {
        let rho = werner(0.77);
        let a = partial_trace_raw(&rho, &[2, 2], &[0]).unwrap();
        let full = partial_trace_raw(&a, &[2], &[]).unwrap();
        assert!((full[(0, 0)] - cr(1.0)).norm() < 1e-12);
    }

    #[test]
    fn fidelity_self_is_one() {
        let rho = werner(0.5);
        assert!((uhlmann_fidelity_raw(&rho, &rho, &DEFAULT_TOL).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fidelity_pure_vs_maximally_mixed() {
        // F(|φ00><φ00|, 1/4) = sqrt(<ψ|σ|ψ>) = 1/2
        let rho = projector(&bell_ket(0, 0));
        let sigma = identity(4).scale(0.25);
        let f = uhlmann_fidelity_raw(&rho, &sigma, &DEFAULT_TOL).unwrap();
        assert!((f - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fidelity_werner_vs_bell_closed_form() {
        for &v in &[0.0, 0.3, 0.9, 1.0] {
            let f = uhlmann_fidelity_raw(&werner(v), &projector(&bell_ket(0, 0)), &DEFAULT_TOL)
                .unwrap();
            let want = ((1.0 + 3.0 * v) / 4.0).sqrt();
            assert!((f - want).abs() < 1e-10, "v={v}: {f} vs {want}");
        }
    }

    #[test]
    fn negativity_bell_state() {
        let st = QuantumState::new(projector(&bell_ket(0, 0)), vec![2, 2], &DEFAULT_TOL).unwrap();
        assert!((st.negativity(&[1]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negativity_product_state_is_zero() {
        let rho = kron(&identity(2).scale(0.5), &CMat::from_row_slice(
            2,
            2,
            &[cr(1.0), cr(0.0), cr(0.0), cr(0.0)],
        ));
        let st = QuantumState::new(rho, vec![2, 2], &DEFAULT_TOL).unwrap();
        assert!(st.negativity(&[1]).unwrap() < 1e-12);
    }

    #[test]
    fn negativity_partially_entangled_closed_form() {
        for &q in &[0.1f64, 0.25, 0.5, 0.8] {
            let mut psi = CVec::zeros(4);
            psi[0] = cr((q as f64).sqrt());
            psi[3] = cr((1.0 - q as f64).sqrt());
            let st = QuantumState::new(projector(&psi), vec![2, 2], &DEFAULT_TOL).unwrap();
            let want = (q * (1.0 - q)).sqrt();
            assert!((st.negativity(&[1]).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn min_eigenvalue_basics() {
        assert!((min_eigenvalue(&identity(2)).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_eigenvalue(&sigma_z()).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_rejects_non_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]);
        assert!(min_eigenvalue(&m).is_err());
    }

    #[test]
    fn purification_reduces_back() {
        let rho = werner(0.6);
        let (psi, env) = purify(&rho, &DEFAULT_TOL).unwrap();
        let full = projector(&psi);
        let red = partial_trace_raw(&full, &[4, env], &[0]).unwrap();
        assert!((red - rho).norm() < 1e-10);
    }

    #[test]
    fn permute_swap_matches_kron_order() {
        let a = werner(0.2);
        let b = werner(0.9);
        let ab = kron(&a, &b);
        let ba = permute_subsystems_raw(&ab, &[4, 4], &[1, 0]).unwrap();
        assert!((ba - kron(&b, &a)).norm() < 1e-12);
    }

    #[test]
    fn state_validation_rejects_bad_trace() {
        let rho = identity(2);
        assert!(QuantumState::new(rho, vec![2], &DEFAULT_TOL).is_err());
    }
}
