//! Liouvillian assembly, steady-state solution, and a fixed-step
//! integrator for Lindblad master equations of arbitrary dimension.
//!
//! Density matrices are vectorized by column stacking: element `ρ[(i, j)]`
//! lives at index `i + j·n`. With that convention
//!
//! ```text
//! L = −i(I⊗H − Hᵀ⊗I) + Σₖ γₖ [ L̄ₖ⊗Lₖ − ½ I⊗(Lₖ†Lₖ) − ½ (Lₖ†Lₖ)ᵀ⊗I ]
//! ```
//!
//! Every jump operator here is a single matrix unit `|d⟩⟨s|`, so the
//! superoperator is filled entry by entry instead of through Kronecker
//! products.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::JumpOperator;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity and trace tolerance of a validated [`DensityMatrix`].
pub const DENSITY_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated before a state is rejected.
pub const POSITIVITY_FLOOR: f64 = -1e-9;
/// Relative singular-value threshold used to count null directions.
pub const RANK_TOL: f64 = 1e-8;

/// A Hermitian, unit-trace, positive semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates and wraps a matrix.
    pub fn new(elements: DMatrix<Complex64>) -> Result<Self> {
        if !elements.is_square() || elements.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square and non-empty, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        if elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix"));
        }
        let herm = (&elements - elements.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > DENSITY_TOL {
            return Err(Error::invalid("rho", format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = elements.trace();
        if (tr - ONE).norm() > DENSITY_TOL {
            return Err(Error::invalid("rho", format!("trace {tr} is not 1")));
        }
        let min_eig = min_eigenvalue(&elements);
        if min_eig < POSITIVITY_FLOOR {
            return Err(Error::NotPositive(min_eig));
        }
        Ok(Self { elements })
    }

    /// Pure state `|k⟩⟨k|`.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(k, k)] = ONE;
        Self { elements: m }
    }

    /// Maximally mixed state `I/n`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let m = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self { elements: m }
    }

    pub(crate) fn from_raw(elements: DMatrix<Complex64>) -> Self {
        Self { elements }
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.elements
    }

    pub fn population(&self, level: usize) -> f64 {
        self.elements[(level, level)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.population(k)).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.elements.trace()
    }

    /// Trace distance ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.elements - &other.elements;
        let herm = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        0.5 * eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn to_vector(&self) -> DVector<Complex64> {
        vectorize(&self.elements)
    }
}

fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Column-stacking vectorization.
pub fn vectorize(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &DVector<Complex64>, dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Superoperator acting on column-stacked density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    dim: usize,
    matrix: DMatrix<Complex64>,
}

impl Liouvillian {
    /// Hilbert-space dimension n (the superoperator is n²×n²).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Frobenius norm of the superoperator.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Maximum absolute row sum; bounds the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `dρ/dt` for an arbitrary operator `x`.
    pub fn apply(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        unvectorize(&(&self.matrix * vectorize(x)), self.dim)
    }

    /// ‖L·vec(ρ)‖₂ relative to ‖L‖.
    pub fn relative_defect(&self, rho: &DensityMatrix) -> f64 {
        (&self.matrix * rho.to_vector()).norm() / self.norm()
    }
}

#[inline]
fn vidx(i: usize, j: usize, n: usize) -> usize {
    i + j * n
}

/// Assembles `−i[H,·] + Σ γ D[L]` as an n²×n² matrix.
pub fn assemble_liouvillian(h: &DMatrix<Complex64>, jumps: &[JumpOperator]) -> Result<Liouvillian> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Hamiltonian is {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let n = h.nrows();
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian"));
    }
    for j in jumps {
        if j.source >= n || j.destination >= n {
            return Err(Error::DimensionMismatch(format!(
                "jump {}->{} outside a {n}-level space",
                j.source, j.destination
            )));
        }
        if !j.rate.is_finite() || j.rate < 0.0 {
            return Err(Error::invalid(
                "jump rate",
                format!("{} is not a finite non-negative rate", j.rate),
            ));
        }
    }

    let nn = n * n;
    let mut l = DMatrix::<Complex64>::zeros(nn, nn);

    // −i(Hρ − ρH)
    for j in 0..n {
        for i in 0..n {
            let row = vidx(i, j, n);
            for k in 0..n {
                let hik = h[(i, k)];
                if hik != ZERO {
                    l[(row, vidx(k, j, n))] += -I * hik;
                }
                let hkj = h[(k, j)];
                if hkj != ZERO {
                    l[(row, vidx(i, k, n))] += I * hkj;
                }
            }
        }
    }

    for jump in jumps.iter().filter(|j| j.rate > 0.0) {
        let (s, d, g) = (jump.source, jump.destination, jump.rate);
        // L ρ L† = ρ_ss |d⟩⟨d|
        l[(vidx(d, d, n), vidx(s, s, n))] += g;
        // −½{|s⟩⟨s|, ρ}
        for k in 0..n {
            l[(vidx(s, k, n), vidx(s, k, n))] -= 0.5 * g;
            l[(vidx(k, s, n), vidx(k, s, n))] -= 0.5 * g;
        }
    }

    Ok(Liouvillian { dim: n, matrix: l })
}

/// Strategy for extracting the stationary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyStateMethod {
    /// Replace one equation with the trace constraint and LU-solve.
    TraceRow,
    /// Right singular vector of the smallest singular value.
    NullVector,
}

/// Solves `L·vec(ρ) = 0`, `Tr ρ = 1` by the trace-row method.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, SteadyStateMethod::TraceRow)
}

/// Solves for the stationary state with an explicit method.
///
/// The superoperator is first split into the connected blocks of its
/// sparsity pattern. Only the block that contains the populations can carry
/// a trace-one solution; every other block must be non-singular, and the
/// null space summed over all blocks must be one-dimensional.
pub fn steady_state_with(l: &Liouvillian, method: SteadyStateMethod) -> Result<DensityMatrix> {
    let n = l.dim;
    let m = &l.matrix;
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("Liouvillian"));
    }

    let blocks = connected_blocks(m);
    let population_blocks: Vec<usize> = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.iter().any(|&k| k % (n + 1) == 0))
        .map(|(i, _)| i)
        .collect();

    // per-block singular values, for the rank test
    let svds: Vec<SVD<Complex64, nalgebra::Dyn, nalgebra::Dyn>> = blocks
        .iter()
        .map(|b| SVD::new(extract_block(m, b), false, method == SteadyStateMethod::NullVector))
        .collect();
    let sigma_max = svds
        .iter()
        .flat_map(|s| s.singular_values.iter().copied())
        .fold(0.0, f64::max);
    let tolerance = RANK_TOL * sigma_max;
    let nullity: usize = svds
        .iter()
        .map(|s| s.singular_values.iter().filter(|&&v| v <= tolerance).count())
        .sum();
    if population_blocks.len() != 1 || nullity > 1 {
        return Err(Error::DegenerateSteadyState {
            nullity: nullity.max(population_blocks.len()),
            tolerance,
        });
    }

    let pb = population_blocks[0];
    let block = &blocks[pb];
    let local = match method {
        SteadyStateMethod::TraceRow => solve_trace_row(m, block, n)?,
        SteadyStateMethod::NullVector => null_vector(&svds[pb], block, n)?,
    };

    let mut v = DVector::<Complex64>::zeros(n * n);
    for (k, &g) in block.iter().enumerate() {
        v[g] = local[k];
    }
    project_physical(unvectorize(&v, n))
}

fn solve_trace_row(m: &DMatrix<Complex64>, block: &[usize], n: usize) -> Result<DVector<Complex64>> {
    let mut a = extract_block(m, block);
    let diag_pos: Vec<usize> = block
        .iter()
        .enumerate()
        .filter(|(_, &g)| g % (n + 1) == 0)
        .map(|(k, _)| k)
        .collect();
    let replaced = diag_pos[0];
    let size = block.len();
    for c in 0..size {
        a[(replaced, c)] = ZERO;
    }
    for &c in &diag_pos {
        a[(replaced, c)] = ONE;
    }
    let mut b = DVector::<Complex64>::zeros(size);
    b[replaced] = ONE;
    let x = a.lu().solve(&b).ok_or(Error::DegenerateSteadyState {
        nullity: 2,
        tolerance: 0.0,
    })?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("steady-state solve"));
    }
    Ok(x)
}

fn null_vector(
    svd: &SVD<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    block: &[usize],
    n: usize,
) -> Result<DVector<Complex64>> {
    let v_t = svd.v_t.as_ref().expect("SVD computed with V");
    let (kmin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
    let mut x: DVector<Complex64> = v_t.row(kmin).transpose().map(|z| z.conj());
    let tr: Complex64 = block
        .iter()
        .enumerate()
        .filter(|(_, &g)| g % (n + 1) == 0)
        .map(|(k, _)| x[k])
        .sum();
    if tr.norm() == 0.0 {
        return Err(Error::NonFinite("null vector has zero trace"));
    }
    x /= tr;
    Ok(x)
}

/// Hermitizes, clips tiny negative eigenvalues, and renormalizes the trace.
fn project_physical(raw: DMatrix<Complex64>) -> Result<DensityMatrix> {
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("steady state"));
    }
    let mut rho = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = rho.trace().re;
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::NonFinite("steady-state trace"));
    }
    rho /= Complex64::new(tr, 0.0);

    let eig = SymmetricEigen::new(rho.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < POSITIVITY_FLOOR {
        return Err(Error::NotPositive(min));
    }
    if min < 0.0 {
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let q = &eig.eigenvectors;
        let d = DMatrix::from_diagonal(&clipped.map(|v| Complex64::new(v, 0.0)));
        rho = q * d * q.adjoint();
        let tr = rho.trace().re;
        rho /= Complex64::new(tr, 0.0);
    }
    Ok(DensityMatrix::from_raw(rho))
}

fn extract_block(m: &DMatrix<Complex64>, idx: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Connected components of the undirected graph with an edge wherever
/// `m[(r, c)] != 0`. Each component's indices are sorted.
fn connected_blocks(m: &DMatrix<Complex64>) -> Vec<Vec<usize>> {
    let size = m.nrows();
    let mut parent: Vec<usize> = (0..size).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in 0..size {
        for r in 0..size {
            if r != c && m[(r, c)] != ZERO {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..size {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(k);
    }
    groups.into_values().collect()
}

/// Propagates `rho0` for `t_final` seconds with classical fourth-order
/// Runge–Kutta steps of (at most) `dt`.
///
/// For a time-independent generator one RK4 step is the fixed matrix
/// `P = I + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24`; `N` steps are applied as
/// `P^N` by binary powering, which is the same recursion evaluated in
/// `O(log N)` matrix products.
pub fn evolve(
    h: &DMatrix<Complex64>,
    jumps: &[JumpOperator],
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    let l = assemble_liouvillian(h, jumps)?;
    evolve_liouvillian(&l, rho0, t_final, dt)
}

/// [`evolve`] for an already assembled generator.
pub fn evolve_liouvillian(l: &Liouvillian, rho0: &DensityMatrix, t_final: f64, dt: f64) -> Result<DensityMatrix> {
    if rho0.dim() != l.dim {
        return Err(Error::DimensionMismatch(format!(
            "state is {}-dimensional, generator acts on {}",
            rho0.dim(),
            l.dim
        )));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::invalid("t_final", format!("{t_final}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("{dt}")));
    }
    if t_final == 0.0 {
        return Ok(rho0.clone());
    }
    let steps = (t_final / dt).ceil().max(1.0);
    if steps > u64::MAX as f64 / 2.0 {
        return Err(Error::invalid("dt", "too many steps"));
    }
    let steps = steps as u64;
    let step = t_final / steps as f64;
    if step * l.inf_norm() >= 0.1 {
        return Err(Error::invalid(
            "dt",
            format!("dt·‖L‖ = {:.3} must be below 0.1", step * l.inf_norm()),
        ));
    }

    let mut power = rk4_step_matrix(l, step);
    let mut v = rho0.to_vector();
    let mut remaining = steps;
    while remaining > 0 {
        if remaining & 1 == 1 {
            v = &power * v;
        }
        remaining >>= 1;
        if remaining > 0 {
            power = &power * &power;
        }
        if power.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("time evolution"));
        }
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("time evolution"));
    }
    let rho = unvectorize(&v, l.dim);
    let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(DensityMatrix::from_raw(rho))
}

/// Applies `steps` explicit RK4 steps of size `dt` one at a time.
pub fn rk4_steps(l: &Liouvillian, rho0: &DensityMatrix, dt: f64, steps: usize) -> DensityMatrix {
    let m = &l.matrix;
    let mut v = rho0.to_vector();
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    for _ in 0..steps {
        let k1 = m * &v;
        let k2 = m * (&v + &k1 * half);
        let k3 = m * (&v + &k2 * half);
        let k4 = m * (&v + &k3 * full);
        v += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * sixth;
    }
    DensityMatrix::from_raw(unvectorize(&v, l.dim))
}

fn rk4_step_matrix(l: &Liouvillian, h: f64) -> DMatrix<Complex64> {
    let nn = l.matrix.nrows();
    let id = DMatrix::<Complex64>::identity(nn, nn);
    let hl = &l.matrix * Complex64::new(h, 0.0);
    // Horner form of the degree-4 Taylor polynomial
    let mut p = &id + &hl * Complex64::new(0.25, 0.0);
    p = &id + (&hl * Complex64::new(1.0 / 3.0, 0.0)) * p;
    p = &id + (&hl * Complex64::new(0.5, 0.0)) * p;
    &id + hl * p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Direct matrix-product evaluation of the Lindblad right-hand side.
    fn lindblad_rhs(h: &DMatrix<Complex64>, jumps: &[JumpOperator], rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = h.nrows();
        let mut out = (h * rho - rho * h) * (-I);
        for j in jumps {
            let mut lop = DMatrix::<Complex64>::zeros(n, n);
            lop[(j.destination, j.source)] = ONE;
            let ld = lop.adjoint();
            let ldl = &ld * &lop;
            out += (&lop * rho * &ld - (&ldl * rho + rho * &ldl) * c(0.5)) * c(j.rate);
        }
        out
    }

    #[test]
    fn empty_generator_is_zero() {
        let l = assemble_liouvillian(&DMatrix::zeros(3, 3), &[]).unwrap();
        assert!(l.matrix().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn coherence_rotates_under_diagonal_hamiltonian() {
        let omega = 3.7;
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0), c(omega)]));
        let l = assemble_liouvillian(&h, &[]).unwrap();
        let mut rho = DMatrix::zeros(2, 2);
        rho[(0, 1)] = c(0.5);
        rho[(1, 0)] = c(0.5);
        rho[(0, 0)] = c(0.5);
        rho[(1, 1)] = c(0.5);
        let d = l.apply(&rho);
        assert!((d[(0, 1)] - I * omega * rho[(0, 1)]).norm() < 1e-15);
        assert_eq!(d[(0, 0)], ZERO);
        assert_eq!(d[(1, 1)], ZERO);
    }

    #[test]
    fn superoperator_matches_direct_products() {
        let n = 4;
        let h = DMatrix::from_fn(n, n, |i, k| {
            let a = (i * 7 + k * 3) as f64 * 0.1;
            if i == k {
                c(a)
            } else if i < k {
                Complex64::new(a, 0.3 * (i + k) as f64)
            } else {
                Complex64::new((k * 7 + i * 3) as f64 * 0.1, -0.3 * (i + k) as f64)
            }
        });
        let jumps = vec![
            JumpOperator::new(1, 0, 0.7),
            JumpOperator::new(3, 2, 1.3),
            JumpOperator::new(2, 2, 0.4),
            JumpOperator::new(0, 3, 0.2),
        ];
        let l = assemble_liouvillian(&h, &jumps).unwrap();
        let x = DMatrix::from_fn(n, n, |i, k| {
            Complex64::new((i + 2 * k) as f64, (i as f64 - k as f64) * 0.5)
        });
        let lhs = l.apply(&x);
        let rhs = lindblad_rhs(&h, &jumps, &x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = assemble_liouvillian(&DMatrix::zeros(2, 2), &[JumpOperator::new(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        let err = assemble_liouvillian(&DMatrix::zeros(2, 3), &[]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn two_level_decay_reaches_ground() {
        let l = assemble_liouvillian(&DMatrix::zeros(2, 2), &[JumpOperator::new(1, 0, 2.0)]).unwrap();
        let rho = steady_state(&l).unwrap();
        assert!((rho.population(0) - 1.0).abs() < 1e-14);
        assert!(rho.population(1).abs() < 1e-14);
    }

    #[test]
    fn isolated_levels_are_degenerate() {
        // |1⟩⟨4| only: levels 2 and 3 have no way in or out
        let l = assemble_liouvillian(&DMatrix::zeros(4, 4), &[JumpOperator::new(3, 0, 5.0)]).unwrap();
        let err = steady_state(&l).unwrap_err();
        assert!(matches!(err, Error::DegenerateSteadyState { .. }), "{err:?}");
    }

    #[test]
    fn both_methods_agree_on_driven_two_level() {
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = c(1.5);
        h[(1, 0)] = c(1.5);
        h[(1, 1)] = c(0.8);
        let jumps = [JumpOperator::new(1, 0, 1.0), JumpOperator::new(1, 1, 0.3)];
        let l = assemble_liouvillian(&h, &jumps).unwrap();
        let a = steady_state_with(&l, SteadyStateMethod::TraceRow).unwrap();
        let b = steady_state_with(&l, SteadyStateMethod::NullVector).unwrap();
        assert!(a.trace_distance(&b) < 1e-12);
        assert!(l.relative_defect(&a) < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let l = assemble_liouvillian(&DMatrix::zeros(2, 2), &[JumpOperator::new(1, 0, 1.0)]).unwrap();
        let rho0 = DensityMatrix::basis_state(2, 1);
        let out = evolve_liouvillian(&l, &rho0, 0.0, 1e-3).unwrap();
        assert_eq!(out, rho0);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let gamma = 2.0;
        let l = assemble_liouvillian(&DMatrix::zeros(2, 2), &[JumpOperator::new(1, 0, gamma)]).unwrap();
        let rho0 = DensityMatrix::basis_state(2, 1);
        for t in [0.1, 0.5, 1.3] {
            let out = evolve_liouvillian(&l, &rho0, t, 1e-3).unwrap();
            assert!((out.population(1) - (-gamma * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn rabi_oscillation() {
        let omega = 2.0 * std::f64::consts::PI * 1.0;
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = c(omega / 2.0);
        h[(1, 0)] = c(omega / 2.0);
        let rho0 = DensityMatrix::basis_state(2, 0);
        for t in [0.1, 0.25, 0.6, 1.7] {
            let out = evolve(&h, &[], &rho0, t, 1e-3).unwrap();
            let exact = (omega * t / 2.0).sin().powi(2);
            assert!((out.population(1) - exact).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn powered_propagator_matches_explicit_steps() {
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 1)] = c(0.9);
        h[(1, 0)] = c(0.9);
        h[(2, 2)] = c(0.4);
        let jumps = [JumpOperator::new(1, 2, 0.5), JumpOperator::new(2, 0, 0.3)];
        let l = assemble_liouvillian(&h, &jumps).unwrap();
        let rho0 = DensityMatrix::basis_state(3, 0);
        let a = evolve_liouvillian(&l, &rho0, 1000.0 * 0.01, 0.01).unwrap();
        let b = rk4_steps(&l, &rho0, 0.01, 1000);
        assert!((a.matrix() - b.matrix()).norm() < 1e-12);
    }

    #[test]
    fn coarse_step_rejected() {
        let l = assemble_liouvillian(&DMatrix::zeros(2, 2), &[JumpOperator::new(1, 0, 100.0)]).unwrap();
        let rho0 = DensityMatrix::basis_state(2, 1);
        assert!(evolve_liouvillian(&l, &rho0, 1.0, 0.01).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = c(0.7);
        m[(1, 1)] = c(0.3);
        assert!(DensityMatrix::new(m.clone()).is_ok());
        m[(0, 1)] = c(0.1);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(1, 0)] = c(0.1);
        assert!(DensityMatrix::new(m.clone()).is_ok());
        m[(0, 0)] = c(0.8);
        assert!(DensityMatrix::new(m.clone()).is_err());
        let mut neg = DMatrix::zeros(2, 2);
        neg[(0, 0)] = c(1.1);
        neg[(1, 1)] = c(-0.1);
        assert!(matches!(DensityMatrix::new(neg), Err(Error::NotPositive(_))));
    }
}
