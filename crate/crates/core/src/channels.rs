//! Quantum channels as dense superoperators, the classical chains they induce
//! on an eigenbasis, lumping, and the stability constant `kappa`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::linalg::{self, CMat, RMat, ONE};
use crate::spectral::{self, DensityMatrix, SpectralDecomposition};
use crate::{Error, Result};

/// Default tolerance of the boolean validators.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Choi eigenvalues below `-CP_TOL` reject complete positivity.
pub const CP_TOL: f64 = 1e-10;
/// Row-sum tolerance of a [`StochasticMatrix`].
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic matrix; `pi(i, j)` is the probability of moving from `i` to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(RMat);

impl StochasticMatrix {
    pub fn new(m: RMat) -> Result<Self> {
        Self::with_tol(m, ROW_SUM_TOL)
    }

    /// Accepts rows summing to 1 within `tol` and entries above `-tol`,
    /// then clamps and renormalizes the rows exactly.
    pub fn with_tol(mut m: RMat, tol: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::NotStochastic("matrix must be square and non-empty".into()));
        }
        for i in 0..m.nrows() {
            let row = m.row(i);
            if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < -tol) {
                return Err(Error::NotStochastic(format!("row {i} has entry {x}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        for i in 0..m.nrows() {
            let mut row = m.row_mut(i);
            row.iter_mut().for_each(|x| *x = x.max(0.0));
            let sum: f64 = row.iter().sum();
            row /= sum;
        }
        Ok(StochasticMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotStochastic("matrix must be square".into()));
        }
        Self::new(RMat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix(RMat::identity(n, n))
    }

    /// Every row equal to `mu`.
    pub fn rank_one(mu: &[f64]) -> Result<Self> {
        let n = mu.len();
        Self::new(RMat::from_fn(n, n, |_, j| mu[j]))
    }

    pub fn matrix(&self) -> &RMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.row(i)).collect()
    }

    /// Unique stationary distribution; fails if the chain has several closed classes.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        linalg::stationary_vector(&self.0).ok_or(Error::NotPrimitive)
    }

    /// Row vector `mu` after one step, `mu * pi`.
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| (0..self.dim()).map(|i| mu[i] * self.0[(i, j)]).sum()).collect()
    }

    /// Product `self * other`, i.e. `self` then `other`.
    pub fn then(&self, other: &StochasticMatrix) -> StochasticMatrix {
        StochasticMatrix(&self.0 * &other.0)
    }
}

/// A quantum channel stored as a `d^2 x d^2` superoperator acting on
/// column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    dim: usize,
    superop: CMat,
}

fn vec_of(x: &CMat) -> DVector<Complex64> {
    DVector::from_column_slice(x.as_slice())
}

fn unvec(v: &DVector<Complex64>, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

impl QuantumChannel {
    /// Build from Kraus operators, checking trace preservation and complete positivity.
    pub fn from_kraus(kraus: &[CMat]) -> Result<Self> {
        let d = kraus.first().map(|k| k.nrows()).ok_or_else(|| Error::validation("empty Kraus list"))?;
        if kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::validation("Kraus operators must all be d x d"));
        }
        let superop = kraus.iter().fold(CMat::zeros(d * d, d * d), |acc, k| acc + k.conjugate().kronecker(k));
        let ch = QuantumChannel { dim: d, superop };
        ch.validate(DEFAULT_TOL)?;
        Ok(ch)
    }

    pub fn from_superoperator(superop: CMat) -> Result<Self> {
        let n = superop.nrows();
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n || !superop.is_square() {
            return Err(Error::validation("superoperator must be d^2 x d^2"));
        }
        let ch = QuantumChannel { dim: d, superop };
        ch.validate(DEFAULT_TOL)?;
        Ok(ch)
    }

    fn validate(&self, tol: f64) -> Result<()> {
        if !self.is_trace_preserving(tol) {
            return Err(Error::validation("channel is not trace preserving"));
        }
        if !self.is_completely_positive() {
            return Err(Error::validation("channel is not completely positive"));
        }
        Ok(())
    }

    pub fn identity(d: usize) -> Self {
        QuantumChannel { dim: d, superop: CMat::identity(d * d, d * d) }
    }

    /// `X -> tr(X) I / d`.
    pub fn depolarizing(d: usize) -> Self {
        let id = vec_of(&CMat::identity(d, d));
        let superop = &id * id.adjoint() / Complex64::new(d as f64, 0.0);
        QuantumChannel { dim: d, superop }
    }

    /// `X -> U X U^dagger`.
    pub fn unitary(u: &CMat) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u))
    }

    /// Measure in `basis`, then move `|psi_i> -> |psi_j>` with probability `pi(i, j)`:
    /// `X -> sum_ij pi(i,j) <psi_i|X|psi_i> |psi_j><psi_j|`.
    pub fn classical_lift(pi: &StochasticMatrix, basis: &CMat) -> Result<Self> {
        let d = basis.nrows();
        if pi.dim() != d {
            return Err(Error::validation("chain and basis dimensions differ"));
        }
        let mut v = CMat::zeros(d * d, d);
        for i in 0..d {
            let proj = linalg::outer(&basis.column(i).into_owned());
            v.set_column(i, &vec_of(&proj));
        }
        let superop = &v * linalg::to_complex(&pi.matrix().transpose()) * v.adjoint();
        Ok(QuantumChannel { dim: d, superop })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn superoperator(&self) -> &CMat {
        &self.superop
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        unvec(&(&self.superop * vec_of(x)), self.dim)
    }

    /// Heisenberg-picture adjoint `T*`.
    pub fn apply_adjoint(&self, x: &CMat) -> CMat {
        unvec(&(self.superop.adjoint() * vec_of(x)), self.dim)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let id = CMat::identity(self.dim, self.dim);
        linalg::max_abs(&(self.apply_adjoint(&id) - id)) <= tol
    }

    /// Choi matrix `sum_ij |i><j| (x) T(|i><j|)`.
    pub fn choi(&self) -> CMat {
        let d = self.dim;
        let mut choi = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = ONE;
                let out = self.apply(&e);
                choi.view_mut((i * d, j * d), (d, d)).copy_from(&out);
            }
        }
        choi
    }

    pub fn is_completely_positive(&self) -> bool {
        let choi = self.choi();
        if linalg::hermitian_deviation(&choi) > CP_TOL.max(1e-12 * linalg::max_abs(&choi)) {
            return false;
        }
        let (values, _) = linalg::hermitian_eigh(&choi);
        values[0] >= -CP_TOL
    }
}

/// `pi(i, j) = <psi_j| T(|psi_i><psi_i|) |psi_j>` in the eigenbasis of `sd`.
pub fn induced_transition_matrix(t: &QuantumChannel, sd: &SpectralDecomposition) -> Result<StochasticMatrix> {
    let basis = sd.basis();
    let d = basis.nrows();
    if t.dim() != d {
        return Err(Error::validation("channel and Hamiltonian dimensions differ"));
    }
    let mut pi = RMat::zeros(d, d);
    for i in 0..d {
        let psi_i = basis.column(i).into_owned();
        let out = t.apply(&linalg::outer(&psi_i));
        for j in 0..d {
            let psi_j = basis.column(j);
            pi[(i, j)] = (psi_j.adjoint() * &out * psi_j)[(0, 0)].re;
        }
    }
    StochasticMatrix::with_tol(pi, DEFAULT_TOL)
}

/// `[T(P_i), P_j] = 0` for all levels and `T` fixes the Gibbs state.
pub fn is_eigenbasis_preserving(t: &QuantumChannel, sd: &SpectralDecomposition, beta: f64, tol: f64) -> Result<bool> {
    if t.dim() != sd.dim() {
        return Err(Error::validation("channel and Hamiltonian dimensions differ"));
    }
    for li in sd.levels() {
        let image = t.apply(&li.projector);
        for lj in sd.levels() {
            if linalg::max_abs(&linalg::commutator(&image, &lj.projector)) > tol {
                return Ok(false);
            }
        }
    }
    let gibbs = spectral::gibbs_state(sd, beta)?;
    let moved = t.apply(gibbs.matrix());
    Ok(spectral::trace_norm(&(moved - gibbs.matrix())) <= tol)
}

fn check_partition(n: usize, partition: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n];
    for class in partition {
        if class.is_empty() {
            return Err(Error::validation("partition has an empty class"));
        }
        for &s in class {
            if s >= n || std::mem::replace(&mut seen[s], true) {
                return Err(Error::validation(format!("partition is not a disjoint cover of 0..{n} (state {s})")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::validation(format!("partition does not cover 0..{n}")));
    }
    Ok(())
}

/// Mass each state sends into each class.
fn class_row_sums(pi: &StochasticMatrix, partition: &[Vec<usize>]) -> RMat {
    let m = pi.matrix();
    RMat::from_fn(pi.dim(), partition.len(), |l, k| partition[k].iter().map(|&j| m[(l, j)]).sum())
}

/// Worst disagreement of class row sums within a class, with the offending class pair.
fn lumpability_violation(pi: &StochasticMatrix, partition: &[Vec<usize>]) -> (usize, usize, f64) {
    let sums = class_row_sums(pi, partition);
    let mut worst = (0, 0, 0.0);
    for (a, class) in partition.iter().enumerate() {
        for b in 0..partition.len() {
            let vals = class.iter().map(|&l| sums[(l, b)]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if hi - lo > worst.2 {
                worst = (a, b, hi - lo);
            }
        }
    }
    worst
}

/// Strong lumpability: every state of a class sends the same mass into every class.
pub fn is_lumpable_chain(pi: &StochasticMatrix, partition: &[Vec<usize>], tol: f64) -> Result<bool> {
    check_partition(pi.dim(), partition)?;
    Ok(lumpability_violation(pi, partition).2 <= tol)
}

/// Quotient chain on the classes of `partition`.
pub fn lump(pi: &StochasticMatrix, partition: &[Vec<usize>], tol: f64) -> Result<StochasticMatrix> {
    check_partition(pi.dim(), partition)?;
    let (from, to, spread) = lumpability_violation(pi, partition);
    if spread > tol {
        return Err(Error::NotLumpable { from, to, spread });
    }
    let sums = class_row_sums(pi, partition);
    let k = partition.len();
    StochasticMatrix::with_tol(RMat::from_fn(k, k, |a, b| sums[(partition[a][0], b)]), tol.max(ROW_SUM_TOL))
}

fn metropolis_kernel(energies: &[f64], weights: &[f64], beta: f64) -> RMat {
    let n = energies.len();
    let total: f64 = weights.iter().sum();
    let mut m = RMat::zeros(n, n);
    for i in 0..n {
        let mut moved = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let accept = (-beta * (energies[j] - energies[i])).exp().min(1.0);
            m[(i, j)] = weights[j] / total * accept;
            moved += m[(i, j)];
        }
        m[(i, i)] = 1.0 - moved;
    }
    m
}

/// Uniform-proposal Metropolis chain on the `d` eigenbasis states.
pub fn metropolis_chain(sd: &SpectralDecomposition, beta: f64) -> Result<StochasticMatrix> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::validation("beta must be finite and >= 0"));
    }
    let energies = sd.state_energies();
    StochasticMatrix::new(metropolis_kernel(&energies, &vec![1.0; energies.len()], beta))
}

/// The lumped Metropolis chain on levels, built directly from energies and
/// multiplicities: `pi~(l, k) = |S_k|/d min(1, e^{-beta (E_k - E_l)})`.
pub fn metropolis_lumped(sd: &SpectralDecomposition, beta: f64) -> Result<StochasticMatrix> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::validation("beta must be finite and >= 0"));
    }
    let weights: Vec<f64> = sd.multiplicities().iter().map(|&m| m as f64).collect();
    StochasticMatrix::new(metropolis_kernel(&sd.energies(), &weights, beta))
}

/// Metropolis chain together with its Kraus lift acting in the eigenbasis of `sd`.
pub fn metropolis_channel(sd: &SpectralDecomposition, beta: f64) -> Result<(QuantumChannel, StochasticMatrix)> {
    let pi = metropolis_chain(sd, beta)?;
    let channel = QuantumChannel::classical_lift(&pi, sd.basis())?;
    Ok((channel, pi))
}

/// Exactly one eigenvalue on the unit circle and a strictly positive stationary vector.
pub fn is_primitive(pi: &StochasticMatrix, tol: f64) -> bool {
    let eigs = pi.matrix().complex_eigenvalues();
    let on_circle = eigs.iter().filter(|z| (z.norm() - 1.0).abs() <= tol).count();
    if on_circle != 1 {
        return false;
    }
    match pi.stationary() {
        Ok(mu) => mu.iter().all(|&x| x > 0.0),
        Err(_) => false,
    }
}

/// `max_ij |pi(i,j) mu(i) - pi(j,i) mu(j)| <= tol`.
pub fn detailed_balance_classical(pi: &StochasticMatrix, mu: &[f64], tol: f64) -> Result<bool> {
    let n = pi.dim();
    if mu.len() != n {
        return Err(Error::validation("distribution length differs from chain size"));
    }
    let m = pi.matrix();
    let worst = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] * mu[i] - m[(j, i)] * mu[j]).abs())
        .fold(0.0, f64::max);
    Ok(worst <= tol)
}

/// `T(s X s) = s T*(X) s` with `s = sigma^{1/2}`, checked on every matrix unit.
pub fn detailed_balance_quantum(t: &QuantumChannel, sigma: &DensityMatrix, tol: f64) -> Result<bool> {
    let d = t.dim();
    if sigma.dim() != d {
        return Err(Error::validation("state and channel dimensions differ"));
    }
    let s = linalg::hermitian_map(sigma.matrix(), |x| x.max(0.0).sqrt());
    for a in 0..d {
        for b in 0..d {
            let mut e = CMat::zeros(d, d);
            e[(a, b)] = ONE;
            let lhs = t.apply(&(&s * &e * &s));
            let rhs = &s * t.apply_adjoint(&e) * &s;
            if linalg::max_abs(&(lhs - rhs)) > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `M = (I - pi^T + mu 1^T)^{-1}`, the fundamental-matrix form acting on column distributions.
fn fundamental_inverse(pi: &StochasticMatrix, mu: &[f64]) -> Result<RMat> {
    let n = pi.dim();
    let a = RMat::identity(n, n) - pi.matrix().transpose() + RMat::from_fn(n, n, |i, _| mu[i]);
    a.try_inverse().ok_or(Error::NotPrimitive)
}

/// Stability constant of a primitive chain,
/// `sup { ||M x||_1 / ||x||_1 : sum(x) = 0 }`.
///
/// The zero-sum l1 ball is the convex hull of `(e_i - e_j) / 2`, so the
/// supremum of the convex map `x -> ||M x||_1` is attained at one of them.
pub fn kappa(pi: &StochasticMatrix) -> Result<f64> {
    if !is_primitive(pi, DEFAULT_TOL) {
        return Err(Error::NotPrimitive);
    }
    let n = pi.dim();
    if n == 1 {
        // no non-zero traceless vectors; the identity restricted to {0}
        return Ok(1.0);
    }
    let mu = pi.stationary()?;
    let m = fundamental_inverse(pi, &mu)?;
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = (0..n).map(|r| (m[(r, i)] - m[(r, j)]).abs()).sum();
            best = best.max(v / 2.0);
        }
    }
    Ok(best)
}

/// `||x||_1` ratio for a single traceless direction; exposed for search-based audits.
pub fn kappa_ratio(pi: &StochasticMatrix, x: &[f64]) -> Result<f64> {
    let mu = pi.stationary()?;
    let m = fundamental_inverse(pi, &mu)?;
    let v = &m * DVector::from_column_slice(x);
    Ok(v.iter().map(|t| t.abs()).sum::<f64>() / x.iter().map(|t| t.abs()).sum::<f64>())
}

/// `||a - b||_{1->1}` for chains acting on distributions: the largest l1 row difference.
pub fn one_to_one_distance(a: &StochasticMatrix, b: &StochasticMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::validation("chains have different sizes"));
    }
    let diff = a.matrix() - b.matrix();
    Ok((0..a.dim()).map(|i| diff.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max))
}

/// Pinching onto block-uniform form: `Q(X) = sum_i tr(P_i X) P_i / |S_i|`.
pub fn pinch(x: &DensityMatrix, sd: &SpectralDecomposition) -> Result<DensityMatrix> {
    if x.dim() != sd.dim() {
        return Err(Error::validation("state and Hamiltonian dimensions differ"));
    }
    let d = sd.dim();
    let out = sd.levels().iter().fold(CMat::zeros(d, d), |acc, l| {
        let w = linalg::trace(&(&l.projector * x.matrix())) / Complex64::new(l.multiplicity as f64, 0.0);
        acc + &l.projector * Complex64::new(w.re, 0.0)
    });
    Ok(DensityMatrix::new_unchecked(out))
}
