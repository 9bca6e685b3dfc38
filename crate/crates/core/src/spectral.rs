//! Hamiltonians, their spectral decompositions, Gibbs states and the distance
//! functionals the sampling bounds are stated in.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat, ONE};
use crate::{Error, Result};

/// Default tolerance for accepting a dense matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// A Hamiltonian, either as a dense Hermitian matrix or as an explicit
/// spectrum whose eigenbasis is the computational basis.
#[derive(Debug, Clone)]
pub enum Hamiltonian {
    Dense(CMat),
    Spectrum(Vec<(f64, usize)>),
}

impl Hamiltonian {
    pub fn dense(m: CMat) -> Result<Self> {
        if m.nrows() == 0 || !m.is_square() {
            return Err(Error::validation("Hamiltonian must be a non-empty square matrix"));
        }
        let deviation = linalg::hermitian_deviation(&m);
        if deviation > HERMITIAN_TOL * (1.0 + linalg::max_abs(&m)) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Hamiltonian::Dense(m))
    }

    pub fn spectrum(levels: Vec<(f64, usize)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("spectrum must contain at least one level"));
        }
        if let Some((e, _)) = levels.iter().find(|(e, m)| !e.is_finite() || *m == 0) {
            return Err(Error::validation(format!("level at energy {e} needs a finite energy and multiplicity >= 1")));
        }
        Ok(Hamiltonian::Spectrum(levels))
    }

    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Dense(m) => m.nrows(),
            Hamiltonian::Spectrum(levels) => levels.iter().map(|(_, m)| m).sum(),
        }
    }

    /// Sorted eigenvalues with matching eigenvector columns.
    fn eigensystem(&self) -> (Vec<f64>, CMat) {
        match self {
            Hamiltonian::Dense(m) => linalg::hermitian_eigh(m),
            Hamiltonian::Spectrum(levels) => {
                let mut values: Vec<f64> =
                    levels.iter().flat_map(|&(e, m)| std::iter::repeat_n(e, m)).collect();
                values.sort_by(f64::total_cmp);
                let d = values.len();
                (values, CMat::identity(d, d))
            }
        }
    }

    /// Default grouping tolerance: `1e-10` times the spectral range.
    pub fn default_group_tol(&self) -> f64 {
        let (values, _) = self.eigensystem();
        1e-10 * (values[values.len() - 1] - values[0])
    }
}

/// One distinct energy level `E_i` with its eigenprojector `P_i`.
#[derive(Debug, Clone)]
pub struct Level {
    pub energy: f64,
    pub multiplicity: usize,
    pub projector: CMat,
    /// Columns of the eigenbasis spanning this level.
    pub states: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    levels: Vec<Level>,
    basis: CMat,
    level_of_state: Vec<usize>,
}

/// Resolve `h` into distinct levels, merging eigenvalues that are within
/// `group_tol` of their neighbour.
pub fn decompose(h: &Hamiltonian, group_tol: f64) -> Result<SpectralDecomposition> {
    if group_tol.is_nan() || group_tol < 0.0 {
        return Err(Error::validation("group_tol must be >= 0"));
    }
    if let Hamiltonian::Dense(m) = h {
        let deviation = linalg::hermitian_deviation(m);
        if deviation > HERMITIAN_TOL * (1.0 + linalg::max_abs(m)) {
            return Err(Error::NotHermitian { deviation });
        }
    }
    let (values, basis) = h.eigensystem();
    let mut clusters: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > group_tol {
            clusters.push(start..k);
            start = k;
        }
    }
    Ok(SpectralDecomposition::from_clusters(&values, basis, clusters))
}

impl SpectralDecomposition {
    fn from_clusters(values: &[f64], basis: CMat, clusters: Vec<std::ops::Range<usize>>) -> Self {
        let d = basis.nrows();
        let mut level_of_state = vec![0; d];
        let levels = clusters
            .into_iter()
            .enumerate()
            .map(|(idx, states)| {
                let mut projector = CMat::zeros(d, d);
                for k in states.clone() {
                    projector += linalg::outer(&basis.column(k).into_owned());
                    level_of_state[k] = idx;
                }
                let energy = values[states.clone()].iter().sum::<f64>() / states.len() as f64;
                Level { energy, multiplicity: states.len(), projector, states }
            })
            .collect();
        SpectralDecomposition { levels, basis, level_of_state }
    }

    /// Decomposition of `diag(energies...)` given as `(energy, multiplicity)` pairs.
    pub fn from_spectrum(levels: &[(f64, usize)]) -> Result<Self> {
        let h = Hamiltonian::spectrum(levels.to_vec())?;
        decompose(&h, 0.0)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Number of distinct levels, `d'`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Orthonormal eigenbasis; columns are grouped by level in ascending energy.
    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.multiplicity).collect()
    }

    pub fn level_of_state(&self, state: usize) -> usize {
        self.level_of_state[state]
    }

    /// Energy of every basis state.
    pub fn state_energies(&self) -> Vec<f64> {
        self.level_of_state.iter().map(|&l| self.levels[l].energy).collect()
    }

    /// Basis-state indices of each level; the energy partition of `[d]`.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        self.levels.iter().map(|l| l.states.clone().collect()).collect()
    }

    /// `sum_i E_i P_i`.
    pub fn reconstruct(&self) -> CMat {
        let d = self.dim();
        self.levels
            .iter()
            .fold(CMat::zeros(d, d), |acc, l| acc + &l.projector * Complex64::new(l.energy, 0.0))
    }

    /// Merge the levels of every covering class into one level with energy
    /// equal to the class center.
    pub fn coarsen(&self, cov: &SpectralCovering) -> SpectralDecomposition {
        let d = self.dim();
        let mut values = vec![0.0; d];
        let mut columns = Vec::with_capacity(d);
        let mut clusters = Vec::with_capacity(cov.len());
        for (class, members) in cov.members().iter().enumerate() {
            let start = columns.len();
            for &lvl in members {
                for k in self.levels[lvl].states.clone() {
                    values[columns.len()] = cov.centers()[class];
                    columns.push(k);
                }
            }
            clusters.push(start..columns.len());
        }
        let mut basis = CMat::zeros(d, d);
        for (dst, &src) in columns.iter().enumerate() {
            basis.set_column(dst, &self.basis.column(src));
        }
        SpectralDecomposition::from_clusters(&values, basis, clusters)
    }
}

/// A density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(m: CMat, tol: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::validation("density matrix must be non-empty and square"));
        }
        let deviation = linalg::hermitian_deviation(&m);
        if deviation > tol {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = linalg::trace(&m);
        if (tr - ONE).norm() > tol {
            return Err(Error::validation(format!("density matrix has trace {tr}")));
        }
        let (values, _) = linalg::hermitian_eigh(&m);
        if values[0] < -tol {
            return Err(Error::validation(format!("density matrix has negative eigenvalue {}", values[0])));
        }
        Ok(DensityMatrix(m))
    }

    pub(crate) fn new_unchecked(m: CMat) -> Self {
        DensityMatrix(m)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix(CMat::identity(d, d) / Complex64::new(d as f64, 0.0))
    }

    pub fn pure(v: &DVector<Complex64>) -> Self {
        let v = v / Complex64::new(v.norm(), 0.0);
        DensityMatrix(linalg::outer(&v))
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let diag = DVector::from_iterator(p.len(), p.iter().map(|&x| Complex64::new(x, 0.0)));
        DensityMatrix::new(CMat::from_diagonal(&diag), 1e-9)
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Gibbs weights `e^{-beta E_i}` shifted by the ground energy; only ratios matter.
fn boltzmann_weights(sd: &SpectralDecomposition, beta: f64) -> Vec<f64> {
    let e0 = sd.levels[0].energy;
    sd.levels.iter().map(|l| (-beta * (l.energy - e0)).exp()).collect()
}

/// `e^{-beta H} / Z_beta`.
pub fn gibbs_state(sd: &SpectralDecomposition, beta: f64) -> Result<DensityMatrix> {
    if !beta.is_finite() {
        return Err(Error::validation("beta must be finite"));
    }
    let w = boltzmann_weights(sd, beta);
    let z: f64 = w.iter().zip(&sd.levels).map(|(w, l)| w * l.multiplicity as f64).sum();
    let d = sd.dim();
    let rho = sd
        .levels
        .iter()
        .zip(&w)
        .fold(CMat::zeros(d, d), |acc, (l, w)| acc + &l.projector * Complex64::new(w / z, 0.0));
    Ok(DensityMatrix::new_unchecked(rho))
}

/// Lumped Gibbs distribution `|S_i| e^{-beta E_i} / Z_beta` over levels.
pub fn gibbs_lumped(sd: &SpectralDecomposition, beta: f64) -> Result<Vec<f64>> {
    if !beta.is_finite() {
        return Err(Error::validation("beta must be finite"));
    }
    let unnorm: Vec<f64> = boltzmann_weights(sd, beta)
        .iter()
        .zip(&sd.levels)
        .map(|(w, l)| w * l.multiplicity as f64)
        .collect();
    let z: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|x| x / z).collect())
}

/// An eps-spectral covering: disjoint open intervals `(e_i - eps, e_i + eps)`
/// that jointly contain every level of a decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralCovering {
    centers: Vec<f64>,
    eps: f64,
    /// covering class of every level of the decomposition
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    class_sizes: Vec<usize>,
}

impl SpectralCovering {
    fn from_members(sd: &SpectralDecomposition, eps: f64, members: Vec<Vec<usize>>) -> Result<Self> {
        let centers: Vec<f64> = members
            .iter()
            .map(|m| {
                let lo = sd.levels[m[0]].energy;
                let hi = sd.levels[*m.last().unwrap()].energy;
                0.5 * (lo + hi)
            })
            .collect();
        for w in centers.windows(2) {
            if w[1] - w[0] < 2.0 * eps {
                return Err(Error::CoveringInfeasible { eps, left: w[0], right: w[1] });
            }
        }
        let mut assignment = vec![0; sd.num_levels()];
        for (class, m) in members.iter().enumerate() {
            for &lvl in m {
                assignment[lvl] = class;
            }
        }
        let class_sizes = members.iter().map(|m| m.iter().map(|&l| sd.levels[l].multiplicity).sum()).collect();
        Ok(SpectralCovering { centers, eps, assignment, members, class_sizes })
    }

    /// One class per level, with the largest half-width that keeps the
    /// intervals disjoint (half the smallest gap; 1 for a single level).
    pub fn singletons(sd: &SpectralDecomposition) -> Self {
        let e = sd.energies();
        let eps = e.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(f64::INFINITY, f64::min);
        let eps = if eps.is_finite() { eps } else { 1.0 };
        let members = (0..sd.num_levels()).map(|l| vec![l]).collect();
        SpectralCovering::from_members(sd, eps, members).expect("singleton covering is always disjoint")
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Size of the covering, `d'`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn class_of_level(&self, level: usize) -> usize {
        self.assignment[level]
    }

    /// Levels assigned to each class.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Number of basis states in each class.
    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// Class whose open interval contains `energy`, if any.
    pub fn containing(&self, energy: f64) -> Option<usize> {
        self.centers.iter().position(|c| (energy - c).abs() < self.eps)
    }
}

/// Greedy ascending construction of an eps-spectral covering.
pub fn build_covering(sd: &SpectralDecomposition, eps: f64) -> Result<SpectralCovering> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::validation("covering eps must be a positive finite number"));
    }
    let energies = sd.energies();
    let mut members: Vec<Vec<usize>> = vec![vec![0]];
    let mut lo = energies[0];
    for (lvl, &e) in energies.iter().enumerate().skip(1) {
        // the class midpoint stays within eps of both ends iff the span is < 2 eps
        if e - lo < 2.0 * eps {
            members.last_mut().unwrap().push(lvl);
        } else {
            members.push(vec![lvl]);
            lo = e;
        }
    }
    SpectralCovering::from_members(sd, eps, members)
}

/// Trace norm `||m||_1` of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> f64 {
    let (values, _) = linalg::hermitian_eigh(m);
    values.iter().map(|v| v.abs()).sum()
}

/// Unnormalized trace distance `||a - b||_1`, between 0 and 2.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::validation("trace_distance: dimension mismatch"));
    }
    Ok(trace_norm(&(a.matrix() - b.matrix())))
}

/// Relative entropy `D(a || b)` in nats. Returns `f64::INFINITY` when the
/// support of `a` is not contained in the support of `b`.
///
/// `tr(a log b)` is evaluated in the eigenbasis of `b`, which is exact for any
/// `a`; for commuting inputs this is the joint eigenbasis.
pub fn relative_entropy(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    const SUPPORT_TOL: f64 = 1e-12;
    if a.dim() != b.dim() {
        return Err(Error::validation("relative_entropy: dimension mismatch"));
    }
    let (a_vals, _) = linalg::hermitian_eigh(a.matrix());
    let entropy_term: f64 = a_vals.iter().filter(|&&v| v > SUPPORT_TOL).map(|&v| v * v.ln()).sum();
    let (b_vals, b_vecs) = linalg::hermitian_eigh(b.matrix());
    let mut cross = 0.0;
    for (k, &lambda) in b_vals.iter().enumerate() {
        let v = b_vecs.column(k);
        let weight = (v.adjoint() * a.matrix() * v)[(0, 0)].re;
        if lambda <= SUPPORT_TOL {
            if weight > SUPPORT_TOL {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        cross += weight * lambda.ln();
    }
    Ok((entropy_term - cross).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> CMat {
        let a = CMat::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()).map(|z| z * 0.5)
    }

    fn real_diag(m: &CMat) -> Vec<f64> {
        m.diagonal().iter().map(|z| z.re).collect()
    }

    #[test]
    fn identity_has_one_level() {
        let h = Hamiltonian::dense(CMat::identity(3, 3)).unwrap();
        let sd = decompose(&h, h.default_group_tol()).unwrap();
        assert_eq!(sd.num_levels(), 1);
        assert_eq!(sd.multiplicities(), vec![3]);
        assert_abs_diff_eq!(sd.levels()[0].energy, 1.0, epsilon = 1e-12);
        assert!(linalg::max_abs(&(&sd.levels()[0].projector - CMat::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn diagonal_levels() {
        let m = CMat::from_diagonal(&DVector::from_vec(vec![ZERO, ZERO, ONE]));
        let h = Hamiltonian::dense(m).unwrap();
        let sd = decompose(&h, 1e-10).unwrap();
        assert_eq!(sd.energies(), vec![0.0, 1.0]);
        assert_eq!(sd.multiplicities(), vec![2, 1]);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut m = CMat::identity(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(Hamiltonian::dense(m.clone()), Err(Error::NotHermitian { .. })));
        assert!(matches!(decompose(&Hamiltonian::Dense(m), 0.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn random_hamiltonian_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let m = random_hermitian(4, &mut rng);
            let h = Hamiltonian::dense(m.clone()).unwrap();
            let sd = decompose(&h, h.default_group_tol()).unwrap();
            let scale = 1.0 + sd.energies().iter().fold(0.0f64, |a, e| a.max(e.abs()));
            assert!(linalg::max_abs(&(sd.reconstruct() - &m)) < 1e-10 * scale);
            // projector algebra
            for (i, li) in sd.levels().iter().enumerate() {
                for (j, lj) in sd.levels().iter().enumerate() {
                    let prod = &li.projector * &lj.projector;
                    let expect = if i == j { li.projector.clone() } else { CMat::zeros(4, 4) };
                    assert!(linalg::max_abs(&(prod - expect)) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gibbs_infinite_temperature() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 2), (1.3, 1), (2.0, 3)]).unwrap();
        let rho = gibbs_state(&sd, 0.0).unwrap();
        assert!(linalg::max_abs(&(rho.matrix() - DensityMatrix::maximally_mixed(6).matrix())) < 1e-15);
        let mu = gibbs_lumped(&sd, 0.0).unwrap();
        assert_abs_diff_eq!(mu.as_slice(), [2.0 / 6.0, 1.0 / 6.0, 3.0 / 6.0].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn gibbs_two_level_ln2() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 1), (1.0, 1)]).unwrap();
        let beta = 2f64.ln();
        let rho = gibbs_state(&sd, beta).unwrap();
        assert_abs_diff_eq!(real_diag(rho.matrix()).as_slice(), [2.0 / 3.0, 1.0 / 3.0].as_slice(), epsilon = 1e-14);
        // matrix-exponential oracle: exp(-beta H) via the Hermitian functional calculus
        let hmat = sd.reconstruct();
        let expm = linalg::hermitian_map(&hmat, |e| (-beta * e).exp());
        let z = linalg::trace(&expm);
        assert!(linalg::max_abs(&(expm / z - rho.matrix())) < 1e-14);
        // non-degenerate: lumped equals the diagonal
        let mu = gibbs_lumped(&sd, beta).unwrap();
        assert_abs_diff_eq!(mu.as_slice(), real_diag(rho.matrix()).as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn gibbs_ground_state_limit() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 2), (1.0, 1)]).unwrap();
        let rho = gibbs_state(&sd, 50.0).unwrap();
        let target = &sd.levels()[0].projector / Complex64::new(2.0, 0.0);
        assert!(linalg::max_abs(&(rho.matrix() - target)) < 1e-10);
    }

    #[test]
    fn gibbs_lumped_degenerate_ln2() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 2), (1.0, 1)]).unwrap();
        let mu = gibbs_lumped(&sd, 2f64.ln()).unwrap();
        assert_abs_diff_eq!(mu.as_slice(), [0.8, 0.2].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn gibbs_lumped_monotone_in_beta() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 1), (0.5, 4), (2.0, 2)]).unwrap();
        let mut prev = 0.0;
        for k in 0..20 {
            let mu = gibbs_lumped(&sd, k as f64 * 0.5).unwrap();
            assert_abs_diff_eq!(mu.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(mu[0] >= prev);
            prev = mu[0];
        }
    }

    #[test]
    fn covering_greedy_merge() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 1), (0.05, 1), (1.0, 1)]).unwrap();
        let cov = build_covering(&sd, 0.06).unwrap();
        assert_eq!(cov.len(), 2);
        assert_eq!(cov.members(), &[vec![0, 1], vec![2]]);
        assert_abs_diff_eq!(cov.centers()[0], 0.025, epsilon = 1e-15);
        assert_eq!(cov.class_sizes(), &[2, 1]);
    }

    #[test]
    fn covering_small_eps_is_singletons() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 1), (0.3, 2), (1.0, 1)]).unwrap();
        let cov = build_covering(&sd, 0.1).unwrap();
        assert_eq!(cov.len(), 3);
        assert_eq!(cov.centers(), sd.energies().as_slice());
    }

    #[test]
    fn covering_single_point() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 4)]).unwrap();
        for eps in [1e-6, 1.0, 100.0] {
            let cov = build_covering(&sd, eps).unwrap();
            assert_eq!(cov.centers(), &[0.0]);
        }
    }

    #[test]
    fn covering_infeasible() {
        // {0, 0.1} merge (center 0.05) but 0.2 cannot join and sits 0.15 < 2*0.1 away
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 1), (0.1, 1), (0.2, 1)]).unwrap();
        assert!(matches!(build_covering(&sd, 0.1), Err(Error::CoveringInfeasible { .. })));
        assert!(build_covering(&sd, 0.0).is_err());
    }

    #[test]
    fn coarsen_uses_centers() {
        let sd = SpectralDecomposition::from_spectrum(&[(0.0, 1), (0.05, 2), (1.0, 1)]).unwrap();
        let cov = build_covering(&sd, 0.06).unwrap();
        let coarse = sd.coarsen(&cov);
        assert_eq!(coarse.multiplicities(), vec![3, 1]);
        assert_abs_diff_eq!(coarse.energies()[0], 0.025, epsilon = 1e-15);
        let p0 = &coarse.levels()[0].projector;
        assert!(linalg::max_abs(&(p0 - (&sd.levels()[0].projector + &sd.levels()[1].projector))) < 1e-15);
    }

    #[test]
    fn trace_distance_basic() {
        let a = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::diagonal(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(trace_distance(&a, &a).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn trace_distance_variational() {
        // ||a - b||_1 = 2 max_P tr(P (a - b)), attained by the positive-part projector
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let states: Vec<DensityMatrix> = (0..2)
                .map(|_| {
                    let g = CMat::from_fn(3, 3, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                    let m = &g * g.adjoint();
                    let tr = linalg::trace(&m);
                    DensityMatrix::new(m / tr, 1e-9).unwrap()
                })
                .collect();
            let diff = states[0].matrix() - states[1].matrix();
            let (vals, vecs) = linalg::hermitian_eigh(&diff);
            // enumerate every projector onto a subset of diff's eigenvectors
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..8 {
                let mut p = CMat::zeros(3, 3);
                for k in 0..3 {
                    if mask & (1 << k) != 0 {
                        p += linalg::outer(&vecs.column(k).into_owned());
                    }
                }
                best = best.max(linalg::trace(&(p * &diff)).re);
            }
            let _ = vals;
            assert_abs_diff_eq!(trace_distance(&states[0], &states[1]).unwrap(), 2.0 * best, epsilon = 1e-12);
        }
    }

    #[test]
    fn relative_entropy_closed_forms() {
        let a = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::diagonal(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(relative_entropy(&a, &a).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(relative_entropy(&a, &b).unwrap(), 2f64.ln(), epsilon = 1e-14);
        assert_eq!(relative_entropy(&b, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn relative_entropy_matches_classical_kl_for_diagonal_pairs() {
        let p = [0.2f64, 0.5, 0.3];
        let q = [0.4f64, 0.4, 0.2];
        let kl: f64 = p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum();
        let d = relative_entropy(&DensityMatrix::diagonal(&p).unwrap(), &DensityMatrix::diagonal(&q).unwrap()).unwrap();
        assert_abs_diff_eq!(d, kl, epsilon = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn commuting_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, u64)> {
            (2usize..6).prop_flat_map(|d| {
                (
                    proptest::collection::vec(0.01f64..1.0, d),
                    proptest::collection::vec(0.01f64..1.0, d),
                    any::<u64>(),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn pinsker_inequality((a, b, seed) in commuting_pair()) {
                let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
                let (a, b) = (norm(&a), norm(&b));
                // rotate both by the same random unitary so the pair commutes in a non-trivial basis
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = a.len();
                let g = CMat::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                let (_, u) = linalg::hermitian_eigh(&(&g + g.adjoint()));
                let rot = |p: &[f64]| {
                    let diag = DVector::from_iterator(d, p.iter().map(|&x| Complex64::new(x, 0.0)));
                    DensityMatrix::new(&u * CMat::from_diagonal(&diag) * u.adjoint(), 1e-9).unwrap()
                };
                let (ra, rb) = (rot(&a), rot(&b));
                let td = trace_distance(&ra, &rb).unwrap();
                let re = relative_entropy(&ra, &rb).unwrap();
                prop_assert!(td <= (2.0 * re).sqrt() + 1e-9);
                prop_assert!(td <= 2.0 + 1e-12);
            }
        }
    }
}
