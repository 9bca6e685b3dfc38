//! Small dense linear-algebra helpers shared by the other modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest entrywise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `max |m - m^dagger|`; zero for Hermitian input.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Column `k` of the returned matrix is the eigenvector for `values[k]`.
pub fn hermitian_eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    // symmetrize so round-off in the input does not leak into the eigenvectors
    let h = (m + m.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Apply `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (values, vectors) = hermitian_eigh(m);
    let diag = DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(f(v), 0.0)));
    &vectors * CMat::from_diagonal(&diag) * vectors.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Rank-one projector `|v><v|`.
pub fn outer(v: &DVector<Complex64>) -> CMat {
    v * v.adjoint()
}

/// Stationary distribution of a row-stochastic matrix, obtained by solving
/// `mu (I - P) = 0` with the normalization replacing one equation.
/// Returns `None` when the system is singular (more than one closed class).
pub fn stationary_vector(p: &RMat) -> Option<Vec<f64>> {
    let n = p.nrows();
    if n == 1 {
        return Some(vec![1.0]);
    }
    let mut a = RMat::identity(n, n) - p.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x.iter().copied().collect())
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Unweighted l1 distance between two vectors of equal length.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
