//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{BlError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative singular-value threshold below which a direction counts as null.
pub const RANK_TOL: f64 = 1e-9;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted ascending.
pub fn sym_eigen(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    if n == 0 {
        return (Vector::zeros(0), Mat::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eig(m: &Mat) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Checks positive definiteness; returns the smallest eigenvalue on failure.
pub fn require_pd(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(BlError::Dimension(format!("{what} is not square")));
    }
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > 1e-9 * scale {
        return Err(BlError::Invalid(format!(
            "{what} is not symmetric (asymmetry {asym:e})"
        )));
    }
    let (vals, _) = sym_eigen(m);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(0.0_f64, f64::max);
    if !(lo > 0.0) || lo <= 1e-14 * hi {
        return Err(BlError::not_pd(what, lo));
    }
    Ok(())
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = sym_eigen(m);
    let d = Mat::from_diagonal(&vals.map(f));
    symmetrize(&(&vecs * d * vecs.transpose()))
}

pub fn sym_sqrt(m: &Mat) -> Mat {
    sym_fn(m, |x| x.max(0.0).sqrt())
}

pub fn sym_inv_sqrt(m: &Mat) -> Mat {
    sym_fn(m, |x| 1.0 / x.sqrt())
}

pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| BlError::not_pd("inverse", min_eig(m)))?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn log_det_spd(m: &Mat) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| BlError::not_pd("log-determinant", min_eig(m)))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (vals, _) = sym_eigen(m);
    vals.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Spectral norm of a general matrix.
pub fn op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Numerical rank with threshold `RANK_TOL * largest singular value`.
pub fn numerical_rank(m: &Mat) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Number of singular values above an absolute threshold.
pub fn rank_above(m: &Mat, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.singular_values().iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis (as rows) of the row space of `m`.
pub fn row_space_basis(m: &Mat) -> Mat {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return Mat::zeros(0, cols);
    }
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let top = svd.singular_values.max();
    let rows: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| top > 0.0 && s > RANK_TOL * top)
        .map(|(i, _)| vt.row(i).into_owned())
        .collect();
    if rows.is_empty() {
        Mat::zeros(0, cols)
    } else {
        Mat::from_rows(&rows)
    }
}

/// Orthonormal basis (as rows) of the null space of `m`.
pub fn null_space_basis(m: &Mat) -> Mat {
    let n = m.ncols();
    let rows = row_space_basis(m);
    complement_basis(&rows, n)
}

/// Orthonormal rows spanning the orthogonal complement of the row span of `rows`.
pub fn complement_basis(rows: &Mat, n: usize) -> Mat {
    let k = rows.nrows();
    if k == 0 {
        return Mat::identity(n, n);
    }
    let proj = rows.transpose() * rows;
    let comp = Mat::identity(n, n) - proj;
    let (vals, vecs) = sym_eigen(&comp);
    let picked: Vec<_> = (0..n)
        .filter(|&i| vals[i] > 0.5)
        .map(|i| vecs.column(i).transpose())
        .collect();
    if picked.is_empty() {
        Mat::zeros(0, n)
    } else {
        Mat::from_rows(&picked)
    }
}

/// Haar-distributed random orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

/// Random symmetric positive-definite matrix with log-normal spectrum.
pub fn random_spd<R: Rng + ?Sized>(n: usize, spread: f64, rng: &mut R) -> Mat {
    let q = random_orthogonal(n, rng);
    let vals = Vector::from_fn(n, |_, _| {
        (spread * rng.sample::<f64, _>(StandardNormal)).exp()
    });
    symmetrize(&(&q * Mat::from_diagonal(&vals) * q.transpose()))
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn complex_from_parts(re: &Mat, im: &Mat) -> CMat {
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })
}

pub fn cvec_from_parts(re: &Vector, im: &Vector) -> CVector {
    CVector::from_fn(re.len(), |i, _| Complex64::new(re[i], im[i]))
}

/// Bilinear (not Hermitian) form `aᵀ M b`.
pub fn cbilinear(a: &CVector, m: &CMat, b: &CVector) -> Complex64 {
    (a.transpose() * m * b)[(0, 0)]
}

/// Row-major nested vectors to a matrix.
pub fn mat_from_rows(rows: &[Vec<f64>], ncols_hint: usize) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, ncols_hint));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(BlError::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serde helpers storing a matrix as row-major nested arrays.
pub mod rows {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        super::mat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::mat_from_rows(&rows, 0).map_err(serde::de::Error::custom)
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexKahan {
    pub re: KahanSum,
    pub im: KahanSum,
}

impl ComplexKahan {
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}
