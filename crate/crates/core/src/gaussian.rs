//! Dense SPD linear algebra and Gaussian sampling.
//!
//! Matrices are small (d up to ~100), so every factorization is done from
//! scratch with plain O(d³) loops over `nalgebra` storage.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::rng::RandomStream;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite entry")]
    NonFinite,
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn check_square(m: &Matrix) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

/// `(m + mᵀ) / 2`
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Symmetric positive definite matrix. Construction checks symmetry and
/// factorizability; the stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self, LinalgError> {
        check_square(&m)?;
        let asym = relative_asymmetry(&m);
        if asym > SYMMETRY_TOL {
            return Err(LinalgError::NotSymmetric(asym));
        }
        let m = symmetrize(&m);
        cholesky(&m)?;
        Ok(Self(m))
    }

    /// For matrices that have just been factorized successfully.
    pub(crate) fn factored(m: Matrix) -> Self {
        Self(symmetrize(&m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim, dim))
    }

    /// `scale · I`; `scale` must be positive.
    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self, LinalgError> {
        Self::new(Matrix::identity(dim, dim) * scale)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn cholesky(&self) -> LowerTriangular {
        cholesky(&self.0).expect("SpdMatrix invariant: factorization succeeds")
    }
}

/// Cholesky factor `L` with positive diagonal, `L·Lᵀ = m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(Matrix);

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// `L·Lᵀ`
    pub fn reconstruct(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }

    /// Solves `L·x = b`.
    pub fn solve_lower(&self, b: &Vector) -> Vector {
        let l = &self.0;
        let n = l.nrows();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ·x = b`.
    pub fn solve_upper(&self, b: &Vector) -> Vector {
        let l = &self.0;
        let n = l.nrows();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }

    fn check_dim(&self, found: usize) -> Result<(), LinalgError> {
        if found != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// Cholesky factorization of a symmetric matrix. The input is symmetrized
/// first; a pivot at or below `dim·1e-14·max-diagonal` is rejected.
pub fn cholesky(m: &Matrix) -> Result<LowerTriangular, LinalgError> {
    check_square(m)?;
    let a = symmetrize(m);
    let n = a.nrows();
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(a[(i, i)]));
    let floor = n as f64 * 1e-14 * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot.is_nan() || pivot <= floor || max_diag <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { row: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(LowerTriangular(l))
}

/// Solves `m·x = b` given `chol = cholesky(m)`.
pub fn spd_solve(chol: &LowerTriangular, b: &Vector) -> Result<Vector, LinalgError> {
    chol.check_dim(b.len())?;
    Ok(chol.solve_upper(&chol.solve_lower(b)))
}

/// `m⁻¹` given `chol = cholesky(m)`.
pub fn spd_inverse(chol: &LowerTriangular) -> SpdMatrix {
    let n = chol.dim();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        let col = chol.solve_upper(&chol.solve_lower(&e));
        inv.set_column(j, &col);
    }
    SpdMatrix(symmetrize(&inv))
}

/// Symmetric square root via eigendecomposition. Slightly negative
/// eigenvalues (above `-dim·1e-12·‖m‖`) are clamped to zero.
pub fn sym_sqrt(m: &Matrix) -> Result<Matrix, LinalgError> {
    check_square(m)?;
    let asym = relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(LinalgError::NotSymmetric(asym));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let norm = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let floor = -(n as f64) * 1e-12 * norm;
    let mut roots = Vector::zeros(n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < floor {
            return Err(LinalgError::NotPositiveDefinite {
                row: i,
                pivot: lambda,
            });
        }
        roots[i] = lambda.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let root = q * Matrix::from_diagonal(&roots) * q.transpose();
    Ok(symmetrize(&root))
}

fn standard_normal_vector(dim: usize, rng: &mut RandomStream) -> Vector {
    Vector::from_fn(dim, |_, _| rng.standard_normal())
}

/// Draw from `N(mean, B⁻¹)` where `B = L·Lᵀ` is a precision matrix.
pub fn mvn_sample_precision(
    mean: &Vector,
    precision_chol: &LowerTriangular,
    rng: &mut RandomStream,
) -> Result<Vector, LinalgError> {
    precision_chol.check_dim(mean.len())?;
    let z = standard_normal_vector(mean.len(), rng);
    Ok(mean + precision_chol.solve_upper(&z))
}

/// Draw from `N(mean, L·Lᵀ)` where `L·Lᵀ` is a covariance matrix.
pub fn mvn_sample_cov(
    mean: &Vector,
    cov_chol: &LowerTriangular,
    rng: &mut RandomStream,
) -> Result<Vector, LinalgError> {
    cov_chol.check_dim(mean.len())?;
    let z = standard_normal_vector(mean.len(), rng);
    Ok(mean + cov_chol.matrix() * z)
}

/// Orthogonal projection onto the span of `v`: `v·vᵀ / (vᵀv)`.
pub fn projection_matrix(v: &Vector) -> Result<Matrix, LinalgError> {
    let norm2 = v.norm_squared();
    if norm2.is_nan() || norm2 <= 0.0 {
        return Err(LinalgError::ZeroVector);
    }
    Ok(v * v.transpose() / norm2)
}
