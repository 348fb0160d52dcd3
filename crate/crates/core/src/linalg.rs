//! Dense symmetric linear algebra.
//!
//! Everything downstream decomposes symmetric positive semi-definite
//! matrices (sample designs, population designs, weighting matrices), so this
//! module works exclusively with the symmetric eigendecomposition. Eigenpairs
//! are sorted by descending eigenvalue and carry a deterministic sign
//! convention so that results are bit-reproducible.
//!
//! Rank tolerances are *relative*: an eigenvalue `σ` is treated as zero when
//! `σ <= rank_tol * σ_max`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_MAX_ITERS: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-10;

/// Default relative rank tolerance `p·ε`.
pub fn default_rank_tol(dim: usize) -> f64 {
    dim as f64 * f64::EPSILON
}

/// A dense symmetric matrix. Symmetry is exact: the lower triangle is
/// always the mirror of the upper one.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates (approximate) symmetry and stores the symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "matrix dimension must be ≥ 1".into(),
            ));
        }
        let scale = max_abs(&m).max(1.0);
        let asym = (&m - m.transpose()).abs().max();
        if !asym.is_finite() || asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        Ok(Self::symmetrize(m))
    }

    /// Mirrors the average of `m` and `m'`; use when `m` is symmetric up to
    /// rounding by construction.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        let mut out = m;
        for i in 0..p {
            for j in (i + 1)..p {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds a symmetric matrix from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        SymMatrix::from_fn(idx.len(), |i, j| self.0[(idx[i], idx[j])])
    }

    pub fn is_diagonal(&self) -> bool {
        let p = self.dim();
        (0..p).all(|i| (0..p).all(|j| i == j || self.0[(i, j)] == 0.0))
    }
}

/// Eigenvalues in non-increasing order with matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn sigma_max(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Absolute cutoff `rank_tol · σ_max`.
    pub fn threshold(&self, rank_tol: f64) -> f64 {
        rank_tol * self.sigma_max()
    }

    /// Number of eigenvalues strictly above the cutoff.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let thr = self.threshold(rank_tol);
        self.eigenvalues.iter().filter(|&&s| s > thr).count()
    }

    /// `P·diag(g(σ_i))·P'`.
    pub fn map_spectrum(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let p = &self.eigenvectors;
        let mut scaled = p.clone();
        for (j, &s) in self.eigenvalues.iter().enumerate() {
            let gj = g(s);
            scaled.column_mut(j).scale_mut(gj);
        }
        SymMatrix::symmetrize(scaled * p.transpose())
    }
}

/// Symmetric eigendecomposition with descending eigenvalues.
///
/// Each eigenvector is oriented so that its largest-magnitude entry is
/// positive (lowest index wins ties).
pub fn eig_sym(m: &SymMatrix) -> Result<SpectralDecomp> {
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITERS).ok_or(
        Error::EigenNoConvergence {
            iterations: EIGEN_MAX_ITERS,
        },
    )?;
    let p = m.dim();
    let mut order: Vec<usize> = (0..p).collect();
    // stable: equal eigenvalues keep the solver's order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::<f64>::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut lead = 0;
        for i in 1..p {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix.
pub fn pinv(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let d = eig_sym(m)?;
    Ok(pinv_from(&d, rank_tol))
}

pub(crate) fn pinv_from(d: &SpectralDecomp, rank_tol: f64) -> SymMatrix {
    let thr = d.threshold(rank_tol);
    d.map_spectrum(|s| if s > thr { 1.0 / s } else { 0.0 })
}

/// Orthogonal projector `M·M⁺` onto the range of `m`.
pub fn range_projector(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let d = eig_sym(m)?;
    Ok(range_projector_from(&d, rank_tol))
}

pub(crate) fn range_projector_from(d: &SpectralDecomp, rank_tol: f64) -> SymMatrix {
    let thr = d.threshold(rank_tol);
    d.map_spectrum(|s| if s > thr { 1.0 } else { 0.0 })
}

/// Symmetric square root `S` with `S·S' = m`. Eigenvalues within the rank
/// tolerance of zero (either sign) map to zero.
pub fn psd_sqrt(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let d = eig_sym(m)?;
    let thr = d.threshold(rank_tol);
    let min = d.eigenvalues.min();
    if min < -thr {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(d.map_spectrum(|s| if s > thr { s.sqrt() } else { 0.0 }))
}

/// `√(x'Wx)`.
pub fn weighted_norm(x: &DVector<f64>, w: &WeightMatrix) -> Result<f64> {
    check_len(x.len(), w.dim())?;
    Ok(w.norm_squared(x).sqrt())
}

/// Positive-definite matrix defining the inner product `⟨x, y⟩_W = x'Wy`,
/// with its Cholesky factor and extreme eigenvalues cached.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    matrix: SymMatrix,
    chol: Cholesky<f64, Dyn>,
    sigma_max: f64,
    sigma_min: f64,
    diagonal: bool,
}

impl WeightMatrix {
    pub fn new(matrix: SymMatrix) -> Result<Self> {
        let d = eig_sym(&matrix)?;
        Self::with_spectrum(matrix, &d)
    }

    pub(crate) fn with_spectrum(matrix: SymMatrix, d: &SpectralDecomp) -> Result<Self> {
        let p = matrix.dim();
        let sigma_max = d.eigenvalues[0];
        let sigma_min = d.eigenvalues[p - 1];
        if !(sigma_min > p as f64 * f64::EPSILON * sigma_max) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: sigma_min,
            });
        }
        let chol = Cholesky::new(matrix.as_matrix().clone()).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: sigma_min,
        })?;
        let diagonal = matrix.is_diagonal();
        Ok(WeightMatrix {
            matrix,
            chol,
            sigma_max,
            sigma_min,
            diagonal,
        })
    }

    pub fn identity(dim: usize) -> Self {
        WeightMatrix::new(SymMatrix::identity(dim)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    /// Lower-triangular `L` with `L·L' = W`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.matrix.as_matrix() * x
    }

    /// `W⁻¹·x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    pub fn inverse(&self) -> SymMatrix {
        SymMatrix::symmetrize(self.chol.inverse())
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.apply(y))
    }

    /// Quadratic form `x'Wx`.
    pub fn norm_squared(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x)
    }

    /// `‖L'x‖²₂`, the same quantity through the factor.
    pub fn norm_squared_via_factor(&self, x: &DVector<f64>) -> f64 {
        (self.chol.l().transpose() * x).norm_squared()
    }
}

pub(crate) fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}
