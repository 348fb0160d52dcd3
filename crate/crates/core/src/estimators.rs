//! Linear initial estimators and the proximal-estimation pipeline.
//!
//! * Ridgeless: `Q_n⁺·X'Y/n`, the minimum-norm least-squares solution.
//! * Modified Ridgeless: the same after soft-thresholding the spectrum of
//!   `Q_n` at μ and zeroing every eigenvalue the threshold kills. Stays
//!   `√n`-consistent under nearly singular designs where Ridgeless is not.
//! * Proximal estimate: `prox_{λf}^{W̄}(β̂^s)` with the regularized weight
//!   `W̄ = A + I − AA⁺` of the matrix `A` the initial estimator inverts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, eig_sym, pinv_from, SymMatrix, WeightMatrix};
use crate::penalty::{support, Penalty};
use crate::prox::{prox, ProxOptions, ProxResult};

pub use crate::penalty::adaptive_weights;

/// Observations of the linear model `Y = Xβ₀ + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs n ≥ 1 and p ≥ 1".into(),
            ));
        }
        check_len(y.len(), x.nrows())?;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dataset contains NaN or infinite values".into(),
            ));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Sample design matrix `Q_n = X'X/n`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::symmetrize(self.x.tr_mul(&self.x) / self.n() as f64)
    }

    /// `X'Y/n`.
    pub fn moment(&self) -> DVector<f64> {
        self.x.tr_mul(&self.y) / self.n() as f64
    }
}

pub fn ridgeless(d: &Dataset, rank_tol: f64) -> Result<DVector<f64>> {
    let dec = eig_sym(&d.gram())?;
    Ok(pinv_from(&dec, rank_tol).as_matrix() * d.moment())
}

/// `(λ₂I + Q_n)⁻¹·X'Y/n`.
pub fn ridge_initial(d: &Dataset, lambda2: f64) -> Result<DVector<f64>> {
    if !(lambda2 > 0.0) {
        return Err(Error::InvalidArgument("ridge λ₂ must be positive".into()));
    }
    let p = d.p();
    let m = d.gram().into_matrix() + DMatrix::identity(p, p) * lambda2;
    m.cholesky()
        .map(|c| c.solve(&d.moment()))
        .ok_or_else(|| Error::InvalidArgument("ridge system is not positive definite".into()))
}

/// `W̄ = Q + I − QQ⁺`: eigenvalues of `Q` above the rank cutoff are kept,
/// the null space gets eigenvalue one.
pub fn regularized_weight(q: &SymMatrix, rank_tol: f64) -> Result<WeightMatrix> {
    let d = eig_sym(q)?;
    let thr = d.threshold(rank_tol);
    WeightMatrix::new(d.map_spectrum(|s| if s > thr { s } else { 1.0 }))
}

/// Soft-thresholded spectrum `max(σ_j − μ, 0)`.
pub fn spectrum_prox(sigma: &[f64], mu: f64) -> Vec<f64> {
    sigma.iter().map(|s| (s - mu).max(0.0)).collect()
}

/// Range-consistent estimate `Q̌_n` of the population design and the
/// quantities derived from it.
#[derive(Debug, Clone)]
pub struct ModifiedDesign {
    pub q_check: SymMatrix,
    pub q_check_pinv: SymMatrix,
    pub w_bar: WeightMatrix,
    pub kept: Vec<bool>,
    /// Spectrum of `Q_n`, descending.
    pub sigma: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    /// `σ_j` where kept, exactly `0.0` elsewhere.
    pub sigma_check: Vec<f64>,
}

impl ModifiedDesign {
    pub fn rank(&self) -> usize {
        self.kept.iter().filter(|k| **k).count()
    }
}

pub fn modified_design(q_n: &SymMatrix, mu: f64, rank_tol: f64) -> Result<ModifiedDesign> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(
            "spectrum threshold μ must be positive".into(),
        ));
    }
    let d = eig_sym(q_n)?;
    let thr = d.threshold(rank_tol);
    let sigma: Vec<f64> = d.eigenvalues.iter().copied().collect();
    let sigma_hat = spectrum_prox(&sigma, mu);
    let kept: Vec<bool> = sigma
        .iter()
        .zip(&sigma_hat)
        .map(|(s, h)| *h > 0.0 && *s > thr)
        .collect();
    let sigma_check: Vec<f64> = sigma
        .iter()
        .zip(&kept)
        .map(|(s, k)| if *k { *s } else { 0.0 })
        .collect();

    let spectral = |g: &dyn Fn(usize) -> f64| {
        let mut scaled = d.eigenvectors.clone();
        for j in 0..sigma.len() {
            scaled.column_mut(j).scale_mut(g(j));
        }
        SymMatrix::symmetrize(scaled * d.eigenvectors.transpose())
    };
    let q_check = spectral(&|j| sigma_check[j]);
    let q_check_pinv = spectral(&|j| if kept[j] { 1.0 / sigma[j] } else { 0.0 });
    let w_bar = WeightMatrix::new(spectral(&|j| if kept[j] { sigma[j] } else { 1.0 }))?;
    Ok(ModifiedDesign {
        q_check,
        q_check_pinv,
        w_bar,
        kept,
        sigma,
        sigma_hat,
        sigma_check,
    })
}

/// `β̌ = Q̌_n⁺·X'Y/n`.
pub fn modified_ridgeless(
    d: &Dataset,
    mu: f64,
    rank_tol: f64,
) -> Result<(DVector<f64>, ModifiedDesign)> {
    let md = modified_design(&d.gram(), mu, rank_tol)?;
    let beta = md.q_check_pinv.as_matrix() * d.moment();
    Ok((beta, md))
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub beta: DVector<f64>,
    /// `{j : β_j ≠ 0}` with exact zeros.
    pub active_set: Vec<usize>,
    /// Optimal subgradient `W(β̂^s − β̂) ∈ λ∂f(β̂)`.
    pub v_opt: DVector<f64>,
    pub initial_beta: DVector<f64>,
    pub w_used: WeightMatrix,
    pub solver: ProxResult,
    /// Distance of `v_opt` to `λ∂f(β̂)`, recomputed here.
    pub kkt_residual: f64,
}

pub fn proximal_estimate(
    initial: &DVector<f64>,
    w: &WeightMatrix,
    f: &Penalty,
    lambda: f64,
    opts: &ProxOptions,
) -> Result<EstimateReport> {
    let solver = prox(f, lambda, w, initial, opts)?;
    let beta = solver.point.clone();
    let v_opt = w.apply(&(initial - &beta));
    let kkt_residual = f.subgradient_distance(lambda, &beta, &v_opt);
    if kkt_residual > opts.kkt_tol * lambda.max(1.0) {
        log::warn!(
            "proximal estimate KKT residual {kkt_residual:e} exceeds tolerance {:e}",
            opts.kkt_tol
        );
    }
    Ok(EstimateReport {
        active_set: support(&beta),
        beta,
        v_opt,
        initial_beta: initial.clone(),
        w_used: w.clone(),
        solver,
        kkt_residual,
    })
}
