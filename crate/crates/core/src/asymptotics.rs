//! Limit laws of proximal estimators, used to check simulation output
//! against theory.
//!
//! The initial estimator is assumed to satisfy `√n(β̂^s − β₀) →_d η = M₀⁺Z`
//! with `Z ~ N(0, Ω₀)`; for least-squares initial estimators `M₀ = Q₀`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::regularized_weight;
use crate::linalg::{check_len, pinv, psd_sqrt, SymMatrix, WeightMatrix};
use crate::penalty::Penalty;
use crate::prox::{prox_with_linear_term, ProxOptions};
use crate::stats::{quantile_sorted, sample_covariance};

const LIMIT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LimitLaw {
    pub q0: SymMatrix,
    pub omega0: SymMatrix,
    pub w0: WeightMatrix,
    /// Active set `A`, 0-based and sorted.
    pub support: Vec<usize>,
    q0_pinv: SymMatrix,
    omega_root: SymMatrix,
}

impl LimitLaw {
    pub fn new(
        q0: SymMatrix,
        omega0: SymMatrix,
        w0: WeightMatrix,
        support: Vec<usize>,
    ) -> Result<Self> {
        let p = q0.dim();
        check_len(omega0.dim(), p)?;
        check_len(w0.dim(), p)?;
        let mut support = support;
        support.sort_unstable();
        support.dedup();
        if support.iter().any(|&j| j >= p) {
            return Err(Error::InvalidArgument("support index out of range".into()));
        }
        let omega_root = psd_sqrt(&omega0, LIMIT_RANK_TOL)?;
        let q0_pinv = pinv(&q0, LIMIT_RANK_TOL)?;
        Ok(LimitLaw {
            q0,
            omega0,
            w0,
            support,
            q0_pinv,
            omega_root,
        })
    }

    /// Homoskedastic law: `Ω₀ = σ²Q₀` and `W₀ = Q₀ + I − Q₀Q₀⁺`.
    pub fn homoskedastic(q0: SymMatrix, sigma2: f64, support: Vec<usize>) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidArgument("σ² must be ≥ 0".into()));
        }
        let w0 = regularized_weight(&q0, LIMIT_RANK_TOL)?;
        let omega0 = q0.scale(sigma2);
        LimitLaw::new(q0, omega0, w0, support)
    }

    pub fn dim(&self) -> usize {
        self.q0.dim()
    }

    fn complement(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|j| !self.support.contains(j))
            .collect()
    }
}

/// One draw of `η = Q₀⁺Z`, `Z = Ω₀^{1/2}g`.
pub fn sample_eta<R: Rng + ?Sized>(law: &LimitLaw, rng: &mut R) -> DVector<f64> {
    let g = DVector::from_fn(law.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = law.omega_root.as_matrix() * g;
    law.q0_pinv.as_matrix() * z
}

/// `W₀`-orthogonal projection of `η` onto `span{e_j : j ∈ A}`: zero outside
/// `A`, `[(W₀)_A]⁻¹(W₀η)_A` on it.
pub fn limit_adaptive_projection(eta: &DVector<f64>, law: &LimitLaw) -> DVector<f64> {
    let a = &law.support;
    let mut out = DVector::zeros(eta.len());
    if a.is_empty() {
        return out;
    }
    let w = law.w0.matrix();
    let w_eta = w.as_matrix() * eta;
    let block = w.submatrix(a).into_matrix();
    let rhs = DVector::from_iterator(a.len(), a.iter().map(|&j| w_eta[j]));
    let sol = block
        .cholesky()
        .expect("principal block of a positive-definite matrix")
        .solve(&rhs);
    for (k, &j) in a.iter().enumerate() {
        out[j] = sol[k];
    }
    out
}

/// `W₀`-projection of `η` onto the `W₀`-orthogonal complement of
/// `span{e_j : j ∈ A}`, i.e. onto `W₀⁻¹·span{e_j : j ∉ A}`. Computed through
/// `W₀⁻¹` so that it is independent of [`limit_adaptive_projection`].
pub fn complement_projection(eta: &DVector<f64>, law: &LimitLaw) -> DVector<f64> {
    let ac = law.complement();
    if ac.is_empty() {
        return DVector::zeros(eta.len());
    }
    let w_inv = law.w0.inverse();
    let block = w_inv.submatrix(&ac).into_matrix();
    let rhs = DVector::from_iterator(ac.len(), ac.iter().map(|&j| eta[j]));
    let z = block
        .cholesky()
        .expect("principal block of a positive-definite matrix")
        .solve(&rhs);
    let mut lifted = DVector::zeros(eta.len());
    for (k, &j) in ac.iter().enumerate() {
        lifted[j] = z[k];
    }
    w_inv.as_matrix() * lifted
}

/// Regime-(i) limit of the Lasso proximal estimator:
/// `prox^{W₀}_{λ₀ρ}(η)` with the directional derivative
/// `ρ(b) = Σ_{j∈A} sign(β₀_j)b_j + Σ_{j∉A}|b_j|`.
pub fn lasso_limit(
    eta: &DVector<f64>,
    law: &LimitLaw,
    beta0: &DVector<f64>,
    lambda0: f64,
    opts: &ProxOptions,
) -> Result<DVector<f64>> {
    let p = law.dim();
    check_len(beta0.len(), p)?;
    let weights: Vec<f64> = (0..p)
        .map(|j| if law.support.contains(&j) { 0.0 } else { 1.0 })
        .collect();
    let shift = DVector::from_fn(p, |j, _| {
        if law.support.contains(&j) {
            beta0[j].signum()
        } else {
            0.0
        }
    });
    let f = Penalty::AdaptiveLasso { weights };
    Ok(prox_with_linear_term(&f, lambda0, &law.w0, eta, &shift, opts)?.point)
}

/// Which limit operator [`oracle_selection_probability`] applies.
#[derive(Debug, Clone)]
pub enum LimitOperator {
    Lasso { beta0: DVector<f64>, lambda0: f64 },
    AdaptiveLasso,
}

/// Monte Carlo estimate of `P((η)_{A^c} = (P_{B₀}η)_{A^c})`, equivalently of
/// the limit proximal estimator vanishing on `A^c` (within 1e-9). Consistent
/// selection requires this probability to be one.
pub fn oracle_selection_probability<R: Rng + ?Sized>(
    law: &LimitLaw,
    op: &LimitOperator,
    draws: usize,
    rng: &mut R,
    opts: &ProxOptions,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let ac = law.complement();
    let mut hits = 0usize;
    for _ in 0..draws {
        let eta = sample_eta(law, rng);
        let limit = match op {
            LimitOperator::Lasso { beta0, lambda0 } => {
                lasso_limit(&eta, law, beta0, *lambda0, opts)?
            }
            LimitOperator::AdaptiveLasso => limit_adaptive_projection(&eta, law),
        };
        if ac.iter().all(|&j| limit[j].abs() <= 1e-9) {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

/// `σ²·[(Q₀)_A]⁺`.
pub fn oracle_covariance(law: &LimitLaw, sigma2: f64) -> Result<DMatrix<f64>> {
    if law.support.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let block = law.q0.submatrix(&law.support);
    Ok(pinv(&block, LIMIT_RANK_TOL)?.into_matrix() * sigma2)
}

const QUANTILE_PROBS: [f64; 3] = [0.25, 0.5, 0.75];
const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x005E_ED0F_B007;
const MIN_COMPARISON_ROWS: usize = 100;

/// Discrepancies between two samples of the same dimension.
#[derive(Debug, Clone)]
pub struct SampleComparison {
    /// `Q_a − Q_b` at the 0.25/0.5/0.75 quantiles, per coordinate.
    pub quantile_diffs: Vec<[f64; 3]>,
    pub quantile_ses: Vec<[f64; 3]>,
    /// Largest absolute entry of `Cov(a) − Cov(b)`.
    pub cov_diff: f64,
    pub cov_diff_se: f64,
}

/// Compares two samples (rows are draws). Standard errors come from a
/// fixed-seed bootstrap with independent row resampling of each sample.
pub fn compare_samples(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SampleComparison> {
    check_len(b.ncols(), a.ncols())?;
    for m in [a, b] {
        if m.nrows() < MIN_COMPARISON_ROWS {
            return Err(Error::InsufficientSamples {
                rows: m.nrows(),
                required: MIN_COMPARISON_ROWS,
            });
        }
    }
    let stats = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let q: Vec<[f64; 3]> = (0..a.ncols())
            .map(|j| {
                let qa = column_quantiles(a, j);
                let qb = column_quantiles(b, j);
                [qa[0] - qb[0], qa[1] - qb[1], qa[2] - qb[2]]
            })
            .collect();
        let c = (sample_covariance(a) - sample_covariance(b)).amax();
        (q, c)
    };
    let (quantile_diffs, cov_diff) = stats(a, b);

    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let p = a.ncols();
    let mut q_acc = vec![[0.0; 3]; p];
    let mut q_acc2 = vec![[0.0; 3]; p];
    let (mut c_acc, mut c_acc2) = (0.0, 0.0);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let ra = resample(a, &mut rng);
        let rb = resample(b, &mut rng);
        let (q, c) = stats(&ra, &rb);
        for j in 0..p {
            for k in 0..3 {
                q_acc[j][k] += q[j][k];
                q_acc2[j][k] += q[j][k] * q[j][k];
            }
        }
        c_acc += c;
        c_acc2 += c * c;
    }
    let m = BOOTSTRAP_RESAMPLES as f64;
    let sd = |s: f64, s2: f64| ((s2 - s * s / m) / (m - 1.0)).max(0.0).sqrt();
    let quantile_ses = (0..p)
        .map(|j| {
            [
                sd(q_acc[j][0], q_acc2[j][0]),
                sd(q_acc[j][1], q_acc2[j][1]),
                sd(q_acc[j][2], q_acc2[j][2]),
            ]
        })
        .collect();
    Ok(SampleComparison {
        quantile_diffs,
        quantile_ses,
        cov_diff,
        cov_diff_se: sd(c_acc, c_acc2),
    })
}

fn column_quantiles(m: &DMatrix<f64>, j: usize) -> [f64; 3] {
    let mut col: Vec<f64> = m.column(j).iter().copied().collect();
    col.sort_by(f64::total_cmp);
    QUANTILE_PROBS.map(|q| quantile_sorted(&col, q))
}

fn resample<R: Rng + ?Sized>(m: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let n = m.nrows();
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    DMatrix::from_fn(n, m.ncols(), |i, j| m[(idx[i], j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn qr(p: usize) -> SymMatrix {
        SymMatrix::from_fn(p, |i, j| 0.5_f64.powi((i as i32 - j as i32).abs()))
    }

    #[test]
    fn zero_omega_gives_zero_eta() {
        let law = LimitLaw::homoskedastic(qr(3), 0.0, vec![0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_eta(&law, &mut rng), DVector::zeros(3));
    }

    #[test]
    fn singular_q0_samples_in_range() {
        let q0 = SymMatrix::from_fn(3, |i, j| {
            [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 2.0]][i][j]
        });
        let law = LimitLaw::homoskedastic(q0, 1.5, vec![0, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let eta = sample_eta(&law, &mut rng);
            // kernel direction (1, −1, 0)
            assert!((eta[0] - eta[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_law_covariance() {
        let law = LimitLaw::homoskedastic(SymMatrix::identity(3), 1.0, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let rows = DMatrix::from_fn(draws, 3, |_, _| 0.0);
        let mut rows = rows;
        for i in 0..draws {
            let e = sample_eta(&law, &mut rng);
            rows.set_row(i, &e.transpose());
        }
        let c = sample_covariance(&rows);
        assert!(max_abs(&(c - DMatrix::identity(3, 3))) < 0.02);
    }

    #[test]
    fn projection_edge_cases() {
        let eta = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let full = LimitLaw::homoskedastic(qr(3), 1.0, vec![0, 1, 2]).unwrap();
        assert!((limit_adaptive_projection(&eta, &full) - &eta).amax() < 1e-12);
        let empty = LimitLaw::homoskedastic(qr(3), 1.0, vec![]).unwrap();
        assert_eq!(limit_adaptive_projection(&eta, &empty), DVector::zeros(3));
        let diag =
            LimitLaw::homoskedastic(SymMatrix::from_diagonal(&[2.0, 3.0, 0.5]), 1.0, vec![1])
                .unwrap();
        assert!(
            (limit_adaptive_projection(&eta, &diag) - DVector::from_vec(vec![0.0, -1.0, 0.0]))
                .amax()
                < 1e-14
        );
    }

    #[test]
    fn projection_idempotent_and_moreau_consistent() {
        let law = LimitLaw::homoskedastic(qr(5), 2.0, vec![0, 1, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let eta = sample_eta(&law, &mut rng);
            let once = limit_adaptive_projection(&eta, &law);
            let twice = limit_adaptive_projection(&once, &law);
            for j in [2, 3] {
                assert_eq!(once[j], 0.0);
                assert_eq!(twice[j], 0.0);
            }
            assert!((&twice - &once).amax() < 1e-12);
            let residual = &eta - complement_projection(&eta, &law);
            assert!((residual - &once).amax() < 1e-10);
        }
    }

    #[test]
    fn oracle_covariance_examples() {
        let law = LimitLaw::homoskedastic(SymMatrix::identity(8), 2.0, vec![0, 1, 4]).unwrap();
        let c = oracle_covariance(&law, 2.0).unwrap();
        assert!(max_abs(&(c - DMatrix::identity(3, 3) * 2.0)) < 1e-14);

        // 3×3 block of Q_r on {1,2,5}: [[1,.5,.0625],[.5,1,.125],[.0625,.125,1]]
        let law = LimitLaw::homoskedastic(qr(8), 2.0, vec![0, 1, 4]).unwrap();
        let c = oracle_covariance(&law, 2.0).unwrap();
        let block = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 0.0625, 0.5, 1.0, 0.125, 0.0625, 0.125, 1.0],
        );
        let inv = block.try_inverse().unwrap() * 2.0;
        assert!(max_abs(&(c - inv)) < 1e-12);
    }

    #[test]
    fn necessary_condition_diagnostic() {
        let beta0 = DVector::from_vec(vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let law = LimitLaw::homoskedastic(qr(8), 2.0, vec![0, 1, 4]).unwrap();
        let opts = ProxOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p_al =
            oracle_selection_probability(&law, &LimitOperator::AdaptiveLasso, 500, &mut rng, &opts)
                .unwrap();
        assert_eq!(p_al, 1.0);
        let op = LimitOperator::Lasso {
            beta0,
            lambda0: 1.0,
        };
        let p_l = oracle_selection_probability(&law, &op, 500, &mut rng, &opts).unwrap();
        assert!(p_l < 1.0, "lasso limit selection probability {p_l}");
    }

    #[test]
    fn lasso_limit_kkt() {
        let beta0 = DVector::from_vec(vec![1.0, 0.0, -2.0]);
        let law = LimitLaw::homoskedastic(qr(3), 1.0, vec![0, 2]).unwrap();
        let eta = DVector::from_vec(vec![0.4, 0.3, -0.2]);
        let b = lasso_limit(&eta, &law, &beta0, 0.5, &ProxOptions::default()).unwrap();
        // W₀(η − b) = λ₀·(sign on A, ∂|·| on A^c)
        let g = law.w0.apply(&(&eta - &b));
        assert!((g[0] - 0.5).abs() < 1e-9);
        assert!((g[2] + 0.5).abs() < 1e-9);
        if b[1] == 0.0 {
            assert!(g[1].abs() <= 0.5 + 1e-9);
        } else {
            assert!((g[1] - 0.5 * b[1].signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn compare_identical_and_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = DMatrix::from_fn(2000, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let same = compare_samples(&a, &a).unwrap();
        assert!(same
            .quantile_diffs
            .iter()
            .all(|q| q.iter().all(|d| *d == 0.0)));
        assert_eq!(same.cov_diff, 0.0);
        let shifted = a.map(|x| x - 1.0);
        let c = compare_samples(&a, &shifted).unwrap();
        for q in &c.quantile_diffs {
            assert!((q[1] - 1.0).abs() < 1e-12);
        }
        let small = DMatrix::zeros(99, 2);
        assert!(matches!(
            compare_samples(&small, &a),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
