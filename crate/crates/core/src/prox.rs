//! Weighted proximal operators `prox_{λf}^W`, their Moreau residuals,
//! projections onto conjugate polyhedra, a direct penalized least-squares
//! solver and the extended-penalty machinery linking the two.
//!
//! Both the weighted prox and the penalized least-squares problem are
//! instances of
//!
//! ```text
//! minimize  ½ β'Hβ − b'β + λ f(β)
//! ```
//!
//! with `H` PSD: the prox uses `H = W`, `b = Wx`; least squares uses
//! `H = X'X/n`, `b = X'Y/n`. One accelerated proximal-gradient loop serves
//! both. Its backward step is the closed-form Euclidean prox, so exact zeros
//! appear on the iterative path too. For the piecewise-linear separable
//! penalties the loop tries, once the sign/bound pattern has settled, to
//! solve the KKT system on that pattern exactly and accepts the result when
//! its KKT residual is below tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, eig_sym, max_abs, SymMatrix, WeightMatrix};
use crate::penalty::{Penalty, PolyhedronSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxOptions {
    pub kkt_tol: f64,
    pub rel_change_tol: f64,
    pub max_iters: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions {
            kkt_tol: 1e-10,
            rel_change_tol: 1e-12,
            max_iters: 50_000,
        }
    }
}

impl ProxOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0 && self.rel_change_tol > 0.0 && self.max_iters > 0) {
            return Err(Error::InvalidArgument(
                "solver tolerances and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    ClosedForm,
    Iterative,
}

/// Why the iterative loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Closed form; no iteration.
    Exact,
    /// KKT residual below `kkt_tol`.
    Kkt,
    /// Relative change below `rel_change_tol` before the KKT test passed.
    RelativeChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxResult {
    pub point: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub path: SolverPath,
    pub stop: StopReason,
}

/// `½β'Hβ − b'β` with a Lipschitz bound for its gradient.
struct Quadratic<'a> {
    h: &'a DMatrix<f64>,
    b: DVector<f64>,
    lipschitz: f64,
}

impl Quadratic<'_> {
    /// Negative gradient `b − Hβ`, the subgradient certificate at optimality.
    fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.b - self.h * beta
    }

    fn kkt(&self, f: &Penalty, lambda: f64, beta: &DVector<f64>) -> f64 {
        f.subgradient_distance(lambda, beta, &self.residual(beta))
    }
}

/// Weighted proximal operator: `argmin_β ½‖x−β‖²_W + λ f(β)`.
pub fn prox(
    f: &Penalty,
    lambda: f64,
    w: &WeightMatrix,
    x: &DVector<f64>,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    let p = w.dim();
    check_len(x.len(), p)?;
    f.validate(p)?;
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "λ must be finite and ≥ 0, got {lambda}"
        )));
    }
    let wm = w.matrix().as_matrix();
    let kkt = |beta: &DVector<f64>| f.subgradient_distance(lambda, beta, &(wm * (x - beta)));

    if lambda == 0.0 {
        return Ok(closed_form(x.clone(), 0.0));
    }
    if let Penalty::Ridge = f {
        // (W + λI)β = Wx
        let point = ridge_solve(wm, &(wm * x), lambda)?;
        let r = kkt(&point);
        return Ok(closed_form(point, r));
    }
    if w.is_diagonal() {
        let diag: Vec<f64> = (0..p).map(|j| wm[(j, j)]).collect();
        if f.is_separable() {
            let point =
                DVector::from_iterator(p, (0..p).map(|j| f.scalar_prox(j, lambda / diag[j], x[j])));
            let r = kkt(&point);
            return Ok(closed_form(point, r));
        }
        if let Penalty::GroupLasso { groups } = f {
            if groups
                .iter()
                .all(|g| g.iter().all(|&j| diag[j] == diag[g[0]]))
            {
                let mut point = DVector::zeros(p);
                for g in groups {
                    let sub = DVector::from_iterator(g.len(), g.iter().map(|&j| x[j]));
                    let t = lambda / diag[g[0]];
                    let single = Penalty::GroupLasso {
                        groups: vec![(0..g.len()).collect()],
                    };
                    let out = single.euclidean_prox(t, &sub);
                    for (k, &j) in g.iter().enumerate() {
                        point[j] = out[k];
                    }
                }
                let r = kkt(&point);
                return Ok(closed_form(point, r));
            }
        }
    }
    let q = Quadratic {
        h: wm,
        b: wm * x,
        lipschitz: w.sigma_max(),
    };
    solve_composite(&q, f, lambda, x.clone(), opts)
}

/// Moreau residual `x − prox_{λf}^W(x)`, i.e. `prox_{(λf)*}^W(x)`.
pub fn conjugate_prox(
    f: &Penalty,
    lambda: f64,
    w: &WeightMatrix,
    x: &DVector<f64>,
    opts: &ProxOptions,
) -> Result<DVector<f64>> {
    let r = prox(f, lambda, w, x, opts)?;
    Ok(x - r.point)
}

/// `W`-projection of `x` onto a conjugate polyhedron, computed as the Moreau
/// residual of the generating sublinear penalty.
pub fn project_polyhedron(
    c: &PolyhedronSpec,
    w: &WeightMatrix,
    x: &DVector<f64>,
    opts: &ProxOptions,
) -> Result<DVector<f64>> {
    check_len(c.dim(), w.dim())?;
    let scale = max_abs(w.matrix().as_matrix()).max(1.0);
    if max_abs(&(c.weight.as_matrix() - w.matrix().as_matrix())) > 1e-12 * scale {
        return Err(Error::InvalidArgument(
            "polyhedron was built under a different weighting matrix".into(),
        ));
    }
    if c.bounds.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidArgument(
            "polyhedron bounds must be > 0".into(),
        ));
    }
    conjugate_prox(&c.generating_penalty(), 1.0, w, x, opts)
}

/// Penalized least squares `argmin_β ½n⁻¹‖y − Xβ‖²₂ + λ f(β)`.
pub fn plse_solve(
    x_mat: &DMatrix<f64>,
    y: &DVector<f64>,
    f: &Penalty,
    lambda: f64,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    let n = x_mat.nrows();
    let p = x_mat.ncols();
    check_len(y.len(), n)?;
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    f.validate(p)?;
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "λ must be finite and ≥ 0, got {lambda}"
        )));
    }
    let h = SymMatrix::symmetrize(x_mat.transpose() * x_mat / n as f64);
    let b = x_mat.transpose() * y / n as f64;
    let d = eig_sym(&h)?;
    let sigma_max = d.sigma_max();

    if lambda == 0.0 {
        let sigma_min = d.eigenvalues[p - 1];
        if !(sigma_min > p as f64 * f64::EPSILON * sigma_max) {
            return Err(Error::RankDeficient);
        }
        let point = h
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or(Error::RankDeficient)?
            .solve(&b);
        let r = (&b - h.as_matrix() * &point).norm();
        return Ok(closed_form(point, r));
    }
    let q = Quadratic {
        h: h.as_matrix(),
        b,
        lipschitz: sigma_max.max(f64::MIN_POSITIVE),
    };
    if let Penalty::Ridge = f {
        let point = ridge_solve(q.h, &q.b, lambda)?;
        let r = q.kkt(f, lambda, &point);
        return Ok(closed_form(point, r));
    }
    solve_composite(&q, f, lambda, DVector::zeros(p), opts)
}

/// `argmin_b ½(b−η)'W(b−η) + λ(⟨shift, b⟩ + f(b))`, used for limit laws whose
/// penalty carries a linear part. Weights of zero are permitted here.
pub(crate) fn prox_with_linear_term(
    f: &Penalty,
    lambda: f64,
    w: &WeightMatrix,
    eta: &DVector<f64>,
    shift: &DVector<f64>,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    let wm = w.matrix().as_matrix();
    let q = Quadratic {
        h: wm,
        b: wm * eta - shift * lambda,
        lipschitz: w.sigma_max(),
    };
    solve_composite(&q, f, lambda, eta.clone(), opts)
}

fn closed_form(point: DVector<f64>, kkt_residual: f64) -> ProxResult {
    ProxResult {
        point,
        iterations: 0,
        kkt_residual,
        path: SolverPath::ClosedForm,
        stop: StopReason::Exact,
    }
}

fn ridge_solve(h: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let p = h.nrows();
    let m = h + DMatrix::identity(p, p) * lambda;
    m.cholesky()
        .map(|c| c.solve(b))
        .ok_or(Error::InvalidArgument(
            "ridge system is not positive definite".into(),
        ))
}

const STALL_WINDOW: usize = 50;

/// Accelerated proximal gradient with fixed step `1/L` and gradient
/// restart.
fn solve_composite(
    q: &Quadratic<'_>,
    f: &Penalty,
    lambda: f64,
    start: DVector<f64>,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    let step = 1.0 / q.lipschitz;
    let t = lambda * step;
    let mut beta = f.euclidean_prox(t, &start);
    let mut y = beta.clone();
    let mut momentum = 1.0_f64;
    let mut last_pattern: Option<Vec<i8>> = None;
    let mut residual = q.kkt(f, lambda, &beta);
    if residual <= opts.kkt_tol {
        return Ok(iterative(beta, 0, residual, StopReason::Kkt));
    }

    let mut best_residual = residual;
    let mut last_improvement = 0;
    for k in 1..=opts.max_iters {
        let grad = q.h * &y - &q.b;
        let next = f.euclidean_prox(t, &(&y - grad * step));
        residual = q.kkt(f, lambda, &next);
        if residual <= opts.kkt_tol {
            return Ok(iterative(next, k, residual, StopReason::Kkt));
        }

        if let Some(pattern) = active_pattern(f, &next) {
            if last_pattern.as_ref() == Some(&pattern) {
                if let Some(candidate) = solve_on_pattern(q, f, lambda, &pattern) {
                    let r = q.kkt(f, lambda, &candidate);
                    if r <= opts.kkt_tol {
                        return Ok(iterative(candidate, k, r, StopReason::Kkt));
                    }
                }
            }
            last_pattern = Some(pattern);
        }

        // The relative-change fallback only counts once the KKT residual has
        // stalled; small steps alone are common on ill-conditioned W.
        if residual < 0.9 * best_residual {
            best_residual = residual;
            last_improvement = k;
        }
        let change = (&next - &beta).norm();
        if change <= opts.rel_change_tol * next.norm().max(1.0)
            && k - last_improvement >= STALL_WINDOW
        {
            return Ok(iterative(next, k, residual, StopReason::RelativeChange));
        }

        // gradient restart: drop momentum once it points uphill
        if (&y - &next).dot(&(&next - &beta)) > 0.0 {
            momentum = 1.0;
            y = next.clone();
        } else {
            let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &next + (&next - &beta) * ((momentum - 1.0) / m_next);
            momentum = m_next;
        }
        beta = next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        residual,
        last: beta.as_slice().to_vec(),
    })
}

fn iterative(
    point: DVector<f64>,
    iterations: usize,
    kkt_residual: f64,
    stop: StopReason,
) -> ProxResult {
    ProxResult {
        point,
        iterations,
        kkt_residual,
        path: SolverPath::Iterative,
        stop,
    }
}

/// Sign pattern for ℓ1-type penalties (−1/0/+1), bound pattern for boxes
/// (−1 lower, +1 upper, 0 interior). `None` when no pattern solve applies.
fn active_pattern(f: &Penalty, beta: &DVector<f64>) -> Option<Vec<i8>> {
    match f {
        Penalty::Lasso | Penalty::AdaptiveLasso { .. } | Penalty::ElasticNet { .. } => Some(
            beta.iter()
                .map(|b| {
                    if *b > 0.0 {
                        1
                    } else if *b < 0.0 {
                        -1
                    } else {
                        0
                    }
                })
                .collect(),
        ),
        Penalty::BoxIndicator { lower, upper } => Some(
            beta.iter()
                .enumerate()
                .map(|(j, b)| {
                    if *b == lower[j] {
                        -1
                    } else if *b == upper[j] {
                        1
                    } else {
                        0
                    }
                })
                .collect(),
        ),
        Penalty::Ridge | Penalty::GroupLasso { .. } => None,
    }
}

/// Solves the KKT equations with the pattern held fixed:
/// `(H_II + λD)β_I = b_I − H_IF β_F − λ c∘s` over the free set `I`.
fn solve_on_pattern(
    q: &Quadratic<'_>,
    f: &Penalty,
    lambda: f64,
    pattern: &[i8],
) -> Option<DVector<f64>> {
    let p = pattern.len();
    let mut fixed = DVector::zeros(p);
    let mut free = Vec::new();
    let mut shift = Vec::new();
    let mut diag_add = 0.0;
    for (j, &s) in pattern.iter().enumerate() {
        match f {
            Penalty::Lasso | Penalty::AdaptiveLasso { .. } | Penalty::ElasticNet { .. } => {
                if s == 0 {
                    continue;
                }
                let c = match f {
                    Penalty::Lasso => 1.0,
                    Penalty::AdaptiveLasso { weights } => weights[j],
                    Penalty::ElasticNet { w } => {
                        diag_add = lambda * (1.0 - w);
                        *w
                    }
                    _ => unreachable!(),
                };
                if !c.is_finite() {
                    return None;
                }
                free.push(j);
                shift.push(lambda * c * s as f64);
            }
            Penalty::BoxIndicator { lower, upper } => match s {
                -1 => fixed[j] = lower[j],
                1 => fixed[j] = upper[j],
                _ => {
                    free.push(j);
                    shift.push(0.0);
                }
            },
            _ => return None,
        }
    }
    if free.is_empty() {
        return Some(fixed);
    }
    let k = free.len();
    let hf = q.h * &fixed;
    let mut m = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (a, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            m[(a, c)] = q.h[(i, j)];
        }
        m[(a, a)] += diag_add;
        rhs[a] = q.b[i] - hf[i] - shift[a];
    }
    let sol = m.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = fixed;
    for (a, &i) in free.iter().enumerate() {
        out[i] = sol[a];
    }
    Some(out)
}

/// `f̄(β) = f(β) + (1/(2λ))·β'(W̄ − Q)β`, the penalty that turns a proximal
/// estimator under `W̄` into a penalized least-squares estimator.
#[derive(Debug, Clone)]
pub struct ExtendedPenalty {
    base: Penalty,
    lambda: f64,
    extra: SymMatrix,
}

impl ExtendedPenalty {
    pub fn evaluate(&self, beta: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(self.extra.as_matrix() * beta));
        self.base.evaluate(beta) + quad / (2.0 * self.lambda)
    }

    pub fn base(&self) -> &Penalty {
        &self.base
    }
}

pub fn extended_penalty(
    f: &Penalty,
    lambda: f64,
    w_bar: &WeightMatrix,
    q: &SymMatrix,
) -> Result<ExtendedPenalty> {
    check_len(q.dim(), w_bar.dim())?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("λ must be positive".into()));
    }
    let extra = w_bar.matrix().sub(q);
    let d = eig_sym(&extra)?;
    let min = d.eigenvalues[extra.dim() - 1];
    let scale = w_bar.sigma_max().max(1.0);
    if min < -1e-10 * scale {
        return Err(Error::ExtendedPenaltyNotConvex {
            min_eigenvalue: min,
        });
    }
    Ok(ExtendedPenalty {
        base: f.clone(),
        lambda,
        extra,
    })
}

/// `Kernel(a) ⊆ Kernel(q)`: every null eigenvector of `a` is annihilated
/// by `q`.
pub fn kernel_condition(a: &SymMatrix, q: &SymMatrix, rank_tol: f64) -> Result<bool> {
    check_len(q.dim(), a.dim())?;
    let d = eig_sym(a)?;
    let thr = d.threshold(rank_tol);
    let scale = max_abs(q.as_matrix()).max(1.0);
    for (j, &s) in d.eigenvalues.iter().enumerate() {
        if s <= thr {
            let v = d.eigenvectors.column(j);
            let qv = q.as_matrix() * v;
            if qv.amax() > 1e-9 * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
