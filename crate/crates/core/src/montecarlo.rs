//! Simulation study under regular, singular and nearly singular designs.
//!
//! Population designs (`p = 8` in the study presets):
//!
//! * regular: `Q_r` with entries `0.5^|j−k|`;
//! * singular: `Q_s = M·Q_r·M'`, where `M` is the identity with its fifth row
//!   replaced by `a·e₂' + b·e₃'`, so the fifth predictor is the fixed
//!   combination `a·x₂ + b·x₃`;
//! * nearly singular: `Q_{0n} = n^{-1/2}·Q_r + (1 − n^{-1/2})·Q_s`.
//!
//! Every replication `(n, rep)` draws from its own ChaCha8 stream, seeded by
//! [`replication_seed`], and results are reduced in `(n, rep)` order, so the
//! report does not depend on the number of worker threads.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    adaptive_weights, modified_design, proximal_estimate, regularized_weight, Dataset,
};
use crate::linalg::{check_len, eig_sym, pinv_from, psd_sqrt, range_projector, SymMatrix};
use crate::penalty::{support, Penalty};
use crate::prox::ProxOptions;
use crate::stats::{binomial_se, quartiles};

pub const STUDY_BETA0: [f64; 8] = [3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
pub const STUDY_SIGMA2: f64 = 2.0;
pub const STUDY_MU_EXPONENT: f64 = 0.375;

/// Coefficients of the fixed combination defining `Q_s`.
pub fn default_combination() -> [f64; 2] {
    let c = 1.0 / 3f64.sqrt();
    [c, c]
}

/// Regular design: entries `0.5^|j−k|`.
pub fn build_qr(p: usize) -> SymMatrix {
    SymMatrix::from_fn(p, |i, j| 0.5_f64.powi((i as i32 - j as i32).abs()))
}

/// `M·Q_r·M'` with row 5 of `M` equal to `a·e₂' + b·e₃'`.
pub fn build_qs(qr: &SymMatrix, a: f64, b: f64) -> Result<SymMatrix> {
    let p = qr.dim();
    if p < 5 {
        return Err(Error::InvalidArgument("singular design needs p ≥ 5".into()));
    }
    let mut m = DMatrix::<f64>::identity(p, p);
    m[(4, 4)] = 0.0;
    m[(4, 1)] = a;
    m[(4, 2)] = b;
    Ok(SymMatrix::symmetrize(&m * qr.as_matrix() * m.transpose()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Regular,
    Singular,
    NearlySingular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub kind: DesignKind,
    #[serde(default = "default_p")]
    pub p: usize,
    /// `(a, b)` in `x₅ = a·x₂ + b·x₃`.
    #[serde(default = "default_combination")]
    pub combination: [f64; 2],
}

fn default_p() -> usize {
    8
}

impl DesignSpec {
    pub fn new(kind: DesignKind) -> Self {
        DesignSpec {
            kind,
            p: 8,
            combination: default_combination(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config("design needs p ≥ 2".into()));
        }
        if self.kind != DesignKind::Regular && self.p < 5 {
            return Err(Error::Config("irregular designs need p ≥ 5".into()));
        }
        if self.combination.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(
                "combination coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    fn qs(&self) -> Result<SymMatrix> {
        build_qs(&build_qr(self.p), self.combination[0], self.combination[1])
    }

    /// `Q_{0n}`.
    pub fn population(&self, n: usize) -> Result<SymMatrix> {
        match self.kind {
            DesignKind::Regular => Ok(build_qr(self.p)),
            DesignKind::Singular => self.qs(),
            DesignKind::NearlySingular => {
                let w = 1.0 / (n as f64).sqrt();
                Ok(build_qr(self.p).scale(w).add(&self.qs()?.scale(1.0 - w)))
            }
        }
    }

    /// Population limit `Q₀`.
    pub fn limit(&self) -> Result<SymMatrix> {
        match self.kind {
            DesignKind::Regular => Ok(build_qr(self.p)),
            DesignKind::Singular | DesignKind::NearlySingular => self.qs(),
        }
    }

    /// Identified parameter `β₀⁺ = Q₀Q₀⁺β₀`; exactly `β₀` under a regular
    /// design. Entries below `1e-10·‖β₀‖∞` are snapped to zero.
    pub fn beta0_plus(&self, beta0: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(beta0.len(), self.p)?;
        if self.kind == DesignKind::Regular {
            return Ok(beta0.clone());
        }
        let proj = range_projector(&self.limit()?, LIMIT_RANK_TOL)?;
        let mut out = proj.as_matrix() * beta0;
        let cut = 1e-10 * beta0.amax();
        out.apply(|v| {
            if v.abs() <= cut {
                *v = 0.0
            }
        });
        Ok(out)
    }
}

const LIMIT_RANK_TOL: f64 = 1e-10;

/// Draws `n` observations with rows `X_i = Q_{0n}^{1/2}g_i` and
/// `Y = Xβ₀ + σ₀ε`. All predictor draws come first (row by row), then the
/// errors.
pub fn generate_sample<R: Rng + ?Sized>(
    spec: &DesignSpec,
    n: usize,
    beta0: &DVector<f64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let root = psd_sqrt(&spec.population(n)?, LIMIT_RANK_TOL)?;
    generate_with_root(&root, n, beta0, sigma2, rng)
}

fn generate_with_root<R: Rng + ?Sized>(
    root: &SymMatrix,
    n: usize,
    beta0: &DVector<f64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let p = root.dim();
    check_len(beta0.len(), p)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be ≥ 1".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument("σ₀² must be ≥ 0".into()));
    }
    let mut g = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let x = g * root.as_matrix();
    let sd = sigma2.sqrt();
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * beta0 + eps * sd;
    Dataset::new(x, y)
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(base ⊕ splitmix64(n)) ⊕ rep)`.
pub fn replication_seed(base_seed: u64, n: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(base_seed ^ splitmix64(n as u64)) ^ rep as u64)
}

/// Estimators compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Ridgeless
    #[serde(rename = "RL")]
    Rl,
    /// Modified Ridgeless
    #[serde(rename = "MRL")]
    Mrl,
    /// Adaptive Lasso prox of Ridgeless under `Q̄_n`
    #[serde(rename = "RLAL")]
    Rlal,
    /// Adaptive Lasso prox of modified Ridgeless under `W̄` from `Q̌_n`
    #[serde(rename = "MRLAL")]
    Mrlal,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Rl,
        EstimatorKind::Mrl,
        EstimatorKind::Rlal,
        EstimatorKind::Mrlal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Rl => "RL",
            EstimatorKind::Mrl => "MRL",
            EstimatorKind::Rlal => "RLAL",
            EstimatorKind::Mrlal => "MRLAL",
        }
    }

    pub fn is_proximal(self) -> bool {
        matches!(self, EstimatorKind::Rlal | EstimatorKind::Mrlal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub design: DesignSpec,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    pub mu_exponent: f64,
    pub lambda_exponents: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub sigma2: f64,
    pub beta0: Vec<f64>,
    /// Relative eigenvalue cutoff for the sample-design pseudoinverse.
    pub rank_tol: f64,
    pub solver: ProxOptions,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            design: DesignSpec::new(DesignKind::Regular),
            n_grid: vec![100, 200],
            reps: 500,
            base_seed: 20_240_601,
            mu_exponent: STUDY_MU_EXPONENT,
            lambda_exponents: vec![0.55, 0.65, 0.75, 0.85, 0.95],
            estimators: EstimatorKind::ALL.to_vec(),
            sigma2: STUDY_SIGMA2,
            beta0: STUDY_BETA0.to_vec(),
            rank_tol: 1e-10,
            solver: ProxOptions::default(),
        }
    }
}

pub const PRESETS: [&str; 4] = [
    "paper-regular",
    "paper-singular",
    "paper-nearly-singular",
    "paper-nearly-singular-path",
];

impl McConfig {
    /// Study presets: `paper-regular`, `paper-singular`,
    /// `paper-nearly-singular` (n = 100, 200) and `paper-nearly-singular-path`
    /// (n = 100, 200, …, 1000 for the normalized-error curves).
    pub fn preset(name: &str) -> Result<Self> {
        let kind = match name {
            "paper-regular" => DesignKind::Regular,
            "paper-singular" => DesignKind::Singular,
            "paper-nearly-singular" | "paper-nearly-singular-path" => DesignKind::NearlySingular,
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut cfg = McConfig {
            design: DesignSpec::new(kind),
            ..McConfig::default()
        };
        if name == "paper-nearly-singular-path" {
            cfg.n_grid = (1..=10).map(|k| 100 * k).collect();
            cfg.estimators = vec![EstimatorKind::Rl, EstimatorKind::Mrl];
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.reps == 0 {
            return Err(Error::Config("reps must be ≥ 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("n_grid must be non-empty with n ≥ 2".into()));
        }
        if !(self.mu_exponent >= 0.375 && self.mu_exponent < 0.5) {
            return Err(Error::Config("mu_exponent must lie in [3/8, 1/2)".into()));
        }
        if self
            .lambda_exponents
            .iter()
            .any(|a| !(*a > 0.5 && *a < 1.0))
        {
            return Err(Error::Config(
                "lambda exponents must lie in (0.5, 1)".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if self.estimators.iter().any(|e| e.is_proximal()) && self.lambda_exponents.is_empty() {
            return Err(Error::Config(
                "proximal estimators need lambda exponents".into(),
            ));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::Config("sigma2 must be positive".into()));
        }
        if self.beta0.len() != self.design.p {
            return Err(Error::Config(format!(
                "beta0 has length {}, design has p = {}",
                self.beta0.len(),
                self.design.p
            )));
        }
        if !(self.rank_tol >= 0.0) {
            return Err(Error::Config("rank_tol must be ≥ 0".into()));
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        crate::io::config_hash(self)
    }
}

/// One estimator's outcome on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub estimator: EstimatorKind,
    pub n: usize,
    /// Exponent of `λ_n = n^{-α}`; absent for the linear estimators.
    pub alpha: Option<f64>,
    pub rep: usize,
    pub sq_err: f64,
    pub norm_sq_err: f64,
    pub detect: bool,
    pub include: bool,
    #[serde(skip)]
    pub beta: Vec<f64>,
}

/// Per-replication design diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationInfo {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub rank_q: usize,
    pub rank_q_check: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub alpha: Option<f64>,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub metadata: Metadata,
    pub config: McConfig,
    pub beta0_plus: Vec<f64>,
    pub active_set: Vec<usize>,
    pub records: Vec<Record>,
    pub replications: Vec<ReplicationInfo>,
    pub failures: Vec<Failure>,
}

struct Replication {
    info: ReplicationInfo,
    records: Vec<Record>,
    failures: Vec<Failure>,
}

/// Runs the study on all available threads.
pub fn run_experiment(cfg: &McConfig) -> Result<McReport> {
    run_experiment_with_workers(cfg, None)
}

/// Runs the study on `workers` threads (`None`: rayon's default). The
/// report is identical for every worker count.
pub fn run_experiment_with_workers(cfg: &McConfig, workers: Option<usize>) -> Result<McReport> {
    cfg.validate()?;
    let beta0 = DVector::from_column_slice(&cfg.beta0);
    let beta0_plus = cfg.design.beta0_plus(&beta0)?;
    let active = support(&beta0_plus);

    let mut roots = BTreeMap::new();
    for &n in &cfg.n_grid {
        roots.insert(n, psd_sqrt(&cfg.design.population(n)?, LIMIT_RANK_TOL)?);
    }
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.reps).map(move |rep| (n, rep)))
        .collect();
    let ctx = RunContext {
        cfg,
        beta0: &beta0,
        beta0_plus: &beta0_plus,
        active: &active,
        roots: &roots,
    };
    let reps = execute(&jobs, workers, |&(n, rep)| ctx.replicate(n, rep))?;

    let mut records = Vec::new();
    let mut replications = Vec::with_capacity(reps.len());
    let mut failures = Vec::new();
    for r in reps {
        replications.push(r.info);
        records.extend(r.records);
        failures.extend(r.failures);
    }
    Ok(McReport {
        metadata: Metadata {
            config_hash: cfg.hash(),
            seed: cfg.base_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config: cfg.clone(),
        beta0_plus: beta0_plus.iter().copied().collect(),
        active_set: active,
        records,
        replications,
        failures,
    })
}

#[cfg(feature = "parallel")]
fn execute<J, T, F>(jobs: &[J], workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
fn execute<J, T, F>(jobs: &[J], _workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    F: Fn(&J) -> Result<T>,
{
    jobs.iter().map(f).collect()
}

struct RunContext<'a> {
    cfg: &'a McConfig,
    beta0: &'a DVector<f64>,
    beta0_plus: &'a DVector<f64>,
    active: &'a [usize],
    roots: &'a BTreeMap<usize, SymMatrix>,
}

impl RunContext<'_> {
    fn replicate(&self, n: usize, rep: usize) -> Result<Replication> {
        let cfg = self.cfg;
        let seed = replication_seed(cfg.base_seed, n, rep);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = generate_with_root(&self.roots[&n], n, self.beta0, cfg.sigma2, &mut rng)?;
        let q = data.gram();
        let moment = data.moment();
        let dec = eig_sym(&q)?;
        let rl = pinv_from(&dec, cfg.rank_tol).as_matrix() * &moment;
        let mu = (n as f64).powf(-cfg.mu_exponent);
        let md = modified_design(&q, mu, cfg.rank_tol)?;
        let mrl = md.q_check_pinv.as_matrix() * &moment;

        let mut out = Replication {
            info: ReplicationInfo {
                n,
                rep,
                seed,
                rank_q: dec.rank(cfg.rank_tol),
                rank_q_check: md.rank(),
            },
            records: Vec::new(),
            failures: Vec::new(),
        };
        let wants = |k: EstimatorKind| cfg.estimators.contains(&k);
        if wants(EstimatorKind::Rl) {
            out.records
                .push(self.record(EstimatorKind::Rl, n, None, rep, &rl));
        }
        if wants(EstimatorKind::Mrl) {
            out.records
                .push(self.record(EstimatorKind::Mrl, n, None, rep, &mrl));
        }
        let w_rl = if wants(EstimatorKind::Rlal) {
            Some(regularized_weight(&q, cfg.rank_tol).map_err(|e| e.to_string()))
        } else {
            None
        };
        let rl_penalty = Penalty::AdaptiveLasso {
            weights: adaptive_weights(&rl),
        };
        let mrl_penalty = Penalty::AdaptiveLasso {
            weights: adaptive_weights(&mrl),
        };
        for &alpha in &cfg.lambda_exponents {
            let lambda = (n as f64).powf(-alpha);
            if let Some(w) = &w_rl {
                let res = match w {
                    Ok(w) => proximal_estimate(&rl, w, &rl_penalty, lambda, &cfg.solver)
                        .map(|e| e.beta)
                        .map_err(|e| e.to_string()),
                    Err(msg) => Err(msg.clone()),
                };
                self.push(&mut out, EstimatorKind::Rlal, n, alpha, rep, res);
            }
            if wants(EstimatorKind::Mrlal) {
                let res = proximal_estimate(&mrl, &md.w_bar, &mrl_penalty, lambda, &cfg.solver)
                    .map(|e| e.beta)
                    .map_err(|e| e.to_string());
                self.push(&mut out, EstimatorKind::Mrlal, n, alpha, rep, res);
            }
        }
        Ok(out)
    }

    fn push(
        &self,
        out: &mut Replication,
        estimator: EstimatorKind,
        n: usize,
        alpha: f64,
        rep: usize,
        beta: std::result::Result<DVector<f64>, String>,
    ) {
        match beta {
            Ok(b) => out
                .records
                .push(self.record(estimator, n, Some(alpha), rep, &b)),
            Err(e) => {
                log::debug!(
                    "{} failed at n={n}, rep={rep}, α={alpha}: {e}",
                    estimator.label()
                );
                out.failures.push(Failure {
                    estimator,
                    n,
                    alpha: Some(alpha),
                    rep,
                    message: e,
                })
            }
        }
    }

    fn record(
        &self,
        estimator: EstimatorKind,
        n: usize,
        alpha: Option<f64>,
        rep: usize,
        beta: &DVector<f64>,
    ) -> Record {
        let sq_err = (beta - self.beta0_plus).norm_squared();
        let est_support = support(beta);
        let detect = est_support == self.active;
        let include = self.active.iter().all(|j| est_support.contains(j));
        debug_assert!(!detect || include);
        Record {
            estimator,
            n,
            alpha,
            rep,
            sq_err,
            norm_sq_err: n as f64 * sq_err,
            detect,
            include,
            beta: beta.iter().copied().collect(),
        }
    }
}

/// Aggregates of one `(estimator, n, α)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub alpha: Option<f64>,
    pub count: usize,
    pub failures: usize,
    pub sq_err_quartiles: [f64; 3],
    pub norm_sq_err_quartiles: [f64; 3],
    pub p_detect: f64,
    pub se_detect: f64,
    pub p_include: f64,
    pub se_include: f64,
}

/// Per-`n` frequency of `rank(Q̌_n) = rank(Q₀)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub n: usize,
    pub target_rank: usize,
    pub p_rank_match: f64,
    pub se_rank_match: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub metadata: Metadata,
    pub beta0_plus: Vec<f64>,
    pub active_set: Vec<usize>,
    pub rows: Vec<SummaryRow>,
    pub rank: Vec<RankRow>,
    pub failure_count: usize,
}

impl Summary {
    pub fn row(
        &self,
        estimator: EstimatorKind,
        n: usize,
        alpha: Option<f64>,
    ) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n && r.alpha == alpha)
    }

    pub fn rank_row(&self, n: usize) -> Option<&RankRow> {
        self.rank.iter().find(|r| r.n == n)
    }
}

/// Quartiles use the type-8 rule of [`crate::stats::quantile_sorted`];
/// probabilities carry binomial standard errors `sqrt(p̂(1−p̂)/m)`.
pub fn summarize(report: &McReport) -> Result<Summary> {
    if report.records.is_empty() && report.failures.is_empty() {
        return Err(Error::EmptyReport);
    }
    // key order: estimator, n, α (α as ordered bits; exponents are positive)
    type Key = (EstimatorKind, usize, Option<u64>);
    let mut cells: BTreeMap<Key, Vec<&Record>> = BTreeMap::new();
    for r in &report.records {
        cells
            .entry((r.estimator, r.n, r.alpha.map(f64::to_bits)))
            .or_default()
            .push(r);
    }
    let mut fail_counts: BTreeMap<Key, usize> = BTreeMap::new();
    for f in &report.failures {
        *fail_counts
            .entry((f.estimator, f.n, f.alpha.map(f64::to_bits)))
            .or_default() += 1;
        cells
            .entry((f.estimator, f.n, f.alpha.map(f64::to_bits)))
            .or_default();
    }
    let rows = cells
        .into_iter()
        .map(|(key, recs)| {
            let m = recs.len();
            let sq: Vec<f64> = recs.iter().map(|r| r.sq_err).collect();
            let nsq: Vec<f64> = recs.iter().map(|r| r.norm_sq_err).collect();
            let frac = |pred: &dyn Fn(&Record) -> bool| {
                if m == 0 {
                    f64::NAN
                } else {
                    recs.iter().filter(|r| pred(r)).count() as f64 / m as f64
                }
            };
            let p_detect = frac(&|r| r.detect);
            let p_include = frac(&|r| r.include);
            let nan3 = [f64::NAN; 3];
            SummaryRow {
                estimator: key.0,
                n: key.1,
                alpha: key.2.map(f64::from_bits),
                count: m,
                failures: fail_counts.get(&key).copied().unwrap_or(0),
                sq_err_quartiles: if m > 0 { quartiles(&sq) } else { nan3 },
                norm_sq_err_quartiles: if m > 0 { quartiles(&nsq) } else { nan3 },
                p_detect,
                se_detect: binomial_se(p_detect, m),
                p_include,
                se_include: binomial_se(p_include, m),
            }
        })
        .collect();

    let target_rank = eig_sym(&report.config.design.limit()?)?.rank(LIMIT_RANK_TOL);
    let mut by_n: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in &report.replications {
        let e = by_n.entry(r.n).or_default();
        e.0 += 1;
        if r.rank_q_check == target_rank {
            e.1 += 1;
        }
    }
    let rank = by_n
        .into_iter()
        .map(|(n, (m, hits))| {
            let p = hits as f64 / m as f64;
            RankRow {
                n,
                target_rank,
                p_rank_match: p,
                se_rank_match: binomial_se(p, m),
            }
        })
        .collect();
    Ok(Summary {
        metadata: report.metadata.clone(),
        beta0_plus: report.beta0_plus.clone(),
        active_set: report.active_set.clone(),
        rows,
        rank,
        failure_count: report.failures.len(),
    })
}
