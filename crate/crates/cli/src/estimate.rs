use std::fs;

use nalgebra::DVector;
use proxkit::estimators::{
    adaptive_weights, modified_design, proximal_estimate, regularized_weight, Dataset,
};
use proxkit::io::{config_hash, read_dataset_file, read_json, write_json};
use proxkit::linalg::{default_rank_tol, eig_sym, pinv};
use proxkit::penalty::support;
use proxkit::prox::plse_solve;
use proxkit::{Error, Penalty, ProxOptions, ProxResult, WeightMatrix};
use serde::{Deserialize, Deserializer, Serialize};

use crate::args::{EstimateArgs, Mode, MuArg};
use crate::{metadata, CliError, OutputMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialEstimator {
    Ridgeless,
    #[default]
    ModifiedRidgeless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MuSetting {
    Value(f64),
    #[serde(serialize_with = "auto_str")]
    Auto,
}

fn auto_str<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("auto")
}

impl<'de> Deserialize<'de> for MuSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(MuSetting::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(MuSetting::Auto),
            _ => Err(serde::de::Error::custom(
                "mu must be \"auto\" or a positive number",
            )),
        }
    }
}

/// Estimation settings. Every field is optional in the JSON file; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub penalty: Penalty,
    pub lambda: f64,
    /// Replace Adaptive Lasso weights with `1/|β̃_j|` of the initial estimate.
    pub adaptive_from_initial: bool,
    pub initial: InitialEstimator,
    pub mu: MuSetting,
    pub mu_exponent: f64,
    /// Relative eigenvalue cutoff; `p·ε` when absent.
    pub rank_tol: Option<f64>,
    pub solver: ProxOptions,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            penalty: Penalty::Lasso,
            lambda: 0.0,
            adaptive_from_initial: false,
            initial: InitialEstimator::default(),
            mu: MuSetting::Auto,
            mu_exponent: 0.375,
            rank_tol: None,
            solver: ProxOptions::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimateMetadata {
    #[serde(flatten)]
    base: OutputMetadata,
    mode: &'static str,
    n: usize,
    p: usize,
    lambda: Option<f64>,
    mu: Option<f64>,
    mu_exponent: Option<f64>,
    rank_tol: f64,
}

#[derive(Debug, Default, Serialize)]
struct Diagnostics {
    rank_q: usize,
    rank_q_check: Option<usize>,
    solver_path: Option<String>,
    stop: Option<String>,
    iterations: Option<usize>,
    kkt_residual: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    metadata: EstimateMetadata,
    config: EstimateConfig,
    beta: Vec<f64>,
    active_set: Vec<usize>,
    v_opt: Option<Vec<f64>>,
    initial_beta: Option<Vec<f64>>,
    diagnostics: Diagnostics,
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Ridgeless => "ridgeless",
        Mode::ModifiedRidgeless => "modified-ridgeless",
        Mode::Plse => "plse",
        Mode::Proximal => "proximal",
    }
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn solver_diag(d: &mut Diagnostics, r: &ProxResult) {
    d.solver_path = Some(format!("{:?}", r.path));
    d.stop = Some(format!("{:?}", r.stop));
    d.iterations = Some(r.iterations);
    d.kkt_residual = Some(r.kkt_residual);
}

pub fn run(args: &EstimateArgs) -> Result<(), CliError> {
    let mut cfg: EstimateConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => EstimateConfig::default(),
    };
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(mu) = args.mu {
        cfg.mu = match mu {
            MuArg::Auto => MuSetting::Auto,
            MuArg::Value(v) => MuSetting::Value(v),
        };
    }
    if let Some(e) = args.mu_exponent {
        cfg.mu_exponent = e;
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(CliError::Usage(format!(
            "lambda must be finite and ≥ 0, got {}",
            cfg.lambda
        )));
    }
    if !(cfg.mu_exponent > 0.0 && cfg.mu_exponent.is_finite()) {
        return Err(CliError::Usage("mu_exponent must be positive".into()));
    }
    cfg.solver.validate()?;

    let data = read_dataset_file(&args.data)?;
    let out = estimate(&data, &cfg, args.mode)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("estimate.json");
    write_json(&out, fs::File::create(&path)?)?;
    println!(
        "{}: n={}, p={}, active set {:?} -> {}",
        out.metadata.mode,
        out.metadata.n,
        out.metadata.p,
        out.active_set,
        path.display()
    );
    Ok(())
}

fn estimate(data: &Dataset, cfg: &EstimateConfig, mode: Mode) -> Result<EstimateOutput, Error> {
    let (n, p) = (data.n(), data.p());
    let rank_tol = cfg.rank_tol.unwrap_or_else(|| default_rank_tol(p));
    let q = data.gram();
    let moment = data.moment();
    let uses_mu = matches!(mode, Mode::ModifiedRidgeless)
        || (matches!(mode, Mode::Proximal) && cfg.initial == InitialEstimator::ModifiedRidgeless);
    let mu = match cfg.mu {
        MuSetting::Auto => (n as f64).powf(-cfg.mu_exponent),
        MuSetting::Value(v) => v,
    };
    let mut diag = Diagnostics {
        rank_q: eig_sym(&q)?.rank(rank_tol),
        ..Diagnostics::default()
    };
    let ridgeless =
        || -> Result<DVector<f64>, Error> { Ok(pinv(&q, rank_tol)?.as_matrix() * &moment) };

    let mut v_opt = None;
    let mut initial_beta = None;
    let beta = match mode {
        Mode::Ridgeless => ridgeless()?,
        Mode::ModifiedRidgeless => {
            let md = modified_design(&q, mu, rank_tol)?;
            diag.rank_q_check = Some(md.rank());
            md.q_check_pinv.as_matrix() * &moment
        }
        Mode::Plse => {
            let f = if cfg.adaptive_from_initial {
                Penalty::AdaptiveLasso {
                    weights: adaptive_weights(&ridgeless()?),
                }
            } else {
                cfg.penalty.clone()
            };
            let r = plse_solve(data.x(), data.y(), &f, cfg.lambda, &cfg.solver)?;
            // X'(y − Xβ)/n is the subgradient certificate of the PLSE
            v_opt = Some(to_vec(&(&moment - q.as_matrix() * &r.point)));
            solver_diag(&mut diag, &r);
            r.point
        }
        Mode::Proximal => {
            let (init, w): (DVector<f64>, WeightMatrix) = match cfg.initial {
                InitialEstimator::Ridgeless => (ridgeless()?, regularized_weight(&q, rank_tol)?),
                InitialEstimator::ModifiedRidgeless => {
                    let md = modified_design(&q, mu, rank_tol)?;
                    diag.rank_q_check = Some(md.rank());
                    (md.q_check_pinv.as_matrix() * &moment, md.w_bar)
                }
            };
            let f = if cfg.adaptive_from_initial {
                Penalty::AdaptiveLasso {
                    weights: adaptive_weights(&init),
                }
            } else {
                cfg.penalty.clone()
            };
            let est = proximal_estimate(&init, &w, &f, cfg.lambda, &cfg.solver)?;
            solver_diag(&mut diag, &est.solver);
            v_opt = Some(to_vec(&est.v_opt));
            initial_beta = Some(to_vec(&init));
            est.beta
        }
    };
    let penalized = matches!(mode, Mode::Plse | Mode::Proximal);
    Ok(EstimateOutput {
        metadata: EstimateMetadata {
            base: metadata(config_hash(cfg), None),
            mode: mode_name(mode),
            n,
            p,
            lambda: penalized.then_some(cfg.lambda),
            mu: uses_mu.then_some(mu),
            mu_exponent: (uses_mu && cfg.mu == MuSetting::Auto).then_some(cfg.mu_exponent),
            rank_tol,
        },
        config: cfg.clone(),
        active_set: support(&beta),
        beta: to_vec(&beta),
        v_opt,
        initial_beta,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing_is_strict() {
        let ok: EstimateConfig =
            serde_json::from_str(r#"{"penalty": {"kind": "lasso"}, "lambda": 0.1, "mu": "auto"}"#)
                .unwrap();
        assert_eq!(ok.lambda, 0.1);
        assert_eq!(ok.mu, MuSetting::Auto);
        let v: EstimateConfig = serde_json::from_str(r#"{"mu": 0.25}"#).unwrap();
        assert_eq!(v.mu, MuSetting::Value(0.25));
        assert!(serde_json::from_str::<EstimateConfig>(r#"{"lamda": 0.1}"#).is_err());
        assert!(serde_json::from_str::<EstimateConfig>(r#"{"mu": "sometimes"}"#).is_err());
        assert!(serde_json::from_str::<EstimateConfig>(r#"{"mu": -1}"#).is_err());
    }

    #[test]
    fn config_round_trips() {
        let cfg = EstimateConfig {
            mu: MuSetting::Value(0.3),
            ..EstimateConfig::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<EstimateConfig>(&s).unwrap(), cfg);
        let auto = serde_json::to_string(&EstimateConfig::default()).unwrap();
        assert!(auto.contains(r#""mu":"auto""#));
    }
}
