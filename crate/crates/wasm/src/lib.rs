//! Browser bindings for the demo page in `www/`. Each export is a thin
//! wrapper over a plain function so the logic is testable natively.

use nalgebra::{DMatrix, DVector};
use proxkit::estimators::modified_design;
use proxkit::montecarlo::{
    generate_sample, run_experiment, summarize, DesignKind, DesignSpec, EstimatorKind, McConfig,
    STUDY_BETA0, STUDY_SIGMA2,
};
use proxkit::prox::{conjugate_prox, prox};
use proxkit::{Penalty, ProxOptions, SymMatrix, WeightMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn penalty_2d(kind: &str, c1: f64, c2: f64) -> Result<Penalty, String> {
    match kind {
        "lasso" => Ok(Penalty::Lasso),
        "adaptive" => Ok(Penalty::AdaptiveLasso {
            weights: vec![c1, c2],
        }),
        "group" => Ok(Penalty::GroupLasso {
            groups: vec![vec![0, 1]],
        }),
        "ridge" => Ok(Penalty::Ridge),
        "box" => Ok(Penalty::BoxIndicator {
            lower: vec![-1.0; 2],
            upper: vec![1.0; 2],
        }),
        other => Err(format!("unknown penalty `{other}`")),
    }
}

/// `[prox₁, prox₂, θ₁, θ₂]` for `x` under `W = [[w11, w12], [w12, w22]]`.
pub fn prox_2d(
    kind: &str,
    lambda: f64,
    c: [f64; 2],
    w: [f64; 3],
    x: [f64; 2],
) -> Result<[f64; 4], String> {
    let f = penalty_2d(kind, c[0], c[1])?;
    let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[w[0], w[1], w[1], w[2]]))
        .map_err(|e| e.to_string())?;
    let wm = WeightMatrix::new(m).map_err(|e| e.to_string())?;
    let x = DVector::from_column_slice(&x);
    let opts = ProxOptions::default();
    let p = prox(&f, lambda, &wm, &x, &opts)
        .map_err(|e| e.to_string())?
        .point;
    let t = conjugate_prox(&f, lambda, &wm, &x, &opts).map_err(|e| e.to_string())?;
    Ok([p[0], p[1], t[0], t[1]])
}

/// Sample spectrum of the nearly singular design and its thresholded
/// counterpart: `[σ₁…σ_p, σ̌₁…σ̌_p, μ]`.
pub fn nearly_singular_spectrum(n: usize, mu_exponent: f64, seed: u64) -> Result<Vec<f64>, String> {
    let spec = DesignSpec::new(DesignKind::NearlySingular);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta0 = DVector::from_column_slice(&STUDY_BETA0);
    let d = generate_sample(&spec, n, &beta0, STUDY_SIGMA2, &mut rng).map_err(|e| e.to_string())?;
    let mu = (n as f64).powf(-mu_exponent);
    let md = modified_design(&d.gram(), mu, 1e-10).map_err(|e| e.to_string())?;
    let mut out = md.sigma.clone();
    out.extend(&md.sigma_check);
    out.push(mu);
    Ok(out)
}

/// `P̂(Â = A)` of the adaptive estimators over a grid of λ exponents:
/// `[RLAL(α₁), MRLAL(α₁), RLAL(α₂), …]`.
pub fn detection_curve(
    design: &str,
    n: usize,
    reps: usize,
    alphas: &[f64],
    seed: u64,
) -> Result<Vec<f64>, String> {
    let kind = match design {
        "regular" => DesignKind::Regular,
        "singular" => DesignKind::Singular,
        "nearly_singular" => DesignKind::NearlySingular,
        other => return Err(format!("unknown design `{other}`")),
    };
    let cfg = McConfig {
        design: DesignSpec::new(kind),
        n_grid: vec![n],
        reps,
        base_seed: seed,
        lambda_exponents: alphas.to_vec(),
        estimators: vec![EstimatorKind::Rlal, EstimatorKind::Mrlal],
        ..McConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let s =
        summarize(&run_experiment(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 * alphas.len());
    for &a in alphas {
        for est in [EstimatorKind::Rlal, EstimatorKind::Mrlal] {
            out.push(s.row(est, n, Some(a)).map_or(f64::NAN, |r| r.p_detect));
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = prox2d)]
#[allow(clippy::too_many_arguments)]
pub fn prox2d_js(
    kind: &str,
    lambda: f64,
    c1: f64,
    c2: f64,
    w11: f64,
    w12: f64,
    w22: f64,
    x1: f64,
    x2: f64,
) -> Result<Vec<f64>, JsError> {
    prox_2d(kind, lambda, [c1, c2], [w11, w12, w22], [x1, x2])
        .map(|r| r.to_vec())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = nearlySingularSpectrum)]
pub fn nearly_singular_spectrum_js(
    n: usize,
    mu_exponent: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    nearly_singular_spectrum(n, mu_exponent, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = detectionCurve)]
pub fn detection_curve_js(
    design: &str,
    n: usize,
    reps: usize,
    alphas: Vec<f64>,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    detection_curve(design, n, reps, &alphas, seed.into()).map_err(|e| JsError::new(&e))
}
