use nalgebra::{DMatrix, DVector};
use proxkit::linalg::{max_abs, pinv};
use proxkit::montecarlo::{DesignKind, DesignSpec, STUDY_BETA0};
use proxkit::penalty::conjugate_polyhedron;
use proxkit::prox::{conjugate_prox, plse_solve, prox};
use proxkit::{Penalty, ProxOptions, SymMatrix, WeightMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::args::CheckArgs;
use crate::CliError;

/// Values printed for `β₀⁺` under the singular design (three decimals).
const PRINTED_BETA0_PLUS: [f64; 8] = [3.0, 1.893, 0.393, 0.0, 1.32, 0.0, 0.0, 0.0];

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn(&mut ChaCha8Rng, bool) -> Outcome;

pub fn run(args: &CheckArgs) -> Result<(), CliError> {
    let checks: [(&str, Check); 4] = [
        ("penrose-conditions", penrose),
        ("moreau-identity", moreau),
        ("plse-equivalence", plse_equivalence),
        ("beta0-plus", beta0_plus),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(k as u64));
        let fault = args.inject_fault && *name == "moreau-identity";
        let out = check(&mut rng, fault);
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("{name}: {status} ({})", out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_spectrum(rng: &mut ChaCha8Rng, sigma: &[f64]) -> SymMatrix {
    let p = sigma.len();
    let v = gaussian(rng, p, p).qr().q();
    SymMatrix::symmetrize(
        &v * DMatrix::from_diagonal(&DVector::from_column_slice(sigma)) * v.transpose(),
    )
}

fn penrose(rng: &mut ChaCha8Rng, _fault: bool) -> Outcome {
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let p = rng.random_range(1..=12);
        let r = rng.random_range(0..=p);
        let sigma: Vec<f64> = (0..p)
            .map(|k| {
                if k < r {
                    rng.random_range(0.1..10.0)
                } else {
                    0.0
                }
            })
            .collect();
        let a = random_spectrum(rng, &sigma);
        let Ok(ap) = pinv(&a, 1e-10) else {
            return Outcome {
                pass: false,
                detail: "pseudoinverse failed".into(),
            };
        };
        let (a, ap) = (a.as_matrix(), ap.as_matrix());
        let aap = a * ap;
        worst = worst
            .max(max_abs(&(&aap * a - a)))
            .max(max_abs(&(ap * a * ap - ap)))
            .max(max_abs(&(&aap - aap.transpose())));
    }
    Outcome {
        pass: worst < 1e-9,
        detail: format!("200 matrices, max residual {worst:.2e}"),
    }
}

fn random_penalty(rng: &mut ChaCha8Rng, kind: usize, p: usize) -> Penalty {
    match kind {
        0 => Penalty::Lasso,
        1 => Penalty::AdaptiveLasso {
            weights: (0..p).map(|_| rng.random_range(0.1..5.0)).collect(),
        },
        2 => Penalty::GroupLasso {
            groups: (0..p)
                .collect::<Vec<_>>()
                .chunks(2)
                .map(<[usize]>::to_vec)
                .collect(),
        },
        3 => Penalty::Ridge,
        4 => Penalty::ElasticNet {
            w: rng.random_range(0.05..0.95),
        },
        _ => Penalty::BoxIndicator {
            lower: vec![-1.0; p],
            upper: vec![1.0; p],
        },
    }
}

/// Dual feasibility of `θ` for a sublinear penalty.
fn dual_violation(f: &Penalty, lambda: f64, w: &WeightMatrix, theta: &DVector<f64>) -> f64 {
    match f {
        Penalty::GroupLasso { groups } => {
            let u = w.apply(theta);
            groups
                .iter()
                .map(|g| (g.iter().map(|&j| u[j] * u[j]).sum::<f64>().sqrt() - lambda).max(0.0))
                .fold(0.0, f64::max)
        }
        _ => conjugate_polyhedron(f, lambda, w, None)
            .map(|c| c.max_violation(theta))
            .unwrap_or(f64::INFINITY),
    }
}

fn moreau(rng: &mut ChaCha8Rng, fault: bool) -> Outcome {
    let opts = ProxOptions::default();
    let (mut sum_err, mut kkt, mut viol) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..300 {
        let p = rng.random_range(1..=6);
        let f = random_penalty(rng, i % 6, p);
        let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
        let cond = 10f64.powf(rng.random_range(0.0..4.0));
        let sigma: Vec<f64> = (0..p)
            .map(|k| {
                if k == 0 {
                    cond
                } else {
                    cond.powf(rng.random())
                }
            })
            .collect();
        let Ok(w) = WeightMatrix::new(random_spectrum(rng, &sigma)) else {
            return Outcome {
                pass: false,
                detail: "weight matrix rejected".into(),
            };
        };
        let x = DVector::from_fn(p, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let (Ok(r), Ok(mut theta)) = (
            prox(&f, lambda, &w, &x, &opts),
            conjugate_prox(&f, lambda, &w, &x, &opts),
        ) else {
            return Outcome {
                pass: false,
                detail: format!("solver failed on a {} instance", f.kind_name()),
            };
        };
        if fault {
            theta[0] += 1e-3;
        }
        for j in 0..p {
            let scale = f64::EPSILON * x[j].abs().max(r.point[j].abs());
            sum_err = sum_err.max(((r.point[j] + theta[j] - x[j]).abs() - scale).max(0.0));
        }
        let scale = max_abs(w.matrix().as_matrix()) * (1.0 + x.amax());
        kkt = kkt.max(f.subgradient_distance(lambda, &r.point, &w.apply(&theta)) / scale);
        if f.is_sublinear() {
            viol = viol.max(dual_violation(&f, lambda, &w, &theta));
        }
    }
    Outcome {
        pass: sum_err == 0.0 && kkt < 1e-9 && viol < 1e-9,
        detail: format!(
            "300 instances, identity excess {sum_err:.1e}, relative KKT {kkt:.1e}, dual violation {viol:.1e}"
        ),
    }
}

fn plse_equivalence(rng: &mut ChaCha8Rng, _fault: bool) -> Outcome {
    let opts = ProxOptions::default();
    let (n, p) = (50, 8);
    let mut worst = 0.0_f64;
    for i in 0..40 {
        let x = gaussian(rng, n, p);
        let beta0 = DVector::from_column_slice(&STUDY_BETA0);
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * beta0 + noise;
        let q = SymMatrix::symmetrize(x.transpose() * &x / n as f64);
        let Ok(w) = WeightMatrix::new(q.clone()) else {
            return Outcome {
                pass: false,
                detail: "sample design not positive definite".into(),
            };
        };
        let rl = w.solve(&(x.transpose() * &y / n as f64));
        let f = if i % 2 == 0 {
            Penalty::Lasso
        } else {
            Penalty::adaptive_from(&rl)
        };
        let lambda = rng.random_range(0.01..0.5);
        match (
            plse_solve(&x, &y, &f, lambda, &opts),
            prox(&f, lambda, &w, &rl, &opts),
        ) {
            (Ok(a), Ok(b)) => worst = worst.max((a.point - b.point).amax()),
            _ => {
                return Outcome {
                    pass: false,
                    detail: "solver failed".into(),
                }
            }
        }
    }
    Outcome {
        pass: worst < 1e-6,
        detail: format!("40 regular designs, max deviation {worst:.2e}"),
    }
}

fn beta0_plus(_rng: &mut ChaCha8Rng, _fault: bool) -> Outcome {
    let spec = DesignSpec::new(DesignKind::Singular);
    let Ok(bp) = spec.beta0_plus(&DVector::from_column_slice(&STUDY_BETA0)) else {
        return Outcome {
            pass: false,
            detail: "projection failed".into(),
        };
    };
    let dev = bp
        .iter()
        .zip(PRINTED_BETA0_PLUS)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.5}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Outcome {
        pass: dev <= 5e-4,
        detail: format!(
            "computed ({}), reference ({}), max abs deviation {dev:.2e}",
            fmt(bp.as_slice()),
            fmt(&PRINTED_BETA0_PLUS)
        ),
    }
}
