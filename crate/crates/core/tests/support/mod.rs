//! Reference solvers and random instances shared by the integration tests.
//!
//! The oracles avoid the library's solver entirely: piecewise-quadratic
//! problems are solved by enumerating every active pattern, and the group
//! projection runs projected gradient in the dual coordinates `u = Wθ`.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proxkit::{Penalty, SymMatrix, WeightMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_orthogonal<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, p, p).qr().q()
}

/// `V·diag(σ)·V'` for a random orthogonal `V`.
pub fn with_spectrum<R: Rng>(rng: &mut R, sigma: &[f64]) -> SymMatrix {
    let p = sigma.len();
    let v = random_orthogonal(rng, p);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(sigma));
    SymMatrix::symmetrize(&v * d * v.transpose())
}

/// Positive definite with eigenvalues log-uniform in `[1, cond]`, the
/// extremes always attained.
pub fn random_pd<R: Rng>(rng: &mut R, p: usize, cond: f64) -> SymMatrix {
    let mut sigma: Vec<f64> = (0..p).map(|_| cond.powf(rng.random::<f64>())).collect();
    sigma[0] = cond;
    if p > 1 {
        sigma[p - 1] = 1.0;
    }
    with_spectrum(rng, &sigma)
}

/// Rank-`r` PSD matrix with nonzero eigenvalues uniform in `[0.1, 10]`.
pub fn random_psd_rank<R: Rng>(rng: &mut R, p: usize, r: usize) -> SymMatrix {
    let sigma: Vec<f64> = (0..p)
        .map(|k| {
            if k < r {
                rng.random_range(0.1..10.0)
            } else {
                0.0
            }
        })
        .collect();
    with_spectrum(rng, &sigma)
}

pub fn random_penalty<R: Rng>(rng: &mut R, kind: usize, p: usize) -> Penalty {
    match kind % 6 {
        0 => Penalty::Lasso,
        1 => Penalty::AdaptiveLasso {
            weights: (0..p).map(|_| rng.random_range(0.1..5.0)).collect(),
        },
        2 => {
            let mut groups = Vec::new();
            let mut start = 0;
            while start < p {
                let len = rng.random_range(1..=3).min(p - start);
                groups.push((start..start + len).collect());
                start += len;
            }
            Penalty::GroupLasso { groups }
        }
        3 => Penalty::Ridge,
        4 => Penalty::ElasticNet {
            w: rng.random_range(0.01..0.99),
        },
        _ => {
            let lower = (0..p)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        f64::NEG_INFINITY
                    } else {
                        rng.random_range(-2.0..0.0)
                    }
                })
                .collect();
            let upper = (0..p)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        f64::INFINITY
                    } else {
                        rng.random_range(0.0..2.0)
                    }
                })
                .collect();
            Penalty::BoxIndicator { lower, upper }
        }
    }
}

/// One coordinate's admissible pieces in a piecewise-quadratic problem.
#[derive(Clone, Copy)]
enum Piece {
    Fixed(f64),
    /// Free on `[lo, hi]` with linear coefficient `slope`.
    Free {
        slope: f64,
        lo: f64,
        hi: f64,
    },
}

/// `argmin ½β'Hβ − b'β + Σ_j g_j(β_j)` where each `g_j` is linear on each of
/// its pieces, by enumerating every piece combination.
fn enumerate_qp(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    pieces: &[Vec<Piece>],
    extra: impl Fn(&DVector<f64>) -> f64,
) -> DVector<f64> {
    let p = b.len();
    let counts: Vec<usize> = pieces.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mut code in 0..total {
        let choice: Vec<Piece> = (0..p)
            .map(|j| {
                let c = code % counts[j];
                code /= counts[j];
                pieces[j][c]
            })
            .collect();
        let mut beta = DVector::zeros(p);
        let free: Vec<usize> = (0..p)
            .filter(|&j| matches!(choice[j], Piece::Free { .. }))
            .collect();
        for j in 0..p {
            if let Piece::Fixed(v) = choice[j] {
                beta[j] = v;
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let m = DMatrix::from_fn(k, k, |a, c| h[(free[a], free[c])]);
            let hb = h * &beta;
            let rhs = DVector::from_fn(k, |a, _| {
                let j = free[a];
                let slope = match choice[j] {
                    Piece::Free { slope, .. } => slope,
                    Piece::Fixed(_) => unreachable!(),
                };
                b[j] - hb[j] - slope
            });
            let Some(s) = m.lu().solve(&rhs) else {
                continue;
            };
            for (a, &j) in free.iter().enumerate() {
                beta[j] = s[a];
            }
        }
        let feasible = (0..p).all(|j| match choice[j] {
            Piece::Free { lo, hi, .. } => beta[j] >= lo && beta[j] <= hi,
            Piece::Fixed(_) => true,
        });
        if !feasible {
            continue;
        }
        let obj = 0.5 * beta.dot(&(h * &beta)) - b.dot(&beta) + extra(&beta);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, beta));
        }
    }
    best.expect("at least one feasible pattern").1
}

fn abs_pieces(c: f64) -> Vec<Piece> {
    vec![
        Piece::Fixed(0.0),
        Piece::Free {
            slope: c,
            lo: 0.0,
            hi: f64::INFINITY,
        },
        Piece::Free {
            slope: -c,
            lo: f64::NEG_INFINITY,
            hi: 0.0,
        },
    ]
}

/// Reference prox for the separable penalties and the Ridge.
pub fn prox_oracle(f: &Penalty, lambda: f64, w: &SymMatrix, x: &DVector<f64>) -> DVector<f64> {
    let p = x.len();
    let wm = w.as_matrix();
    let b = wm * x;
    match f {
        Penalty::Ridge => (wm + DMatrix::identity(p, p) * lambda)
            .lu()
            .solve(&b)
            .unwrap(),
        Penalty::Lasso => {
            let pieces = vec![abs_pieces(lambda); p];
            enumerate_qp(wm, &b, &pieces, |beta| lambda * beta.abs().sum())
        }
        Penalty::AdaptiveLasso { weights } => {
            let pieces: Vec<_> = weights.iter().map(|c| abs_pieces(lambda * c)).collect();
            enumerate_qp(wm, &b, &pieces, |beta| {
                lambda
                    * beta
                        .iter()
                        .zip(weights)
                        .map(|(v, c)| c * v.abs())
                        .sum::<f64>()
            })
        }
        Penalty::ElasticNet { w: mix } => {
            let h = wm + DMatrix::identity(p, p) * (lambda * (1.0 - mix));
            let pieces = vec![abs_pieces(lambda * mix); p];
            enumerate_qp(&h, &b, &pieces, |beta| lambda * mix * beta.abs().sum())
        }
        Penalty::BoxIndicator { lower, upper } => {
            let pieces: Vec<_> = (0..p)
                .map(|j| {
                    let mut v = vec![Piece::Free {
                        slope: 0.0,
                        lo: lower[j],
                        hi: upper[j],
                    }];
                    if lower[j].is_finite() {
                        v.push(Piece::Fixed(lower[j]));
                    }
                    if upper[j].is_finite() {
                        v.push(Piece::Fixed(upper[j]));
                    }
                    v
                })
                .collect();
            enumerate_qp(wm, &b, &pieces, |_| 0.0)
        }
        Penalty::GroupLasso { .. } => {
            let theta = dual_projection_oracle(f, lambda, w, x);
            x - theta
        }
    }
}

/// `W`-projection of `x` onto the dual set of a sublinear penalty, solved in
/// the coordinates `u = Wθ`: `min ½(u − Wx)'W⁻¹(u − Wx)` over the product of
/// intervals (Lasso, Adaptive Lasso) or balls (Group Lasso).
pub fn dual_projection_oracle(
    f: &Penalty,
    lambda: f64,
    w: &SymMatrix,
    x: &DVector<f64>,
) -> DVector<f64> {
    let p = x.len();
    let wm = w.as_matrix();
    let winv = wm.clone().try_inverse().expect("invertible weight");
    let target = wm * x;
    let u = match f {
        Penalty::Lasso | Penalty::AdaptiveLasso { .. } => {
            let bounds: Vec<f64> = match f {
                Penalty::Lasso => vec![lambda; p],
                Penalty::AdaptiveLasso { weights } => weights.iter().map(|c| lambda * c).collect(),
                _ => unreachable!(),
            };
            let pieces: Vec<_> = bounds
                .iter()
                .map(|&c| {
                    let mut v = vec![Piece::Free {
                        slope: 0.0,
                        lo: -c,
                        hi: c,
                    }];
                    if c.is_finite() {
                        v.push(Piece::Fixed(c));
                        v.push(Piece::Fixed(-c));
                    }
                    v
                })
                .collect();
            enumerate_qp(&winv, &(&winv * &target), &pieces, |_| 0.0)
        }
        Penalty::GroupLasso { groups } => ball_projected_gradient(&winv, &target, groups, lambda),
        other => panic!("{} is not sublinear", other.kind_name()),
    };
    winv * u
}

fn project_balls(u: &mut DVector<f64>, groups: &[Vec<usize>], radius: f64) {
    for g in groups {
        let norm = g.iter().map(|&j| u[j] * u[j]).sum::<f64>().sqrt();
        if norm > radius {
            for &j in g {
                u[j] *= radius / norm;
            }
        }
    }
}

fn ball_projected_gradient(
    h: &DMatrix<f64>,
    target: &DVector<f64>,
    groups: &[Vec<usize>],
    radius: f64,
) -> DVector<f64> {
    let eig = h.clone().symmetric_eigen();
    let lip = eig.eigenvalues.max();
    let step = 1.0 / lip;
    let grad = |u: &DVector<f64>| h * (u - target);
    // gradient mapping; zero exactly at the constrained minimizer
    let mapping = |u: &DVector<f64>| {
        let mut z = u - grad(u) * step;
        project_balls(&mut z, groups, radius);
        (u - z) / step
    };
    let mut u = target.clone();
    project_balls(&mut u, groups, radius);
    let mut y = u.clone();
    let mut t = 1.0_f64;
    let tol = 1e-12 * (1.0 + target.amax());
    for _ in 0..2_000_000 {
        if mapping(&u).amax() <= tol {
            break;
        }
        let mut next = &y - grad(&y) * step;
        project_balls(&mut next, groups, radius);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if (&y - &next).dot(&(&next - &u)) > 0.0 {
            y = next.clone();
            t = 1.0;
        } else {
            y = &next + (&next - &u) * ((t - 1.0) / t_next);
            t = t_next;
        }
        u = next;
    }
    u
}

pub fn weight(w: &SymMatrix) -> WeightMatrix {
    WeightMatrix::new(w.clone()).expect("positive definite")
}

/// Conjugate-set constraint violation of `θ` for a sublinear penalty.
pub fn dual_violation(f: &Penalty, lambda: f64, w: &SymMatrix, theta: &DVector<f64>) -> f64 {
    let u = w.as_matrix() * theta;
    match f {
        Penalty::Lasso => u
            .iter()
            .map(|v| (v.abs() - lambda).max(0.0))
            .fold(0.0, f64::max),
        Penalty::AdaptiveLasso { weights } => u
            .iter()
            .zip(weights)
            .map(|(v, c)| (v.abs() - lambda * c).max(0.0))
            .fold(0.0, f64::max),
        Penalty::GroupLasso { groups } => groups
            .iter()
            .map(|g| (g.iter().map(|&j| u[j] * u[j]).sum::<f64>().sqrt() - lambda).max(0.0))
            .fold(0.0, f64::max),
        other => panic!("{} is not sublinear", other.kind_name()),
    }
}
