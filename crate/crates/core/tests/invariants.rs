mod support;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proxkit::linalg::{eig_sym, max_abs, pinv, range_projector};
use proxkit::prox::{conjugate_prox, plse_solve, prox};
use proxkit::{Penalty, ProxOptions, SymMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

fn opts() -> ProxOptions {
    ProxOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penrose_conditions(seed in any::<u64>(), p in 1usize..=10, r_frac in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = (r_frac * p as f64).round() as usize;
        let a = random_psd_rank(&mut rng, p, r);
        let ap = pinv(&a, 1e-10).unwrap();
        let (a, ap) = (a.as_matrix(), ap.as_matrix());
        prop_assert!(max_abs(&(a * ap * a - a)) < 1e-9);
        prop_assert!(max_abs(&(ap * a * ap - ap)) < 1e-9);
        let aap = a * ap;
        prop_assert!(max_abs(&(&aap - aap.transpose())) < 1e-9);
        prop_assert_eq!(eig_sym(&SymMatrix::symmetrize(a.clone())).unwrap().rank(1e-10), r);
    }

    #[test]
    fn eigen_reconstruction(seed in any::<u64>(), p in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian_matrix(&mut rng, p, p);
        let a = SymMatrix::symmetrize(&g + g.transpose());
        let d = eig_sym(&a).unwrap();
        let v = &d.eigenvectors;
        let back = v * DMatrix::from_diagonal(&d.eigenvalues) * v.transpose();
        prop_assert!(max_abs(&(back - a.as_matrix())) < 1e-10 * (1.0 + max_abs(a.as_matrix())));
        prop_assert!(max_abs(&(v.transpose() * v - DMatrix::identity(p, p))) < 1e-12);
        for k in 1..p {
            prop_assert!(d.eigenvalues[k - 1] >= d.eigenvalues[k]);
        }
    }

    #[test]
    fn range_projector_is_idempotent(seed in any::<u64>(), p in 1usize..=8, r in 0usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_psd_rank(&mut rng, p, r.min(p));
        let pr = range_projector(&a, 1e-10).unwrap();
        let m = pr.as_matrix();
        prop_assert!(max_abs(&(m * m - m)) < 1e-12);
        prop_assert!(max_abs(&(m * a.as_matrix() - a.as_matrix())) < 1e-10);
    }

    #[test]
    fn prox_matches_oracle_and_moreau(seed in any::<u64>(), kind in 0usize..6, p in 1usize..=4,
                                      log_lambda in -3.0f64..1.0, log_cond in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_penalty(&mut rng, kind, p);
        let lambda = 10f64.powf(log_lambda);
        let w = random_pd(&mut rng, p, 10f64.powf(log_cond));
        let x = gaussian_vector(&mut rng, p, 3.0);
        let wm = weight(&w);
        let r = prox(&f, lambda, &wm, &x, &opts()).unwrap();
        let theta = conjugate_prox(&f, lambda, &wm, &x, &opts()).unwrap();
        for j in 0..p {
            let ulp = f64::EPSILON * x[j].abs().max(r.point[j].abs());
            prop_assert!((r.point[j] + theta[j] - x[j]).abs() <= ulp);
        }
        let oracle = prox_oracle(&f, lambda, &w, &x);
        prop_assert!((&r.point - &oracle).amax() < 1e-7, "prox {} vs oracle {}", r.point, oracle);
        if f.is_sublinear() {
            prop_assert!(dual_violation(&f, lambda, &w, &theta) < 1e-9);
            let dual = dual_projection_oracle(&f, lambda, &w, &x);
            prop_assert!((&theta - &dual).amax() < 1e-7);
        }
    }

    #[test]
    fn prox_is_nonexpansive_in_w_norm(seed in any::<u64>(), kind in 0usize..6, p in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_penalty(&mut rng, kind, p);
        let w = weight(&random_pd(&mut rng, p, 100.0));
        let x1 = gaussian_vector(&mut rng, p, 2.0);
        let x2 = gaussian_vector(&mut rng, p, 2.0);
        let a = prox(&f, 0.7, &w, &x1, &opts()).unwrap().point;
        let b = prox(&f, 0.7, &w, &x2, &opts()).unwrap().point;
        // firm nonexpansiveness: ‖Pa − Pb‖²_W ≤ ⟨Pa − Pb, x1 − x2⟩_W
        let lhs = w.norm_squared(&(&a - &b));
        let rhs = w.inner(&(&a - &b), &(&x1 - &x2));
        prop_assert!(lhs <= rhs + 1e-8 * (1.0 + rhs.abs()));
    }

    #[test]
    fn plse_equals_prox_of_ridgeless(seed in any::<u64>(), adaptive in any::<bool>(), lambda in 0.01f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (40, 5);
        let x = gaussian_matrix(&mut rng, n, p);
        let beta0 = DVector::from_vec(vec![2.0, -1.0, 0.0, 0.0, 0.5]);
        let y = &x * &beta0 + gaussian_vector(&mut rng, n, 1.0);
        let q = SymMatrix::symmetrize(x.transpose() * &x / n as f64);
        let rl = q.as_matrix().clone().cholesky().unwrap().solve(&(x.transpose() * &y / n as f64));
        let f = if adaptive { Penalty::adaptive_from(&rl) } else { Penalty::Lasso };
        let direct = plse_solve(&x, &y, &f, lambda, &opts()).unwrap().point;
        let via_prox = prox(&f, lambda, &weight(&q), &rl, &opts()).unwrap().point;
        prop_assert!((direct - via_prox).amax() < 1e-6);
    }

    #[test]
    fn elastic_net_is_a_reweighted_lasso(seed in any::<u64>(), p in 1usize..=5, lambda in 0.01f64..3.0, mix in 0.01f64..0.99) {
        // ½‖x−β‖²_W + λ(w‖β‖₁ + ½(1−w)‖β‖²) = ½‖x'−β‖²_{W'} + λw‖β‖₁ + const
        // with W' = W + λ(1−w)I and x' = W'⁻¹Wx
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_pd(&mut rng, p, 50.0);
        let x = gaussian_vector(&mut rng, p, 2.0);
        let en = prox(&Penalty::ElasticNet { w: mix }, lambda, &weight(&w), &x, &opts()).unwrap().point;
        let w2 = w.add(&SymMatrix::identity(p).scale(lambda * (1.0 - mix)));
        let x2 = w2.as_matrix().clone().cholesky().unwrap().solve(&(w.as_matrix() * &x));
        let lasso = prox(&Penalty::Lasso, lambda * mix, &weight(&w2), &x2, &opts()).unwrap().point;
        prop_assert!((en - lasso).amax() < 1e-8);
    }
}

#[test]
fn group_lasso_diagonal_closed_form_matches_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = Penalty::GroupLasso {
        groups: vec![vec![0, 1], vec![2]],
    };
    let w = SymMatrix::from_diagonal(&[2.0, 2.0, 0.5]);
    for _ in 0..50 {
        let x = gaussian_vector(&mut rng, 3, 2.0);
        let theta = conjugate_prox(&f, 0.8, &weight(&w), &x, &opts()).unwrap();
        let oracle = dual_projection_oracle(&f, 0.8, &w, &x);
        assert!((theta - oracle).amax() < 1e-9);
    }
}
