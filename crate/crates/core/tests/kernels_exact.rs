mod common;

use bfgp::exact_gp::{grad_exact, mll_exact, posterior_predict};
use bfgp::kernels::{cross_kernel, kernel_grad, kernel_matrix, rbf, Dataset, Hyperparams};
use bfgp::numerics::{cholesky_factor, DenseMatrix};
use common::{central_fd, gauss, instance, random_theta, rel_err, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn uniform_inputs(r: &mut impl Rng, n: usize, d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, d, |_, _| r.random::<f64>())
}

#[test]
fn noisy_kernel_is_positive_definite_without_jitter() {
    let mut r = rng(10);
    for (t, n) in [10, 50, 120, 300].into_iter().enumerate() {
        let d = 1 + t % 3;
        let theta = random_theta(&mut r, d, t % 2 == 0, (1e-3, 0.5));
        let x = uniform_inputs(&mut r, n, d);
        let k = kernel_matrix(&x, &theta, true).unwrap();
        assert!(cholesky_factor(&k, 0.0).is_ok(), "n = {n}");
    }
}

#[test]
fn kernel_is_exactly_symmetric() {
    let mut r = rng(11);
    let theta = random_theta(&mut r, 3, true, (0.01, 0.1));
    let x = uniform_inputs(&mut r, 80, 3);
    let k = kernel_matrix(&x, &theta, true).unwrap();
    assert_eq!(k.sub(&k.transpose()).unwrap().max_abs(), 0.0);
}

#[test]
fn kernel_entries_match_closed_form() {
    let theta = Hyperparams::new(2.0, vec![0.5, 2.0], 0.1).unwrap();
    let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
    let k = kernel_matrix(&x, &theta, false).unwrap();
    let expected = 2.0 * (-0.5 * (4.0 + 1.0_f64)).exp();
    assert!((k[(0, 1)] - expected).abs() < 1e-15);
    assert!((rbf(x.row(0), x.row(1), &theta) - expected).abs() < 1e-15);
}

#[test]
fn kernel_gradients_match_finite_differences() {
    let mut r = rng(12);
    let h = 1e-6;
    for t in 0..20 {
        let d = 1 + t % 3;
        let theta = random_theta(&mut r, d, t % 2 == 1, (0.01, 1.0));
        let x = uniform_inputs(&mut r, 15, d);
        let base = theta.to_vec();
        for i in 0..theta.num_params() {
            let analytic = kernel_grad(&x, &theta, theta.param_id(i).unwrap()).unwrap();
            let step = h * base[i];
            let mut up = base.clone();
            let mut dn = base.clone();
            up[i] += step;
            dn[i] -= step;
            let ku = kernel_matrix(&x, &Hyperparams::from_slice(&up).unwrap(), true).unwrap();
            let kd = kernel_matrix(&x, &Hyperparams::from_slice(&dn).unwrap(), true).unwrap();
            let mut fd = ku.sub(&kd).unwrap();
            fd.scale(1.0 / (2.0 * step));
            let err = analytic.sub(&fd).unwrap().frobenius_norm() / analytic.frobenius_norm().max(1e-300);
            assert!(err <= 1e-5, "instance {t}, param {}: {err}", theta.param_name(i));
        }
    }
}

#[test]
fn longer_lengthscale_never_decreases_covariance() {
    let mut r = rng(13);
    let x = uniform_inputs(&mut r, 30, 2);
    let short = Hyperparams::new(1.3, vec![0.2, 0.5], 0.1).unwrap();
    for grow in [vec![0.3, 0.5], vec![0.2, 0.9], vec![1.0, 1.0]] {
        let long = Hyperparams::new(1.3, grow, 0.1).unwrap();
        let ks = kernel_matrix(&x, &short, false).unwrap();
        let kl = kernel_matrix(&x, &long, false).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                if i != j {
                    assert!(kl[(i, j)] >= ks[(i, j)]);
                }
            }
        }
    }
}

#[test]
fn exact_terms_match_elimination_oracle() {
    let mut r = rng(14);
    for t in 0..5 {
        let theta = random_theta(&mut r, 2, true, (0.01, 0.3));
        let data = instance(60 + 20 * t, 2, &theta, 1400 + t as u64);
        let k = kernel_matrix(&data.x, &theta, true).unwrap();
        let (x, logdet) = gauss(&k, &data.y);
        let invquad: f64 = x.iter().zip(&data.y).map(|(a, b)| a * b).sum();
        let terms = mll_exact(&data, &theta).unwrap();
        assert!(rel_err(terms.logdet, logdet) < 1e-9);
        assert!(rel_err(terms.invquad, invquad) < 1e-9);
        let n = data.len() as f64;
        let total = 0.5 * (logdet + invquad + n * (2.0 * std::f64::consts::PI).ln());
        assert!(rel_err(terms.total_nll, total) < 1e-9);
    }
}

#[test]
fn exact_gradient_matches_finite_differences() {
    let mut r = rng(15);
    for t in 0..20 {
        let d = 1 + t % 2;
        let theta = random_theta(&mut r, d, true, (0.02, 0.5));
        let data = instance(25, d, &theta, 1500 + t as u64);
        let theta = Hyperparams::from_slice(&theta.to_vec().iter().map(|v| v * 1.7).collect::<Vec<_>>()).unwrap();
        let g = grad_exact(&data, &theta).unwrap();
        let fd = central_fd(&theta, 1e-5, |th| mll_exact(&data, th).unwrap().total_nll);
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel_err(*a, *b) <= 1e-5, "instance {t}: {a} vs {b}");
        }
    }
}

#[test]
fn posterior_matches_elimination_oracle() {
    let mut r = rng(16);
    let theta = Hyperparams::isotropic(1.5, 0.3, 0.05).unwrap();
    let data = instance(40, 1, &theta, 16);
    let x_star = uniform_inputs(&mut r, 7, 1);
    let post = posterior_predict(&data, &theta, &x_star).unwrap();
    let k = kernel_matrix(&data.x, &theta, true).unwrap();
    let ks = cross_kernel(&x_star, &data.x, &theta).unwrap();
    let (alpha, _) = gauss(&k, &data.y);
    for i in 0..7 {
        let mean: f64 = ks.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let (v, _) = gauss(&k, ks.row(i));
        let reduction: f64 = ks.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
        let var = theta.outputscale_sq - reduction + theta.noise_sq;
        assert!((post.mean[i] - mean).abs() < 1e-8 * mean.abs().max(1.0));
        assert!((post.variance[i] - var).abs() < 1e-8);
    }
}

#[test]
fn gradient_vanishes_at_a_located_optimum() {
    // Golden-section search over the log noise variance alone.
    let truth = Hyperparams::isotropic(1.0, 0.3, 0.05).unwrap();
    let data = instance(40, 1, &truth, 17);
    let nll = |s: f64| mll_exact(&data, &Hyperparams::isotropic(1.0, 0.3, s).unwrap()).unwrap().total_nll;
    let (mut a, mut b) = (1e-3f64.ln(), 1f64.ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if nll(c.exp()) < nll(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    // Newton on finite differences of the objective sharpens the bracket.
    let mut u = 0.5 * (a + b);
    let h = 1e-4;
    for _ in 0..5 {
        let (fp, f0, fm) = (nll((u + h).exp()), nll(u.exp()), nll((u - h).exp()));
        u -= ((fp - fm) / (2.0 * h)) / ((fp - 2.0 * f0 + fm) / (h * h));
    }
    let s = u.exp();
    let grad = grad_exact(&data, &Hyperparams::isotropic(1.0, 0.3, s).unwrap()).unwrap();
    assert!(s > 1e-3 && s < 1.0);
    assert!(grad[2].abs() <= 1e-6, "{}", grad[2]);
}

fn permuted(data: &Dataset, order: &[usize]) -> Dataset {
    Dataset::new(data.x.select_rows(order), order.iter().map(|&i| data.y[i]).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nll_is_permutation_invariant(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let theta = random_theta(&mut r, 2, true, (0.01, 0.5));
        let data = instance(30, 2, &theta, seed);
        let mut order: Vec<usize> = (0..30).collect();
        order.shuffle(&mut r);
        let a = mll_exact(&data, &theta).unwrap().total_nll;
        let b = mll_exact(&permuted(&data, &order), &theta).unwrap().total_nll;
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn scaling_targets_scales_only_invquad(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let theta = random_theta(&mut r, 1, false, (0.01, 0.5));
        let data = instance(25, 1, &theta, seed);
        let scaled = Dataset::new(data.x.clone(), data.y.iter().map(|v| c * v).collect()).unwrap();
        let a = mll_exact(&data, &theta).unwrap();
        let b = mll_exact(&scaled, &theta).unwrap();
        prop_assert_eq!(a.logdet, b.logdet);
        prop_assert!(rel_err(b.invquad, c * c * a.invquad) <= 1e-12);
    }

    #[test]
    fn posterior_variance_bounded_by_prior(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let theta = random_theta(&mut r, 2, true, (0.001, 0.5));
        let data = instance(30, 2, &theta, seed);
        let x_star = DenseMatrix::from_fn(10, 2, |_, _| r.random::<f64>() * 3.0 - 1.0);
        let post = posterior_predict(&data, &theta, &x_star).unwrap();
        let prior = theta.outputscale_sq + theta.noise_sq;
        prop_assert!(post.variance.iter().all(|v| *v <= prior + 1e-10 && *v >= theta.noise_sq - 1e-10));
    }
}
