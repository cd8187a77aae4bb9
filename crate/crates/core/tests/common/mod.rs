#![allow(dead_code)]

use bfgp::kernels::{Dataset, Hyperparams};
use bfgp::lab::gp_prior_dataset;
use bfgp::numerics::{stream_rng, GpRng};
use rand::Rng;

pub fn rng(seed: u64) -> GpRng {
    stream_rng(seed, 0x7E57)
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// GP-prior instance with inputs uniform on the unit cube.
pub fn instance(n: usize, d: usize, theta: &Hyperparams, seed: u64) -> Dataset {
    gp_prior_dataset(n, d, theta, &mut rng(seed)).expect("prior sample")
}

/// Random hyperparameters with one lengthscale per dimension (`ard`) or a
/// shared one.
pub fn random_theta(rng: &mut impl Rng, d: usize, ard: bool, noise: (f64, f64)) -> Hyperparams {
    let o = log_uniform(rng, 0.5, 2.0);
    let ls = if ard {
        (0..d).map(|_| log_uniform(rng, 0.2, 1.0)).collect()
    } else {
        vec![log_uniform(rng, 0.2, 1.0)]
    };
    let s = log_uniform(rng, noise.0, noise.1);
    Hyperparams::new(o, ls, s).expect("positive draws")
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Central differences of `f` in each raw coordinate with relative step `h`.
pub fn central_fd(theta: &Hyperparams, h: f64, f: impl Fn(&Hyperparams) -> f64) -> Vec<f64> {
    let base = theta.to_vec();
    (0..base.len())
        .map(|i| {
            let step = h * base[i];
            let mut up = base.clone();
            let mut dn = base.clone();
            up[i] += step;
            dn[i] -= step;
            let fu = f(&Hyperparams::from_slice(&up).unwrap());
            let fd = f(&Hyperparams::from_slice(&dn).unwrap());
            (fu - fd) / (2.0 * step)
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a row-major copy of `a`.
/// Returns the solution of `a x = b` and `log|det a|`.
pub fn gauss(a: &bfgp::numerics::DenseMatrix, b: &[f64]) -> (Vec<f64>, f64) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut x = b.to_vec();
    let mut logdet = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        x.swap(c, p);
        let piv = m[c][c];
        logdet += piv.abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / piv;
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c][c];
    }
    (x, logdet)
}

/// Random symmetric positive definite matrix with eigenvalues bounded below
/// by `shift`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> bfgp::numerics::DenseMatrix {
    let b = bfgp::numerics::DenseMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let mut a = b.gram();
    a.add_diag(shift);
    a
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &bfgp::numerics::DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}
