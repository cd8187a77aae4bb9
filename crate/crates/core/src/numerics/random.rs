//! Seeded random streams and Hutchinson probe vectors.
//!
//! Every random draw in the crate goes through [`stream_rng`]: a ChaCha8
//! generator keyed by `(seed, stream)`. Parallel replicas use distinct
//! stream ids so their draws are independent and reproducible regardless
//! of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type GpRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> GpRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a parent stream id and a child index into a new stream id.
pub fn child_stream(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Runs `count` independent replicas in parallel; replica `i` gets the
/// stream `child_stream(stream, i)` of `seed`. Results are in replica order.
pub fn par_replicas<T, F>(count: usize, seed: u64, stream: u64, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut GpRng) -> crate::Result<T> + Sync,
{
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, child_stream(stream, i as u64));
            f(i, &mut rng)
        })
        .collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn standard_normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    #[default]
    Rademacher,
    Gaussian,
    /// `√n eₖ` for coordinates `k` drawn without replacement (cycling once
    /// all `n` are used). `t = n` gives the exact trace.
    Basis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<Vec<f64>>,
    pub kind: ProbeKind,
    pub seed: u64,
}

impl ProbeSet {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.probes.first().map_or(0, Vec::len)
    }

    /// Draws probes from an existing stream.
    pub fn draw(rng: &mut impl Rng, n: usize, t: usize, kind: ProbeKind) -> Vec<Vec<f64>> {
        if kind == ProbeKind::Basis {
            return basis_probes(rng, n, t);
        }
        (0..t)
            .map(|_| match kind {
                ProbeKind::Rademacher => {
                    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
                }
                ProbeKind::Gaussian => standard_normal_vec(rng, n),
                ProbeKind::Basis => unreachable!("handled above"),
            })
            .collect()
    }
}

fn basis_probes(rng: &mut impl Rng, n: usize, t: usize) -> Vec<Vec<f64>> {
    let scale = (n as f64).sqrt();
    let mut out = Vec::with_capacity(t);
    while out.len() < t && n > 0 {
        let take = (t - out.len()).min(n);
        for k in rand::seq::index::sample(rng, n, take) {
            let mut z = vec![0.0; n];
            z[k] = scale;
            out.push(z);
        }
    }
    out
}

/// `t` probes of length `n`, reproducible from `seed`.
pub fn sample_probes(n: usize, t: usize, kind: ProbeKind, seed: u64) -> ProbeSet {
    let mut rng = stream_rng(seed, 0x9_0BE5);
    ProbeSet { probes: ProbeSet::draw(&mut rng, n, t, kind), kind, seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_norm_is_exact() {
        let p = sample_probes(17, 20, ProbeKind::Rademacher, 3);
        for z in &p.probes {
            assert_eq!(z.iter().map(|v| v * v).sum::<f64>(), 17.0);
            assert!(z.iter().all(|&v| v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn full_basis_set_covers_every_coordinate() {
        let n = 9;
        let p = sample_probes(n, n, ProbeKind::Basis, 4);
        let mut diag_sum = vec![0.0; n];
        for z in &p.probes {
            assert_eq!(z.iter().filter(|v| **v != 0.0).count(), 1);
            for (d, v) in diag_sum.iter_mut().zip(z) {
                *d += v * v;
            }
        }
        assert!(diag_sum.iter().all(|d| (d - n as f64).abs() < 1e-12));
    }

    #[test]
    fn seeding_is_deterministic() {
        let a = sample_probes(8, 4, ProbeKind::Gaussian, 11);
        let b = sample_probes(8, 4, ProbeKind::Gaussian, 11);
        assert_eq!(a, b);
        let c = sample_probes(8, 4, ProbeKind::Gaussian, 12);
        assert_ne!(a.probes, c.probes);
    }

    #[test]
    fn streams_differ() {
        let a: f64 = stream_rng(1, 0).random();
        let b: f64 = stream_rng(1, 1).random();
        assert_ne!(a, b);
        assert_ne!(child_stream(5, 0), child_stream(5, 1));
    }

    #[test]
    fn gaussian_outer_product_approaches_identity() {
        let n = 4;
        let p = sample_probes(n, 5000, ProbeKind::Gaussian, 2024);
        for i in 0..n {
            for j in 0..n {
                let m: f64 =
                    p.probes.iter().map(|z| z[i] * z[j]).sum::<f64>() / p.len() as f64;
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((m - target).abs() < 0.1, "entry ({i},{j}) = {m}");
            }
        }
    }
}
