//! Finite-support truncation distributions and the Russian Roulette and
//! Single Sample combiners over abstract series.
//!
//! A series `ψ = Σⱼ Δⱼ` (j = 1..H) is exposed through [`SeriesSupplier`].
//! Given a sampled truncation `J`:
//!
//! ```text
//! Russian Roulette:  Σ_{j ≤ J} Δⱼ / P(𝒥 ≥ j)
//! Single Sample:     Δ_J / P(𝒥 = J)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::numerics::axpy;

/// Distribution over `{support_min, …, support_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationDistribution {
    support_min: usize,
    support_max: usize,
    /// `pmf[i] = P(𝒥 = support_min + i)`
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    /// `survival[i] = P(𝒥 ≥ support_min + i)`
    survival: Vec<f64>,
}

/// Declarative form of a truncation distribution, used in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", deny_unknown_fields)]
pub enum TruncationSpec {
    Exponential { lambda: f64, min: usize, max: Option<usize> },
    Harmonic { min: usize, max: Option<usize> },
    Uniform { min: usize, max: Option<usize> },
    PointMass { at: Option<usize> },
}

impl TruncationSpec {
    /// Builds the distribution; a missing upper end defaults to `default_max`.
    pub fn build(&self, default_max: usize) -> Result<TruncationDistribution> {
        match *self {
            Self::Exponential { lambda, min, max } => make_exponential(lambda, min, max.unwrap_or(default_max)),
            Self::Harmonic { min, max } => make_harmonic(min, max.unwrap_or(default_max)),
            Self::Uniform { min, max } => TruncationDistribution::uniform(min, max.unwrap_or(default_max)),
            Self::PointMass { at } => TruncationDistribution::point_mass(at.unwrap_or(default_max)),
        }
    }
}

impl TruncationDistribution {
    /// Normalizes nonnegative `weights[i]` for `j = support_min + i`.
    pub fn from_weights(support_min: usize, weights: Vec<f64>) -> Result<Self> {
        if support_min == 0 || weights.is_empty() {
            return Err(GpError::EmptySupport { min: support_min, max: support_min + weights.len() });
        }
        let support_max = support_min + weights.len() - 1;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GpError::InvalidConfig("truncation weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(GpError::InvalidConfig("truncation weights sum to zero".into()));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        let mut survival = vec![0.0; pmf.len()];
        let mut tail = 0.0;
        for i in (0..pmf.len()).rev() {
            tail += pmf[i];
            survival[i] = tail;
        }
        survival[0] = 1.0;
        Ok(Self { support_min, support_max, pmf, cdf, survival })
    }

    pub fn uniform(support_min: usize, support_max: usize) -> Result<Self> {
        check_support(support_min, support_max)?;
        Self::from_weights(support_min, vec![1.0; support_max - support_min + 1])
    }

    pub fn point_mass(at: usize) -> Result<Self> {
        Self::uniform(at, at)
    }

    pub fn support_min(&self) -> usize {
        self.support_min
    }

    pub fn support_max(&self) -> usize {
        self.support_max
    }

    pub fn support(&self) -> std::ops::RangeInclusive<usize> {
        self.support_min..=self.support_max
    }

    pub fn contains(&self, j: usize) -> bool {
        self.support().contains(&j)
    }

    /// `P(𝒥 = j)`, zero outside the support.
    pub fn pmf(&self, j: usize) -> f64 {
        if self.contains(j) {
            self.pmf[j - self.support_min]
        } else {
            0.0
        }
    }

    /// `P(𝒥 ≤ j)`.
    pub fn cdf(&self, j: usize) -> f64 {
        if j < self.support_min {
            0.0
        } else if j >= self.support_max {
            1.0
        } else {
            self.cdf[j - self.support_min]
        }
    }

    /// `P(𝒥 ≥ j)`, exactly 1 for `j ≤ support_min`.
    pub fn survival(&self, j: usize) -> f64 {
        if j <= self.support_min {
            1.0
        } else if j > self.support_max {
            0.0
        } else {
            self.survival[j - self.support_min]
        }
    }

    pub fn pmf_values(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.support().zip(&self.pmf).map(|(j, p)| j as f64 * p).sum()
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        self.support()
            .zip(&self.pmf)
            .map(|(j, p)| p * (j as f64 - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.support_min + idx.min(self.pmf.len() - 1)
    }
}

fn check_support(support_min: usize, support_max: usize) -> Result<()> {
    if support_min == 0 || support_min > support_max {
        return Err(GpError::EmptySupport { min: support_min, max: support_max });
    }
    Ok(())
}

/// `pmf(j) ∝ e^{−λ j}` on `{j_min, …, h}`.
pub fn make_exponential(lambda: f64, j_min: usize, h: usize) -> Result<TruncationDistribution> {
    check_support(j_min, h)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(GpError::InvalidConfig(format!("exponential rate must be nonnegative, got {lambda}")));
    }
    let weights = (j_min..=h).map(|j| (-lambda * (j - j_min) as f64).exp()).collect();
    TruncationDistribution::from_weights(j_min, weights)
}

/// Exponential family on `{j_min, …, h}` whose rate is tuned by bisection
/// so that the mean is `target_mean`.
pub fn exponential_with_mean(target_mean: f64, j_min: usize, h: usize) -> Result<TruncationDistribution> {
    check_support(j_min, h)?;
    let uniform_mean = (j_min + h) as f64 / 2.0;
    if !(target_mean >= j_min as f64 && target_mean <= uniform_mean) {
        return Err(GpError::InvalidConfig(format!(
            "mean {target_mean} not reachable on {{{j_min}..{h}}} with a decaying exponential"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while make_exponential(hi, j_min, h)?.mean() > target_mean {
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if make_exponential(mid, j_min, h)?.mean() > target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    make_exponential(0.5 * (lo + hi), j_min, h)
}

/// `pmf(j) ∝ 1/j` on `{j_min, …, h}`.
pub fn make_harmonic(j_min: usize, h: usize) -> Result<TruncationDistribution> {
    check_support(j_min, h)?;
    TruncationDistribution::from_weights(j_min, (j_min..=h).map(|j| 1.0 / j as f64).collect())
}

pub fn sample_truncation(dist: &TruncationDistribution, rng: &mut impl Rng) -> usize {
    dist.sample(rng)
}

/// Values a series may take: scalars or vectors combined elementwise.
pub trait SeriesValue: Clone {
    fn add_scaled(&mut self, other: &Self, weight: f64);
    fn scaled(&self, weight: f64) -> Self;
}

impl SeriesValue for f64 {
    fn add_scaled(&mut self, other: &Self, weight: f64) {
        *self += weight * other;
    }

    fn scaled(&self, weight: f64) -> Self {
        weight * self
    }
}

impl SeriesValue for Vec<f64> {
    fn add_scaled(&mut self, other: &Self, weight: f64) {
        axpy(weight, other, self);
    }

    fn scaled(&self, weight: f64) -> Self {
        self.iter().map(|v| weight * v).collect()
    }
}

/// Outcome of asking a supplier for its next term.
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesStep<T> {
    Term(T),
    /// Every remaining term is exactly zero.
    Converged,
    /// The supplier has no further terms.
    Exhausted,
}

/// Produces `Δ₁, Δ₂, …` in order.
pub trait SeriesSupplier {
    type Value: SeriesValue;

    fn next_term(&mut self) -> Result<SeriesStep<Self::Value>>;

    /// The additive identity with the right shape.
    fn zero(&self) -> Self::Value;

    /// Terms produced so far.
    fn consumed(&self) -> usize;

    /// Skips ahead and returns `Δ_j`. Suppliers that can compute a single
    /// term directly should override this.
    fn term_at(&mut self, j: usize) -> Result<Self::Value> {
        if j <= self.consumed() {
            return Err(GpError::InvalidConfig(format!("term {j} already consumed")));
        }
        loop {
            let step = self.next_term()?;
            let at = self.consumed();
            match step {
                SeriesStep::Term(d) if at == j => return Ok(d),
                SeriesStep::Term(_) => {}
                SeriesStep::Converged => return Ok(self.zero()),
                SeriesStep::Exhausted => return Err(GpError::SupplierExhausted { consumed: at }),
            }
        }
    }
}

/// Deterministic supplier over a fixed list of terms.
#[derive(Debug, Clone)]
pub struct SliceSeries<T> {
    terms: Vec<T>,
    zero: T,
    pos: usize,
}

impl<T: SeriesValue> SliceSeries<T> {
    pub fn new(terms: Vec<T>, zero: T) -> Self {
        Self { terms, zero, pos: 0 }
    }
}

impl SliceSeries<f64> {
    pub fn scalars(terms: &[f64]) -> Self {
        Self::new(terms.to_vec(), 0.0)
    }
}

impl<T: SeriesValue> SeriesSupplier for SliceSeries<T> {
    type Value = T;

    fn next_term(&mut self) -> Result<SeriesStep<T>> {
        match self.terms.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(SeriesStep::Term(t.clone()))
            }
            None => Ok(SeriesStep::Exhausted),
        }
    }

    fn zero(&self) -> T {
        self.zero.clone()
    }

    fn consumed(&self) -> usize {
        self.pos
    }
}

fn check_sampled(dist: &TruncationDistribution, j: usize) -> Result<()> {
    if !dist.contains(j) {
        return Err(GpError::OutsideSupport { j, min: dist.support_min(), max: dist.support_max() });
    }
    Ok(())
}

/// `Σ_{j ≤ J} Δⱼ / P(𝒥 ≥ j)`, stopping early if the supplier converges.
pub fn rr_combine<S: SeriesSupplier>(supplier: &mut S, dist: &TruncationDistribution, j: usize) -> Result<S::Value> {
    check_sampled(dist, j)?;
    let mut acc = supplier.zero();
    for i in 1..=j {
        match supplier.next_term()? {
            SeriesStep::Term(d) => acc.add_scaled(&d, 1.0 / dist.survival(i)),
            SeriesStep::Converged => break,
            SeriesStep::Exhausted => return Err(GpError::SupplierExhausted { consumed: supplier.consumed() }),
        }
    }
    Ok(acc)
}

/// `Σ_{j < J_min} Δⱼ + Δ_J / P(𝒥 = J)`. The terms below the support are
/// mandatory, as in [`rr_combine`]; with `J_min = 1` this is `Δ_J / P(𝒥 = J)`.
pub fn ss_combine<S: SeriesSupplier>(supplier: &mut S, dist: &TruncationDistribution, j: usize) -> Result<S::Value> {
    let p = dist.pmf(j);
    if p == 0.0 {
        return Err(GpError::ZeroProbabilitySample(j));
    }
    let mut acc = supplier.zero();
    for _ in 1..dist.support_min() {
        match supplier.next_term()? {
            SeriesStep::Term(d) => acc.add_scaled(&d, 1.0),
            SeriesStep::Converged => return Ok(acc),
            SeriesStep::Exhausted => return Err(GpError::SupplierExhausted { consumed: supplier.consumed() }),
        }
    }
    acc.add_scaled(&supplier.term_at(j)?, 1.0 / p);
    Ok(acc)
}
