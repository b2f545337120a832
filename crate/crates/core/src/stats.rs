//! Reproducible random streams, exact streaming moments and confidence
//! intervals shared by every estimator.
//!
//! Every Monte-Carlo run is split into fixed-size batches; batch `i` draws
//! from stream `(master_seed, i)`. Batch accumulators hold exact sums, so
//! merging is associative and commutative bit for bit and results do not
//! depend on how batches were scheduled across threads.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::normal_upper_quantile;
use crate::error::{domain, Error, Result};

/// Name of the normal deviate algorithm, recorded in run records.
pub const NORMAL_ALGORITHM: &str = "ziggurat (rand_distr::StandardNormal) over ChaCha8";
/// Name of the exponential deviate algorithm, recorded in run records.
pub const EXPONENTIAL_ALGORITHM: &str = "inverse CDF -ln(1-U), U uniform on [0,1) with 53 bits";

pub const DEFAULT_SEED: u64 = 0x5EED;
pub const DEFAULT_LEVEL: f64 = 0.99;
pub const DEFAULT_BATCH: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn stream(&self) -> Stream {
        make_stream(*self)
    }
}

/// A counter-based random stream: ChaCha8 keyed by the master seed, with the
/// stream index selecting the 64-bit ChaCha stream id.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

pub fn make_stream(seed: SeedSpec) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
    rng.set_stream(seed.stream_index);
    Stream { rng }
}

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Unit exponential by inversion.
    pub fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }
}

const LIMBS: usize = 72;
const LIMB_BITS: u32 = 32;
const MAX_PENDING: u32 = 1 << 30;

/// Exact sum of finite `f64` values in fixed point with resolution 2^-1074.
///
/// Each value is split into 32-bit limbs held in `i64`, so up to 2^30 values
/// can be added before carries must be propagated.
#[derive(Clone, PartialEq, Eq)]
pub struct ExactSum {
    limbs: [i64; LIMBS],
    pending: u32,
    non_finite: bool,
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExactSum({:e})", self.to_f64())
    }
}

impl Default for ExactSum {
    fn default() -> Self {
        Self {
            limbs: [0; LIMBS],
            pending: 0,
            non_finite: false,
        }
    }
}

impl ExactSum {
    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.non_finite = true;
            return;
        }
        if x == 0.0 {
            return;
        }
        if self.pending >= MAX_PENDING {
            self.normalize();
        }
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as u32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, shift) = if biased == 0 {
            (frac, 0)
        } else {
            (frac | (1u64 << 52), biased - 1)
        };
        let idx = (shift / LIMB_BITS) as usize;
        let wide = (mant as u128) << (shift % LIMB_BITS);
        let sign: i64 = if x < 0.0 { -1 } else { 1 };
        let mask = (1u128 << LIMB_BITS) - 1;
        self.limbs[idx] += sign * (wide & mask) as i64;
        self.limbs[idx + 1] += sign * ((wide >> LIMB_BITS) & mask) as i64;
        self.limbs[idx + 2] += sign * (wide >> (2 * LIMB_BITS)) as i64;
        self.pending += 1;
    }

    pub fn merge(&mut self, other: &ExactSum) {
        if self.pending.saturating_add(other.pending) >= MAX_PENDING {
            self.normalize();
        }
        let mut other = other.clone();
        if self.pending.saturating_add(other.pending) >= MAX_PENDING {
            other.normalize();
        }
        for (a, b) in self.limbs.iter_mut().zip(other.limbs.iter()) {
            *a += *b;
        }
        self.pending += other.pending.max(1);
        self.non_finite |= other.non_finite;
    }

    /// Propagates carries so every limb but the last is in `[0, 2^32)`.
    fn normalize(&mut self) {
        let mut carry = 0i64;
        for limb in self.limbs.iter_mut().take(LIMBS - 1) {
            let v = *limb + carry;
            carry = v >> LIMB_BITS;
            *limb = v & ((1i64 << LIMB_BITS) - 1);
        }
        self.limbs[LIMBS - 1] += carry;
        self.pending = 0;
    }

    pub fn is_finite(&self) -> bool {
        !self.non_finite
    }

    /// The exact value in units of 2^-1074.
    pub fn to_bigint(&self) -> BigInt {
        let mut acc = BigInt::zero();
        for limb in self.limbs.iter().rev() {
            acc = (acc << LIMB_BITS) + BigInt::from(*limb);
        }
        acc
    }

    pub fn to_f64(&self) -> f64 {
        if self.non_finite {
            return f64::NAN;
        }
        scaled_to_f64(&self.to_bigint(), -1074)
    }
}

/// `x * 2^exp2` as the nearest-ish `f64` (truncates below the top 64 bits).
fn scaled_to_f64(x: &BigInt, exp2: i64) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let bits = x.bits() as i64;
    let (top, shift) = if bits > 64 {
        let s = bits - 64;
        (x.abs() >> (s as usize), s)
    } else {
        (x.abs(), 0)
    };
    let mag = top.to_u64().expect("top fits in 64 bits") as f64;
    let v = ldexp(mag, shift + exp2);
    if x.is_negative() {
        -v
    } else {
        v
    }
}

fn ldexp(mut v: f64, mut e: i64) -> f64 {
    while e > 1000 {
        v *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        v *= 2f64.powi(-1000);
        e += 1000;
    }
    v * 2f64.powi(e as i32)
}

/// One-pass accumulator of count, sum and sum of squares, all exact.
///
/// Squares enter as the two-term expansion `x*x = p + e` (via fused
/// multiply-add), so the centred second moment is computed without
/// cancellation at finalization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Accumulator {
    count: u64,
    sum: ExactSum,
    sum_sq: ExactSum,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut acc = Self::new();
        for &v in values {
            acc.push(v);
        }
        acc
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        let p = x * x;
        self.sum_sq.add(p);
        self.sum_sq.add(x.mul_add(x, -p));
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn merged(mut self, other: &Accumulator) -> Self {
        self.merge(other);
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum.to_f64() / self.count as f64
    }

    /// Centred second moment Σ(x − mean)².
    pub fn m2(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        if !self.sum.is_finite() || !self.sum_sq.is_finite() {
            return f64::NAN;
        }
        let n = BigInt::from(self.count);
        let s = self.sum.to_bigint();
        let q = self.sum_sq.to_bigint();
        // n*m2 = n*Σx² − (Σx)², in units of 2^-2148
        let scaled = (n * (q << 1074usize)) - &s * &s;
        scaled_to_f64(&scaled, -2148) / self.count as f64
    }

    /// Sample variance with divisor n − 1.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2() / (self.count - 1) as f64
    }
}

pub fn accumulate(mut acc: Accumulator, value: f64) -> Accumulator {
    acc.push(value);
    acc
}

/// Universal estimator result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl McEstimate {
    /// Estimate of a quantity known to be exactly `value` (no sampling noise).
    pub fn exact(value: f64, n: u64, level: f64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n,
            ci_low: value,
            ci_high: value,
            level,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let (a, b) = (self.ci_low * c, self.ci_high * c);
        Self {
            mean: self.mean * c,
            stderr: self.stderr * c.abs(),
            n: self.n,
            ci_low: a.min(b),
            ci_high: a.max(b),
            level: self.level,
        }
    }

    /// Number of combined standard errors separating two independent estimates.
    pub fn z_distance(&self, other: &McEstimate) -> f64 {
        let s = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        let d = (self.mean - other.mean).abs();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    pub fn agrees_with(&self, other: &McEstimate, sigmas: f64) -> bool {
        self.z_distance(other) <= sigmas
    }
}

/// Two-sided normal critical value for a confidence level in (0, 1).
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("confidence level {level} outside (0, 1)"));
    }
    normal_upper_quantile((1.0 - level) / 2.0)
}

/// Normal-approximation confidence interval for the mean.
pub fn finalize(acc: &Accumulator, level: f64) -> Result<McEstimate> {
    if acc.count() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: acc.count(),
        });
    }
    let z = z_for_level(level)?;
    let mean = acc.mean();
    let stderr = (acc.variance() / acc.count() as f64).sqrt();
    Ok(McEstimate {
        mean,
        stderr,
        n: acc.count(),
        ci_low: mean - z * stderr,
        ci_high: mean + z * stderr,
        level,
    })
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if successes > n {
        return domain(format!("{successes} successes exceed {n} trials"));
    }
    let z = z_for_level(level)?;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = p + z2 / (2.0 * nf);
    let rad = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = ((centre - rad) / denom).max(0.0);
    let hi = ((centre + rad) / denom).min(1.0);
    Ok((lo.min(p), hi.max(p)))
}

/// Binomial proportion with a Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proportion {
    pub successes: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl Proportion {
    pub fn new(successes: u64, n: u64, level: f64) -> Result<Self> {
        let (ci_low, ci_high) = wilson_interval(successes, n, level)?;
        Ok(Self {
            successes,
            n,
            p_hat: successes as f64 / n as f64,
            ci_low,
            ci_high,
            level,
        })
    }

    /// As an [`McEstimate`]: binomial standard error, Wilson bounds.
    pub fn to_estimate(&self) -> McEstimate {
        let p = self.p_hat;
        McEstimate {
            mean: p,
            stderr: (p * (1.0 - p) / self.n as f64).sqrt(),
            n: self.n,
            ci_low: self.ci_low,
            ci_high: self.ci_high,
            level: self.level,
        }
    }
}

/// Exact integer histogram; merges are order independent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountHistogram {
    bins: BTreeMap<u64, u64>,
    total: u64,
}

impl CountHistogram {
    pub fn push(&mut self, value: u64) {
        *self.bins.entry(value).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &CountHistogram) {
        for (k, v) in &other.bins {
            *self.bins.entry(*k).or_insert(0) += v;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Smallest value `v` with P(X ≤ v) ≥ `q`.
    pub fn quantile(&self, q: f64) -> Option<u64> {
        if self.total == 0 {
            return None;
        }
        let target = (q * self.total as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (k, v) in &self.bins {
            seen += v;
            if seen >= target {
                return Some(*k);
            }
        }
        self.bins.keys().next_back().copied()
    }
}

/// Monte-Carlo budget: path count, master seed, batch size and CI level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: u64,
    pub seed: u64,
    pub batch: u64,
    pub level: f64,
}

impl McConfig {
    pub fn new(n: u64, seed: u64) -> Self {
        Self {
            n,
            seed,
            batch: DEFAULT_BATCH,
            level: DEFAULT_LEVEL,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn with_n(&self, n: u64) -> Self {
        Self { n, ..*self }
    }
}

/// Runs `work(stream, count)` over `ceil(n / batch)` batches in parallel and
/// folds the batch results in batch order with `merge`.
pub fn run_batched<A, W, M>(config: &McConfig, work: W, merge: M) -> A
where
    A: Send + Default,
    W: Fn(&mut Stream, u64) -> A + Sync,
    M: Fn(&mut A, A),
{
    let batch = config.batch.max(1);
    let batches = config.n.div_ceil(batch);
    let parts: Vec<A> = (0..batches)
        .into_par_iter()
        .map(|i| {
            let mut stream = make_stream(SeedSpec::new(config.seed, i));
            let count = batch.min(config.n - i * batch);
            work(&mut stream, count)
        })
        .collect();
    let mut total = A::default();
    for part in parts {
        merge(&mut total, part);
    }
    total
}

/// Derives an independent master seed for a labelled sub-experiment.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the master seed by splitmix64
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`. Sorts in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}
