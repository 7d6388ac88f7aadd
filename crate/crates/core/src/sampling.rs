//! Random streams, log-domain weight normalization and multinomial resampling.
//!
//! Every random quantity in the crate is drawn from a [`RngStream`], a
//! ChaCha8 generator keyed by a 64-bit seed and positioned on one of its
//! 2^64 independent streams. Monte Carlo runs, replicates and estimators
//! each get their own stream id, so results do not depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SmcError};

/// Seeded, split-stream random generator.
///
/// Identical `(seed, stream_id)` pairs reproduce identical sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream addressed by a path of indices, e.g. `[run, estimator, size]`.
    ///
    /// The path is folded into a stream id with a SplitMix64 mix, so
    /// distinct paths land on unrelated streams.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut id = 0x9E37_79B9_7F4A_7C15_u64;
        for &p in path {
            id = splitmix64(id ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
        }
        RngStream::new(seed, id)
    }

    /// A child stream of this one, keyed by `index`.
    pub fn child(&self, index: u64) -> Self {
        RngStream::derive(self.seed, &[self.stream_id, index])
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform variate on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Unnormalized log-domain weights. May hold `-inf`, never NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights(Vec<f64>);

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| v.is_nan()) {
            return Err(SmcError::NanWeight { index });
        }
        Ok(LogWeights(values))
    }

    pub fn uniform(n: usize) -> Self {
        LogWeights(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn normalize(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.0)
    }
}

/// `log(sum(exp(values)))`, `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Maps log-weights to a probability vector through log-sum-exp.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(index) = log_weights.iter().position(|v| v.is_nan()) {
        return Err(SmcError::NanWeight { index });
    }
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(SmcError::AllWeightsDegenerate);
    }
    if !lse.is_finite() {
        return Err(SmcError::InvalidArgument(
            "log-weights contain +inf".to_string(),
        ));
    }
    let mut w: Vec<f64> = log_weights.iter().map(|&v| (v - lse).exp()).collect();
    // Absorb the last rounding residue so the vector sums to one.
    let total: f64 = w.iter().sum();
    if total != 1.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    Ok(w)
}

/// `1 / sum(w_i^2)` for a probability vector.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Effective sample size divided by the number of particles, in `(0, 1]`.
pub fn normalized_ess(weights: &[f64]) -> f64 {
    effective_sample_size(weights) / weights.len() as f64
}

/// One index drawn with probability `weights[l]`, by inverting the CDF at a
/// single uniform variate.
pub fn categorical_draw(weights: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (l, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = l;
            if acc > target {
                return l;
            }
        }
    }
    last_positive
}

/// `m` i.i.d. categorical draws from `weights`, in draw order.
pub fn multinomial_resample(weights: &[f64], m: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    (0..m)
        .map(|_| {
            let target = rng.uniform() * total;
            let mut l = cdf.partition_point(|&c| c <= target);
            if l >= weights.len() {
                l = weights.len() - 1;
            }
            // skip zero-weight slots sitting on a flat stretch of the CDF
            while weights[l] == 0.0 && l + 1 < weights.len() {
                l += 1;
            }
            while weights[l] == 0.0 && l > 0 {
                l -= 1;
            }
            l
        })
        .collect()
}

/// Draws `m` ancestor indices from a probability vector.
///
/// [`Multinomial`] is the only production implementation; the trait exists
/// so the verification suite can be pointed at an arbitrary resampler.
pub trait Resampler: Sync {
    fn resample(&self, weights: &[f64], m: usize, rng: &mut RngStream) -> Vec<usize>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Multinomial;

impl Resampler for Multinomial {
    fn resample(&self, weights: &[f64], m: usize, rng: &mut RngStream) -> Vec<usize> {
        multinomial_resample(weights, m, rng)
    }
}
