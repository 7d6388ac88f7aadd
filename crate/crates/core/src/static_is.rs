//! Estimators of `E_p[f(X)]` for a static target known up to a constant.
//!
//! Six estimators share one problem description, [`StaticTarget`]:
//!
//! | kind | samples | sampling operations |
//! |------|---------|---------------------|
//! | IS | `N` weighted draws from `q` | `N` |
//! | SIR | `M` multinomial draws from the IS cloud | `N + M` |
//! | SIR-2 | SIR with `M^2` intermediates | `M^2 + M` |
//! | SIR-w | SIR atoms reweighted by `p_u / q~_N` | `N + M + M(N-1)` |
//! | I-SIR | one independent SIR pipeline per output | `N M + M` |
//! | I-SIR-w | I-SIR outputs reweighted by `p_u / q~_N` | `N M + M` |
//!
//! `q~_N` is the law of a single resampled atom (the compound proposal).
//! It has no closed form in general; the reweighted estimators use
//! [`CoSums`], a Monte Carlo estimate of `h_N` that recycles the candidate
//! rows of the independent pipeline. Because the final weights are
//! self-normalized, neither `p_u` nor `q~_N` needs to be normalized.

use crate::error::{Result, SmcError};
use crate::sampling::{categorical_draw, multinomial_resample, normalize_log_weights, RngStream};

/// Unnormalized target, proposal and test function of a static problem.
pub trait StaticTarget: Sync {
    type State: Clone + Send + Sync;

    /// `log p_u(x)`.
    fn log_target(&self, x: &Self::State) -> f64;
    fn sample_proposal(&self, rng: &mut RngStream) -> Self::State;
    /// `log q(x)`; must be finite wherever `log_target` is.
    fn log_proposal(&self, x: &Self::State) -> f64;
    /// The test function `f` whose expectation is estimated.
    fn statistic(&self, x: &Self::State) -> Vec<f64>;

    /// `log(p_u(x) / q(x))`, `-inf` outside the target support.
    fn log_ratio(&self, x: &Self::State) -> f64 {
        let lp = self.log_target(x);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lp - self.log_proposal(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Is,
    Sir,
    ISir,
    ISirW,
    Sir2,
    SirW,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Sir,
        EstimatorKind::SirW,
        EstimatorKind::Is,
        EstimatorKind::ISir,
        EstimatorKind::Sir2,
        EstimatorKind::ISirW,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Is => "is",
            EstimatorKind::Sir => "sir",
            EstimatorKind::ISir => "isir",
            EstimatorKind::ISirW => "isir_w",
            EstimatorKind::Sir2 => "sir2",
            EstimatorKind::SirW => "sir_w",
        }
    }

    /// Sampling operations charged for `n` intermediates and `m` finals.
    ///
    /// For SIR-2 `n` is the intermediate count, i.e. `m^2`.
    pub fn budget(self, n: usize, m: usize) -> u64 {
        let (n, m) = (n as u64, m as u64);
        match self {
            EstimatorKind::Is => n,
            EstimatorKind::Sir | EstimatorKind::Sir2 => n + m,
            EstimatorKind::SirW => n + m + m * n.saturating_sub(1),
            EstimatorKind::ISir | EstimatorKind::ISirW => n * m + m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticEstimate {
    pub value: Vec<f64>,
    pub kind: EstimatorKind,
    pub n_intermediate: usize,
    pub n_final: usize,
    pub sampling_ops: u64,
}

impl StaticEstimate {
    fn new(value: Vec<f64>, kind: EstimatorKind, n: usize, m: usize) -> Self {
        StaticEstimate {
            value,
            kind,
            n_intermediate: n,
            n_final: m,
            sampling_ops: kind.budget(n, m),
        }
    }
}

/// One replicate of the independent SIR pipeline: `N` fresh candidates from
/// `q`, their log-ratios, and the index drawn from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow<S> {
    pub candidates: Vec<S>,
    pub log_ratios: Vec<f64>,
    pub chosen: usize,
}

impl<S> ReplicateRow<S> {
    pub fn chosen_state(&self) -> &S {
        &self.candidates[self.chosen]
    }

    pub fn chosen_log_ratio(&self) -> f64 {
        self.log_ratios[self.chosen]
    }
}

/// The `M` rows produced by [`sample_independent_sir`].
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentSample<S> {
    pub rows: Vec<ReplicateRow<S>>,
    pub n: usize,
}

impl<S> IndependentSample<S> {
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn chosen(&self) -> impl Iterator<Item = &S> {
        self.rows.iter().map(|r| r.chosen_state())
    }
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(SmcError::InvalidArgument(format!(
            "sample sizes must be positive (N={n}, M={m})"
        )));
    }
    Ok(())
}

fn draw_weighted<T: StaticTarget>(
    t: &T,
    n: usize,
    rng: &mut RngStream,
) -> (Vec<T::State>, Vec<f64>) {
    let xs: Vec<T::State> = (0..n).map(|_| t.sample_proposal(rng)).collect();
    let lr = xs.iter().map(|x| t.log_ratio(x)).collect();
    (xs, lr)
}

fn weighted_mean<'a, T: StaticTarget>(
    t: &T,
    states: impl IntoIterator<Item = &'a T::State>,
    weights: impl IntoIterator<Item = f64>,
) -> Vec<f64>
where
    T::State: 'a,
{
    let mut acc: Vec<f64> = Vec::new();
    for (x, w) in states.into_iter().zip(weights) {
        let fx = t.statistic(x);
        if acc.is_empty() {
            acc = vec![0.0; fx.len()];
        }
        for (a, v) in acc.iter_mut().zip(fx) {
            if w != 0.0 {
                *a += w * v;
            }
        }
    }
    acc
}

fn plain_mean<'a, T: StaticTarget>(t: &T, states: &[&'a T::State]) -> Vec<f64>
where
    T::State: 'a,
{
    let m = states.len() as f64;
    weighted_mean(t, states.iter().copied(), std::iter::repeat(1.0 / m))
}

/// Self-normalized importance sampling with `n` draws from `q`.
pub fn estimate_is<T: StaticTarget>(
    t: &T,
    n: usize,
    rng: &mut RngStream,
) -> Result<StaticEstimate> {
    check_sizes(n, 1)?;
    let (xs, lr) = draw_weighted(t, n, rng);
    let w = normalize_log_weights(&lr)?;
    let value = weighted_mean(t, &xs, w);
    Ok(StaticEstimate::new(value, EstimatorKind::Is, n, n))
}

/// Resampled atoms of one dependent SIR pass.
fn sir_atoms<T: StaticTarget>(
    t: &T,
    n: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<(Vec<T::State>, Vec<f64>, Vec<usize>)> {
    check_sizes(n, m)?;
    let (xs, lr) = draw_weighted(t, n, rng);
    let w = normalize_log_weights(&lr)?;
    let idx = multinomial_resample(&w, m, rng);
    Ok((xs, lr, idx))
}

/// Rubin's SIR: `n` weighted draws, `m` multinomial resamples, unweighted mean.
pub fn estimate_sir<T: StaticTarget>(
    t: &T,
    n: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<StaticEstimate> {
    let (xs, _, idx) = sir_atoms(t, n, m, rng)?;
    let atoms: Vec<&T::State> = idx.iter().map(|&i| &xs[i]).collect();
    Ok(StaticEstimate::new(
        plain_mean(t, &atoms),
        EstimatorKind::Sir,
        n,
        m,
    ))
}

/// SIR with `m^2` intermediates and `m` finals, i.e. the dependent
/// estimator with the same budget as I-SIR at `N = M = m`.
pub fn estimate_sir2<T: StaticTarget>(
    t: &T,
    m: usize,
    rng: &mut RngStream,
) -> Result<StaticEstimate> {
    let mut est = estimate_sir(t, m * m, m, rng)?;
    est.kind = EstimatorKind::Sir2;
    Ok(est)
}

/// Algorithm of independent SIR: for each of the `m` outputs, a fresh set
/// of `n` candidates is drawn, weighted and resampled once. Replicate `i` is
/// the outer loop, candidate `j` the inner one.
pub fn sample_independent_sir<T: StaticTarget>(
    t: &T,
    n: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<IndependentSample<T::State>> {
    check_sizes(n, m)?;
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let (candidates, log_ratios) = draw_weighted(t, n, rng);
        let w = normalize_log_weights(&log_ratios)?;
        let chosen = categorical_draw(&w, rng);
        rows.push(ReplicateRow {
            candidates,
            log_ratios,
            chosen,
        });
    }
    Ok(IndependentSample { rows, n })
}

/// Unweighted mean over the independent outputs.
pub fn estimate_isir<T: StaticTarget>(
    sample: &IndependentSample<T::State>,
    t: &T,
) -> Result<StaticEstimate> {
    if sample.rows.is_empty() {
        return Err(SmcError::InvalidArgument("no replicate rows".into()));
    }
    let atoms: Vec<&T::State> = sample.chosen().collect();
    Ok(StaticEstimate::new(
        plain_mean(t, &atoms),
        EstimatorKind::ISir,
        sample.n,
        sample.m(),
    ))
}

/// Per-row log-sums of co-candidate ratios feeding the `h_N` estimate.
///
/// Each row contributes the ratios of its first `N - 1` candidates; the last
/// slot is left out so the inner sum has the `N - 1` terms of the integral it
/// approximates.
#[derive(Debug, Clone)]
pub struct CoSums {
    log_sums: Vec<f64>,
}

impl CoSums {
    pub fn from_sample<S>(sample: &IndependentSample<S>) -> Self {
        let log_sums = sample
            .rows
            .iter()
            .map(|r| {
                let keep = r.log_ratios.len().saturating_sub(1);
                crate::sampling::log_sum_exp(&r.log_ratios[..keep])
            })
            .collect();
        CoSums { log_sums }
    }

    /// From rows of exactly `N - 1` co-candidate log-ratios each.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        CoSums {
            log_sums: rows
                .iter()
                .map(|r| crate::sampling::log_sum_exp(r))
                .collect(),
        }
    }

    pub fn log_sums(&self) -> &[f64] {
        &self.log_sums
    }

    /// `log h^(x)` given `log r(x) = log(p_u(x)/q(x))`.
    pub fn log_h_hat(&self, log_r: f64) -> f64 {
        if log_r == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        sum_of_sigmoids_log(&self.log_sums, log_r)
    }
}

/// `log sum_i 1 / (1 + exp(s_i - a))`, i.e. `log sum_i r / (r + S_i)`.
pub(crate) fn sum_of_sigmoids_log(log_sums: &[f64], log_r: f64) -> f64 {
    let linear: f64 = log_sums
        .iter()
        .map(|&s| 1.0 / (1.0 + (s - log_r).exp()))
        .sum();
    if linear > 1e-280 {
        return linear.ln();
    }
    // every term underflowed: redo the sum in the log domain
    let logs: Vec<f64> = log_sums
        .iter()
        .map(|&s| -crate::sampling::softplus(s - log_r))
        .collect();
    crate::sampling::log_sum_exp(&logs)
}

/// Recycled estimate of `h_N(x)` from the candidate rows; lies in `(0, M]`.
pub fn estimate_h_hat<T: StaticTarget>(
    x: &T::State,
    sample: &IndependentSample<T::State>,
    t: &T,
) -> f64 {
    CoSums::from_sample(sample).log_h_hat(t.log_ratio(x)).exp()
}

/// Post-resampling weights `p_u / (h^ q)` of the given atoms, normalized.
fn reweight(log_ratios: impl Iterator<Item = f64>, cosums: &CoSums) -> Result<Vec<f64>> {
    let lw: Vec<f64> = log_ratios
        .map(|lr| {
            if lr == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lr - cosums.log_h_hat(lr)
            }
        })
        .collect();
    normalize_log_weights(&lw)
}

/// Independent outputs weighted by `p_u / q~_N`, with `q~_N` estimated by
/// recycling the candidate rows. No extra sampling.
pub fn estimate_isir_w<T: StaticTarget>(
    sample: &IndependentSample<T::State>,
    t: &T,
) -> Result<StaticEstimate> {
    if sample.rows.is_empty() {
        return Err(SmcError::InvalidArgument("no replicate rows".into()));
    }
    let weights = isir_post_weights(sample)?;
    let value = weighted_mean(t, sample.chosen(), weights);
    Ok(StaticEstimate::new(
        value,
        EstimatorKind::ISirW,
        sample.n,
        sample.m(),
    ))
}

/// Normalized post-resampling weights of the independent outputs.
pub fn isir_post_weights<S>(sample: &IndependentSample<S>) -> Result<Vec<f64>> {
    let cosums = CoSums::from_sample(sample);
    reweight(sample.rows.iter().map(|r| r.chosen_log_ratio()), &cosums)
}

/// Dependent SIR atoms reweighted like I-SIR-w. The `h_N` estimate needs
/// `m` extra rows of `n - 1` candidates, drawn after the SIR pass.
pub fn estimate_sir_w<T: StaticTarget>(
    t: &T,
    n: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<StaticEstimate> {
    let (xs, lr, idx) = sir_atoms(t, n, m, rng)?;
    let extra: Vec<Vec<f64>> = (0..m).map(|_| draw_weighted(t, n - 1, rng).1).collect();
    let cosums = CoSums::from_rows(&extra);
    let weights = reweight(idx.iter().map(|&i| lr[i]), &cosums)?;
    let value = weighted_mean(t, idx.iter().map(|&i| &xs[i]), weights);
    Ok(StaticEstimate::new(value, EstimatorKind::SirW, n, m))
}

/// Largest number of co-sample tuples [`qtilde_exact_discrete`] enumerates.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Exact law `q~_N(x) = N h_N(x) q(x)` of one resampled atom on a finite
/// support, by enumerating every `(N-1)`-tuple of co-samples.
///
/// `p` may be unnormalized. Tuples on which every weight vanishes (possible
/// only when `p` has zeros inside the support of `q`) make SIR fail, so the
/// result is conditioned on their absence.
pub fn qtilde_exact_discrete(p: &[f64], q: &[f64], n: usize) -> Result<Vec<f64>> {
    if p.len() != q.len() || p.is_empty() {
        return Err(SmcError::InvalidArgument(
            "p and q must share a nonempty support".into(),
        ));
    }
    if n == 0 {
        return Err(SmcError::InvalidArgument("N must be positive".into()));
    }
    let s = p.len();
    let tuples = (s as u128).checked_pow((n - 1) as u32).unwrap_or(u128::MAX);
    if tuples > ENUMERATION_LIMIT {
        return Err(SmcError::SupportTooLarge {
            tuples,
            limit: ENUMERATION_LIMIT,
        });
    }
    let ratio: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| if qi > 0.0 { pi / qi } else { 0.0 })
        .collect();

    let mut h = vec![0.0; s];
    let mut digits = vec![0usize; n - 1];
    for _ in 0..tuples {
        let prob: f64 = digits.iter().map(|&d| q[d]).product();
        if prob > 0.0 {
            let co: f64 = digits.iter().map(|&d| ratio[d]).sum();
            for x in 0..s {
                let denom = ratio[x] + co;
                if ratio[x] > 0.0 {
                    h[x] += prob * ratio[x] / denom;
                }
            }
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < s {
                break;
            }
            *d = 0;
        }
    }
    let mut qt: Vec<f64> = (0..s).map(|x| n as f64 * h[x] * q[x]).collect();
    let total: f64 = qt.iter().sum();
    if total <= 0.0 {
        return Err(SmcError::AllWeightsDegenerate);
    }
    qt.iter_mut().for_each(|v| *v /= total);
    Ok(qt)
}

/// Target and proposal on the finite support `{0, .., s-1}`.
#[derive(Debug, Clone)]
pub struct DiscreteTarget {
    log_p: Vec<f64>,
    q: Vec<f64>,
    log_q: Vec<f64>,
    values: Vec<f64>,
}

impl DiscreteTarget {
    /// `p` unnormalized, `q` a pmf; the statistic defaults to the index.
    pub fn new(p: &[f64], q: &[f64]) -> Result<Self> {
        if p.len() != q.len() || p.is_empty() {
            return Err(SmcError::InvalidArgument(
                "p and q must share a nonempty support".into(),
            ));
        }
        if p.iter().zip(q).any(|(&pi, &qi)| pi > 0.0 && qi <= 0.0) {
            return Err(SmcError::InvalidArgument(
                "q must be positive wherever p is".into(),
            ));
        }
        let total: f64 = q.iter().sum();
        let q: Vec<f64> = q.iter().map(|v| v / total).collect();
        Ok(DiscreteTarget {
            log_p: p.iter().map(|v| v.ln()).collect(),
            log_q: q.iter().map(|v| v.ln()).collect(),
            q,
            values: (0..p.len()).map(|i| i as f64).collect(),
        })
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.q.len());
        self.values = values;
        self
    }

    pub fn support_size(&self) -> usize {
        self.q.len()
    }

    pub fn target_pmf(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_p).expect("target has mass")
    }

    pub fn proposal_pmf(&self) -> &[f64] {
        &self.q
    }
}

impl StaticTarget for DiscreteTarget {
    type State = usize;

    fn log_target(&self, x: &usize) -> f64 {
        self.log_p[*x]
    }

    fn sample_proposal(&self, rng: &mut RngStream) -> usize {
        categorical_draw(&self.q, rng)
    }

    fn log_proposal(&self, x: &usize) -> f64 {
        self.log_q[*x]
    }

    fn statistic(&self, x: &usize) -> Vec<f64> {
        vec![self.values[*x]]
    }
}
