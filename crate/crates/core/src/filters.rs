//! Sequential filters over a [`StateSpaceModel`].
//!
//! A filter is a sequence of steps on a [`ParticleCloud`]. The first step
//! starts from [`ParticleCloud::root`], whose trajectories are all empty, so
//! the proposal is called with `prev = None` (the initial prior) and no
//! ancestor is drawn. Only `(x_{k-1}, x_k)` is kept per trajectory since every
//! model and proposal here is Markov.
//!
//! Independent resampling extends trajectory `j` with candidate `j` of every
//! replicate row, and each candidate weight carries the previous weight
//! `w_{k-1}^j`; the two readings coincide whenever the previous weights are
//! uniform.

use crate::error::{Result, SmcError};
use crate::models::{OptimalProposal, Proposal, StateSpaceModel};
use crate::sampling::{
    categorical_draw, log_sum_exp, normalize_log_weights, LogWeights, Multinomial, Resampler,
    RngStream,
};
use crate::static_is::sum_of_sigmoids_log;
use crate::State;

pub use crate::sampling::normalized_ess;

/// Weighted particle approximation at one time step.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub states: Vec<State>,
    /// `x_{k-1}` of each trajectory; empty at the first step.
    pub prev_states: Vec<State>,
    pub log_weights: LogWeights,
    /// Normalized weights, sums to one.
    pub weights: Vec<f64>,
    /// Index of the last processed observation, `None` for the root.
    pub step: Option<usize>,
    /// Cumulative sampling operations.
    pub sampling_ops: u64,
    /// Steps where every weight vanished and uniform weights were used.
    pub degenerate_steps: usize,
    /// Weighted cloud before the resampling of the last step.
    pub pre_resample: WeightedSet,
}

/// States with their normalized weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedSet {
    pub states: Vec<State>,
    pub weights: Vec<f64>,
}

impl ParticleCloud {
    /// `n` empty trajectories with uniform weights.
    pub fn root(n: usize) -> Self {
        ParticleCloud {
            states: Vec::new(),
            prev_states: Vec::new(),
            log_weights: LogWeights::uniform(n),
            weights: vec![1.0 / n as f64; n],
            step: None,
            sampling_ops: 0,
            degenerate_steps: 0,
            pre_resample: WeightedSet::default(),
        }
    }

    /// Number of trajectories.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_root(&self) -> bool {
        self.step.is_none()
    }

    /// End state of trajectory `j`, `None` at the root.
    pub fn parent(&self, j: usize) -> Option<&State> {
        self.states.get(j)
    }

    fn next_step(&self) -> usize {
        self.step.map_or(0, |k| k + 1)
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(SmcError::InvalidArgument("empty particle cloud".into()));
        }
        Ok(())
    }

    /// Replaces the weights, e.g. with second-stage weights.
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.len() {
            return Err(SmcError::InvalidArgument("weight vector length".into()));
        }
        self.log_weights = LogWeights::new(weights.iter().map(|w| w.ln()).collect())?;
        self.pre_resample.weights = weights.clone();
        self.weights = weights;
        Ok(())
    }
}

/// Normalized weights, falling back to uniform when all vanish.
fn normalize_or_uniform(log_weights: &[f64]) -> Result<(Vec<f64>, bool)> {
    match normalize_log_weights(log_weights) {
        Ok(w) => Ok((w, false)),
        Err(SmcError::AllWeightsDegenerate) => {
            let n = log_weights.len();
            Ok((vec![1.0 / n as f64; n], true))
        }
        Err(e) => Err(e),
    }
}

fn uniform_cloud(
    states: Vec<State>,
    prev_states: Vec<State>,
    step: usize,
    sampling_ops: u64,
    degenerate_steps: usize,
    pre_resample: WeightedSet,
) -> ParticleCloud {
    let n = states.len();
    ParticleCloud {
        states,
        prev_states,
        log_weights: LogWeights::uniform(n),
        weights: vec![1.0 / n as f64; n],
        step: Some(step),
        sampling_ops,
        degenerate_steps,
        pre_resample,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResamplePolicy {
    Always,
    /// Resample when the normalized ESS falls below the fraction.
    EssBelow(f64),
    Never,
}

impl ResamplePolicy {
    fn triggers(self, weights: &[f64]) -> bool {
        match self {
            ResamplePolicy::Always => true,
            ResamplePolicy::EssBelow(frac) => normalized_ess(weights) < frac,
            ResamplePolicy::Never => false,
        }
    }
}

/// Classical SIR: move every particle, update its weight, then resample
/// according to `policy`. [`ParticleCloud::pre_resample`] keeps the
/// weighted cloud for [`theta_sis`].
pub fn sir_step(
    cloud: &ParticleCloud,
    model: &dyn StateSpaceModel,
    proposal: &dyn Proposal,
    y: &State,
    policy: ResamplePolicy,
    rng: &mut RngStream,
) -> Result<ParticleCloud> {
    sir_step_with(cloud, model, proposal, y, policy, &Multinomial, rng)
}

pub fn sir_step_with(
    cloud: &ParticleCloud,
    model: &dyn StateSpaceModel,
    proposal: &dyn Proposal,
    y: &State,
    policy: ResamplePolicy,
    resampler: &dyn Resampler,
    rng: &mut RngStream,
) -> Result<ParticleCloud> {
    cloud.check()?;
    let n = cloud.len();
    let mut states = Vec::with_capacity(n);
    let mut lw = Vec::with_capacity(n);
    for (j, &prev_lw) in cloud.log_weights.values().iter().enumerate() {
        let prev = cloud.parent(j);
        let x = proposal.sample(model, prev, y, rng);
        lw.push(prev_lw + proposal.log_weight_increment(model, &x, prev, y));
        states.push(x);
    }
    let (w, degenerate) = normalize_or_uniform(&lw)?;
    let degenerate_steps = cloud.degenerate_steps + usize::from(degenerate);
    let mut ops = cloud.sampling_ops + n as u64;
    let pre = WeightedSet {
        states: states.clone(),
        weights: w.clone(),
    };
    let prev_states: Vec<State> = if cloud.is_root() {
        Vec::new()
    } else {
        cloud.states.clone()
    };
    let step = cloud.next_step();

    if policy.triggers(&w) {
        let idx = resampler.resample(&w, n, rng);
        ops += n as u64;
        let new_states = idx.iter().map(|&i| states[i].clone()).collect();
        let new_prev = if prev_states.is_empty() {
            Vec::new()
        } else {
            idx.iter().map(|&i| prev_states[i].clone()).collect()
        };
        return Ok(uniform_cloud(
            new_states,
            new_prev,
            step,
            ops,
            degenerate_steps,
            pre,
        ));
    }
    let log_weights = if degenerate {
        LogWeights::uniform(n)
    } else {
        // keep log-weights normalized so they stay bounded over time
        let lse = log_sum_exp(&lw);
        LogWeights::new(lw.iter().map(|v| v - lse).collect())?
    };
    Ok(ParticleCloud {
        states,
        prev_states,
        log_weights,
        weights: w,
        step: Some(step),
        sampling_ops: ops,
        degenerate_steps,
        pre_resample: pre,
    })
}

/// One replicate of independent resampling: candidate `j` extends trajectory `j`.
#[derive(Debug, Clone)]
pub struct CandidateRow {
    pub candidates: Vec<State>,
    /// `log w_{k-1}^j + log f + log g - log q`, unnormalized.
    pub log_weights: Vec<f64>,
    pub chosen: usize,
}

#[derive(Debug, Clone)]
pub struct CandidateTable {
    pub rows: Vec<CandidateRow>,
    /// Rows whose weights all vanished and were drawn uniformly.
    pub degenerate_rows: usize,
}

impl CandidateTable {
    pub fn ancestors(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.chosen).collect()
    }
}

/// Independent resampling: `m` replicate rows, each drawing one fresh
/// candidate per trajectory and keeping one of them. Outputs get weight `1/m`.
pub fn independent_sir_step(
    cloud: &ParticleCloud,
    model: &dyn StateSpaceModel,
    proposal: &dyn Proposal,
    y: &State,
    m: usize,
    rng: &mut RngStream,
) -> Result<(ParticleCloud, CandidateTable)> {
    cloud.check()?;
    if m == 0 {
        return Err(SmcError::InvalidArgument("M must be positive".into()));
    }
    let n = cloud.len();
    let prev_lw: Vec<f64> = cloud.weights.iter().map(|w| w.ln()).collect();
    let mut rows = Vec::with_capacity(m);
    let mut degenerate_rows = 0;
    for _ in 0..m {
        let mut candidates = Vec::with_capacity(n);
        let mut log_weights = Vec::with_capacity(n);
        for (j, &lw) in prev_lw.iter().enumerate() {
            let prev = cloud.parent(j);
            let x = proposal.sample(model, prev, y, rng);
            let v = if lw == f64::NEG_INFINITY {
                lw
            } else {
                lw + proposal.log_weight_increment(model, &x, prev, y)
            };
            log_weights.push(v);
            candidates.push(x);
        }
        let (w, degenerate) = normalize_or_uniform(&log_weights)?;
        degenerate_rows += usize::from(degenerate);
        let chosen = categorical_draw(&w, rng);
        rows.push(CandidateRow {
            candidates,
            log_weights,
            chosen,
        });
    }
    let states: Vec<State> = rows
        .iter()
        .map(|r| r.candidates[r.chosen].clone())
        .collect();
    let prev_states = if cloud.is_root() {
        Vec::new()
    } else {
        rows.iter()
            .map(|r| cloud.states[r.chosen].clone())
            .collect()
    };
    let uniform = vec![1.0 / m as f64; m];
    let pre = WeightedSet {
        states: states.clone(),
        weights: uniform,
    };
    let next = uniform_cloud(
        states,
        prev_states,
        cloud.next_step(),
        cloud.sampling_ops + (n * m + m) as u64,
        cloud.degenerate_steps + usize::from(degenerate_rows > 0),
        pre,
    );
    Ok((
        next,
        CandidateTable {
            rows,
            degenerate_rows,
        },
    ))
}

/// Log-sum-exp of each entry's co-entries, `log sum_{j != l} exp(v_j)`.
fn leave_one_out_lse(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut prefix = vec![f64::NEG_INFINITY; n + 1];
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    for j in 0..n {
        prefix[j + 1] = crate::sampling::log_add_exp(prefix[j], v[j]);
        suffix[n - 1 - j] = crate::sampling::log_add_exp(suffix[n - j], v[n - 1 - j]);
    }
    (0..n)
        .map(|l| crate::sampling::log_add_exp(prefix[l], suffix[l + 1]))
        .collect()
}

/// Weights of the independent outputs correcting for their compound law.
///
/// For output `i` with ancestor `l` and candidate log-weight `log r`, the
/// weight is `r / h_l(x)` where `h_l(x)` sums, over all replicate rows,
/// `r / (r + sum_{j != l} r_j)` with the row's own candidate weights in slot
/// `j`. Returns the normalized weights and whether they degenerated.
pub fn second_stage_weights(table: &CandidateTable) -> Result<(Vec<f64>, bool)> {
    if table.rows.is_empty() {
        return Err(SmcError::InvalidArgument("empty candidate table".into()));
    }
    let loo: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| leave_one_out_lse(&r.log_weights))
        .collect();
    let mut column = vec![0.0; loo.len()];
    let lw: Vec<f64> = table
        .rows
        .iter()
        .map(|r| {
            let l = r.chosen;
            let log_r = r.log_weights[l];
            if log_r == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            for (c, row) in column.iter_mut().zip(&loo) {
                *c = row[l];
            }
            log_r - sum_of_sigmoids_log(&column, log_r)
        })
        .collect();
    normalize_or_uniform(&lw)
}

/// Ancestor weights of the auxiliary particle filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstStage {
    /// `mu ∝ w_{k-1}`.
    Weights,
    /// `mu ∝ w_{k-1} p(y_k | x_{k-1})`; needs closed forms.
    Predictive,
}

/// First-stage weights and proposal of an APF step.
#[derive(Clone, Copy)]
pub struct ApfSpec<'a> {
    pub first_stage: FirstStage,
    pub proposal: &'a dyn Proposal,
}

/// Auxiliary particle filter: draw ancestors from `mu`, move them with the
/// proposal, weight by `w_{k-1} f g / (mu q)`. At the root every trajectory
/// is its own ancestor and no index is drawn.
pub fn apf_step(
    cloud: &ParticleCloud,
    model: &dyn StateSpaceModel,
    y: &State,
    spec: ApfSpec<'_>,
    rng: &mut RngStream,
) -> Result<ParticleCloud> {
    apf_step_with(cloud, model, y, spec, &Multinomial, rng)
}

pub fn apf_step_with(
    cloud: &ParticleCloud,
    model: &dyn StateSpaceModel,
    y: &State,
    spec: ApfSpec<'_>,
    resampler: &dyn Resampler,
    rng: &mut RngStream,
) -> Result<ParticleCloud> {
    cloud.check()?;
    let n = cloud.len();
    let forms = match spec.first_stage {
        FirstStage::Weights => None,
        FirstStage::Predictive => Some(
            model
                .closed_forms()
                .ok_or(SmcError::ModelLacksClosedForms)?,
        ),
    };
    if !spec.proposal.supports(model) {
        return Err(SmcError::ModelLacksClosedForms);
    }
    let log_mu: Vec<f64> = cloud
        .log_weights
        .values()
        .iter()
        .enumerate()
        .map(|(j, &lw)| match forms {
            Some(f) if lw > f64::NEG_INFINITY => lw + f.predictive_loglik(y, cloud.parent(j)),
            _ => lw,
        })
        .collect();
    let (mu, mut degenerate) = normalize_or_uniform(&log_mu)?;
    let mut ops = cloud.sampling_ops + n as u64;
    let ancestors: Vec<usize> = if cloud.is_root() {
        (0..n).collect()
    } else {
        ops += n as u64;
        resampler.resample(&mu, n, rng)
    };

    let mut states = Vec::with_capacity(n);
    let mut lw = Vec::with_capacity(n);
    for &l in &ancestors {
        let prev = cloud.parent(l);
        let x = spec.proposal.sample(model, prev, y, rng);
        let base = cloud.log_weights.values()[l] - mu[l].ln();
        lw.push(base + spec.proposal.log_weight_increment(model, &x, prev, y));
        states.push(x);
    }
    let (w, deg) = normalize_or_uniform(&lw)?;
    degenerate |= deg;
    let lse = log_sum_exp(&lw);
    let log_weights = if deg {
        LogWeights::uniform(n)
    } else {
        LogWeights::new(lw.iter().map(|v| v - lse).collect())?
    };
    let prev_states = if cloud.is_root() {
        Vec::new()
    } else {
        ancestors.iter().map(|&l| cloud.states[l].clone()).collect()
    };
    Ok(ParticleCloud {
        pre_resample: WeightedSet {
            states: states.clone(),
            weights: w.clone(),
        },
        states,
        prev_states,
        log_weights,
        weights: w,
        step: Some(cloud.next_step()),
        sampling_ops: ops,
        degenerate_steps: cloud.degenerate_steps + usize::from(degenerate),
    })
}

/// Fully adapted APF: predictive first stage and optimal proposal. The
/// resulting weights are uniform.
pub fn fa_apf_step(
    cloud: &ParticleCloud,
    model: &dyn StateSpaceModel,
    y: &State,
    rng: &mut RngStream,
) -> Result<ParticleCloud> {
    if model.closed_forms().is_none() {
        return Err(SmcError::ModelLacksClosedForms);
    }
    let spec = ApfSpec {
        first_stage: FirstStage::Predictive,
        proposal: &OptimalProposal,
    };
    apf_step(cloud, model, y, spec, rng)
}

/// `sum_i w_i x_i`.
pub fn weighted_mean(states: &[State], weights: &[f64]) -> State {
    let dim = states.first().map_or(0, |s| s.len());
    let mut acc = State::zeros(dim);
    for (x, &w) in states.iter().zip(weights) {
        if w != 0.0 {
            acc.axpy(w, x, 1.0);
        }
    }
    acc
}

/// `(1/N) sum_i x_i`.
pub fn plain_mean(states: &[State]) -> State {
    let dim = states.first().map_or(0, |s| s.len());
    let mut acc = State::zeros(dim);
    for x in states {
        acc += x;
    }
    acc / states.len() as f64
}

/// Weighted estimate before resampling.
pub fn theta_sis(cloud: &ParticleCloud) -> State {
    weighted_mean(&cloud.pre_resample.states, &cloud.pre_resample.weights)
}

/// Unweighted mean of the (resampled) particles.
pub fn theta_sir(cloud: &ParticleCloud) -> State {
    plain_mean(&cloud.states)
}

/// Unweighted mean of the independent outputs.
pub fn theta_isir(cloud: &ParticleCloud) -> State {
    plain_mean(&cloud.states)
}

/// Independent outputs weighted by second-stage weights.
pub fn theta_isir_w(cloud: &ParticleCloud, weights: &[f64]) -> State {
    weighted_mean(&cloud.states, weights)
}

/// Which filter [`run_filter`] drives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    /// Classical SIR, reporting the pre-resampling weighted estimate.
    Sir(ResamplePolicy),
    /// Independent resampling with `N = M`, unweighted outputs.
    ISir,
    /// Independent resampling whose outputs carry second-stage weights.
    ISirW,
    Apf(FirstStage),
    FaApf,
}

impl FilterKind {
    pub fn label(self) -> &'static str {
        match self {
            FilterKind::Sir(_) => "sis",
            FilterKind::ISir => "isir",
            FilterKind::ISirW => "isir_w",
            FilterKind::Apf(_) => "apf",
            FilterKind::FaApf => "fa_apf",
        }
    }

    /// Sampling operations of `steps` steps with `n` particles; matches
    /// [`ParticleCloud::sampling_ops`].
    pub fn budget(self, n: usize, steps: usize) -> u64 {
        let (n, t) = (n as u64, steps as u64);
        if t == 0 {
            return 0;
        }
        match self {
            FilterKind::Sir(ResamplePolicy::Always) => 2 * n * t,
            FilterKind::Sir(_) => n * t,
            FilterKind::ISir | FilterKind::ISirW => (n * n + n) * t,
            FilterKind::Apf(_) | FilterKind::FaApf => n + 2 * n * (t - 1),
        }
    }
}

/// Per-step output of one filter run over `y_0..y_T`.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub estimates: Vec<State>,
    /// Normalized ESS of the weights defining each estimate.
    pub ess: Vec<f64>,
    pub degenerate_steps: usize,
    pub sampling_ops: u64,
}

/// Runs a filter with `n` particles from the root over all observations.
pub fn run_filter(
    model: &dyn StateSpaceModel,
    proposal: &dyn Proposal,
    kind: FilterKind,
    n: usize,
    ys: &[State],
    rng: &mut RngStream,
) -> Result<FilterRun> {
    run_filter_with(model, proposal, kind, n, ys, &Multinomial, rng)
}

pub fn run_filter_with(
    model: &dyn StateSpaceModel,
    proposal: &dyn Proposal,
    kind: FilterKind,
    n: usize,
    ys: &[State],
    resampler: &dyn Resampler,
    rng: &mut RngStream,
) -> Result<FilterRun> {
    if n == 0 {
        return Err(SmcError::InvalidArgument(
            "number of particles must be positive".into(),
        ));
    }
    if !proposal.supports(model) {
        return Err(SmcError::ModelLacksClosedForms);
    }
    let mut cloud = ParticleCloud::root(n);
    let mut estimates = Vec::with_capacity(ys.len());
    let mut ess = Vec::with_capacity(ys.len());
    let mut extra_degenerate = 0;
    for y in ys {
        match kind {
            FilterKind::Sir(policy) => {
                cloud = sir_step_with(&cloud, model, proposal, y, policy, resampler, rng)?;
                estimates.push(theta_sis(&cloud));
                ess.push(normalized_ess(&cloud.pre_resample.weights));
            }
            FilterKind::ISir => {
                cloud = independent_sir_step(&cloud, model, proposal, y, n, rng)?.0;
                estimates.push(theta_isir(&cloud));
                ess.push(1.0);
            }
            FilterKind::ISirW => {
                let (next, table) = independent_sir_step(&cloud, model, proposal, y, n, rng)?;
                let (w, degenerate) = second_stage_weights(&table)?;
                extra_degenerate += usize::from(degenerate);
                cloud = next;
                cloud.set_weights(w)?;
                estimates.push(theta_isir_w(&cloud, &cloud.weights));
                ess.push(normalized_ess(&cloud.weights));
            }
            FilterKind::Apf(first_stage) => {
                let spec = ApfSpec {
                    first_stage,
                    proposal,
                };
                cloud = apf_step_with(&cloud, model, y, spec, resampler, rng)?;
                estimates.push(theta_sis(&cloud));
                ess.push(normalized_ess(&cloud.weights));
            }
            FilterKind::FaApf => {
                cloud = fa_apf_step(&cloud, model, y, rng)?;
                estimates.push(theta_sis(&cloud));
                ess.push(normalized_ess(&cloud.weights));
            }
        }
    }
    Ok(FilterRun {
        estimates,
        ess,
        degenerate_steps: cloud.degenerate_steps + extra_degenerate,
        sampling_ops: cloud.sampling_ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchModel, TransitionProposal};
    use approx::assert_abs_diff_eq;

    fn s(v: f64) -> State {
        State::from_element(1, v)
    }

    /// Constant likelihood, random walk transition.
    struct Flat;
    impl StateSpaceModel for Flat {
        fn state_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn sample_initial(&self, rng: &mut RngStream) -> State {
            s(rng.uniform())
        }
        fn log_initial(&self, _x: &State) -> f64 {
            0.0
        }
        fn sample_transition(&self, prev: &State, rng: &mut RngStream) -> State {
            s(prev[0] + rng.uniform())
        }
        fn log_transition(&self, _x: &State, _prev: &State) -> f64 {
            0.0
        }
        fn sample_observation(&self, x: &State, _rng: &mut RngStream) -> State {
            x.clone()
        }
        fn log_likelihood(&self, _y: &State, _x: &State) -> f64 {
            -1.5
        }
    }

    #[test]
    fn flat_likelihood_keeps_uniform_weights() {
        let mut rng = RngStream::new(1, 0);
        let mut c = ParticleCloud::root(8);
        for _ in 0..3 {
            c = sir_step(
                &c,
                &Flat,
                &TransitionProposal,
                &s(0.0),
                ResamplePolicy::Never,
                &mut rng,
            )
            .unwrap();
            for w in &c.weights {
                assert_abs_diff_eq!(*w, 0.125, epsilon = 1e-15);
            }
        }
        assert_eq!(c.sampling_ops, 24);
    }

    #[test]
    fn normalized_ess_examples() {
        assert_eq!(normalized_ess(&[0.25; 4]), 1.0);
        assert_eq!(normalized_ess(&[1.0, 0.0, 0.0, 0.0]), 0.25);
        assert_abs_diff_eq!(
            normalized_ess(&[0.5, 0.25, 0.25]),
            8.0 / 9.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn estimator_examples() {
        let xs = vec![s(1.0), s(2.0), s(6.0)];
        assert_eq!(weighted_mean(&xs, &[0.0, 0.0, 1.0])[0], 6.0);
        assert_abs_diff_eq!(
            weighted_mean(&xs, &[1.0 / 3.0; 3])[0],
            plain_mean(&xs)[0],
            epsilon = 1e-15
        );
    }

    #[test]
    fn leave_one_out_matches_direct_sum() {
        let v = [0.3, -1.0, f64::NEG_INFINITY, 2.0];
        let loo = leave_one_out_lse(&v);
        for l in 0..v.len() {
            let rest: Vec<f64> = (0..v.len()).filter(|&j| j != l).map(|j| v[j]).collect();
            assert_abs_diff_eq!(loo[l], log_sum_exp(&rest), epsilon = 1e-12);
        }
        assert_eq!(leave_one_out_lse(&[1.0]), vec![f64::NEG_INFINITY]);
    }

    #[test]
    fn single_trajectory_second_stage_is_importance_weighting() {
        let m = ArchModel::standard();
        let mut rng = RngStream::new(2, 0);
        let root = ParticleCloud::root(1);
        let y = s(1.0);
        let (_, table) =
            independent_sir_step(&root, &m, &TransitionProposal, &y, 6, &mut rng).unwrap();
        let (w, deg) = second_stage_weights(&table).unwrap();
        assert!(!deg);
        let lr: Vec<f64> = table.rows.iter().map(|r| r.log_weights[0]).collect();
        let expect = normalize_log_weights(&lr).unwrap();
        for (a, b) in w.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn independent_step_ledger() {
        let m = ArchModel::standard();
        let mut rng = RngStream::new(3, 0);
        let mut c = ParticleCloud::root(5);
        for k in 1..=4u64 {
            c = independent_sir_step(&c, &m, &TransitionProposal, &s(0.5), 5, &mut rng)
                .unwrap()
                .0;
            assert_eq!(c.sampling_ops, k * 30);
            assert_eq!(c.len(), 5);
        }
        assert_eq!(c.prev_states.len(), 5);
    }

    #[test]
    fn fa_apf_needs_closed_forms() {
        let c = ParticleCloud::root(3);
        let err = fa_apf_step(&c, &Flat, &s(0.0), &mut RngStream::new(0, 0)).unwrap_err();
        assert_eq!(err, SmcError::ModelLacksClosedForms);
    }

    #[test]
    fn all_zero_likelihood_falls_back_to_uniform() {
        struct Impossible;
        impl StateSpaceModel for Impossible {
            fn state_dim(&self) -> usize {
                1
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn sample_initial(&self, _rng: &mut RngStream) -> State {
                s(0.0)
            }
            fn log_initial(&self, _x: &State) -> f64 {
                0.0
            }
            fn sample_transition(&self, prev: &State, _rng: &mut RngStream) -> State {
                prev.clone()
            }
            fn log_transition(&self, _x: &State, _prev: &State) -> f64 {
                0.0
            }
            fn sample_observation(&self, x: &State, _rng: &mut RngStream) -> State {
                x.clone()
            }
            fn log_likelihood(&self, _y: &State, _x: &State) -> f64 {
                f64::NEG_INFINITY
            }
        }
        let c = ParticleCloud::root(4);
        let mut rng = RngStream::new(0, 0);
        let next = sir_step(
            &c,
            &Impossible,
            &TransitionProposal,
            &s(0.0),
            ResamplePolicy::Always,
            &mut rng,
        )
        .unwrap();
        assert_eq!(next.degenerate_steps, 1);
        assert_eq!(next.pre_resample.weights, vec![0.25; 4]);
    }
}
