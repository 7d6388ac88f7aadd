//! Property suites run by `irsmc verify`.
//!
//! Every check that resamples goes through the [`Resampler`] handed in by
//! the caller, so a broken resampler is caught by the suite itself.

use irsmc::filters::{
    apf_step_with, fa_apf_step, run_filter_with, sir_step_with, ApfSpec, FilterKind, FirstStage,
    ParticleCloud, ResamplePolicy,
};
use irsmc::models::{
    simulate, ArchModel, LinearGaussianSSM, OptimalProposal, Proposal, TransitionProposal,
};
use irsmc::sampling::{effective_sample_size, normalize_log_weights, Resampler};
use irsmc::static_is::{
    estimate_is, estimate_isir, estimate_isir_w, estimate_sir, estimate_sir2, estimate_sir_w,
    sample_independent_sir, DiscreteTarget, EstimatorKind,
};
use irsmc::RngStream;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::run_bench;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn run_verify(resampler: &dyn Resampler, seed: u64) -> VerifyReport {
    VerifyReport {
        checks: vec![
            check("weight_normalization", weight_normalization(seed)),
            check("ess_bounds", ess_bounds(seed)),
            check(
                "resampling_unbiasedness",
                resampling_unbiasedness(resampler, seed),
            ),
            check("fa_apf_uniform_weights", fa_apf_uniform_weights(seed)),
            check("apf_reduces_to_sir", apf_reduces_to_sir(resampler, seed)),
            check("budget_ledger", budget_ledger(resampler, seed)),
            check("determinism", determinism(resampler, seed)),
        ],
    }
}

fn weight_normalization(seed: u64) -> Result<String, String> {
    let mut rng = RngStream::derive(seed, &[10]);
    let mut worst = 0.0f64;
    for case in 0..2000 {
        let n = 1 + case % 40;
        let offset = match case % 4 {
            0 => 0.0,
            1 => 1e6,
            2 => -1e6,
            _ => 700.0,
        };
        let mut lw: Vec<f64> = (0..n)
            .map(|_| offset + 50.0 * (rng.uniform() - 0.5))
            .collect();
        if n > 1 && case % 5 == 0 {
            lw[0] = f64::NEG_INFINITY;
        }
        let w = normalize_log_weights(&lw).map_err(|e| format!("case {case}: {e}"))?;
        let total: f64 = w.iter().sum();
        worst = worst.max((total - 1.0).abs());
        ensure(w.iter().all(|v| (0.0..=1.0).contains(v)), || {
            format!("case {case}: weight out of [0, 1]")
        })?;
        let shifted: Vec<f64> = lw.iter().map(|v| v - 123.5).collect();
        let w2 = normalize_log_weights(&shifted).map_err(|e| e.to_string())?;
        let drift = w
            .iter()
            .zip(&w2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(drift < 1e-12, || {
            format!("case {case}: shift changed weights by {drift:e}")
        })?;
    }
    ensure(worst < 1e-12, || {
        format!("sum deviates from one by {worst:e}")
    })?;
    ensure(
        normalize_log_weights(&[f64::NEG_INFINITY; 3]).is_err(),
        || "all-zero weights accepted".into(),
    )?;
    Ok(format!("2000 vectors, max |sum - 1| = {worst:.1e}"))
}

fn ess_bounds(seed: u64) -> Result<String, String> {
    let mut rng = RngStream::derive(seed, &[11]);
    for n in 1..=50 {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform().powi(3)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let ess = effective_sample_size(&w);
        ensure((1.0 - 1e-12..=n as f64 + 1e-9).contains(&ess), || {
            format!("N={n}: ESS={ess}")
        })?;
        let uniform = effective_sample_size(&vec![1.0 / n as f64; n]);
        ensure((uniform - n as f64).abs() < 1e-9, || {
            format!("uniform N={n}: ESS={uniform}")
        })?;
        let mut one_hot = vec![0.0; n];
        one_hot[n / 2] = 1.0;
        ensure(effective_sample_size(&one_hot) == 1.0, || {
            format!("one-hot N={n}")
        })?;
    }
    Ok("1 <= ESS <= N on 50 random vectors, uniform and one-hot extremes exact".into())
}

/// Multinomial offspring counts against `m * w` by a chi-square test.
fn resampling_unbiasedness(resampler: &dyn Resampler, seed: u64) -> Result<String, String> {
    let w = [0.05, 0.4, 0.1, 0.3, 0.15];
    let (m, reps) = (10, 4000);
    let mut rng = RngStream::derive(seed, &[12]);
    let mut counts = [0u64; 5];
    for _ in 0..reps {
        let idx = resampler.resample(&w, m, &mut rng);
        ensure(idx.len() == m, || {
            format!("resampler returned {} indices for {m}", idx.len())
        })?;
        for i in idx {
            ensure(i < w.len(), || format!("index {i} out of range"))?;
            counts[i] += 1;
        }
    }
    let total = (m * reps) as f64;
    let stat: f64 = counts
        .iter()
        .zip(&w)
        .map(|(&c, p)| (c as f64 - total * p).powi(2) / (total * p))
        .sum();
    let pv = 1.0 - ChiSquared::new((w.len() - 1) as f64).unwrap().cdf(stat);
    ensure(pv > 1e-3, || {
        format!("offspring counts {counts:?} reject E[count] = m w (p = {pv:.2e})")
    })?;
    // a zero-weight particle is never selected
    let idx = resampler.resample(&[0.5, 0.0, 0.5], 1000, &mut rng);
    ensure(!idx.contains(&1), || {
        "zero-weight particle resampled".into()
    })?;
    Ok(format!("chi-square p = {pv:.3} over {} draws", m * reps))
}

fn fa_apf_uniform_weights(seed: u64) -> Result<String, String> {
    let model = ArchModel::standard();
    let mut rng = RngStream::derive(seed, &[13]);
    let tr = simulate(&model, 30, &mut rng);
    let n = 40;
    let mut cloud = ParticleCloud::root(n);
    for (k, y) in tr.observations.iter().enumerate() {
        cloud = fa_apf_step(&cloud, &model, y, &mut rng).map_err(|e| e.to_string())?;
        let dev = cloud
            .weights
            .iter()
            .map(|w| (w - 1.0 / n as f64).abs())
            .fold(0.0, f64::max);
        ensure(dev < 1e-15, || {
            format!("step {k}: weights deviate from 1/N by {dev:e}")
        })?;
    }
    Ok(format!("{} steps, N={n}", tr.observations.len()))
}

fn apf_reduces_to_sir(resampler: &dyn Resampler, seed: u64) -> Result<String, String> {
    let model = ArchModel::standard();
    let mut rng = RngStream::derive(seed, &[14]);
    let tr = simulate(&model, 20, &mut rng);
    let n = 25;
    let (mut sir, mut apf) = (ParticleCloud::root(n), ParticleCloud::root(n));
    let (mut ra, mut rb) = (
        RngStream::derive(seed, &[14, 1]),
        RngStream::derive(seed, &[14, 1]),
    );
    let spec = ApfSpec {
        first_stage: FirstStage::Weights,
        proposal: &TransitionProposal,
    };
    for (k, y) in tr.observations.iter().enumerate() {
        sir = sir_step_with(
            &sir,
            &model,
            &TransitionProposal,
            y,
            ResamplePolicy::Always,
            resampler,
            &mut ra,
        )
        .map_err(|e| e.to_string())?;
        apf =
            apf_step_with(&apf, &model, y, spec, resampler, &mut rb).map_err(|e| e.to_string())?;
        ensure(sir.pre_resample.states == apf.states, || {
            format!("step {k}: states differ")
        })?;
        let dev = sir
            .pre_resample
            .weights
            .iter()
            .zip(&apf.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(dev < 1e-12, || {
            format!("step {k}: weights differ by {dev:e}")
        })?;
    }
    Ok(format!(
        "{} steps identical seed for seed",
        tr.observations.len()
    ))
}

fn budget_ledger(resampler: &dyn Resampler, seed: u64) -> Result<String, String> {
    let model = ArchModel::standard();
    let mut rng = RngStream::derive(seed, &[15]);
    let tr = simulate(&model, 9, &mut rng);
    let t = tr.observations.len();
    let n = 7;
    let kinds: [(FilterKind, &dyn Proposal); 7] = [
        (FilterKind::Sir(ResamplePolicy::Always), &TransitionProposal),
        (FilterKind::Sir(ResamplePolicy::Never), &TransitionProposal),
        (FilterKind::ISir, &TransitionProposal),
        (FilterKind::ISirW, &TransitionProposal),
        (FilterKind::Apf(FirstStage::Weights), &TransitionProposal),
        (FilterKind::Apf(FirstStage::Predictive), &TransitionProposal),
        (FilterKind::FaApf, &OptimalProposal),
    ];
    for (kind, proposal) in kinds {
        let run = run_filter_with(
            &model,
            proposal,
            kind,
            n,
            &tr.observations,
            resampler,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let want = kind.budget(n, t);
        ensure(run.sampling_ops == want, || {
            format!(
                "{}: {} operations, ledger says {want}",
                kind.label(),
                run.sampling_ops
            )
        })?;
    }
    let toy = DiscreteTarget::new(&[1.0, 3.0], &[0.5, 0.5]).map_err(|e| e.to_string())?;
    let (n, m) = (6, 4);
    let sample = sample_independent_sir(&toy, n, m, &mut rng).map_err(|e| e.to_string())?;
    let static_runs = [
        (EstimatorKind::Is, estimate_is(&toy, n, &mut rng), n, n),
        (EstimatorKind::Sir, estimate_sir(&toy, n, m, &mut rng), n, m),
        (
            EstimatorKind::Sir2,
            estimate_sir2(&toy, m, &mut rng),
            m * m,
            m,
        ),
        (
            EstimatorKind::SirW,
            estimate_sir_w(&toy, n, m, &mut rng),
            n,
            m,
        ),
        (EstimatorKind::ISir, estimate_isir(&sample, &toy), n, m),
        (EstimatorKind::ISirW, estimate_isir_w(&sample, &toy), n, m),
    ];
    for (kind, est, bn, bm) in static_runs {
        let est = est.map_err(|e| e.to_string())?;
        ensure(est.sampling_ops == kind.budget(bn, bm), || {
            format!("{}: {} operations", kind.label(), est.sampling_ops)
        })?;
    }
    Ok("7 filters and 6 static estimators match the ledger".into())
}

fn determinism(resampler: &dyn Resampler, seed: u64) -> Result<String, String> {
    let model = LinearGaussianSSM::high_dimensional(1).map_err(|e| e.to_string())?;
    let tr = simulate(&model, 10, &mut RngStream::derive(seed, &[16]));
    let go = || {
        run_filter_with(
            &model,
            &TransitionProposal,
            FilterKind::Sir(ResamplePolicy::Always),
            50,
            &tr.observations,
            resampler,
            &mut RngStream::derive(seed, &[16, 1]),
        )
        .map(|r| r.estimates)
    };
    ensure(go().ok() == go().ok(), || {
        "two filter runs with one seed differ".into()
    })?;

    let mut cfg = ExperimentConfig::defaults(Experiment::Arch);
    cfg.sizes = vec![4, 8];
    cfg.runs = 6;
    cfg.horizon = 5;
    cfg.seed = seed;
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())
            .and_then(|pool| {
                pool.install(|| run_bench(&cfg, false))
                    .map_err(|e| e.to_string())
            })
    };
    let one = in_pool(1)?;
    let four = in_pool(4)?;
    ensure(one.rows == four.rows, || {
        "bench rows depend on the thread count".into()
    })?;
    Ok(format!(
        "{} bench rows identical on 1 and 4 threads",
        one.rows.len()
    ))
}
