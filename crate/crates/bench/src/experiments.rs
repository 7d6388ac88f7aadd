//! The four Monte Carlo campaigns.
//!
//! Every run draws its own ground truth and every (run, algorithm, size)
//! triple its own random stream, derived from the master seed. Results are
//! therefore identical whatever the number of worker threads, and adding an
//! algorithm or a size leaves the other numbers unchanged.

use std::time::Instant;

use irsmc::filters::{run_filter, FilterKind, FirstStage, ResamplePolicy};
use irsmc::models::{
    kalman_filter, simulate, ArchModel, LinearGaussianSSM, OptimalProposal, Proposal,
    RangeBearingModel, StateSpaceModel, StaticGaussianTarget, TransitionProposal,
};
use irsmc::static_is::{
    estimate_is, estimate_isir, estimate_isir_w, estimate_sir, estimate_sir2, estimate_sir_w,
    sample_independent_sir, EstimatorKind,
};
use irsmc::{RngStream, SmcError};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Experiment, ExperimentConfig, Scenario};
use crate::report::{metric, BenchReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("filter failure: {0}")]
    Smc(#[from] SmcError),
    #[error("output: {0}")]
    Io(String),
}

/// Static estimators in table order.
pub const STATIC_ALGOS: [EstimatorKind; 6] = [
    EstimatorKind::Sir,
    EstimatorKind::SirW,
    EstimatorKind::Is,
    EstimatorKind::ISir,
    EstimatorKind::Sir2,
    EstimatorKind::ISirW,
];

fn kind_id(kind: EstimatorKind) -> u64 {
    STATIC_ALGOS.iter().position(|&k| k == kind).unwrap() as u64
}

#[derive(Debug, Clone)]
pub struct StaticRun {
    pub x: f64,
    pub y: f64,
    pub posterior_mean: f64,
    /// `estimates[size][algo]`, sizes in config order, algos as [`STATIC_ALGOS`].
    pub estimates: Vec<[f64; 6]>,
}

#[derive(Debug, Clone)]
pub struct StaticBench {
    pub config: ExperimentConfig,
    pub runs: Vec<StaticRun>,
    pub posterior_var: f64,
    pub wall_ms: f64,
}

/// Static Gaussian campaign: each run draws `(x, y)` from the joint model and
/// computes the six estimates of `E(X | y)` at every size.
pub fn run_static_bench(cfg: &ExperimentConfig) -> Result<StaticBench, BenchError> {
    cfg.validate()?;
    let start = Instant::now();
    let tag = Experiment::Static.tag();
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|p| {
            let mut truth = RngStream::derive(cfg.seed, &[tag, p as u64, 0]);
            let z1: f64 = StandardNormal.sample(&mut truth);
            let z2: f64 = StandardNormal.sample(&mut truth);
            let x = cfg.sigma_x2.sqrt() * z1;
            let y = x + cfg.sigma_y2.sqrt() * z2;
            let target = StaticGaussianTarget {
                sigma_x2: cfg.sigma_x2,
                sigma_y2: cfg.sigma_y2,
                y,
            };
            let estimates = cfg
                .sizes
                .iter()
                .map(|&n| static_estimates(&target, n, cfg.seed, &[tag, p as u64, 1, n as u64]))
                .collect::<Result<Vec<_>, SmcError>>()?;
            Ok(StaticRun {
                x,
                y,
                posterior_mean: target.posterior_mean(),
                estimates,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    Ok(StaticBench {
        config: cfg.clone(),
        runs,
        posterior_var: 1.0 / (1.0 / cfg.sigma_x2 + 1.0 / cfg.sigma_y2),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// The six estimates at size `n` (N intermediate and N final samples).
fn static_estimates(
    t: &StaticGaussianTarget,
    n: usize,
    seed: u64,
    path: &[u64],
) -> Result<[f64; 6], SmcError> {
    let stream = |kind: EstimatorKind| {
        let mut p = path.to_vec();
        p.push(kind_id(kind));
        RngStream::derive(seed, &p)
    };
    let mut out = [0.0; 6];
    out[0] = estimate_sir(t, n, n, &mut stream(EstimatorKind::Sir))?.value[0];
    out[1] = estimate_sir_w(t, n, n, &mut stream(EstimatorKind::SirW))?.value[0];
    out[2] = estimate_is(t, n, &mut stream(EstimatorKind::Is))?.value[0];
    // I-SIR and I-SIR-w share one independent sample
    let sample = sample_independent_sir(t, n, n, &mut stream(EstimatorKind::ISir))?;
    out[3] = estimate_isir(&sample, t)?.value[0];
    out[4] = estimate_sir2(t, n, &mut stream(EstimatorKind::Sir2))?.value[0];
    out[5] = estimate_isir_w(&sample, t)?.value[0];
    Ok(out)
}

/// Sampling operations of one static estimate at size `n`. SIR-2 uses
/// `n^2` intermediates.
pub fn static_ops(kind: EstimatorKind, n: usize) -> u64 {
    match kind {
        EstimatorKind::Sir2 => kind.budget(n * n, n),
        _ => kind.budget(n, n),
    }
}

impl StaticBench {
    fn column(&self, size: usize, algo: usize) -> impl Iterator<Item = (&StaticRun, f64)> {
        self.runs.iter().map(move |r| (r, r.estimates[size][algo]))
    }

    /// `estimate - x` per run.
    pub fn errors(&self, size: usize, algo: usize) -> Vec<f64> {
        self.column(size, algo).map(|(r, e)| e - r.x).collect()
    }

    /// RMSE against the true `x`, over all runs.
    pub fn rmse(&self, size: usize, algo: usize) -> f64 {
        let e = self.errors(size, algo);
        (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
    }

    /// Same population quantity as [`StaticBench::rmse`], with the squared
    /// distance between `x` and the exact posterior mean replaced by its
    /// expectation, the posterior variance.
    pub fn rmse_conditional(&self, size: usize, algo: usize) -> f64 {
        let n = self.runs.len() as f64;
        let mse: f64 = self
            .column(size, algo)
            .map(|(r, e)| (e - r.posterior_mean).powi(2))
            .sum::<f64>()
            / n;
        (self.posterior_var + mse).sqrt()
    }

    pub fn to_report(&self, timing: bool) -> BenchReport {
        let mut rep = BenchReport::new(self.config.hash());
        for (si, &n) in self.config.sizes.iter().enumerate() {
            for (ai, kind) in STATIC_ALGOS.iter().enumerate() {
                let label = kind.label();
                let ops = static_ops(*kind, n) as f64;
                for (p, e) in self.errors(si, ai).iter().enumerate() {
                    rep.push("static", label, n, n, Some(p), metric::RMSE, e.abs());
                }
                rep.push("static", label, n, n, None, metric::RMSE, self.rmse(si, ai));
                rep.push("static", label, n, n, None, metric::OPS, ops);
            }
        }
        if timing {
            rep.push("static", "all", 0, 0, None, metric::WALL, self.wall_ms);
        }
        rep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalChoice {
    Transition,
    Optimal,
}

impl ProposalChoice {
    fn get(self) -> &'static dyn Proposal {
        match self {
            ProposalChoice::Transition => &TransitionProposal,
            ProposalChoice::Optimal => &OptimalProposal,
        }
    }
}

/// One filter configuration of a sequential campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqAlgo {
    pub label: &'static str,
    pub kind: FilterKind,
    pub proposal: ProposalChoice,
    /// Particles used by the filter.
    pub particles: usize,
    /// Size the row is reported under (`M` column).
    pub size: usize,
}

impl SeqAlgo {
    fn stream_id(&self) -> u64 {
        match self.label {
            "fa_apf" => 1,
            "apf" => 2,
            "isir" => 3,
            "isir_w" => 4,
            "sis" => 5,
            _ => 99,
        }
    }
}

/// Per-run summary of one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqRunStats {
    /// `|estimate_k - x_k|^2` for `k = 0..=T`.
    pub sq_err: Vec<f64>,
    /// `|estimate_k - kalman_k|^2` when an exact reference exists.
    pub sq_err_kalman: Option<Vec<f64>>,
    pub ess_mean: f64,
    pub degenerate_steps: usize,
    pub sampling_ops: u64,
}

impl SeqRunStats {
    /// Time-averaged RMSE of a single run.
    pub fn rmse(&self) -> f64 {
        self.sq_err.iter().map(|v| v.sqrt()).sum::<f64>() / self.sq_err.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SeqCell {
    pub algo: SeqAlgo,
    pub runs: Vec<SeqRunStats>,
    pub wall_ms: f64,
}

/// Time-averaged RMSE over runs: mean over `k` of the root of the run-mean
/// squared error at `k`.
pub fn rmse_over_runs<'a>(runs: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let mut acc: Vec<f64> = Vec::new();
    let mut p = 0usize;
    for sq in runs {
        if acc.is_empty() {
            acc = vec![0.0; sq.len()];
        }
        for (a, v) in acc.iter_mut().zip(sq) {
            *a += v;
        }
        p += 1;
    }
    acc.iter().map(|v| (v / p as f64).sqrt()).sum::<f64>() / acc.len() as f64
}

impl SeqCell {
    pub fn rmse(&self) -> f64 {
        rmse_over_runs(self.runs.iter().map(|r| r.sq_err.as_slice()))
    }

    /// RMSE restricted to the listed runs (with repetition), for resampling.
    pub fn rmse_of(&self, runs: &[usize]) -> f64 {
        rmse_over_runs(runs.iter().map(|&p| self.runs[p].sq_err.as_slice()))
    }

    pub fn ess_mean(&self) -> f64 {
        self.runs.iter().map(|r| r.ess_mean).sum::<f64>() / self.runs.len() as f64
    }
}

/// Results of one model within a sequential campaign.
#[derive(Debug, Clone)]
pub struct SeqSection {
    pub model: String,
    pub state_dim: usize,
    pub cells: Vec<SeqCell>,
    /// Squared error of the exact filter, per run, when the model is linear-Gaussian.
    pub kalman: Option<Vec<Vec<f64>>>,
}

impl SeqSection {
    pub fn cell(&self, label: &str, size: usize) -> Option<&SeqCell> {
        self.cells
            .iter()
            .find(|c| c.algo.label == label && c.algo.size == size)
    }

    pub fn kalman_rmse(&self) -> Option<f64> {
        self.kalman
            .as_ref()
            .map(|k| rmse_over_runs(k.iter().map(|v| v.as_slice())))
    }
}

#[derive(Debug, Clone)]
pub struct SeqBench {
    pub config: ExperimentConfig,
    pub sections: Vec<SeqSection>,
    pub wall_ms: f64,
}

impl SeqBench {
    pub fn section(&self, model: &str) -> Option<&SeqSection> {
        self.sections.iter().find(|s| s.model == model)
    }

    pub fn to_report(&self, timing: bool) -> BenchReport {
        let mut rep = BenchReport::new(self.config.hash());
        for s in &self.sections {
            for c in &s.cells {
                let (label, n, m) = (c.algo.label, c.algo.particles, c.algo.size);
                for (p, r) in c.runs.iter().enumerate() {
                    rep.push(&s.model, label, n, m, Some(p), metric::RMSE, r.rmse());
                    rep.push(&s.model, label, n, m, Some(p), metric::ESS, r.ess_mean);
                    rep.push(
                        &s.model,
                        label,
                        n,
                        m,
                        Some(p),
                        metric::DEGENERATE,
                        r.degenerate_steps as f64,
                    );
                    rep.push(
                        &s.model,
                        label,
                        n,
                        m,
                        Some(p),
                        metric::OPS,
                        r.sampling_ops as f64,
                    );
                }
                let degenerate: usize = c.runs.iter().map(|r| r.degenerate_steps).sum();
                rep.push(&s.model, label, n, m, None, metric::RMSE, c.rmse());
                rep.push(&s.model, label, n, m, None, metric::ESS, c.ess_mean());
                rep.push(
                    &s.model,
                    label,
                    n,
                    m,
                    None,
                    metric::DEGENERATE,
                    degenerate as f64,
                );
                rep.push(
                    &s.model,
                    label,
                    n,
                    m,
                    None,
                    metric::OPS,
                    c.runs[0].sampling_ops as f64,
                );
                if timing {
                    rep.push(&s.model, label, n, m, None, metric::WALL, c.wall_ms);
                }
            }
            if let Some(k) = s.kalman_rmse() {
                rep.push(&s.model, "kalman", 0, 0, None, metric::RMSE, k);
            }
        }
        rep
    }
}

/// Runs every algorithm on `cfg.runs` simulated trajectories of `model`.
fn run_section(
    cfg: &ExperimentConfig,
    model_id: &str,
    section_tag: u64,
    model: &dyn StateSpaceModel,
    exact: Option<&LinearGaussianSSM>,
    algos: &[SeqAlgo],
) -> Result<SeqSection, BenchError> {
    let tag = cfg.experiment.tag();
    type RunOut = (Vec<(SeqRunStats, f64)>, Option<Vec<f64>>);
    let per_run: Vec<RunOut> = (0..cfg.runs)
        .into_par_iter()
        .map(|p| -> Result<RunOut, BenchError> {
            let base = [tag, section_tag, p as u64];
            let mut truth = RngStream::derive(cfg.seed, &[base[0], base[1], base[2], 0]);
            let tr = simulate(model, cfg.horizon, &mut truth);
            let kf = exact
                .map(|m| kalman_filter(m, &tr.observations))
                .transpose()?;
            let kalman_err = kf.as_ref().map(|kf| {
                kf.iter()
                    .zip(&tr.states)
                    .map(|(k, x)| (&k.mean - x).norm_squared())
                    .collect()
            });
            let stats = algos
                .iter()
                .map(|a| {
                    let mut rng = RngStream::derive(
                        cfg.seed,
                        &[base[0], base[1], base[2], a.stream_id(), a.particles as u64],
                    );
                    let start = Instant::now();
                    let run = run_filter(
                        model,
                        a.proposal.get(),
                        a.kind,
                        a.particles,
                        &tr.observations,
                        &mut rng,
                    )?;
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    let sq_err = run
                        .estimates
                        .iter()
                        .zip(&tr.states)
                        .map(|(e, x)| (e - x).norm_squared())
                        .collect();
                    let sq_err_kalman = kf.as_ref().map(|kf| {
                        run.estimates
                            .iter()
                            .zip(kf)
                            .map(|(e, k)| (e - &k.mean).norm_squared())
                            .collect()
                    });
                    let ess_mean = run.ess.iter().sum::<f64>() / run.ess.len() as f64;
                    Ok((
                        SeqRunStats {
                            sq_err,
                            sq_err_kalman,
                            ess_mean,
                            degenerate_steps: run.degenerate_steps,
                            sampling_ops: run.sampling_ops,
                        },
                        ms,
                    ))
                })
                .collect::<Result<Vec<_>, BenchError>>()?;
            Ok((stats, kalman_err))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let mut cells: Vec<SeqCell> = algos
        .iter()
        .map(|&algo| SeqCell {
            algo,
            runs: Vec::with_capacity(cfg.runs),
            wall_ms: 0.0,
        })
        .collect();
    let mut kalman = exact.map(|_| Vec::with_capacity(cfg.runs));
    for (stats, kerr) in per_run {
        for (cell, (s, ms)) in cells.iter_mut().zip(stats) {
            cell.runs.push(s);
            cell.wall_ms += ms;
        }
        if let (Some(k), Some(e)) = (kalman.as_mut(), kerr) {
            k.push(e);
        }
    }
    Ok(SeqSection {
        model: model_id.to_string(),
        state_dim: model.state_dim(),
        cells,
        kalman,
    })
}

fn independent_algos(m: usize) -> [SeqAlgo; 2] {
    [
        SeqAlgo {
            label: "isir",
            kind: FilterKind::ISir,
            proposal: ProposalChoice::Transition,
            particles: m,
            size: m,
        },
        SeqAlgo {
            label: "isir_w",
            kind: FilterKind::ISirW,
            proposal: ProposalChoice::Transition,
            particles: m,
            size: m,
        },
    ]
}

/// Bootstrap SIR at the baseline size plus I-SIR and I-SIR-w at each `M`.
pub fn budget_matched_algos(cfg: &ExperimentConfig) -> Vec<SeqAlgo> {
    cfg.sizes
        .iter()
        .flat_map(|&m| {
            let sis = SeqAlgo {
                label: "sis",
                kind: FilterKind::Sir(ResamplePolicy::Always),
                proposal: ProposalChoice::Transition,
                particles: cfg.baseline_particles(m),
                size: m,
            };
            std::iter::once(sis).chain(independent_algos(m))
        })
        .collect()
}

/// FA-APF, APF with predictive first stage and transition proposal, I-SIR
/// and I-SIR-w, all with `N` particles.
pub fn arch_algos(cfg: &ExperimentConfig) -> Vec<SeqAlgo> {
    cfg.sizes
        .iter()
        .flat_map(|&n| {
            [
                SeqAlgo {
                    label: "fa_apf",
                    kind: FilterKind::FaApf,
                    proposal: ProposalChoice::Optimal,
                    particles: n,
                    size: n,
                },
                SeqAlgo {
                    label: "apf",
                    kind: FilterKind::Apf(FirstStage::Predictive),
                    proposal: ProposalChoice::Transition,
                    particles: n,
                    size: n,
                },
            ]
            .into_iter()
            .chain(independent_algos(n))
        })
        .collect()
}

fn timed(
    cfg: &ExperimentConfig,
    f: impl FnOnce() -> Result<Vec<SeqSection>, BenchError>,
) -> Result<SeqBench, BenchError> {
    cfg.validate()?;
    let start = Instant::now();
    let sections = f()?;
    Ok(SeqBench {
        config: cfg.clone(),
        sections,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn run_arch_bench(cfg: &ExperimentConfig) -> Result<SeqBench, BenchError> {
    timed(cfg, || {
        let model = ArchModel::new(cfg.beta0, cfg.beta1, cfg.r)?;
        Ok(vec![run_section(
            cfg,
            "arch",
            0,
            &model,
            None,
            &arch_algos(cfg),
        )?])
    })
}

/// Range-bearing tracking, model ids `tracking_moderate` / `tracking_informative`.
pub fn run_tracking_bench(cfg: &ExperimentConfig) -> Result<SeqBench, BenchError> {
    timed(cfg, || {
        let scenarios: &[(Scenario, &str, f64, f64)] = &[
            (
                Scenario::Moderate,
                "tracking_moderate",
                0.25,
                std::f64::consts::PI / 720.0,
            ),
            (
                Scenario::Informative,
                "tracking_informative",
                0.05,
                std::f64::consts::PI / 3600.0,
            ),
        ];
        let algos = budget_matched_algos(cfg);
        let mut out = Vec::new();
        for (tag, &(sc, id, rho, theta)) in scenarios.iter().enumerate() {
            if cfg.scenario != Scenario::Both && cfg.scenario != sc {
                continue;
            }
            let model = RangeBearingModel::new(
                1.0,
                cfg.sigma_q2,
                cfg.sigma_rho.unwrap_or(rho),
                cfg.sigma_theta.unwrap_or(theta),
            )?;
            out.push(run_section(cfg, id, tag as u64, &model, None, &algos)?);
        }
        Ok(out)
    })
}

/// Block linear-Gaussian model at each dimension, model ids `highdim_m{dim}`.
pub fn run_highdim_bench(cfg: &ExperimentConfig) -> Result<SeqBench, BenchError> {
    timed(cfg, || {
        let algos = budget_matched_algos(cfg);
        cfg.dims
            .iter()
            .map(|&d| {
                let model = LinearGaussianSSM::cartesian_tracking(
                    d / 4,
                    cfg.hd_sigma_q2,
                    cfg.hd_sigma_obs2,
                    cfg.hd_sigma_obs2,
                )?;
                run_section(
                    cfg,
                    &format!("highdim_m{d}"),
                    d as u64,
                    &model,
                    Some(&model),
                    &algos,
                )
            })
            .collect()
    })
}

pub fn run_bench(cfg: &ExperimentConfig, timing: bool) -> Result<BenchReport, BenchError> {
    Ok(match cfg.experiment {
        Experiment::Static => run_static_bench(cfg)?.to_report(timing),
        Experiment::Arch => run_arch_bench(cfg)?.to_report(timing),
        Experiment::Tracking => run_tracking_bench(cfg)?.to_report(timing),
        Experiment::Highdim => run_highdim_bench(cfg)?.to_report(timing),
    })
}
