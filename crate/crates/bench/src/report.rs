use std::io::Write;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Time-averaged RMSE over runs:
/// `(1/T) sum_k sqrt((1/P) sum_p |est[p][k] - truth[p][k]|^2)`.
///
/// `estimates[p][k]` is the estimate of run `p` at step `k`.
pub fn rmse<V: AsRef<[f64]>>(estimates: &[Vec<V>], truths: &[Vec<V>]) -> Result<f64, ReportError> {
    let mse = mse_per_step(estimates, truths)?;
    Ok(mse.iter().map(|v| v.sqrt()).sum::<f64>() / mse.len() as f64)
}

/// `(1/P) sum_p |est[p][k] - truth[p][k]|^2` for each step `k`.
pub fn mse_per_step<V: AsRef<[f64]>>(
    estimates: &[Vec<V>],
    truths: &[Vec<V>],
) -> Result<Vec<f64>, ReportError> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(ReportError::ShapeMismatch(format!(
            "{} runs of estimates, {} runs of truths",
            estimates.len(),
            truths.len()
        )));
    }
    let t = estimates[0].len();
    if t == 0 {
        return Err(ReportError::ShapeMismatch("no time steps".into()));
    }
    let mut acc = vec![0.0; t];
    for (p, (e, x)) in estimates.iter().zip(truths).enumerate() {
        if e.len() != t || x.len() != t {
            return Err(ReportError::ShapeMismatch(format!(
                "run {p} has a different horizon"
            )));
        }
        for (k, (ek, xk)) in e.iter().zip(x).enumerate() {
            let (ek, xk) = (ek.as_ref(), xk.as_ref());
            if ek.len() != xk.len() {
                return Err(ReportError::ShapeMismatch(format!(
                    "run {p} step {k}: dimension {} vs {}",
                    ek.len(),
                    xk.len()
                )));
            }
            acc[k] += ek.iter().zip(xk).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    let p = estimates.len() as f64;
    Ok(acc.into_iter().map(|v| v / p).collect())
}

/// Metric names of the CSV output.
pub mod metric {
    pub const RMSE: &str = "rmse_time_avg";
    pub const ESS: &str = "ess_norm_mean";
    pub const DEGENERATE: &str = "degenerate_steps";
    pub const OPS: &str = "sampling_ops";
    pub const WALL: &str = "wall_ms";
}

/// One `model,algo,N,M,run,metric,value` record. `run = None` marks the
/// aggregate over all runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub model: String,
    pub algo: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub run: Option<usize>,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub config_hash: String,
    pub rows: Vec<Row>,
}

pub const CSV_HEADER: [&str; 7] = ["model", "algo", "N", "M", "run", "metric", "value"];

impl BenchReport {
    pub fn new(config_hash: String) -> Self {
        BenchReport {
            config_hash,
            rows: Vec::new(),
        }
    }

    /// Model column value: the model id tagged with the config hash.
    pub fn model_tag(&self, model: &str) -> String {
        format!("{model}@{}", self.config_hash)
    }

    pub fn push(
        &mut self,
        model: &str,
        algo: &str,
        n: usize,
        m: usize,
        run: Option<usize>,
        metric: &str,
        value: f64,
    ) {
        self.rows.push(Row {
            model: self.model_tag(model),
            algo: algo.to_string(),
            n,
            m,
            run,
            metric: metric.to_string(),
            value,
        });
    }

    /// Aggregate value of `metric` for `algo` at final size `m`.
    pub fn aggregate(&self, model: &str, algo: &str, m: usize, metric: &str) -> Option<f64> {
        let tag = self.model_tag(model);
        self.rows
            .iter()
            .find(|r| {
                r.run.is_none()
                    && r.model == tag
                    && r.algo == algo
                    && r.m == m
                    && r.metric == metric
            })
            .map(|r| r.value)
    }

    /// Per-run values of `metric` for `algo` at final size `m`, in run order.
    pub fn per_run(&self, model: &str, algo: &str, m: usize, metric: &str) -> Vec<f64> {
        let tag = self.model_tag(model);
        let mut v: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.model == tag && r.algo == algo && r.m == m && r.metric == metric)
            .filter_map(|r| r.run.map(|p| (p, r.value)))
            .collect();
        v.sort_by_key(|&(p, _)| p);
        v.into_iter().map(|(_, x)| x).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let run = r.run.map_or_else(|| "all".to_string(), |p| p.to_string());
            w.write_record([
                r.model.as_str(),
                r.algo.as_str(),
                &r.n.to_string(),
                &r.m.to_string(),
                &run,
                r.metric.as_str(),
                &format_value(r.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(out, self)
    }
}

/// Shortest representation that parses back to the same `f64`.
fn format_value(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}
