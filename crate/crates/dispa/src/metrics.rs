//! Regression metrics: RMSE, Pearson correlation, and Spearman rank
//! correlation with average ranks for ties. Correlations on constant
//! vectors are undefined and reported as errors, not NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(pred: &[f64], obs: &[f64]) -> Result<()> {
    if pred.len() != obs.len() {
        return Err(Error::Stats(format!(
            "length mismatch: {} predictions vs {} observations",
            pred.len(),
            obs.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Stats("need at least 2 points".into()));
    }
    Ok(())
}

pub fn metric_rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_lengths(pred, obs)?;
    let n = pred.len() as f64;
    let s: f64 = pred
        .iter()
        .zip(obs)
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    Ok((s / n).sqrt())
}

pub fn metric_pcc(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_lengths(pred, obs)?;
    pearson(pred, obs)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats(
            "correlation undefined for a constant vector".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Ranks starting at 1; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn metric_scc(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_lengths(pred, obs)?;
    pearson(&average_ranks(pred), &average_ranks(obs))
}

/// One training run's held-out metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rmse: f64,
    pub pcc: f64,
    pub scc: f64,
}

pub fn run_metrics(pred: &[f64], obs: &[f64]) -> Result<RunMetrics> {
    Ok(RunMetrics {
        rmse: metric_rmse(pred, obs)?,
        pcc: metric_pcc(pred, obs)?,
        scc: metric_scc(pred, obs)?,
    })
}

/// Mean and sample standard deviation over repeated seeded runs; std is
/// reported only for two or more runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<RunMetrics>,
    pub mean: RunMetrics,
    pub std: Option<RunMetrics>,
}

pub fn aggregate_runs(per_seed: &[RunMetrics]) -> Result<MetricsReport> {
    if per_seed.is_empty() {
        return Err(Error::Stats("no runs to aggregate".into()));
    }
    let n = per_seed.len() as f64;
    let mean_of = |f: fn(&RunMetrics) -> f64| per_seed.iter().map(f).sum::<f64>() / n;
    let mean = RunMetrics {
        rmse: mean_of(|m| m.rmse),
        pcc: mean_of(|m| m.pcc),
        scc: mean_of(|m| m.scc),
    };
    let std = if per_seed.len() >= 2 {
        let sd_of = |f: fn(&RunMetrics) -> f64, mu: f64| {
            (per_seed.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(RunMetrics {
            rmse: sd_of(|m| m.rmse, mean.rmse),
            pcc: sd_of(|m| m.pcc, mean.pcc),
            scc: sd_of(|m| m.scc, mean.scc),
        })
    } else {
        None
    };
    Ok(MetricsReport {
        per_seed: per_seed.to_vec(),
        mean,
        std,
    })
}
