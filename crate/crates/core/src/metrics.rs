//! Correlation and error metrics between predicted and ground-truth scores.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::par::Exec;
use crate::types::FeatureSequence;

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("metric inputs of lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::DimensionTooSmall { what: "metric input length", actual: x.len(), min });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("metric input contains a non-finite value".into()));
    }
    Ok(())
}

/// Pearson linear correlation. Uses population moments; the `n` versus
/// `n - 1` factor cancels in the ratio.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("zero variance in correlation input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Root-mean-square error of scores given on the 0–1 scale, reported on
/// the 0–100 scale.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 1)?;
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (100.0 * p - 100.0 * t).powi(2)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// A correlation that could not be computed because an input was constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Degenerate(pub &'static str);

impl fmt::Display for Degenerate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

impl From<Degenerate> for Error {
    fn from(d: Degenerate) -> Self {
        Error::DegenerateInput(d.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub scc: std::result::Result<f64, Degenerate>,
    pub pcc: std::result::Result<f64, Degenerate>,
    pub rmse: f64,
}

fn degenerate_ok(r: Result<f64>) -> Result<std::result::Result<f64, Degenerate>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(Error::DegenerateInput(m)) => Ok(Err(Degenerate(m))),
        Err(e) => Err(e),
    }
}

impl Metrics {
    /// All three metrics; a constant input yields `Degenerate` correlations
    /// while RMSE is still reported.
    pub fn compute(pred: &[f64], target: &[f64]) -> Result<Self> {
        check_pair(pred, target, 1)?;
        let corr = |f: fn(&[f64], &[f64]) -> Result<f64>| {
            if pred.len() < 2 {
                Ok(Err(Degenerate("fewer than two samples")))
            } else {
                degenerate_ok(f(pred, target))
            }
        };
        Ok(Self {
            n: pred.len(),
            scc: corr(spearman)?,
            pcc: corr(pearson)?,
            rmse: rmse(pred, target)?,
        })
    }
}

/// EVAL-mode predictions (0–1 scale) for every sequence plus their metrics
/// against `targets` (0–1 scale).
pub fn evaluate(model: &Model, seqs: &[FeatureSequence], targets: &[f64], exec: Exec) -> Result<(Vec<f64>, Metrics)> {
    if seqs.len() != targets.len() {
        return Err(Error::Shape(format!("{} sequences for {} targets", seqs.len(), targets.len())));
    }
    if seqs.is_empty() {
        return Err(Error::Validation("evaluation split is empty".into()));
    }
    let pred = exec.map(seqs, |_, s| model.predict(s)).into_iter().collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::compute(&pred, targets)?;
    Ok((pred, metrics))
}

/// One line of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub split: String,
    pub seed: u64,
    pub metrics: Metrics,
}

fn cell(v: std::result::Result<f64, Degenerate>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `model,split,seed,scc,pcc,rmse`; degenerate correlations are left empty.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "split", "seed", "scc", "pcc", "rmse"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.split.clone(),
            r.seed.to_string(),
            cell(r.metrics.scc),
            cell(r.metrics.pcc),
            r.metrics.rmse.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
