use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::stats;

/// Centre used by the reported median absolute deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MadCenter {
    /// `median(|tau_hat - median(tau_hat)|)`.
    #[default]
    Median,
    /// `median(|tau_hat - tau|)`.
    Truth,
}

impl FromStr for MadCenter {
    type Err = FrdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "median" | "classical" => Ok(MadCenter::Median),
            "truth" | "tau" => Ok(MadCenter::Truth),
            other => Err(FrdError::InvalidInput(format!("unknown MAD centre `{other}`"))),
        }
    }
}

impl fmt::Display for MadCenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MadCenter::Median => "median",
            MadCenter::Truth => "truth",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub median_bias: f64,
    pub mean_bias: f64,
    /// MAD under the selected centre.
    pub mad: f64,
    pub mad_classical: f64,
    pub mad_about_truth: f64,
    pub rmse: f64,
    /// Percent of intervals containing the truth; `None` without intervals.
    pub coverage: Option<f64>,
    pub mean_length: Option<f64>,
}

/// Location, spread and interval metrics. Order statistics are taken on a
/// sorted copy, so the result does not depend on the input order.
pub fn metrics(
    estimates: &[f64],
    tau_true: f64,
    intervals: Option<&[(f64, f64)]>,
    mad_center: MadCenter,
) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(FrdError::InvalidInput("no estimates".into()));
    }
    let sorted = stats::sorted(estimates);
    let med = stats::quantile_sorted(&sorted, 0.5);
    let dev_med: Vec<f64> = sorted.iter().map(|v| (v - med).abs()).collect();
    let dev_tau: Vec<f64> = sorted.iter().map(|v| (v - tau_true).abs()).collect();
    let mad_classical = stats::median(&dev_med);
    let mad_about_truth = stats::median(&dev_tau);
    let n = sorted.len() as f64;
    let mean_bias = sorted.iter().map(|v| v - tau_true).sum::<f64>() / n;
    let mse = sorted.iter().map(|v| (v - tau_true) * (v - tau_true)).sum::<f64>() / n;
    let (coverage, mean_length) = match intervals {
        Some(iv) if !iv.is_empty() => {
            let hits = iv.iter().filter(|(lo, hi)| *lo <= tau_true && tau_true <= *hi).count();
            let mut lengths: Vec<f64> = iv.iter().map(|(lo, hi)| hi - lo).collect();
            lengths.sort_by(|a, b| a.total_cmp(b));
            (
                Some(100.0 * hits as f64 / iv.len() as f64),
                Some(lengths.iter().sum::<f64>() / iv.len() as f64),
            )
        }
        _ => (None, None),
    };
    Ok(Metrics {
        median_bias: med - tau_true,
        mean_bias,
        mad: match mad_center {
            MadCenter::Median => mad_classical,
            MadCenter::Truth => mad_about_truth,
        },
        mad_classical,
        mad_about_truth,
        rmse: mse.sqrt(),
        coverage,
        mean_length,
    })
}
