use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::estimators::LambdaRule;
use crate::simlab::engine::{column, run_reps, McConfig};
use crate::stats;

/// Probabilities at which the centred estimates are summarised.
pub const QUANTILE_GRID: [f64; 9] = [0.001, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 0.999];
/// Probabilities for `|tau_hat - tau|`.
pub const ABS_QUANTILE_GRID: [f64; 5] = [0.5, 0.9, 0.99, 0.995, 0.999];

pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDraws {
    pub estimator: String,
    /// Completed estimates in replication order.
    pub estimates: Vec<f64>,
    pub reps_flagged_degenerate: usize,
    /// `(prob, q)` for `tau_hat - tau`.
    pub quantiles: Vec<(f64, f64)>,
    /// `(prob, q)` for `|tau_hat - tau|`.
    pub abs_quantiles: Vec<(f64, f64)>,
}

impl EstimatorDraws {
    pub fn abs_quantile(&self, prob: f64) -> Option<f64> {
        self.abs_quantiles
            .iter()
            .find(|(p, _)| (p - prob).abs() < 1e-12)
            .map(|&(_, q)| q)
    }
}

/// Reference laws centred at zero and calibrated to the reference estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCalibration {
    pub reference: String,
    /// Sample variance of the reference estimates.
    pub normal_variance: f64,
    /// `IQR / 2`, since a Cauchy law with scale `s` has IQR `2 s`.
    pub cauchy_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub tau_true: f64,
    pub reps: usize,
    pub seed: u64,
    pub draws: Vec<EstimatorDraws>,
    pub calibration: ReferenceCalibration,
}

impl SamplingDistribution {
    pub fn get(&self, label: &str) -> Option<&EstimatorDraws> {
        self.draws.iter().find(|d| d.estimator == label)
    }
}

/// The reference is the `Lambda(4)` estimator of order 1 when configured,
/// otherwise the first estimator.
fn reference_index(cfg: &McConfig) -> usize {
    cfg.estimators
        .iter()
        .position(|e| e.lambda == LambdaRule::Psi(4.0) && e.p == 1)
        .unwrap_or(0)
}

/// Raw estimates for each estimator plus tail summaries and normal/Cauchy
/// reference calibrations.
pub fn sampling_distribution(cfg: &McConfig) -> Result<SamplingDistribution> {
    if cfg.reps < MIN_REPS {
        return Err(FrdError::InvalidInput(format!(
            "sampling distribution needs at least {MIN_REPS} replications, got {}",
            cfg.reps
        )));
    }
    let outcomes = run_reps(cfg, false)?;
    let tau = cfg.dgp.tau_true;
    let mut draws = Vec::with_capacity(cfg.estimators.len());
    for (j, est) in cfg.estimators.iter().enumerate() {
        let (values, _, _) = column(&outcomes, j);
        if values.is_empty() {
            return Err(FrdError::EmptySummary(cfg.reps));
        }
        let centred = stats::sorted(&values.iter().map(|v| v - tau).collect::<Vec<_>>());
        let abs = stats::sorted(&centred.iter().map(|v| v.abs()).collect::<Vec<_>>());
        draws.push(EstimatorDraws {
            estimator: est.label.clone(),
            reps_flagged_degenerate: cfg.reps - values.len(),
            quantiles: QUANTILE_GRID
                .iter()
                .map(|&q| (q, stats::quantile_sorted(&centred, q)))
                .collect(),
            abs_quantiles: ABS_QUANTILE_GRID
                .iter()
                .map(|&q| (q, stats::quantile_sorted(&abs, q)))
                .collect(),
            estimates: values,
        });
    }
    let r = &draws[reference_index(cfg)];
    let sd = stats::std_dev(&r.estimates);
    let calibration = ReferenceCalibration {
        reference: r.estimator.clone(),
        normal_variance: sd * sd,
        cauchy_scale: stats::iqr(&r.estimates) / 2.0,
    };
    Ok(SamplingDistribution {
        tau_true: tau,
        reps: cfg.reps,
        seed: cfg.seed,
        draws,
        calibration,
    })
}
