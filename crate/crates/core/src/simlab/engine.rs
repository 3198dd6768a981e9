use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthRule};
use crate::error::{FrdError, Result};
use crate::estimators::{self, EstimatorSpec};
use crate::inference::{self, CiSpec, VarianceSpec};
use crate::simlab::dgp::{draw_sample_rep, DgpSpec};
use crate::simlab::metrics::{metrics, MadCenter};

/// One Monte Carlo experiment: a single design evaluated with several
/// estimators on common samples.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub dgp: DgpSpec,
    pub estimators: Vec<EstimatorSpec>,
    pub ci: CiSpec,
    pub bandwidth: BandwidthRule,
    pub reps: usize,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide. Results do not depend on it.
    pub threads: usize,
    pub mad_center: MadCenter,
}

impl McConfig {
    pub fn new(dgp: DgpSpec, estimators: Vec<EstimatorSpec>, reps: usize, seed: u64) -> Self {
        McConfig {
            dgp,
            estimators,
            ci: CiSpec::default(),
            bandwidth: BandwidthRule::RuleOfThumb,
            reps,
            seed,
            threads: 0,
            mad_center: MadCenter::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(FrdError::InvalidInput("reps must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(FrdError::InvalidInput("no estimators configured".into()));
        }
        self.dgp.validate()
    }
}

/// What one estimator produced in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RepOutcome {
    Estimate {
        tau_hat: f64,
        interval: Option<(f64, f64)>,
        near_zero_denominator: bool,
    },
    /// Preconditions failed or the denominator vanished; excluded from metrics.
    Degenerate,
}

/// Per-estimator metrics over the completed replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub estimator: String,
    pub median_bias: f64,
    pub mean_bias: f64,
    pub mad: f64,
    pub mad_classical: f64,
    pub mad_about_truth: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub mean_length: Option<f64>,
    pub reps_requested: usize,
    pub reps_completed: usize,
    pub reps_flagged_degenerate: usize,
    pub reps_near_zero_denominator: usize,
    pub seed: u64,
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FrdError::Config(format!("thread pool: {e}")))
}

/// Run every estimator on replication `rep`. The bandwidth is selected once
/// per replication, for the largest polynomial order in use.
pub fn run_rep(cfg: &McConfig, rep: u64, with_ci: bool) -> Vec<RepOutcome> {
    let degenerate = vec![RepOutcome::Degenerate; cfg.estimators.len()];
    let Ok(sample) = draw_sample_rep(&cfg.dgp, cfg.seed, rep) else {
        return degenerate;
    };
    let p_max = cfg.estimators.iter().map(|e| e.p).max().unwrap_or(1);
    let Ok(h) = bandwidth::select(&cfg.bandwidth, &sample, cfg.dgp.x0, p_max) else {
        return degenerate;
    };
    let vspec = VarianceSpec::new(cfg.ci.variance);
    cfg.estimators
        .iter()
        .map(|est| {
            let Ok(fit) = estimators::fit(&sample, &est.fit_spec(cfg.dgp.x0, h)) else {
                return RepOutcome::Degenerate;
            };
            let tau_hat = fit.result.tau_hat;
            if !tau_hat.is_finite() {
                return RepOutcome::Degenerate;
            }
            let interval = if with_ci {
                match inference::infer(&fit, &vspec, cfg.ci.level, cfg.ci.crit_law) {
                    Ok(inf) => Some((inf.ci.lo, inf.ci.hi)),
                    Err(_) => return RepOutcome::Degenerate,
                }
            } else {
                None
            };
            RepOutcome::Estimate {
                tau_hat,
                interval,
                near_zero_denominator: fit.result.near_zero_denominator,
            }
        })
        .collect()
}

/// All replications, in replication order, one row per replication.
pub fn run_reps(cfg: &McConfig, with_ci: bool) -> Result<Vec<Vec<RepOutcome>>> {
    cfg.validate()?;
    let pool = build_pool(cfg.threads)?;
    Ok(pool.install(|| {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| run_rep(cfg, rep, with_ci))
            .collect()
    }))
}

/// Completed estimates (and intervals) of estimator `j`, in replication order.
pub(crate) fn column(outcomes: &[Vec<RepOutcome>], j: usize) -> (Vec<f64>, Vec<(f64, f64)>, usize) {
    let mut est = Vec::new();
    let mut iv = Vec::new();
    let mut near_zero = 0;
    for row in outcomes {
        if let RepOutcome::Estimate {
            tau_hat,
            interval,
            near_zero_denominator,
        } = row[j]
        {
            est.push(tau_hat);
            if let Some(i) = interval {
                iv.push(i);
            }
            near_zero += usize::from(near_zero_denominator);
        }
    }
    (est, iv, near_zero)
}

/// Run the experiment and summarise each estimator. Fails with
/// [`FrdError::EmptySummary`] only when some estimator has no completed
/// replication at all.
pub fn run_mc(cfg: &McConfig) -> Result<Vec<McSummary>> {
    let outcomes = run_reps(cfg, true)?;
    cfg.estimators
        .iter()
        .enumerate()
        .map(|(j, est)| {
            let (values, intervals, near_zero) = column(&outcomes, j);
            if values.is_empty() {
                return Err(FrdError::EmptySummary(cfg.reps));
            }
            let m = metrics(&values, cfg.dgp.tau_true, Some(&intervals), cfg.mad_center)?;
            Ok(McSummary {
                estimator: est.label.clone(),
                median_bias: m.median_bias,
                mean_bias: m.mean_bias,
                mad: m.mad,
                mad_classical: m.mad_classical,
                mad_about_truth: m.mad_about_truth,
                rmse: m.rmse,
                coverage: m.coverage,
                mean_length: m.mean_length,
                reps_requested: cfg.reps,
                reps_completed: values.len(),
                reps_flagged_degenerate: cfg.reps - values.len(),
                reps_near_zero_denominator: near_zero,
                seed: cfg.seed,
            })
        })
        .collect()
}
