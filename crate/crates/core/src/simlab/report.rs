//! Result tables for simulation grids.

use serde::Serialize;

use crate::error::Result;
use crate::output;
use crate::simlab::config::SimConfig;
use crate::simlab::dgp::DgpSpec;
use crate::simlab::engine::{run_mc, McSummary};
use crate::simlab::sampling::{sampling_distribution, SamplingDistribution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub dgp: DgpSpec,
    pub pi0: f64,
    pub summaries: Vec<McSummary>,
}

/// Run every experiment of the grid in order.
pub fn run_grid(cfg: &SimConfig) -> Result<Vec<ExperimentResult>> {
    cfg.experiments()
        .iter()
        .map(|e| {
            Ok(ExperimentResult {
                dgp: e.dgp,
                pi0: e.dgp.pi0(),
                summaries: run_mc(e)?,
            })
        })
        .collect()
}

/// Flat row: one per (experiment, estimator).
#[derive(Debug, Serialize)]
struct SimRow<'a> {
    design: String,
    pi_rule: String,
    x_law: String,
    n: usize,
    pi_plus: f64,
    pi0: f64,
    tau_true: f64,
    bandwidth: String,
    estimator: &'a str,
    median_bias: f64,
    mad: f64,
    rmse: f64,
    coverage: Option<f64>,
    mean_length: Option<f64>,
    mean_bias: f64,
    mad_classical: f64,
    mad_about_truth: f64,
    reps_requested: usize,
    reps_completed: usize,
    reps_flagged_degenerate: usize,
    reps_near_zero_denominator: usize,
    seed: u64,
}

pub fn grid_csv(cfg: &SimConfig, results: &[ExperimentResult]) -> Result<String> {
    let mut rows = Vec::new();
    for r in results {
        for s in &r.summaries {
            rows.push(SimRow {
                design: r.dgp.m_kind.to_string(),
                pi_rule: r.dgp.pi_kind.to_string(),
                x_law: r.dgp.x_law.to_string(),
                n: r.dgp.n,
                pi_plus: r.dgp.pi_plus,
                pi0: r.pi0,
                tau_true: r.dgp.tau_true,
                bandwidth: cfg.bandwidth.to_string(),
                estimator: &s.estimator,
                median_bias: s.median_bias,
                mad: s.mad,
                rmse: s.rmse,
                coverage: s.coverage,
                mean_length: s.mean_length,
                mean_bias: s.mean_bias,
                mad_classical: s.mad_classical,
                mad_about_truth: s.mad_about_truth,
                reps_requested: s.reps_requested,
                reps_completed: s.reps_completed,
                reps_flagged_degenerate: s.reps_flagged_degenerate,
                reps_near_zero_denominator: s.reps_near_zero_denominator,
                seed: s.seed,
            });
        }
    }
    output::to_csv(&rows)
}

pub fn grid_json(cfg: &SimConfig, results: &[ExperimentResult]) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        metadata: output::Metadata,
        config: &'a SimConfig,
        seed: u64,
        experiments: &'a [ExperimentResult],
    }
    output::to_json(&Doc {
        metadata: output::Metadata::new("simulate"),
        config: cfg,
        seed: cfg.seed,
        experiments: results,
    })
}

/// Run the grid and write `results.csv` and `results.json` into `dir`.
pub fn simulate_to_dir(cfg: &SimConfig, dir: &std::path::Path) -> Result<Vec<ExperimentResult>> {
    let results = run_grid(cfg)?;
    output::write_pair(dir, &grid_csv(cfg, &results)?, &grid_json(cfg, &results)?)?;
    Ok(results)
}

/// Sampling distributions for every experiment of the grid.
pub fn sampling_grid(cfg: &SimConfig) -> Result<Vec<(DgpSpec, SamplingDistribution)>> {
    cfg.experiments()
        .iter()
        .map(|e| Ok((e.dgp, sampling_distribution(e)?)))
        .collect()
}

/// Long-format raw estimates: `n, pi_plus, estimator, index, estimate`.
pub fn sampling_csv(grid: &[(DgpSpec, SamplingDistribution)]) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        n: usize,
        pi_plus: f64,
        pi0: f64,
        estimator: &'a str,
        index: usize,
        estimate: f64,
    }
    let mut rows = Vec::new();
    for (dgp, sd) in grid {
        for d in &sd.draws {
            for (index, &estimate) in d.estimates.iter().enumerate() {
                rows.push(Row {
                    n: dgp.n,
                    pi_plus: dgp.pi_plus,
                    pi0: dgp.pi0(),
                    estimator: &d.estimator,
                    index,
                    estimate,
                });
            }
        }
    }
    output::to_csv(&rows)
}

pub fn sampling_json(cfg: &SimConfig, grid: &[(DgpSpec, SamplingDistribution)], with_raw: bool) -> Result<String> {
    #[derive(Serialize)]
    struct Entry<'a> {
        dgp: &'a DgpSpec,
        pi0: f64,
        #[serde(flatten)]
        dist: SamplingDistribution,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        metadata: output::Metadata,
        config: &'a SimConfig,
        seed: u64,
        experiments: Vec<Entry<'a>>,
    }
    let experiments = grid
        .iter()
        .map(|(dgp, sd)| {
            let mut dist = sd.clone();
            if !with_raw {
                for d in &mut dist.draws {
                    d.estimates.clear();
                }
            }
            Entry { dgp, pi0: dgp.pi0(), dist }
        })
        .collect();
    output::to_json(&Doc {
        metadata: output::Metadata::new("sampling-dist"),
        config: cfg,
        seed: cfg.seed,
        experiments,
    })
}
