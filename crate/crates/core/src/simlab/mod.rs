//! Monte Carlo designs, the replication engine and performance metrics.

pub mod config;
pub mod dgp;
pub mod engine;
pub mod metrics;
pub mod report;
pub mod sampling;

pub use config::SimConfig;
pub use dgp::{draw_sample, draw_sample_rep, m_eval, pi_eval, DgpSpec, MKind, PiKind, XLaw};
pub use engine::{run_mc, McConfig, McSummary, RepOutcome};
pub use metrics::{metrics, MadCenter, Metrics};
pub use sampling::{sampling_distribution, SamplingDistribution};
