//! Declarative simulation grids.
//!
//! ```toml
//! design = "lee"            # or "ludwig"
//! pi_rule = "pi1"           # pi1 | pi2 | pi3
//! pi_plus = [0.6, 0.9]      # one value or a list
//! x_law = "std_normal"      # std_normal | uniform_sym | scaled_beta
//! n = 300                   # one value or a list
//! reps = 1000
//! seed = 42
//! estimators = ["standard", "lambda4", "lambda1"]
//! bandwidth = "rot"         # "rot", a number, or an external table
//!
//! [ci]
//! level = 0.95
//! crit_law = "student_t"
//! variance = "hc1"
//! ```
//!
//! An external bandwidth is given as
//! `[bandwidth.external]` with `name = "ik"` and `values = [[0.0, 0.45]]`,
//! i.e. `(cutoff, h)` pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthRule;
use crate::error::{FrdError, Result};
use crate::estimators::EstimatorSpec;
use crate::inference::CiSpec;
use crate::simlab::dgp::{DgpSpec, MKind, PiKind, XLaw};
use crate::simlab::engine::McConfig;
use crate::simlab::metrics::MadCenter;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExternal {
    name: String,
    values: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawBandwidth {
    Value(f64),
    Name(String),
    Table { external: RawExternal },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCi {
    level: Option<f64>,
    crit_law: Option<String>,
    variance: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    design: String,
    pi_rule: String,
    pi_plus: OneOrMany<f64>,
    x_law: Option<String>,
    n: OneOrMany<usize>,
    reps: usize,
    seed: u64,
    estimators: Vec<String>,
    bandwidth: Option<RawBandwidth>,
    #[serde(default)]
    ci: RawCi,
    sigma_u2: Option<f64>,
    tau: Option<f64>,
    x0: Option<f64>,
    threads: Option<usize>,
    mad: Option<String>,
}

/// A parsed simulation grid. Every `(n, pi_plus)` pair becomes one
/// experiment; all experiments share the master seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub design: MKind,
    pub pi_rule: PiKind,
    pub pi_plus: Vec<f64>,
    pub x_law: XLaw,
    pub n: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    pub bandwidth: BandwidthRule,
    pub ci: CiSpec,
    pub sigma_u2: f64,
    pub tau: f64,
    pub x0: f64,
    /// Not echoed into outputs, which must not depend on it.
    #[serde(skip)]
    pub threads: usize,
    pub mad: MadCenter,
}

fn cfg_err(e: impl std::fmt::Display) -> FrdError {
    FrdError::Config(e.to_string())
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(cfg_err)?;
        let design: MKind = raw.design.parse().map_err(cfg_err)?;
        let bandwidth = match raw.bandwidth {
            None => BandwidthRule::RuleOfThumb,
            Some(RawBandwidth::Value(h)) => BandwidthRule::parse(&h.to_string()).map_err(cfg_err)?,
            Some(RawBandwidth::Name(s)) => BandwidthRule::parse(&s).map_err(cfg_err)?,
            Some(RawBandwidth::Table { external }) => BandwidthRule::External {
                name: external.name,
                values: external.values,
            },
        };
        let defaults = CiSpec::default();
        let ci = CiSpec {
            level: raw.ci.level.unwrap_or(defaults.level),
            crit_law: match raw.ci.crit_law {
                Some(s) => s.parse().map_err(cfg_err)?,
                None => defaults.crit_law,
            },
            variance: match raw.ci.variance {
                Some(s) => s.parse().map_err(cfg_err)?,
                None => defaults.variance,
            },
        };
        if !(ci.level > 0.0 && ci.level < 1.0) {
            return Err(cfg_err(format!("ci.level = {} outside (0, 1)", ci.level)));
        }
        let estimators = raw
            .estimators
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<EstimatorSpec>>>()
            .map_err(cfg_err)?;
        let cfg = SimConfig {
            design,
            pi_rule: raw.pi_rule.parse().map_err(cfg_err)?,
            pi_plus: raw.pi_plus.into_vec(),
            x_law: match raw.x_law {
                Some(s) => s.parse().map_err(cfg_err)?,
                None => XLaw::StdNormal,
            },
            n: raw.n.into_vec(),
            reps: raw.reps,
            seed: raw.seed,
            estimators,
            bandwidth,
            ci,
            sigma_u2: raw.sigma_u2.unwrap_or(0.09),
            tau: raw.tau.unwrap_or_else(|| design.default_tau()),
            x0: raw.x0.unwrap_or(0.0),
            threads: raw.threads.unwrap_or(0),
            mad: match raw.mad {
                Some(s) => s.parse().map_err(cfg_err)?,
                None => MadCenter::default(),
            },
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FrdError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<()> {
        if self.pi_plus.is_empty() || self.n.is_empty() {
            return Err(cfg_err("pi_plus and n must not be empty"));
        }
        if self.estimators.is_empty() {
            return Err(cfg_err("estimators must not be empty"));
        }
        if self.reps == 0 {
            return Err(cfg_err("reps must be at least 1"));
        }
        for e in self.experiments() {
            e.dgp.validate().map_err(cfg_err)?;
        }
        Ok(())
    }

    /// Experiments in grid order: `n` outer, `pi_plus` inner.
    pub fn experiments(&self) -> Vec<McConfig> {
        let mut out = Vec::with_capacity(self.n.len() * self.pi_plus.len());
        for &n in &self.n {
            for &pi_plus in &self.pi_plus {
                let dgp = DgpSpec {
                    m_kind: self.design,
                    pi_kind: self.pi_rule,
                    pi_plus,
                    x_law: self.x_law,
                    sigma_u2: self.sigma_u2,
                    tau_true: self.tau,
                    n,
                    x0: self.x0,
                };
                out.push(McConfig {
                    dgp,
                    estimators: self.estimators.clone(),
                    ci: self.ci,
                    bandwidth: self.bandwidth.clone(),
                    reps: self.reps,
                    seed: self.seed,
                    threads: self.threads,
                    mad_center: self.mad,
                });
            }
        }
        out
    }
}
