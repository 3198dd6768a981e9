//! Variance estimation, t-statistics and confidence intervals for
//! lambda-class estimates.
//!
//! The variance estimate uses the IV sandwich: with `a = M_V Z~`,
//! `P_a D~ = (Z~'M D~ / G) a`, so the numerator reduces to
//! `(Z~'M D~ / G)^2 a' Omega a`, which is divided by the squared
//! lambda-class denominator. The returned value is scaled by `n_h` so that it
//! targets the variance of `sqrt(n_h) (tau_hat - tau)`, matching the t-statistic
//! and interval formulas below.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{FrdError, Result};
use crate::estimators::{EstimateResult, IvResiduals, LambdaFit, WeightedData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceFlavor {
    Homoskedastic,
    Hc0,
    #[default]
    Hc1,
}

impl FromStr for VarianceFlavor {
    type Err = FrdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "homoskedastic" | "homo" | "iid" => Ok(VarianceFlavor::Homoskedastic),
            "hc0" => Ok(VarianceFlavor::Hc0),
            "hc1" | "robust" => Ok(VarianceFlavor::Hc1),
            other => Err(FrdError::InvalidInput(format!("unknown variance flavor `{other}`"))),
        }
    }
}

impl fmt::Display for VarianceFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceFlavor::Homoskedastic => "homoskedastic",
            VarianceFlavor::Hc0 => "hc0",
            VarianceFlavor::Hc1 => "hc1",
        })
    }
}

/// Variance estimator choice. `cluster_ids`, when present, is aligned with
/// the rows of the weighted data (length `n_h`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarianceSpec {
    pub flavor: VarianceFlavor,
    pub cluster_ids: Option<Vec<u64>>,
}

impl VarianceSpec {
    pub fn new(flavor: VarianceFlavor) -> Self {
        VarianceSpec {
            flavor,
            cluster_ids: None,
        }
    }
}

/// Critical-value law. `StudentT` uses `n_h` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CritLaw {
    Normal,
    #[default]
    StudentT,
}

impl FromStr for CritLaw {
    type Err = FrdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "z" => Ok(CritLaw::Normal),
            "t" | "student_t" | "studentt" | "student-t" => Ok(CritLaw::StudentT),
            other => Err(FrdError::InvalidInput(format!("unknown critical-value law `{other}`"))),
        }
    }
}

impl fmt::Display for CritLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CritLaw::Normal => "normal",
            CritLaw::StudentT => "student_t",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub crit_law: CritLaw,
    pub crit_value: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `u = M_V (y~ - d~ tau_hat)`.
pub fn residuals(wd: &WeightedData, tau_hat: f64) -> Result<DVector<f64>> {
    let res = IvResiduals::new(wd)?;
    Ok(residuals_from(&res, tau_hat))
}

fn residuals_from(res: &IvResiduals, tau_hat: f64) -> DVector<f64> {
    &res.ry - &res.rd * tau_hat
}

/// `a' Omega a` for `a = M_V Z~` under the requested flavor.
pub fn sandwich_meat(
    wd: &WeightedData,
    rz: &DVector<f64>,
    u: &DVector<f64>,
    spec: &VarianceSpec,
) -> Result<f64> {
    let n = wd.n_h();
    let k = wd.n_params();
    if n <= k {
        return Err(FrdError::InsufficientSample(format!(
            "no residual degrees of freedom (n_h = {n}, parameters = {k})"
        )));
    }
    let dof = (n - k) as f64;
    if spec.flavor == VarianceFlavor::Homoskedastic {
        let sigma2 = u.norm_squared() / dof;
        return Ok(sigma2 * rz.norm_squared());
    }
    match &spec.cluster_ids {
        None => {
            let hc0: f64 = rz.iter().zip(u.iter()).map(|(a, e)| a * a * e * e).sum();
            Ok(match spec.flavor {
                VarianceFlavor::Hc1 => hc0 * n as f64 / dof,
                _ => hc0,
            })
        }
        Some(ids) => {
            if ids.len() != n {
                return Err(FrdError::InvalidInput(format!(
                    "cluster_ids has length {}, expected n_h = {n}",
                    ids.len()
                )));
            }
            let mut scores: BTreeMap<u64, f64> = BTreeMap::new();
            for ((&g, a), e) in ids.iter().zip(rz.iter()).zip(u.iter()) {
                *scores.entry(g).or_default() += a * e;
            }
            let g = scores.len();
            let meat: f64 = scores.values().map(|s| s * s).sum();
            match spec.flavor {
                VarianceFlavor::Hc1 => {
                    if g < 2 {
                        return Err(FrdError::InsufficientSample(
                            "cluster-robust variance needs at least 2 clusters".into(),
                        ));
                    }
                    let gf = g as f64;
                    Ok(meat * gf / (gf - 1.0) * (n as f64 - 1.0) / dof)
                }
                _ => Ok(meat),
            }
        }
    }
}

/// Variance of `sqrt(n_h) (tau_hat - tau)` for a lambda-class estimate.
pub fn variance_lambda(
    wd: &WeightedData,
    est: &EstimateResult,
    spec: &VarianceSpec,
) -> Result<f64> {
    let res = IvResiduals::new(wd)?;
    variance_with(wd, &res, est, spec)
}

pub(crate) fn variance_with(
    wd: &WeightedData,
    res: &IvResiduals,
    est: &EstimateResult,
    spec: &VarianceSpec,
) -> Result<f64> {
    if !(est.denominator > 0.0) {
        return Err(FrdError::DegenerateVariance(format!(
            "lambda-class denominator {:e} is not positive",
            est.denominator
        )));
    }
    let u = residuals_from(res, est.tau_hat);
    let meat = sandwich_meat(wd, &res.rz, &u, spec)?;
    // Z~'M D~ / G, which is tau_d for the standard pieces.
    let ratio = res.zd() / est.gamma_tilde;
    let numerator = ratio * ratio * meat;
    Ok(wd.n_h() as f64 * numerator / (est.denominator * est.denominator))
}

/// `sqrt(n_h) (tau_hat - tau_null) / sqrt(v)`.
pub fn t_stat(tau_hat: f64, tau_null: f64, variance: f64, n_h: usize) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(FrdError::DegenerateVariance(format!(
            "variance {variance:e} must be positive"
        )));
    }
    Ok((n_h as f64).sqrt() * (tau_hat - tau_null) / variance.sqrt())
}

/// Two-sided critical value `q_{1 - alpha/2}`.
pub fn critical_value(level: f64, law: CritLaw, n_h: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(FrdError::InvalidInput(format!("level {level} outside (0, 1)")));
    }
    let q = 0.5 + level / 2.0;
    let crit = match law {
        CritLaw::Normal => Normal::new(0.0, 1.0)
            .map_err(|e| FrdError::InvalidInput(e.to_string()))?
            .inverse_cdf(q),
        CritLaw::StudentT => {
            if n_h == 0 {
                return Err(FrdError::InsufficientSample("t law needs n_h > 0".into()));
            }
            StudentsT::new(0.0, 1.0, n_h as f64)
                .map_err(|e| FrdError::InvalidInput(e.to_string()))?
                .inverse_cdf(q)
        }
    };
    Ok(crit)
}

/// `tau_hat -/+ q sqrt(v / n_h)`.
pub fn confidence_interval(
    tau_hat: f64,
    variance: f64,
    n_h: usize,
    level: f64,
    law: CritLaw,
) -> Result<ConfidenceInterval> {
    if !(variance >= 0.0) {
        return Err(FrdError::InvalidInput(format!("variance {variance} must be >= 0")));
    }
    if n_h == 0 {
        return Err(FrdError::InsufficientSample("n_h must be positive".into()));
    }
    let crit = critical_value(level, law, n_h)?;
    let half = crit * (variance / n_h as f64).sqrt();
    Ok(ConfidenceInterval {
        lo: tau_hat - half,
        hi: tau_hat + half,
        level,
        crit_law: law,
        crit_value: crit,
    })
}

/// Variance, standard error and interval for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub variance: f64,
    /// `sqrt(v / n_h)`.
    pub se: f64,
    pub ci: ConfidenceInterval,
}

pub fn infer(
    fit: &LambdaFit,
    spec: &VarianceSpec,
    level: f64,
    law: CritLaw,
) -> Result<Inference> {
    let v = variance_with(&fit.data, &fit.residuals, &fit.result, spec)?;
    let n_h = fit.data.n_h();
    let ci = confidence_interval(fit.result.tau_hat, v, n_h, level, law)?;
    Ok(Inference {
        variance: v,
        se: (v / n_h as f64).sqrt(),
        ci,
    })
}

/// Interval settings shared by the simulation lab and the empirical workflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CiSpec {
    pub level: f64,
    pub crit_law: CritLaw,
    pub variance: VarianceFlavor,
}

impl Default for CiSpec {
    fn default() -> Self {
        CiSpec {
            level: 0.95,
            crit_law: CritLaw::StudentT,
            variance: VarianceFlavor::Hc1,
        }
    }
}
