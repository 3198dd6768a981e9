//! Bandwidth provision: fixed values, a rule of thumb, and user-supplied
//! per-cutoff values from an external selector.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::kernels::check_bandwidth;
use crate::localpoly::Sample;
use crate::stats;

/// Multiplier of the rule of thumb `h = c * sigma * n^(-1/5)`.
pub const ROT_CONSTANT: f64 = 1.84;

/// Cutoffs closer than this are treated as the same key when looking up
/// external bandwidths.
const CUTOFF_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed(f64),
    RuleOfThumb,
    /// Precomputed bandwidths from another tool, keyed by cutoff.
    External { name: String, values: Vec<(f64, f64)> },
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthRule::Fixed(h) => write!(f, "{h}"),
            BandwidthRule::RuleOfThumb => f.write_str("rot"),
            BandwidthRule::External { name, .. } => write!(f, "external:{name}"),
        }
    }
}

impl BandwidthRule {
    /// Parse a CLI value: a positive number or `rot`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("rot") || t.eq_ignore_ascii_case("rule-of-thumb") {
            return Ok(BandwidthRule::RuleOfThumb);
        }
        let h: f64 = t
            .parse()
            .map_err(|_| FrdError::InvalidInput(format!("bandwidth `{t}` is neither a number nor `rot`")))?;
        check_bandwidth(h)?;
        Ok(BandwidthRule::Fixed(h))
    }
}

/// Resolve a rule to a bandwidth for local polynomials of order `p`.
pub fn select(rule: &BandwidthRule, sample: &Sample, x0: f64, p: usize) -> Result<f64> {
    match rule {
        BandwidthRule::Fixed(h) => {
            check_bandwidth(*h)?;
            Ok(*h)
        }
        BandwidthRule::External { name, values } => {
            let h = values
                .iter()
                .find(|(c, _)| (c - x0).abs() <= CUTOFF_MATCH_TOL)
                .map(|&(_, h)| h)
                .ok_or_else(|| {
                    FrdError::Config(format!("external bandwidth `{name}` has no value for cutoff {x0}"))
                })?;
            check_bandwidth(h)?;
            Ok(h)
        }
        BandwidthRule::RuleOfThumb => rule_of_thumb(sample, x0, p),
    }
}

/// `1.84 * min(sd, IQR/1.349) * n^(-1/5)`, widened if needed so each side
/// holds at least `2(p + 1)` observations.
pub fn rule_of_thumb(sample: &Sample, x0: f64, p: usize) -> Result<f64> {
    let x = sample.x();
    let n = x.len();
    let sd = stats::std_dev(x);
    let spread = stats::iqr(x) / 1.349;
    let sigma = if spread > 0.0 { sd.min(spread) } else { sd };
    if !(sigma > 0.0) {
        return Err(FrdError::InsufficientSample(
            "running variable has no spread".into(),
        ));
    }
    let base = ROT_CONSTANT * sigma * (n as f64).powf(-0.2);

    let need = 2 * (p + 1);
    let mut plus: Vec<f64> = x.iter().filter(|&&v| v >= x0).map(|v| v - x0).collect();
    let mut minus: Vec<f64> = x.iter().filter(|&&v| v < x0).map(|v| x0 - v).collect();
    if plus.len() < need || minus.len() < need {
        return Err(FrdError::InsufficientSample(format!(
            "need {need} observations on each side of {x0}, found {} above and {} below",
            plus.len(),
            minus.len()
        )));
    }
    plus.sort_by(|a, b| a.total_cmp(b));
    minus.sort_by(|a, b| a.total_cmp(b));
    Ok(base.max(plus[need - 1]).max(minus[need - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: Vec<f64>) -> Sample {
        let n = x.len();
        Sample::new(x, vec![0.0; n], vec![0.0; n]).unwrap()
    }

    #[test]
    fn fixed_and_parse() {
        let s = sample(vec![-1.0, 1.0]);
        assert_eq!(select(&BandwidthRule::Fixed(0.5), &s, 0.0, 1).unwrap(), 0.5);
        assert!(select(&BandwidthRule::Fixed(-0.5), &s, 0.0, 1).is_err());
        assert_eq!(BandwidthRule::parse("rot").unwrap(), BandwidthRule::RuleOfThumb);
        assert_eq!(BandwidthRule::parse("0.25").unwrap(), BandwidthRule::Fixed(0.25));
        assert!(BandwidthRule::parse("abc").is_err());
        assert!(BandwidthRule::parse("0").is_err());
    }

    #[test]
    fn external_lookup() {
        let s = sample(vec![-1.0, 1.0]);
        let rule = BandwidthRule::External {
            name: "ik".into(),
            values: vec![(40.0, 8.0), (80.0, 10.0)],
        };
        assert_eq!(select(&rule, &s, 80.0, 1).unwrap(), 10.0);
        assert!(matches!(select(&rule, &s, 120.0, 1), Err(FrdError::Config(_))));
    }

    #[test]
    fn degenerate_running_variable() {
        let s = sample(vec![0.3; 50]);
        assert!(matches!(
            rule_of_thumb(&s, 0.0, 1),
            Err(FrdError::InsufficientSample(_))
        ));
    }

    #[test]
    fn floor_widens_window() {
        // Dense cluster above the cutoff, sparse points far below.
        let mut x: Vec<f64> = (0..200).map(|i| 0.001 * i as f64).collect();
        x.extend([-5.0, -6.0, -7.0, -8.0]);
        let s = sample(x);
        let h = rule_of_thumb(&s, 0.0, 1).unwrap();
        assert_eq!(h, 8.0);
        let s2 = sample((0..200).map(|i| 0.001 * i as f64).chain([-5.0, -6.0, -7.0]).collect());
        assert!(rule_of_thumb(&s2, 0.0, 1).is_err());
    }
}
