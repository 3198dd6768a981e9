//! Executable checks of the building blocks behind the moment results:
//! truncated multinomial laws, mirror-symmetric samples, and the
//! probability that the estimated first-stage jump lands near zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthRule};
use crate::error::{FrdError, Result};
use crate::kernels::KernelKind;
use crate::localpoly::{self, Sample};
use crate::simlab::dgp::{draw_sample_rep, DgpSpec};

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln k!` for `k = 0..=n`, accumulated with compensated summation.
fn log_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = KahanSum::default();
    out.push(0.0);
    for k in 1..=n {
        acc.add((k as f64).ln());
        out.push(acc.total());
    }
    out
}

/// `k ln p` with the convention `0 ln 0 = 0`.
fn xlogp(k: u64, p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * p.ln()
    }
}

/// Multinomial counts `(Y1, Y2, n - Y1 - Y2)` with cell probabilities
/// `(p1, p2, 1 - p1 - p2)`, conditioned on `Y1 > alpha1` and `Y2 > alpha2`.
/// A threshold of `-1` means no truncation for that cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMultinomialSpec {
    pub n: u64,
    pub p1: f64,
    pub p2: f64,
    pub alpha1: i64,
    pub alpha2: i64,
}

impl TruncatedMultinomialSpec {
    pub fn p0(&self) -> f64 {
        (1.0 - self.p1 - self.p2).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_p = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !ok_p(self.p1) || !ok_p(self.p2) || self.p1 + self.p2 > 1.0 + 1e-12 {
            return Err(FrdError::InvalidInput(format!(
                "cell probabilities p1 = {}, p2 = {} do not form a distribution",
                self.p1, self.p2
            )));
        }
        if self.alpha1 < -1 || self.alpha2 < -1 {
            return Err(FrdError::InvalidInput("truncation thresholds must be >= -1".into()));
        }
        if self.alpha1 + self.alpha2 > self.n as i64 {
            return Err(FrdError::InvalidInput(format!(
                "alpha1 + alpha2 = {} exceeds n = {}",
                self.alpha1 + self.alpha2,
                self.n
            )));
        }
        Ok(())
    }

    fn lower(&self, i: usize) -> u64 {
        let a = if i == 1 { self.alpha1 } else { self.alpha2 };
        (a + 1) as u64
    }

    fn admissible(&self, n1: u64, n2: u64) -> bool {
        n1 >= self.lower(1) && n2 >= self.lower(2) && n1 + n2 <= self.n
    }
}

/// A validated spec with its log-factorial table and truncation probability,
/// for evaluating many masses without recomputing `kappa`.
#[derive(Debug, Clone)]
pub struct TruncatedMultinomial {
    spec: TruncatedMultinomialSpec,
    lf: Vec<f64>,
    kappa: f64,
}

impl TruncatedMultinomial {
    pub fn new(spec: &TruncatedMultinomialSpec) -> Result<Self> {
        spec.validate()?;
        let mut out = TruncatedMultinomial {
            spec: *spec,
            lf: log_factorials(spec.n),
            kappa: 0.0,
        };
        let mut acc = KahanSum::default();
        for n1 in spec.lower(1)..=spec.n {
            for n2 in spec.lower(2)..=(spec.n - n1) {
                acc.add(out.mass(n1, n2));
            }
        }
        let k = acc.total();
        if !(k > 0.0) {
            return Err(FrdError::InvalidInput(
                "the truncation event has probability zero".into(),
            ));
        }
        out.kappa = k.min(1.0);
        Ok(out)
    }

    /// Untruncated multinomial mass.
    fn mass(&self, n1: u64, n2: u64) -> f64 {
        let s = &self.spec;
        let n0 = s.n - n1 - n2;
        let lf = &self.lf;
        let l = lf[s.n as usize] - lf[n0 as usize] - lf[n1 as usize] - lf[n2 as usize]
            + xlogp(n0, s.p0())
            + xlogp(n1, s.p1)
            + xlogp(n2, s.p2);
        l.exp()
    }

    /// Probability of the truncation event `{Y1 > alpha1, Y2 > alpha2}`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `P(Y1 = n1, Y2 = n2 | Y1 > alpha1, Y2 > alpha2)`.
    pub fn pmf(&self, n1: u64, n2: u64) -> f64 {
        if !self.spec.admissible(n1, n2) {
            return 0.0;
        }
        self.mass(n1, n2) / self.kappa
    }

    /// The whole conditional pmf on the admissible grid, as `(n1, n2, mass)`.
    pub fn table(&self) -> Vec<(u64, u64, f64)> {
        let s = &self.spec;
        let mut out = Vec::new();
        for n1 in s.lower(1)..=s.n {
            for n2 in s.lower(2)..=(s.n - n1) {
                out.push((n1, n2, self.mass(n1, n2) / self.kappa));
            }
        }
        out
    }

    /// `P(Y_i = m | Y1 > alpha1, Y2 > alpha2)` for `i` in `{1, 2}`.
    ///
    /// Computed as `binom(n, m) p_i^m (1 - p_i)^(n - m) W / kappa`, where `W`
    /// is the upper tail `P(Bin(n - m, p_j / (1 - p_i)) > alpha_j)` of the
    /// other cell.
    pub fn marginal(&self, i: u8, m: u64) -> Result<f64> {
        let spec = &self.spec;
        let (pi, pj, lo_i, lo_j) = match i {
            1 => (spec.p1, spec.p2, spec.lower(1), spec.lower(2)),
            2 => (spec.p2, spec.p1, spec.lower(2), spec.lower(1)),
            _ => return Err(FrdError::InvalidInput(format!("cell index {i} must be 1 or 2"))),
        };
        if m < lo_i || m > spec.n || spec.n - m < lo_j {
            return Ok(0.0);
        }
        let n = spec.n;
        let rest = n - m;
        if pi >= 1.0 {
            // All mass sits on Y_i = n, the other cells are empty.
            return Ok(if m == n && lo_j == 0 { 1.0 / self.kappa } else { 0.0 });
        }
        let lf = &self.lf;
        let q = (pj / (1.0 - pi)).min(1.0);
        let mut w = KahanSum::default();
        for nj in lo_j..=rest {
            let l = lf[rest as usize] - lf[nj as usize] - lf[(rest - nj) as usize]
                + xlogp(nj, q)
                + xlogp(rest - nj, 1.0 - q);
            w.add(l.exp());
        }
        let head =
            lf[n as usize] - lf[m as usize] - lf[rest as usize] + xlogp(m, pi) + xlogp(rest, 1.0 - pi);
        Ok(head.exp() * w.total() / self.kappa)
    }
}

/// Probability of the truncation event `{Y1 > alpha1, Y2 > alpha2}`.
pub fn truncation_probability(spec: &TruncatedMultinomialSpec) -> Result<f64> {
    Ok(TruncatedMultinomial::new(spec)?.kappa())
}

/// `P(Y1 = n1, Y2 = n2 | Y1 > alpha1, Y2 > alpha2)`.
pub fn truncated_multinomial_pmf(spec: &TruncatedMultinomialSpec, n1: u64, n2: u64) -> Result<f64> {
    Ok(TruncatedMultinomial::new(spec)?.pmf(n1, n2))
}

/// `P(Y_i = m | Y1 > alpha1, Y2 > alpha2)` for `i` in `{1, 2}`.
pub fn truncated_binomial_marginal(spec: &TruncatedMultinomialSpec, i: u8, m: u64) -> Result<f64> {
    TruncatedMultinomial::new(spec)?.marginal(i, m)
}

/// A `2m`-point sample mirrored about `x0`: observation `i < m` sits at
/// `x0 + offsets[i]` and observation `i + m` at `x0 - offsets[i]`, both with
/// treatment `d_pattern[i]`. Outcomes are zero.
pub fn make_symmetric_sample(m: usize, offsets: &[f64], d_pattern: &[u8], x0: f64) -> Result<Sample> {
    if m == 0 || offsets.len() != m || d_pattern.len() != m {
        return Err(FrdError::InvalidInput(format!(
            "need m >= 1 offsets and treatment bits, got m = {m}, {} offsets, {} bits",
            offsets.len(),
            d_pattern.len()
        )));
    }
    if let Some(o) = offsets.iter().find(|o| !(o.is_finite() && **o > 0.0)) {
        return Err(FrdError::InvalidInput(format!("offset {o} must be positive and finite")));
    }
    if d_pattern.iter().any(|&b| b > 1) {
        return Err(FrdError::InvalidInput("treatment bits must be 0 or 1".into()));
    }
    if !d_pattern.contains(&0) || !d_pattern.contains(&1) {
        return Err(FrdError::InvalidInput(
            "treatment pattern must contain both 0 and 1".into(),
        ));
    }
    let x: Vec<f64> = offsets
        .iter()
        .map(|o| x0 + o)
        .chain(offsets.iter().map(|o| x0 - o))
        .collect();
    let d: Vec<f64> = d_pattern.iter().chain(d_pattern).map(|&b| f64::from(b)).collect();
    Sample::new(x, vec![0.0; 2 * m], d)
}

/// Configuration of a near-zero denominator probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub dgp: DgpSpec,
    pub p: usize,
    pub kernel: KernelKind,
    pub bandwidth: BandwidthRule,
    pub reps: usize,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub threads: usize,
}

pub const MIN_PROBE_REPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub eps: f64,
    pub probability: f64,
    /// Binomial standard error of `probability`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub points: Vec<ProbePoint>,
    pub reps_completed: usize,
    pub reps_failed: usize,
}

/// Empirical `P(|tau_d| < eps)` for each `eps`, over replications where the
/// four side fits exist.
pub fn denominator_probe(spec: &ProbeSpec) -> Result<ProbeResult> {
    if spec.reps < MIN_PROBE_REPS {
        return Err(FrdError::InvalidInput(format!(
            "probe needs at least {MIN_PROBE_REPS} replications, got {}",
            spec.reps
        )));
    }
    if spec.eps.is_empty() || spec.eps.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(FrdError::InvalidInput("eps grid must be non-empty and non-negative".into()));
    }
    spec.dgp.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| FrdError::Config(format!("thread pool: {e}")))?;
    let x0 = spec.dgp.x0;
    let draws: Vec<Option<f64>> = pool.install(|| {
        (0..spec.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let sample = draw_sample_rep(&spec.dgp, spec.seed, rep).ok()?;
                let h = bandwidth::select(&spec.bandwidth, &sample, x0, spec.p).ok()?;
                let parts = localpoly::frd_parts(&sample, x0, h, spec.p, spec.kernel).ok()?;
                Some(parts.tau_d.abs())
            })
            .collect()
    });
    let values: Vec<f64> = draws.into_iter().flatten().collect();
    let done = values.len();
    if done == 0 {
        return Err(FrdError::EmptySummary(spec.reps));
    }
    let points = spec
        .eps
        .iter()
        .map(|&eps| {
            let hits = values.iter().filter(|&&v| v < eps).count();
            let p = hits as f64 / done as f64;
            ProbePoint {
                eps,
                probability: p,
                std_error: (p * (1.0 - p) / done as f64).sqrt(),
            }
        })
        .collect();
    Ok(ProbeResult {
        points,
        reps_completed: done,
        reps_failed: spec.reps - done,
    })
}
