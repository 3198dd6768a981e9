//! Data-generating processes for the Monte Carlo designs.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::localpoly::Sample;

/// Piecewise quintic regression functions, split at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MKind {
    Lee,
    Ludwig,
}

const LEE_LEFT: [f64; 6] = [0.48, 1.27, 7.18, 20.21, 21.54, 7.33];
const LEE_RIGHT: [f64; 6] = [0.48, 0.84, -3.00, 7.99, -9.01, 3.56];
const LUDWIG_LEFT: [f64; 6] = [3.70, 2.99, 3.28, 1.45, 0.22, 0.03];
const LUDWIG_RIGHT: [f64; 6] = [3.70, 18.49, -54.80, 74.30, -45.02, 9.83];

impl MKind {
    /// Treatment effect the design is calibrated to.
    pub fn default_tau(self) -> f64 {
        match self {
            MKind::Lee => 0.04,
            MKind::Ludwig => -3.44,
        }
    }

    fn coefficients(self, x: f64) -> &'static [f64; 6] {
        match (self, x < 0.0) {
            (MKind::Lee, true) => &LEE_LEFT,
            (MKind::Lee, false) => &LEE_RIGHT,
            (MKind::Ludwig, true) => &LUDWIG_LEFT,
            (MKind::Ludwig, false) => &LUDWIG_RIGHT,
        }
    }
}

pub fn m_eval(kind: MKind, x: f64) -> f64 {
    kind.coefficients(x).iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Treatment assignment rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiKind {
    /// Step from `pi-` to `pi+` at zero.
    Pi1,
    /// Linear ramps reaching 1 at `x = 1`.
    Pi2,
    /// Exponential approach on both sides.
    Pi3,
}

/// `P(D = 1 | X = x)` with `pi- = 1 - pi+`.
pub fn pi_eval(kind: PiKind, x: f64, pi_plus: f64) -> Result<f64> {
    if !(pi_plus > 0.5 && pi_plus <= 1.0) {
        return Err(FrdError::InvalidInput(format!(
            "pi_plus = {pi_plus} outside (0.5, 1]"
        )));
    }
    let pi_minus = 1.0 - pi_plus;
    let v = match kind {
        PiKind::Pi1 => {
            if x < 0.0 {
                pi_minus
            } else {
                pi_plus
            }
        }
        PiKind::Pi2 => {
            if x >= 1.0 {
                1.0
            } else if x >= 0.0 {
                pi_minus * x + pi_plus
            } else if x >= -1.0 {
                pi_minus * x + pi_minus
            } else {
                // Outside the ramp's domain; continuous extension.
                (pi_minus * (x + 1.0)).clamp(0.0, 1.0)
            }
        }
        PiKind::Pi3 => {
            if x < 0.0 {
                pi_minus * (0.2 * x).exp()
            } else {
                pi_plus + pi_minus * (1.0 - (-0.2 * x).exp())
            }
        }
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(FrdError::InvalidInput(format!(
            "assignment probability {v} outside [0, 1] at x = {x}"
        )));
    }
    Ok(v)
}

/// Running-variable distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XLaw {
    /// `N(0, 1)`.
    StdNormal,
    /// `U[-1, 1]`.
    UniformSym,
    /// `2 Beta(2, 4) - 1`.
    ScaledBeta,
}

macro_rules! display_fromstr {
    ($t:ty, $($v:path => $s:literal $(| $alt:literal)*),+ $(,)?) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = FrdError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s $(| $alt)* => Ok($v),)+
                    other => Err(FrdError::InvalidInput(format!(
                        concat!("unknown ", stringify!($t), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

display_fromstr!(MKind, MKind::Lee => "lee", MKind::Ludwig => "ludwig");
display_fromstr!(PiKind, PiKind::Pi1 => "pi1", PiKind::Pi2 => "pi2", PiKind::Pi3 => "pi3");
display_fromstr!(XLaw,
    XLaw::StdNormal => "std_normal" | "normal",
    XLaw::UniformSym => "uniform_sym" | "uniform",
    XLaw::ScaledBeta => "scaled_beta" | "beta",
);

/// One simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub m_kind: MKind,
    pub pi_kind: PiKind,
    pub pi_plus: f64,
    pub x_law: XLaw,
    pub sigma_u2: f64,
    pub tau_true: f64,
    pub n: usize,
    pub x0: f64,
}

impl DgpSpec {
    /// Design with the calibrated treatment effect, error variance 0.09,
    /// standard normal running variable and cutoff 0.
    pub fn new(m_kind: MKind, pi_kind: PiKind, pi_plus: f64, n: usize) -> Self {
        DgpSpec {
            m_kind,
            pi_kind,
            pi_plus,
            x_law: XLaw::StdNormal,
            sigma_u2: 0.09,
            tau_true: m_kind.default_tau(),
            n,
            x0: 0.0,
        }
    }

    pub fn pi_minus(&self) -> f64 {
        1.0 - self.pi_plus
    }

    /// Jump in assignment probability at the cutoff.
    pub fn pi0(&self) -> f64 {
        2.0 * self.pi_plus - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FrdError::InvalidInput("n must be positive".into()));
        }
        if !(self.sigma_u2 >= 0.0 && self.sigma_u2.is_finite()) {
            return Err(FrdError::InvalidInput(format!("sigma_u2 = {} invalid", self.sigma_u2)));
        }
        if !self.tau_true.is_finite() {
            return Err(FrdError::InvalidInput("tau_true must be finite".into()));
        }
        pi_eval(self.pi_kind, 0.0, self.pi_plus).map(|_| ())
    }
}

/// Generator for replication `rep` under master `seed`: ChaCha8 keyed by the
/// seed with the replication index as stream id, so each replication owns an
/// independent counter-based substream.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn draw_x(law: XLaw, rng: &mut ChaCha8Rng, beta_parts: &(Gamma<f64>, Gamma<f64>)) -> f64 {
    match law {
        XLaw::StdNormal => rng.sample(StandardNormal),
        XLaw::UniformSym => rng.random_range(-1.0..1.0),
        XLaw::ScaledBeta => {
            let a = beta_parts.0.sample(rng);
            let b = beta_parts.1.sample(rng);
            2.0 * a / (a + b) - 1.0
        }
    }
}

/// Draw a sample for replication 0 of `seed`.
pub fn draw_sample(spec: &DgpSpec, seed: u64) -> Result<Sample> {
    draw_sample_rep(spec, seed, 0)
}

/// `y = m(x) + tau d + u`, `d ~ Bernoulli(pi(x))`, `u ~ N(0, sigma_u2)`.
pub fn draw_sample_rep(spec: &DgpSpec, seed: u64, rep: u64) -> Result<Sample> {
    spec.validate()?;
    let mut rng = rep_rng(seed, rep);
    let beta_parts = (
        Gamma::new(2.0, 1.0).expect("valid gamma"),
        Gamma::new(4.0, 1.0).expect("valid gamma"),
    );
    let sigma = spec.sigma_u2.sqrt();
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    let mut d = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let xi = spec.x0 + draw_x(spec.x_law, &mut rng, &beta_parts);
        let pi = pi_eval(spec.pi_kind, xi - spec.x0, spec.pi_plus)?;
        let ui: f64 = rng.random();
        let di = if ui < pi { 1.0 } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        x.push(xi);
        d.push(di);
        y.push(m_eval(spec.m_kind, xi - spec.x0) + spec.tau_true * di + sigma * e);
    }
    Sample::new(x, y, d)
}
