//! Compact-support second-order kernels on `[-1, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};

/// Kernel shape. All kinds are symmetric with support `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Triangular,
    Uniform,
    Epanechnikov,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [
        KernelKind::Triangular,
        KernelKind::Uniform,
        KernelKind::Epanechnikov,
    ];

    /// Largest value the kernel attains.
    pub fn max_value(self) -> f64 {
        match self {
            KernelKind::Triangular => 1.0,
            KernelKind::Uniform => 0.5,
            KernelKind::Epanechnikov => 0.75,
        }
    }

    /// `K(u)`. The endpoints `|u| = 1` are part of the closed support, where
    /// the triangular and Epanechnikov kernels vanish and the uniform kernel
    /// is still 1/2.
    pub fn eval(self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(FrdError::InvalidInput(format!(
                "kernel argument must be finite, got {u}"
            )));
        }
        Ok(self.eval_unchecked(u))
    }

    #[inline]
    pub(crate) fn eval_unchecked(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            KernelKind::Triangular => 1.0 - a,
            KernelKind::Uniform => 0.5,
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    /// `K_h(x - x0) = K((x - x0) / h)`.
    pub fn eval_scaled(self, x: f64, x0: f64, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        self.eval((x - x0) / h)
    }
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(FrdError::InvalidBandwidth(h))
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::Triangular => "triangular",
            KernelKind::Uniform => "uniform",
            KernelKind::Epanechnikov => "epanechnikov",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelKind {
    type Err = FrdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" => Ok(KernelKind::Triangular),
            "uniform" => Ok(KernelKind::Uniform),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "gaussian" | "normal" => Err(FrdError::InvalidInput(
                "unbounded-support kernels are not supported".into(),
            )),
            other => Err(FrdError::InvalidInput(format!("unknown kernel `{other}`"))),
        }
    }
}
