//! One-sided local polynomial regression at a cutoff and the standard
//! ratio-of-differences FRD estimator built from four such fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::kernels::{check_bandwidth, KernelKind};
use crate::linalg;

/// Below this `|tau_d|` the standard estimator refuses to divide.
pub const DENOMINATOR_HARD_EPS: f64 = 1e-13;
/// Below this `|tau_d|` the result is flagged as near-degenerate.
pub const DENOMINATOR_FLAG_EPS: f64 = 1e-8;

/// Observed data: running variable, outcome, binary treatment and optional
/// exogenous covariates (stored column-wise, `n x k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    w: Option<DMatrix<f64>>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(FrdError::InvalidInput("sample is empty".into()));
        }
        if y.len() != n || d.len() != n {
            return Err(FrdError::InvalidInput(format!(
                "length mismatch: x={}, y={}, d={}",
                n,
                y.len(),
                d.len()
            )));
        }
        if let Some(i) = d.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(FrdError::NonBinaryTreatment {
                row: i,
                value: d[i].to_string(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(FrdError::InvalidInput("x and y must be finite".into()));
        }
        Ok(Sample { x, y, d, w: None })
    }

    /// Attach covariates given as a list of columns.
    pub fn with_covariates(mut self, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            self.w = None;
            return Ok(self);
        }
        let n = self.len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(FrdError::InvalidInput(format!(
                "covariate column has {} rows, expected {n}",
                c.len()
            )));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FrdError::InvalidInput("covariates must be finite".into()));
        }
        let k = columns.len();
        self.w = Some(DMatrix::from_fn(n, k, |i, j| columns[j][i]));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.w.as_ref()
    }

    pub fn n_covariates(&self) -> usize {
        self.w.as_ref().map_or(0, |w| w.ncols())
    }
}

/// Which side of the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

/// Bandwidth window around the cutoff, split into `[x0, x0+h]` and
/// `[x0-h, x0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveSample {
    pub idx_plus: Vec<usize>,
    pub idx_minus: Vec<usize>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_h: usize,
}

impl EffectiveSample {
    pub fn side(&self, side: Side) -> &[usize] {
        match side {
            Side::Plus => &self.idx_plus,
            Side::Minus => &self.idx_minus,
        }
    }
}

pub fn split_effective(sample: &Sample, x0: f64, h: f64) -> Result<EffectiveSample> {
    check_bandwidth(h)?;
    let mut idx_plus = Vec::new();
    let mut idx_minus = Vec::new();
    for (i, &x) in sample.x.iter().enumerate() {
        let t = x - x0;
        if t >= 0.0 && t <= h {
            idx_plus.push(i);
        } else if t < 0.0 && -t <= h {
            idx_minus.push(i);
        }
    }
    let (n_plus, n_minus) = (idx_plus.len(), idx_minus.len());
    Ok(EffectiveSample {
        idx_plus,
        idx_minus,
        n_plus,
        n_minus,
        n_h: n_plus + n_minus,
    })
}

/// `[1, (x - x0), ..., (x - x0)^p]`.
pub fn design_vector(x: f64, x0: f64, p: usize) -> DVector<f64> {
    powers(x - x0, p)
}

fn powers(t: f64, p: usize) -> DVector<f64> {
    let mut v = DVector::zeros(p + 1);
    let mut acc = 1.0;
    for j in 0..=p {
        v[j] = acc;
        acc *= t;
    }
    v
}

/// `S = sum_i K_h(x_i - x0) H_i H_i'` over the given side, in the original
/// units of the running variable.
pub fn moment_matrix(
    sample: &Sample,
    idx: &[usize],
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
) -> Result<DMatrix<f64>> {
    let fit = side_weights(sample, idx, x0, h, p, kernel)?;
    Ok(fit.moment_matrix)
}

/// Local polynomial fit on one side of the cutoff.
///
/// `min_eigenvalue` is reported for the bandwidth-scaled moment matrix
/// (powers of `(x - x0)/h`), which is the matrix the conditioning check is
/// applied to. The weights `omega` do not depend on that scaling.
#[derive(Debug, Clone)]
pub struct SideFit {
    /// Indices into the sample, aligned with `kernel_weights` and `weights`.
    pub idx: Vec<usize>,
    pub kernel_weights: Vec<f64>,
    /// `omega_i = e1' S^{-1} H_i`.
    pub weights: Vec<f64>,
    pub moment_matrix: DMatrix<f64>,
    /// Moment matrix built from `(x - x0)/h` powers.
    pub scaled_moment_matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// Observations with strictly positive kernel weight.
    pub n_active: usize,
}

impl SideFit {
    /// `sum_i v_i K_i omega_i / sum_i K_i omega_i` for a full-sample vector.
    pub fn boundary_value(&self, values: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&i, &k), &w) in self.idx.iter().zip(&self.kernel_weights).zip(&self.weights) {
            num += values[i] * k * w;
            den += k * w;
        }
        num / den
    }

    /// `sum_i K_i omega_i`; equals 1 up to rounding.
    pub fn weight_total(&self) -> f64 {
        self.kernel_weights
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| k * w)
            .sum()
    }
}

pub fn side_weights(
    sample: &Sample,
    idx: &[usize],
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
) -> Result<SideFit> {
    check_bandwidth(h)?;
    let dim = p + 1;
    let mut s = DMatrix::zeros(dim, dim);
    let mut s_scaled = DMatrix::zeros(dim, dim);
    let mut kernel_weights = Vec::with_capacity(idx.len());
    let mut scaled_rows = Vec::with_capacity(idx.len());
    let mut n_active = 0;
    for &i in idx {
        let t = sample.x[i] - x0;
        let u = t / h;
        let k = kernel.eval_unchecked(u);
        kernel_weights.push(k);
        let hs = powers(u, p);
        if k > 0.0 {
            n_active += 1;
            let hv = powers(t, p);
            s.ger(k, &hv, &hv, 1.0);
            s_scaled.ger(k, &hs, &hs, 1.0);
        }
        scaled_rows.push(hs);
    }
    if n_active < dim {
        return Err(FrdError::InsufficientSample(format!(
            "{n_active} observations with positive kernel weight on one side, need at least {dim} for p = {p}"
        )));
    }
    let (chol, min_eig) = linalg::checked_cholesky(&s_scaled).map_err(|e| {
        FrdError::IllConditioned(format!(
            "moment matrix min eigenvalue {e:e} below {:e} x trace",
            linalg::CONDITION_TOL
        ))
    })?;
    let mut e1 = DVector::zeros(dim);
    e1[0] = 1.0;
    let a = chol.solve(&e1);
    let weights = scaled_rows.iter().map(|hs| a.dot(hs)).collect();
    Ok(SideFit {
        idx: idx.to_vec(),
        kernel_weights,
        weights,
        moment_matrix: s,
        scaled_moment_matrix: s_scaled,
        min_eigenvalue: min_eig,
        n_active,
    })
}

/// Boundary estimate at `x0` of `values` (outcome or treatment) from one side.
pub fn boundary_estimate(
    sample: &Sample,
    idx: &[usize],
    values: &[f64],
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
) -> Result<f64> {
    if values.len() != sample.len() {
        return Err(FrdError::InvalidInput(format!(
            "values has length {}, sample has {}",
            values.len(),
            sample.len()
        )));
    }
    Ok(side_weights(sample, idx, x0, h, p, kernel)?.boundary_value(values))
}

/// Standard FRD estimate `tau_y / tau_d` and its pieces.
#[derive(Debug, Clone)]
pub struct StandardFit {
    pub tau_hat: f64,
    pub tau_y: f64,
    pub tau_d: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub pi_plus: f64,
    pub pi_minus: f64,
    pub n_plus: usize,
    pub n_minus: usize,
    /// `|tau_d|` fell below the reporting threshold.
    pub near_zero_denominator: bool,
    pub plus: SideFit,
    pub minus: SideFit,
}

/// The four local polynomial fits without any check on the denominator.
/// `tau_hat` may be infinite or NaN here.
pub fn frd_parts(
    sample: &Sample,
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
) -> Result<StandardFit> {
    let es = split_effective(sample, x0, h)?;
    let plus = side_weights(sample, &es.idx_plus, x0, h, p, kernel)?;
    let minus = side_weights(sample, &es.idx_minus, x0, h, p, kernel)?;
    let mu_plus = plus.boundary_value(&sample.y);
    let mu_minus = minus.boundary_value(&sample.y);
    let pi_plus = plus.boundary_value(&sample.d);
    let pi_minus = minus.boundary_value(&sample.d);
    let tau_y = mu_plus - mu_minus;
    let tau_d = pi_plus - pi_minus;
    Ok(StandardFit {
        tau_hat: tau_y / tau_d,
        tau_y,
        tau_d,
        mu_plus,
        mu_minus,
        pi_plus,
        pi_minus,
        n_plus: plus.n_active,
        n_minus: minus.n_active,
        near_zero_denominator: tau_d.abs() < DENOMINATOR_FLAG_EPS,
        plus,
        minus,
    })
}

/// Standard FRD estimator with the default near-zero reporting threshold.
pub fn frd_standard(
    sample: &Sample,
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
) -> Result<StandardFit> {
    frd_standard_with_eps(sample, x0, h, p, kernel, DENOMINATOR_FLAG_EPS)
}

pub fn frd_standard_with_eps(
    sample: &Sample,
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
    flag_eps: f64,
) -> Result<StandardFit> {
    let mut fit = frd_parts(sample, x0, h, p, kernel)?;
    if !(fit.tau_d.abs() >= DENOMINATOR_HARD_EPS) {
        return Err(FrdError::DegenerateDenominator(fit.tau_d.abs()));
    }
    fit.near_zero_denominator = fit.tau_d.abs() < flag_eps;
    Ok(fit)
}
