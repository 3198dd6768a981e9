//! Weighted-IV representation of the FRD estimator and the lambda-class
//! family that mixes it with the weighted OLS (sharp-design) estimator.
//!
//! With `Y~ = K^{1/2} Y` (and likewise for `D`, `Z`, `V`), the class is
//!
//! ```text
//! tau(lambda) = [lambda G tau_y tau_d + (1 - lambda) D~'M Y~]
//!             / [lambda G tau_d^2     + (1 - lambda) D~'M D~]
//! ```
//!
//! where `M` annihilates the interleaved side polynomials `V~`, `tau_y` and
//! `tau_d` are the standard local polynomial jumps, and `G = Z~'M Z~` is the
//! harmonic-style combination of the two side Schur complements. At
//! `lambda = 1` this is exactly the standard ratio estimator; for any
//! `lambda < 1` the denominator is bounded below by `(1 - lambda) D~'M D~ > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::kernels::KernelKind;
use crate::linalg::{self, Projector};
use crate::localpoly::{self, EffectiveSample, Sample, StandardFit, DENOMINATOR_FLAG_EPS, DENOMINATOR_HARD_EPS};

/// Relative floor on `D~'M D~ / D~'D~` for the treatment to carry residual
/// variation after partialling out the side polynomials.
const IDENTIFICATION_TOL: f64 = 1e-12;

/// Effective-sample data scaled by the square root of the kernel weights.
#[derive(Debug, Clone)]
pub struct WeightedData {
    pub y_t: DVector<f64>,
    pub d_t: DVector<f64>,
    pub z_t: DVector<f64>,
    /// Columns `[1, z t, (1-z) t, ..., z t^p, (1-z) t^p]` with `t = x - x0`,
    /// each row scaled by `sqrt(K_i)`.
    pub v_t: DMatrix<f64>,
    /// Weighted covariates, if any.
    pub w_t: Option<DMatrix<f64>>,
    /// Kernel weights `K_h(x_i - x0)` of the retained rows.
    pub kernel_weights: Vec<f64>,
    /// Sample indices of the retained rows.
    pub rows: Vec<usize>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub p: usize,
    /// Number of covariate columns already partialled out of `y_t`, `d_t`
    /// and `z_t`.
    pub partialled: usize,
}

impl WeightedData {
    pub fn n_h(&self) -> usize {
        self.rows.len()
    }

    /// Number of estimated mean parameters: the `2p + 1` columns of `V`,
    /// the treatment, and any partialled covariates.
    pub fn n_params(&self) -> usize {
        2 * self.p + 2 + self.partialled
    }
}

/// Build the weighted model over the effective sample. Rows with zero
/// kernel weight (e.g. triangular edge points) are dropped.
pub fn weighted_transform(
    sample: &Sample,
    es: &EffectiveSample,
    x0: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
) -> Result<WeightedData> {
    crate::kernels::check_bandwidth(h)?;
    let mut rows = Vec::with_capacity(es.n_h);
    let mut kw = Vec::with_capacity(es.n_h);
    let mut n_plus = 0;
    let mut n_minus = 0;
    for &i in es.idx_plus.iter().chain(&es.idx_minus) {
        let k = kernel.eval_unchecked((sample.x()[i] - x0) / h);
        if k > 0.0 {
            rows.push(i);
            kw.push(k);
            if sample.x()[i] >= x0 {
                n_plus += 1;
            } else {
                n_minus += 1;
            }
        }
    }
    if n_plus == 0 || n_minus == 0 {
        return Err(FrdError::Precondition(format!(
            "effective sample must be nonempty on both sides (n+ = {n_plus}, n- = {n_minus})"
        )));
    }
    let n = rows.len();
    let cols = 2 * p + 1;
    let mut y_t = DVector::zeros(n);
    let mut d_t = DVector::zeros(n);
    let mut z_t = DVector::zeros(n);
    let mut v_t = DMatrix::zeros(n, cols);
    for (r, (&i, &k)) in rows.iter().zip(&kw).enumerate() {
        let s = k.sqrt();
        let t = sample.x()[i] - x0;
        let z = if t >= 0.0 { 1.0 } else { 0.0 };
        y_t[r] = s * sample.y()[i];
        d_t[r] = s * sample.d()[i];
        z_t[r] = s * z;
        v_t[(r, 0)] = s;
        let mut tj = 1.0;
        for j in 1..=p {
            tj *= t;
            v_t[(r, 2 * j - 1)] = s * z * tj;
            v_t[(r, 2 * j)] = s * (1.0 - z) * tj;
        }
    }
    let w_t = sample.covariates().map(|w| {
        DMatrix::from_fn(n, w.ncols(), |r, j| kw[r].sqrt() * w[(rows[r], j)])
    });
    Ok(WeightedData {
        y_t,
        d_t,
        z_t,
        v_t,
        w_t,
        kernel_weights: kw,
        rows,
        n_plus,
        n_minus,
        p,
        partialled: 0,
    })
}

/// Schur complement `S_00 - R' U^{-1} R` of a side moment matrix, where `U`
/// is the lower-right `p x p` block and `R` its coupling to the intercept.
/// Invariant to rescaling the non-intercept columns.
pub fn schur_intercept(s: &DMatrix<f64>) -> Result<f64> {
    let dim = s.nrows();
    let s00 = s[(0, 0)];
    if dim == 1 {
        return Ok(s00);
    }
    let u = s.view((1, 1), (dim - 1, dim - 1)).clone_owned();
    let r = s.view((1, 0), (dim - 1, 1)).clone_owned();
    let chol = u.cholesky().ok_or_else(|| {
        FrdError::IllConditioned("moment matrix block is not positive definite".into())
    })?;
    let sol = chol.solve(&r);
    Ok(s00 - r.dot(&sol))
}

/// `G = G+ G- / (G+ + G-)` from the two side moment matrices.
pub fn gamma_tilde(s_plus: &DMatrix<f64>, s_minus: &DMatrix<f64>) -> Result<f64> {
    let gp = schur_intercept(s_plus)?;
    let gm = schur_intercept(s_minus)?;
    if !(gp > 0.0 && gm > 0.0) {
        return Err(FrdError::IllConditioned(format!(
            "nonpositive Schur complement (plus {gp:e}, minus {gm:e})"
        )));
    }
    Ok(gp * gm / (gp + gm))
}

/// `M_V` applied to `z~`, `d~` and `y~`.
#[derive(Debug, Clone)]
pub struct IvResiduals {
    pub rz: DVector<f64>,
    pub rd: DVector<f64>,
    pub ry: DVector<f64>,
}

impl IvResiduals {
    pub fn new(wd: &WeightedData) -> Result<Self> {
        let proj = Projector::new(&wd.v_t).ok_or_else(|| {
            FrdError::IllConditioned("weighted side-polynomial design is rank deficient".into())
        })?;
        Ok(IvResiduals {
            rz: proj.residual(&wd.z_t),
            rd: proj.residual(&wd.d_t),
            ry: proj.residual(&wd.y_t),
        })
    }

    pub fn zz(&self) -> f64 {
        self.rz.dot(&self.rz)
    }

    pub fn zd(&self) -> f64 {
        self.rz.dot(&self.rd)
    }

    pub fn zy(&self) -> f64 {
        self.rz.dot(&self.ry)
    }

    pub fn dd(&self) -> f64 {
        self.rd.dot(&self.rd)
    }

    pub fn dy(&self) -> f64 {
        self.rd.dot(&self.ry)
    }
}

/// IV estimate `(Z~'M D~)^{-1} Z~'M Y~`.
pub fn tau_iv(wd: &WeightedData) -> Result<f64> {
    let res = IvResiduals::new(wd)?;
    let zz = res.zz();
    let zd = res.zd();
    // Z~'M D~ = G tau_d, so compare on the tau_d scale.
    if !((zd / zz).abs() >= DENOMINATOR_HARD_EPS) {
        return Err(FrdError::DegenerateDenominator((zd / zz).abs()));
    }
    Ok(res.zy() / zd)
}

/// `Lambda(psi) = 1 - psi / (n_h - 2(p + 1))`.
pub fn lambda_from_psi(psi: f64, n_h: usize, p: usize) -> Result<f64> {
    let dof = n_h as f64 - 2.0 * (p as f64 + 1.0);
    if !(dof > 0.0) {
        return Err(FrdError::InsufficientSample(format!(
            "n_h = {n_h} must exceed 2(p + 1) = {}",
            2 * (p + 1)
        )));
    }
    if !(psi >= 0.0 && psi <= dof) {
        return Err(FrdError::InvalidInput(format!(
            "psi = {psi} outside [0, {dof}]"
        )));
    }
    Ok(1.0 - psi / dof)
}

/// How the mixing weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Fixed `lambda` in `[0, 1]`.
    Fixed(f64),
    /// `Lambda(psi)`, resolved against `n_h` at fit time.
    Psi(f64),
}

impl LambdaRule {
    pub fn resolve(self, n_h: usize, p: usize) -> Result<f64> {
        match self {
            LambdaRule::Fixed(l) => {
                if (0.0..=1.0).contains(&l) {
                    Ok(l)
                } else {
                    Err(FrdError::InvalidInput(format!("lambda = {l} outside [0, 1]")))
                }
            }
            LambdaRule::Psi(psi) => lambda_from_psi(psi, n_h, p),
        }
    }
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Psi(4.0)
    }
}

/// Point estimate from the lambda class together with its decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub tau_hat: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub tau_y_std: f64,
    pub tau_d_std: f64,
    pub gamma_tilde: f64,
    pub n_plus: usize,
    pub n_minus: usize,
    pub lambda_used: f64,
    pub near_zero_denominator: bool,
}

impl EstimateResult {
    pub fn n_h(&self) -> usize {
        self.n_plus + self.n_minus
    }
}

/// Lambda-class estimate from the standard pieces (`tau_y`, `tau_d`, `G`)
/// and the two quadratic forms `D~'M D~`, `D~'M Y~` taken from `wd`.
pub fn tau_lambda(
    wd: &WeightedData,
    tau_y: f64,
    tau_d: f64,
    gamma_tilde: f64,
    lambda: f64,
) -> Result<EstimateResult> {
    let res = IvResiduals::new(wd)?;
    tau_lambda_with(wd, &res, tau_y, tau_d, gamma_tilde, lambda)
}

pub(crate) fn tau_lambda_with(
    wd: &WeightedData,
    res: &IvResiduals,
    tau_y: f64,
    tau_d: f64,
    gamma_tilde: f64,
    lambda: f64,
) -> Result<EstimateResult> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FrdError::InvalidInput(format!("lambda = {lambda} outside [0, 1]")));
    }
    if !(gamma_tilde > 0.0) {
        return Err(FrdError::IllConditioned(format!(
            "gamma_tilde = {gamma_tilde:e} must be positive"
        )));
    }
    let near_zero = tau_d.abs() < DENOMINATOR_FLAG_EPS;
    let (numerator, denominator) = if lambda == 1.0 {
        if !(tau_d.abs() >= DENOMINATOR_HARD_EPS) {
            return Err(FrdError::DegenerateDenominator(tau_d.abs()));
        }
        (gamma_tilde * tau_y * tau_d, gamma_tilde * tau_d * tau_d)
    } else {
        let dd = res.dd();
        let scale = wd.d_t.dot(&wd.d_t);
        if !(dd > IDENTIFICATION_TOL * scale) {
            return Err(FrdError::NoIdentification(
                "treatment has no variation left after partialling out the side polynomials"
                    .into(),
            ));
        }
        let dy = res.dy();
        (
            lambda * gamma_tilde * tau_y * tau_d + (1.0 - lambda) * dy,
            lambda * gamma_tilde * tau_d * tau_d + (1.0 - lambda) * dd,
        )
    };
    Ok(EstimateResult {
        tau_hat: numerator / denominator,
        numerator,
        denominator,
        tau_y_std: tau_y,
        tau_d_std: tau_d,
        gamma_tilde,
        n_plus: wd.n_plus,
        n_minus: wd.n_minus,
        lambda_used: lambda,
        near_zero_denominator: near_zero,
    })
}

/// Replace `y~`, `d~`, `z~` with their residuals on `[V~ | W~]`.
pub fn partial_out_covariates(wd: &WeightedData) -> Result<WeightedData> {
    let w = wd.w_t.as_ref().ok_or_else(|| {
        FrdError::Precondition("no covariates to partial out".into())
    })?;
    // Identically zero columns carry no information and are skipped.
    let keep: Vec<usize> = (0..w.ncols()).filter(|&j| w.column(j).amax() > 0.0).collect();
    let w = w.select_columns(&keep);
    let q = linalg::hstack(&wd.v_t, &w);
    let proj = Projector::new(&q).ok_or_else(|| {
        FrdError::CollinearCovariates(
            "[V | W] is not of full column rank".into(),
        )
    })?;
    let mut out = wd.clone();
    out.y_t = proj.residual(&wd.y_t);
    out.d_t = proj.residual(&wd.d_t);
    out.z_t = proj.residual(&wd.z_t);
    out.partialled = w.ncols();
    Ok(out)
}

/// Full fit specification for one estimator at one cutoff and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub x0: f64,
    pub h: f64,
    pub p: usize,
    pub kernel: KernelKind,
    pub lambda: LambdaRule,
}

/// A lambda-class fit with everything inference needs.
#[derive(Debug, Clone)]
pub struct LambdaFit {
    pub result: EstimateResult,
    pub data: WeightedData,
    pub residuals: IvResiduals,
}

/// Fit a lambda-class estimator.
///
/// Without covariates the standard pieces come from the four one-sided
/// local polynomial fits and `G` from the side Schur complements. With
/// covariates they come from the partialled weighted model instead, where
/// `G = Z~'M Z~`, `tau_d = Z~'M D~ / G`, `tau_y = Z~'M Y~ / G`.
pub fn fit(sample: &Sample, spec: &FitSpec) -> Result<LambdaFit> {
    let es = localpoly::split_effective(sample, spec.x0, spec.h)?;
    if sample.covariates().is_none() {
        let std = localpoly::frd_parts(sample, spec.x0, spec.h, spec.p, spec.kernel)?;
        let wd = weighted_transform(sample, &es, spec.x0, spec.h, spec.p, spec.kernel)?;
        fit_from_standard(&std, wd, spec)
    } else {
        let raw = weighted_transform(sample, &es, spec.x0, spec.h, spec.p, spec.kernel)?;
        let wd = partial_out_covariates(&raw)?;
        let res = IvResiduals::new(&wd)?;
        let g = res.zz();
        if !(g > 0.0) {
            return Err(FrdError::IllConditioned("Z~'M Z~ is not positive".into()));
        }
        let tau_d = res.zd() / g;
        let tau_y = res.zy() / g;
        let lambda = spec.lambda.resolve(wd.n_h(), spec.p)?;
        let result = tau_lambda_with(&wd, &res, tau_y, tau_d, g, lambda)?;
        Ok(LambdaFit {
            result,
            data: wd,
            residuals: res,
        })
    }
}

fn fit_from_standard(std: &StandardFit, wd: WeightedData, spec: &FitSpec) -> Result<LambdaFit> {
    let g = gamma_tilde(&std.plus.scaled_moment_matrix, &std.minus.scaled_moment_matrix)?;
    let res = IvResiduals::new(&wd)?;
    let lambda = spec.lambda.resolve(wd.n_h(), spec.p)?;
    let result = tau_lambda_with(&wd, &res, std.tau_y, std.tau_d, g, lambda)?;
    Ok(LambdaFit {
        result,
        data: wd,
        residuals: res,
    })
}

/// Named estimator configuration used by the simulation lab and the
/// empirical workflow.
///
/// Accepted names: `standard` (lambda = 1, triangular), `ols` (lambda = 0),
/// `lambda<psi>` such as `lambda4` (Lambda(psi), uniform), `psi=<v>`, and
/// `lam=<v>` for a fixed lambda. Modifiers may follow after `:`, e.g.
/// `lambda4:triangular:p2`. The default order is `p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub label: String,
    pub lambda: LambdaRule,
    pub kernel: KernelKind,
    pub p: usize,
}

impl EstimatorSpec {
    pub fn fit_spec(&self, x0: f64, h: f64) -> FitSpec {
        FitSpec {
            x0,
            h,
            p: self.p,
            kernel: self.kernel,
            lambda: self.lambda,
        }
    }

    /// Parse a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl std::str::FromStr for EstimatorSpec {
    type Err = FrdError;

    fn from_str(s: &str) -> Result<Self> {
        let label = s.trim().to_string();
        let mut parts = label.split(':');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let bad = || FrdError::InvalidInput(format!("unknown estimator `{label}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let (lambda, mut kernel) = if head == "standard" {
            (LambdaRule::Fixed(1.0), KernelKind::Triangular)
        } else if head == "ols" {
            (LambdaRule::Fixed(0.0), KernelKind::Uniform)
        } else if let Some(v) = head.strip_prefix("psi=") {
            (LambdaRule::Psi(num(v)?), KernelKind::Uniform)
        } else if let Some(v) = head.strip_prefix("lam=").or_else(|| head.strip_prefix("lambda=")) {
            (LambdaRule::Fixed(num(v)?), KernelKind::Uniform)
        } else if let Some(v) = head.strip_prefix("lambda") {
            (LambdaRule::Psi(num(v)?), KernelKind::Uniform)
        } else {
            return Err(bad());
        };
        match lambda {
            LambdaRule::Fixed(l) if !(0.0..=1.0).contains(&l) => return Err(bad()),
            LambdaRule::Psi(psi) if !(psi >= 0.0 && psi.is_finite()) => return Err(bad()),
            _ => {}
        }
        let mut p = 1;
        for m in parts {
            let m = m.trim().to_ascii_lowercase();
            if let Some(order) = m.strip_prefix('p').and_then(|o| o.parse::<usize>().ok()) {
                p = order;
            } else {
                kernel = m.parse()?;
            }
        }
        Ok(EstimatorSpec {
            label,
            lambda,
            kernel,
            p,
        })
    }
}
