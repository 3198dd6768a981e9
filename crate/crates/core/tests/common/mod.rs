//! Dense reference implementations used as test oracles. Everything here is
//! built from explicit matrices and SVD solves, independently of the
//! library's weight and projection code.
#![allow(dead_code)]

use frdkit_core::KernelKind;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn kernel(k: KernelKind, u: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    match k {
        KernelKind::Triangular => 1.0 - u.abs(),
        KernelKind::Uniform => 0.5,
        KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
    }
}

/// Least-squares coefficients via SVD.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.clone().svd(true, true).solve(y, 1e-13).expect("svd solve")
}

pub fn pinv(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().pseudo_inverse(1e-13).expect("pseudo-inverse")
}

/// `I - X (X'X)^+ X'`.
pub fn annihilator(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::identity(n, n) - x * pinv(x)
}

/// Random FRD instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub x0: f64,
    pub h: f64,
    pub p: usize,
    pub kernel: KernelKind,
}

impl Instance {
    pub fn sample(&self) -> frdkit_core::Sample {
        frdkit_core::Sample::new(self.x.clone(), self.y.clone(), self.d.clone()).unwrap()
    }
}

/// Instance with about `n_h` points strictly inside the window, a few
/// points outside it, and random side-specific treatment rates.
pub fn random_instance(rng: &mut ChaCha8Rng, n_h: usize, p: usize, kernel: KernelKind) -> Instance {
    let x0 = rng.random_range(-1.0..1.0);
    let h = rng.random_range(0.3..2.0);
    let pi_plus = rng.random_range(0.4..0.95);
    let pi_minus = rng.random_range(0.05..0.6);
    let tau = rng.random_range(-2.0..2.0);
    let c: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let n_plus = n_h / 2 + rng.random_range(0..=n_h / 4);
    let n_plus = n_plus.min(n_h - (p + 3)).max(p + 3);
    let mut x = Vec::new();
    for i in 0..n_h {
        let u: f64 = rng.random_range(0.01..0.99);
        x.push(if i < n_plus { x0 + u * h } else { x0 - u * h });
    }
    for _ in 0..n_h / 10 {
        let u: f64 = rng.random_range(1.05..2.0);
        x.push(if rng.random_bool(0.5) { x0 + u * h } else { x0 - u * h });
    }
    let mut d: Vec<f64> = x
        .iter()
        .map(|&xi| {
            let pr = if xi >= x0 { pi_plus } else { pi_minus };
            f64::from(u8::from(rng.random_bool(pr)))
        })
        .collect();
    // Keep both treatment values on each side of the window.
    let ends = [(0usize, 1usize), (n_plus, n_plus + 1)];
    for (a, b) in ends {
        d[a] = 0.0;
        d[b] = 1.0;
    }
    let y = x
        .iter()
        .zip(&d)
        .map(|(&xi, &di)| {
            let t = xi - x0;
            c[0] + c[1] * t + c[2] * t * t + tau * di + rng.random_range(-0.5..0.5)
        })
        .collect();
    Instance { x, y, d, x0, h, p, kernel }
}

/// Kernel-weighted one-sided polynomial intercept.
pub fn side_intercept(inst: &Instance, values: &[f64], plus: bool) -> f64 {
    let rows: Vec<usize> = (0..inst.x.len())
        .filter(|&i| {
            let t = inst.x[i] - inst.x0;
            let inside = t.abs() <= inst.h;
            inside && (t >= 0.0) == plus && kernel(inst.kernel, t / inst.h) > 0.0
        })
        .collect();
    let n = rows.len();
    let x = DMatrix::from_fn(n, inst.p + 1, |r, j| {
        let i = rows[r];
        let t = inst.x[i] - inst.x0;
        kernel(inst.kernel, t / inst.h).sqrt() * t.powi(j as i32)
    });
    let y = DVector::from_fn(n, |r, _| {
        let i = rows[r];
        kernel(inst.kernel, (inst.x[i] - inst.x0) / inst.h).sqrt() * values[i]
    });
    lstsq(&x, &y)[0]
}

/// `(tau_y, tau_d)` from four separate weighted regressions.
pub fn four_regressions(inst: &Instance) -> (f64, f64) {
    let ty = side_intercept(inst, &inst.y, true) - side_intercept(inst, &inst.y, false);
    let td = side_intercept(inst, &inst.d, true) - side_intercept(inst, &inst.d, false);
    (ty, td)
}

/// Weighted model `(y~, d~, z~, V~)` over rows with positive kernel weight.
pub struct Dense {
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    pub z: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn dense_model(inst: &Instance) -> Dense {
    let rows: Vec<usize> = (0..inst.x.len())
        .filter(|&i| {
            let t = inst.x[i] - inst.x0;
            t.abs() <= inst.h && kernel(inst.kernel, t / inst.h) > 0.0
        })
        .collect();
    let n = rows.len();
    let sk = |i: usize| kernel(inst.kernel, (inst.x[i] - inst.x0) / inst.h).sqrt();
    let zf = |i: usize| if inst.x[i] >= inst.x0 { 1.0 } else { 0.0 };
    let v = DMatrix::from_fn(n, 2 * inst.p + 1, |r, c| {
        let i = rows[r];
        let t = inst.x[i] - inst.x0;
        if c == 0 {
            return sk(i);
        }
        let j = c.div_ceil(2);
        let side = if c % 2 == 1 { zf(i) } else { 1.0 - zf(i) };
        sk(i) * side * t.powi(j as i32)
    });
    Dense {
        y: DVector::from_fn(n, |r, _| sk(rows[r]) * inst.y[rows[r]]),
        d: DVector::from_fn(n, |r, _| sk(rows[r]) * inst.d[rows[r]]),
        z: DVector::from_fn(n, |r, _| sk(rows[r]) * zf(rows[r])),
        v,
    }
}

fn hstack_col(a: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(b.nrows(), b.ncols() + 1);
    m.set_column(0, a);
    m.view_mut((0, 1), (b.nrows(), b.ncols())).copy_from(b);
    m
}

/// Generic 2SLS: regressors `[d, V]`, instruments `[z, V]`; returns the
/// coefficient on `d`. The system is exactly identified, so this is
/// `(Z'X)^{-1} Z'y`.
pub fn tsls(m: &Dense) -> f64 {
    let x = hstack_col(&m.d, &m.v);
    let zi = hstack_col(&m.z, &m.v);
    let beta = (zi.transpose() * &x)
        .full_piv_lu()
        .solve(&(zi.transpose() * &m.y))
        .expect("iv solve");
    beta[0]
}

/// OLS coefficient on `d` in the regression of `y~` on `[d~, V~]`.
pub fn ols_on_d(m: &Dense) -> f64 {
    lstsq(&hstack_col(&m.d, &m.v), &m.y)[0]
}

/// `D'A Y / D'A D` with `A = M_V (I - lambda M_a) M_V`, `a = M_V z`,
/// all matrices formed densely.
pub fn lambda_projection(m: &Dense, lambda: f64) -> f64 {
    let n = m.y.len();
    let mv = annihilator(&m.v);
    let a = &mv * &m.z;
    let ma = annihilator(&DMatrix::from_column_slice(n, 1, a.as_slice()));
    let inner = DMatrix::identity(n, n) - ma * lambda;
    let big = &mv * inner * &mv;
    let num = (m.d.transpose() * &big * &m.y)[(0, 0)];
    let den = (m.d.transpose() * &big * &m.d)[(0, 0)];
    num / den
}

/// IV sandwich variance of the coefficient on `d` for the exactly
/// identified system, times `n_h`; HC0 or HC1 with `k = 2p + 2`.
pub fn iv_sandwich(m: &Dense, hc1: bool) -> f64 {
    let n = m.y.len();
    let x = hstack_col(&m.d, &m.v);
    let zi = hstack_col(&m.z, &m.v);
    let zx = zi.transpose() * &x;
    let zx_inv = zx.clone().try_inverse().expect("invertible Z'X");
    let beta = &zx_inv * (zi.transpose() * &m.y);
    let e = &m.y - &x * &beta;
    let mut meat = DMatrix::zeros(zi.ncols(), zi.ncols());
    for i in 0..n {
        let zr = zi.row(i).transpose();
        meat += &zr * zr.transpose() * (e[i] * e[i]);
    }
    let cov = &zx_inv * meat * zx_inv.transpose();
    let k = x.ncols();
    let scale = if hc1 { n as f64 / (n - k) as f64 } else { 1.0 };
    n as f64 * cov[(0, 0)] * scale
}
