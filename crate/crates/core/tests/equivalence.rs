mod common;

use common::*;
use frdkit_core::estimators::{self, FitSpec, LambdaRule};
use frdkit_core::localpoly;
use frdkit_core::{KernelKind, Sample};
use rand::Rng;

fn spec(inst: &Instance, lambda: f64) -> FitSpec {
    FitSpec {
        x0: inst.x0,
        h: inst.h,
        p: inst.p,
        kernel: inst.kernel,
        lambda: LambdaRule::Fixed(lambda),
    }
}

fn instances(seed: u64, count: usize, max_n: usize) -> Vec<Instance> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let p = i % 3;
            let k = KernelKind::ALL[(i / 3) % 3];
            let n_h = r.random_range(12..=max_n);
            random_instance(&mut r, n_h, p, k)
        })
        .collect()
}

#[test]
fn standard_matches_four_regressions() {
    for inst in instances(1, 60, 150) {
        let (ty, td) = four_regressions(&inst);
        let fit = localpoly::frd_standard(&inst.sample(), inst.x0, inst.h, inst.p, inst.kernel).unwrap();
        assert!((fit.tau_y - ty).abs() < 1e-9, "{} vs {}", fit.tau_y, ty);
        assert!((fit.tau_d - td).abs() < 1e-9);
        assert!((fit.tau_hat - ty / td).abs() < 1e-8 * (1.0 + fit.tau_hat.abs()));
    }
}

#[test]
fn iv_matches_generic_tsls() {
    for inst in instances(2, 60, 120) {
        let sample = inst.sample();
        let es = localpoly::split_effective(&sample, inst.x0, inst.h).unwrap();
        let wd = estimators::weighted_transform(&sample, &es, inst.x0, inst.h, inst.p, inst.kernel).unwrap();
        let iv = estimators::tau_iv(&wd).unwrap();
        let oracle = tsls(&dense_model(&inst));
        assert!((iv - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{iv} vs {oracle}");
    }
}

#[test]
fn lambda_zero_is_weighted_ols() {
    for inst in instances(3, 60, 150) {
        let got = estimators::fit(&inst.sample(), &spec(&inst, 0.0)).unwrap().result.tau_hat;
        let oracle = ols_on_d(&dense_model(&inst));
        assert!((got - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{got} vs {oracle}");
    }
}

#[test]
fn expanded_form_matches_projection_form() {
    for inst in instances(4, 30, 50) {
        let m = dense_model(&inst);
        for lambda in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let got = estimators::fit(&inst.sample(), &spec(&inst, lambda)).unwrap().result.tau_hat;
            let oracle = lambda_projection(&m, lambda);
            assert!((got - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "lambda {lambda}: {got} vs {oracle}");
        }
    }
}

#[test]
fn gamma_tilde_is_zmz() {
    for inst in instances(5, 30, 100) {
        let fit = estimators::fit(&inst.sample(), &spec(&inst, 0.5)).unwrap();
        let m = dense_model(&inst);
        let zmz = (m.z.transpose() * annihilator(&m.v) * &m.z)[(0, 0)];
        let g = fit.result.gamma_tilde;
        assert!((g - zmz).abs() < 1e-9 * zmz.max(1.0), "{g} vs {zmz}");
        assert!((fit.residuals.zz() - zmz).abs() < 1e-9 * zmz.max(1.0));
    }
}

#[test]
fn lambda_path_is_between_endpoints_in_numerator_and_denominator() {
    // Both the numerator and denominator are affine in lambda.
    for inst in instances(6, 20, 80) {
        let s = inst.sample();
        let at = |l: f64| estimators::fit(&s, &spec(&inst, l)).unwrap().result;
        let (r0, r1, rm) = (at(0.0), at(1.0), at(0.3));
        let num = 0.7 * r0.numerator + 0.3 * r1.numerator;
        let den = 0.7 * r0.denominator + 0.3 * r1.denominator;
        assert!((rm.numerator - num).abs() < 1e-9 * (1.0 + num.abs()));
        assert!((rm.denominator - den).abs() < 1e-9 * (1.0 + den.abs()));
    }
}

/// With covariates the estimators equal the long regressions that include
/// them: OLS on `[d, V, W]` and 2SLS with instruments `[z, V, W]`.
#[test]
fn covariates_match_long_regressions() {
    let mut r = rng(7);
    for i in 0..20 {
        let inst = random_instance(&mut r, 40 + 5 * i, i % 3, KernelKind::ALL[i % 3]);
        let n = inst.x.len();
        let w1: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let w2: Vec<f64> = inst.x.iter().map(|x| (3.0 * x).sin()).collect();
        let y: Vec<f64> = inst.y.iter().zip(&w1).map(|(y, w)| y + 0.7 * w).collect();
        let inst = Instance { y, ..inst };
        let sample = Sample::new(inst.x.clone(), inst.y.clone(), inst.d.clone())
            .unwrap()
            .with_covariates(vec![w1.clone(), w2.clone()])
            .unwrap();

        let m = dense_model(&inst);
        let rows: Vec<usize> = (0..n)
            .filter(|&j| {
                let t = inst.x[j] - inst.x0;
                t.abs() <= inst.h && kernel(inst.kernel, t / inst.h) > 0.0
            })
            .collect();
        let sk = |j: usize| kernel(inst.kernel, (inst.x[j] - inst.x0) / inst.h).sqrt();
        let k = m.v.ncols();
        let mut vw = nalgebra::DMatrix::zeros(rows.len(), k + 2);
        vw.view_mut((0, 0), (rows.len(), k)).copy_from(&m.v);
        for (rr, &j) in rows.iter().enumerate() {
            vw[(rr, k)] = sk(j) * w1[j];
            vw[(rr, k + 1)] = sk(j) * w2[j];
        }
        let long = Dense { y: m.y.clone(), d: m.d.clone(), z: m.z.clone(), v: vw };

        let ols = estimators::fit(&sample, &spec(&inst, 0.0)).unwrap();
        let oracle = ols_on_d(&long);
        assert!((ols.result.tau_hat - oracle).abs() < 1e-8 * (1.0 + oracle.abs()));
        assert_eq!(ols.data.partialled, 2);

        let iv = estimators::fit(&sample, &spec(&inst, 1.0)).unwrap();
        let oracle = tsls(&long);
        assert!((iv.result.tau_hat - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{i}: {} vs {oracle}, td {}", iv.result.tau_hat, iv.result.tau_d_std);

        let mid = estimators::fit(&sample, &spec(&inst, 0.5)).unwrap();
        let oracle = lambda_projection(&long, 0.5);
        assert!((mid.result.tau_hat - oracle).abs() < 1e-8 * (1.0 + oracle.abs()));
    }
}

#[test]
fn zero_covariate_column_is_ignored() {
    let inst = instances(8, 1, 60).remove(0);
    let n = inst.x.len();
    let plain = estimators::fit(&inst.sample(), &spec(&inst, 0.5)).unwrap();
    let with_zero = inst.sample().with_covariates(vec![vec![0.0; n]]).unwrap();
    let fit = estimators::fit(&with_zero, &spec(&inst, 0.5)).unwrap();
    assert_eq!(fit.data.partialled, 0);
    assert!((fit.result.tau_hat - plain.result.tau_hat).abs() < 1e-9);
}

#[test]
fn collinear_covariate_rejected() {
    let inst = instances(9, 1, 60).remove(0);
    // A constant duplicates the intercept column.
    let s = inst.sample().with_covariates(vec![vec![3.0; inst.x.len()]]).unwrap();
    let err = estimators::fit(&s, &spec(&inst, 0.5)).unwrap_err();
    assert_eq!(err.category(), "collinear_covariates");
}
