mod common;

use common::{clamped_knots, cox_de_boor, jacobi_eig, two_pass_covariance};
use fasm::covariance::{
    fasm_covariance, fasm_covariance_terms, population_covariance, sample_covariance,
};
use fasm::estimator::{fit_fasm, FasmConfig};
use fasm::sim::{gen_bspline_factor, gen_misspec_fourier, gen_stepjump};
use fasm::FasmError;
use nalgebra::DMatrix;

fn min_eig_ratio(s: &DMatrix<f64>) -> f64 {
    let (values, _) = jacobi_eig(s);
    values[values.len() - 1] / s.norm()
}

#[test]
fn fasm_covariance_is_the_sum_of_its_terms() {
    let s = gen_bspline_factor(20, 31, 0.75, 4).unwrap();
    let cfg = FasmConfig {
        max_iter: 10,
        ..FasmConfig::with_factors(2)
    };
    let fit = fit_fasm(&s.y, &s.fit_basis, &s.grid, &cfg).unwrap();
    let phi = s.fit_basis.eval(&s.grid).unwrap();

    let smooth = &phi * two_pass_covariance(&fit.c_hat) * phi.transpose();
    let factor = &fit.a_hat * two_pass_covariance(&fit.f_hat.transpose()) * fit.a_hat.transpose();
    let n = s.y.ncols() as f64;
    let noise = DMatrix::from_fn(31, 31, |j, k| {
        if j == k {
            fit.e_hat.row(j).iter().map(|v| v * v).sum::<f64>() / n
        } else {
            0.0
        }
    });
    let oracle = smooth + factor + noise;
    let est = fasm_covariance(&fit, &phi).unwrap();
    let scale = oracle.amax();
    assert!((est.sigma() - &oracle).amax() < 1e-12 * scale);

    let terms = fasm_covariance_terms(&fit, &phi).unwrap();
    assert_eq!(
        est.sigma(),
        &((&terms.total() + terms.total().transpose()) * 0.5)
    );
    assert!(terms.noise.iter().all(|v| *v >= 0.0));
}

#[test]
fn estimates_are_symmetric_and_psd() {
    for seed in 0..5 {
        let s = gen_bspline_factor(15, 41, 1.0, seed).unwrap();
        let cfg = FasmConfig {
            max_iter: 10,
            ..FasmConfig::with_factors(3)
        };
        let fit = fit_fasm(&s.y, &s.fit_basis, &s.grid, &cfg).unwrap();
        let phi = s.fit_basis.eval(&s.grid).unwrap();
        for est in [
            fasm_covariance(&fit, &phi).unwrap(),
            sample_covariance(&s.y).unwrap(),
        ] {
            assert_eq!(est.sigma(), &est.sigma().transpose());
            assert!(min_eig_ratio(est.sigma()) > -1e-8);
        }
    }
}

#[test]
fn population_without_factors_matches_closed_form() {
    let (p, sigma) = (21, 0.0);
    let s = gen_bspline_factor(3, p, sigma, 0).unwrap();
    let pop = population_covariance(&s).unwrap();

    let interior: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let t = clamped_knots(4, &interior, 0.0, 1.0);
    let phi = DMatrix::from_fn(p, 13, |j, k| cox_de_boor(&t, k, 4, s.grid[j]));
    let expected = &phi * phi.transpose() * 2.25 + DMatrix::identity(p, p) * 0.25;
    assert!((pop.sigma() - expected).amax() < 1e-12);
}

#[test]
fn population_includes_factor_term() {
    let s = gen_bspline_factor(3, 21, 1.0, 8).unwrap();
    let truth = s.truth.as_ref().unwrap();
    let base = &truth.phi * &truth.sigma_c * truth.phi.transpose();
    let factor = &truth.loadings * truth.loadings.transpose();
    let expected = base + factor + DMatrix::identity(21, 21) * 0.25;
    assert!((population_covariance(&s).unwrap().sigma() - expected).amax() < 1e-12);
}

#[test]
fn scenarios_without_closed_form_report_it() {
    let misspec = gen_misspec_fourier(4, 21, 0).unwrap();
    assert!(matches!(
        population_covariance(&misspec),
        Err(FasmError::TruthUnavailable(_))
    ));
    let step = gen_stepjump(4, 21, 1.0, 0).unwrap();
    assert!(matches!(
        population_covariance(&step),
        Err(FasmError::TruthUnavailable(_))
    ));
}

#[test]
fn sample_covariance_matches_oracle_on_scenario_data() {
    let s = gen_bspline_factor(12, 25, 0.5, 2).unwrap();
    let est = sample_covariance(&s.y).unwrap();
    let oracle = two_pass_covariance(&s.y);
    assert!((est.sigma() - oracle).amax() < 1e-12 * est.sigma().amax());
}
