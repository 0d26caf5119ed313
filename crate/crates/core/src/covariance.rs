//! Covariance estimators for the raw `p`-dimensional observations.

use nalgebra::{DMatrix, DVector};

use crate::error::{FasmError, Result};
use crate::estimator::FasmFit;
use crate::sim::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovSource {
    Fasm,
    Sample,
    Population,
}

impl CovSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CovSource::Fasm => "fasm",
            CovSource::Sample => "sample",
            CovSource::Population => "population",
        }
    }
}

/// A `p × p` covariance matrix tagged with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    sigma: DMatrix<f64>,
    source: CovSource,
}

impl CovarianceEstimate {
    /// Wraps `sigma` after replacing it with `(Σ + Σ')/2`, which is exactly
    /// symmetric in floating point.
    pub fn new(sigma: DMatrix<f64>, source: CovSource) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(FasmError::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        Ok(Self { sigma: sym, source })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn source(&self) -> CovSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Unbiased covariance across columns: `XX'/(n-1) - X11'X'/(n(n-1))`.
///
/// Rows are variables, columns are subjects.
pub fn centered_gram(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if n < 2 {
        return Err(FasmError::TooFewSubjects { needed: 2, got: n });
    }
    let mean = x.column_mean();
    let mut centred = x.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    Ok(&centred * centred.transpose() / (n - 1) as f64)
}

/// The three additive pieces of the model-based covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FasmCovarianceTerms {
    /// `Φ Σ̂_c Φ'`.
    pub smooth: DMatrix<f64>,
    /// `Â Σ̂_f Â'`.
    pub factor: DMatrix<f64>,
    /// `diag(ÊÊ'/n)`.
    pub noise: DVector<f64>,
}

impl FasmCovarianceTerms {
    pub fn total(&self) -> DMatrix<f64> {
        &self.smooth + &self.factor + DMatrix::from_diagonal(&self.noise)
    }
}

pub fn fasm_covariance_terms(fit: &FasmFit, phi: &DMatrix<f64>) -> Result<FasmCovarianceTerms> {
    if phi.ncols() != fit.c_hat.nrows() || phi.nrows() != fit.e_hat.nrows() {
        return Err(FasmError::DimensionMismatch(format!(
            "basis matrix is {}x{}, fit has p = {} and K = {}",
            phi.nrows(),
            phi.ncols(),
            fit.e_hat.nrows(),
            fit.c_hat.nrows()
        )));
    }
    let n = fit.c_hat.ncols();
    let sigma_c = centered_gram(&fit.c_hat)?;
    let smooth = phi * sigma_c * phi.transpose();

    let p = phi.nrows();
    let factor = if fit.a_hat.ncols() == 0 {
        DMatrix::zeros(p, p)
    } else {
        let sigma_f = centered_gram(&fit.f_hat.transpose())?;
        &fit.a_hat * sigma_f * fit.a_hat.transpose()
    };

    let noise = DVector::from_iterator(
        p,
        fit.e_hat
            .row_iter()
            .map(|row| row.norm_squared() / n as f64),
    );
    Ok(FasmCovarianceTerms {
        smooth,
        factor,
        noise,
    })
}

/// `Σ̂_Y = Φ Σ̂_c Φ' + Â Σ̂_f Â' + diag(ÊÊ'/n)`.
pub fn fasm_covariance(fit: &FasmFit, phi: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    let terms = fasm_covariance_terms(fit, phi)?;
    CovarianceEstimate::new(terms.total(), CovSource::Fasm)
}

/// `(Y - Ȳ)(Y - Ȳ)'/(n-1)`.
pub fn sample_covariance(y: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    CovarianceEstimate::new(centered_gram(y)?, CovSource::Sample)
}

/// `(1/p) Σ_jk (Σ̂ - Σ)²_jk`.
pub fn frobenius_mse(estimate: &CovarianceEstimate, truth: &CovarianceEstimate) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(FasmError::DimensionMismatch(format!(
            "comparing {0}x{0} with {1}x{1} covariance",
            estimate.dim(),
            truth.dim()
        )));
    }
    let p = estimate.dim();
    if p == 0 {
        return Ok(0.0);
    }
    Ok((estimate.sigma() - truth.sigma()).norm_squared() / p as f64)
}

/// `(1/p²) Σ_jk (Σ̂ - Σ)²_jk`, the mean squared error per matrix entry.
pub fn entrywise_mse(estimate: &CovarianceEstimate, truth: &CovarianceEstimate) -> Result<f64> {
    let p = estimate.dim().max(1) as f64;
    Ok(frobenius_mse(estimate, truth)? / p)
}

/// Generative parameters of `Σ_Y = ΦΣ_cΦ' + AΣ_fA' + σ²_ε I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTruth {
    /// `p × K` basis evaluated on the grid.
    pub phi: DMatrix<f64>,
    pub sigma_c: DMatrix<f64>,
    /// `p × r` loadings over the grid.
    pub loadings: DMatrix<f64>,
    pub sigma_f: DMatrix<f64>,
    pub noise_var: f64,
}

impl PopulationTruth {
    pub fn covariance(&self) -> Result<CovarianceEstimate> {
        let p = self.phi.nrows();
        let mut sigma = &self.phi * &self.sigma_c * self.phi.transpose();
        if self.loadings.ncols() > 0 {
            sigma += &self.loadings * &self.sigma_f * self.loadings.transpose();
        }
        for j in 0..p {
            sigma[(j, j)] += self.noise_var;
        }
        CovarianceEstimate::new(sigma, CovSource::Population)
    }
}

/// The exact covariance implied by a scenario's generator.
pub fn population_covariance(scenario: &Scenario) -> Result<CovarianceEstimate> {
    match &scenario.truth {
        Some(truth) => truth.covariance(),
        None => Err(FasmError::TruthUnavailable(scenario.spec.kind.name())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::FasmFit;

    fn fit_from(c: DMatrix<f64>, p: usize) -> FasmFit {
        let n = c.ncols();
        FasmFit {
            c_hat: c,
            a_hat: DMatrix::zeros(p, 0),
            f_hat: DMatrix::zeros(n, 0),
            e_hat: DMatrix::zeros(p, n),
            alpha: 1.0,
            df: 1.0,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
            factor_eigenvalues: DVector::zeros(0),
            row_means: None,
            mean_coef: None,
        }
    }

    #[test]
    fn identical_coefficients_give_zero() {
        let c = DMatrix::from_element(2, 4, 3.0);
        let phi = DMatrix::from_element(5, 2, 1.0);
        let est = fasm_covariance(&fit_from(c, 5), &phi).unwrap();
        assert_eq!(est.sigma().amax(), 0.0);
    }

    #[test]
    fn two_subject_hand_case() {
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let phi = DMatrix::from_element(3, 1, 1.0);
        let est = fasm_covariance(&fit_from(c, 3), &phi).unwrap();
        assert!((est.sigma() - DMatrix::from_element(3, 3, 2.0)).amax() < 1e-15);
        assert_eq!(est.source(), CovSource::Fasm);
    }

    #[test]
    fn one_subject_rejected() {
        let y = DMatrix::from_element(3, 1, 1.0);
        assert_eq!(
            sample_covariance(&y).unwrap_err(),
            FasmError::TooFewSubjects { needed: 2, got: 1 }
        );
    }

    #[test]
    fn sample_hand_cases() {
        let y = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(sample_covariance(&y).unwrap().sigma()[(0, 0)], 2.0);
        let same = DMatrix::from_fn(3, 4, |j, _| j as f64);
        assert_eq!(sample_covariance(&same).unwrap().sigma().amax(), 0.0);
    }

    #[test]
    fn mse_hand_cases() {
        let a = CovarianceEstimate::new(DMatrix::identity(2, 2), CovSource::Sample).unwrap();
        let z = CovarianceEstimate::new(DMatrix::zeros(2, 2), CovSource::Population).unwrap();
        assert_eq!(frobenius_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(frobenius_mse(&a, &z).unwrap(), 1.0);
        assert_eq!(entrywise_mse(&a, &z).unwrap(), 0.5);
        let b = CovarianceEstimate::new(DMatrix::identity(3, 3), CovSource::Sample).unwrap();
        assert!(frobenius_mse(&a, &b).is_err());
    }

    #[test]
    fn constructor_symmetrises() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.3, 1.0]);
        let est = CovarianceEstimate::new(m, CovSource::Sample).unwrap();
        assert_eq!(est.sigma(), &est.sigma().transpose());
        assert!((est.sigma()[(0, 1)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_truth_is_zero() {
        let truth = PopulationTruth {
            phi: DMatrix::from_element(4, 2, 1.0),
            sigma_c: DMatrix::zeros(2, 2),
            loadings: DMatrix::from_element(4, 1, 1.0),
            sigma_f: DMatrix::zeros(1, 1),
            noise_var: 0.0,
        };
        assert_eq!(truth.covariance().unwrap().sigma().amax(), 0.0);
    }
}
