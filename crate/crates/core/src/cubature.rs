//! Optimal cubature weights for a Stein kernel matrix, the integral
//! estimators built from them, and the kernel Stein discrepancy.
//!
//! With `v = K_P^-1 1` the weights are `w = v / 1^T v` and the worst-case
//! error is `(1^T v)^(-1/2)`. The finite-`sigma` estimator is never formed
//! from `K_P + sigma^2 11^T`; Woodbury reduces it to solves with `K_P`.

use nalgebra::DVector;

use crate::error::{CubatureError, SteinError};
use crate::kernels::RadialProfile;
use crate::sphere::UnitVector3;
use crate::stein::{stein_kernel, SteinKernelMatrix, SteinOperatorConfig};

#[derive(Clone, Debug)]
pub struct CubatureResult {
    pub weights: DVector<f64>,
    pub ksd: f64,
    /// Filled in by [`CubatureResult::with_estimate`]; `None` until then.
    pub estimate: Option<f64>,
    pub jitter_applied: f64,
    pub n: usize,
}

impl CubatureResult {
    pub fn with_estimate(mut self, f_values: &[f64]) -> Result<Self, CubatureError> {
        self.estimate = Some(integrate(&self, f_values)?);
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaEstimatorConfig {
    sigma: f64,
}

impl SigmaEstimatorConfig {
    pub fn new(sigma: f64) -> Result<Self, CubatureError> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(CubatureError::InvalidSigma(sigma));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), CubatureError> {
    if expected != got {
        return Err(CubatureError::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `1^T K^-1 1` and `K^-1 1`, failing when the former is not positive.
fn solve_ones(k: &SteinKernelMatrix) -> Result<(DVector<f64>, f64), CubatureError> {
    let v = k.solve(&DVector::from_element(k.n(), 1.0));
    let s = v.sum();
    if !s.is_finite() || s <= 0.0 {
        return Err(CubatureError::DegenerateSystem(s));
    }
    Ok((v, s))
}

pub fn solve_weights(k: &SteinKernelMatrix) -> Result<CubatureResult, CubatureError> {
    let (v, s) = solve_ones(k)?;
    Ok(CubatureResult {
        weights: v / s,
        ksd: s.sqrt().recip(),
        estimate: None,
        jitter_applied: k.jitter_applied(),
        n: k.n(),
    })
}

/// `w^T f`.
pub fn integrate(result: &CubatureResult, f_values: &[f64]) -> Result<f64, CubatureError> {
    check_len(result.n, f_values.len())?;
    Ok(result.weights.iter().zip(f_values).map(|(w, f)| w * f).sum())
}

/// `sigma^2 1^T (K_P + sigma^2 1 1^T)^-1 f`, evaluated as
/// `1^T K_P^-1 f / (sigma^-2 + 1^T K_P^-1 1)`.
pub fn integrate_sigma(
    k: &SteinKernelMatrix,
    cfg: SigmaEstimatorConfig,
    f_values: &[f64],
) -> Result<f64, CubatureError> {
    check_len(k.n(), f_values.len())?;
    let (v, s) = solve_ones(k)?;
    // K is symmetric, so 1^T K^-1 f = v^T f
    let num: f64 = v.iter().zip(f_values).map(|(a, b)| a * b).sum();
    Ok(num / (cfg.sigma.powi(-2) + s))
}

/// `sqrt(w^T K_P w)`; a slightly negative quadratic form is clamped to zero.
pub fn ksd_of_weights(k: &SteinKernelMatrix, w: &[f64]) -> Result<f64, CubatureError> {
    check_len(k.n(), w.len())?;
    let q = k.quadratic_form(&DVector::from_column_slice(w));
    if q < 0.0 {
        log::warn!("negative quadratic form {q:e} clamped to 0");
        return Ok(0.0);
    }
    Ok(q.sqrt())
}

/// The minimum-norm interpolant `xi + sum_i gamma_i k_P(., x_i)` of `f` at
/// the nodes, in the `sigma -> infinity` limit.
#[derive(Clone, Debug)]
pub struct SteinInterpolant {
    pub constant: f64,
    pub coefficients: DVector<f64>,
    pub nodes: Vec<UnitVector3>,
    /// `sqrt(gamma^T K_P gamma)`, the RKHS norm of the non-constant part.
    pub residual_norm: f64,
}

impl SteinInterpolant {
    pub fn fit(
        k: &SteinKernelMatrix,
        nodes: &[UnitVector3],
        f_values: &[f64],
    ) -> Result<Self, CubatureError> {
        check_len(k.n(), nodes.len())?;
        let weights = solve_weights(k)?;
        let constant = integrate(&weights, f_values)?;
        let centred = DVector::from_iterator(f_values.len(), f_values.iter().map(|f| f - constant));
        let coefficients = k.solve(&centred);
        let residual_norm = coefficients.dot(&centred).max(0.0).sqrt();
        Ok(Self {
            constant,
            coefficients,
            nodes: nodes.to_vec(),
            residual_norm,
        })
    }

    pub fn evaluate(
        &self,
        cfg: &SteinOperatorConfig<'_>,
        profile: &dyn RadialProfile,
        x: &UnitVector3,
    ) -> Result<f64, SteinError> {
        let mut s = self.constant;
        for (g, xi) in self.coefficients.iter().zip(&self.nodes) {
            s += g * stein_kernel(cfg, profile, x, xi)?;
        }
        Ok(s)
    }
}
