use std::f64::consts::PI;

use super::special::{is_integer, pochhammer, HypergeometricSeries};
use super::RadialProfile;
use crate::error::KernelError;

/// Reproducing kernel of the Sobolev space `W_2^alpha(S^2)`:
///
/// `psi(u) = C1 3F2(3/2 - alpha, 1 - alpha, 3/2 - alpha; 2 - alpha, 2 - 2 alpha; (1 - u)/2)
///          + C2 (2 - 2u)^(alpha - 1)`.
///
/// The series part is a polynomial because `3/2 - alpha` is a non-positive
/// integer; all of the non-smoothness sits in the power term.
#[derive(Clone, Debug)]
pub struct SobolevProfile {
    alpha: f64,
    c1: f64,
    c2: f64,
    // series[k] = (d/dt)^k of the 3F2 part, as factor * series
    series: Vec<(f64, HypergeometricSeries)>,
}

impl SobolevProfile {
    pub fn new(alpha: f64) -> Result<Self, KernelError> {
        if !alpha.is_finite() || alpha <= 1.0 {
            return Err(KernelError::InvalidSmoothness {
                alpha,
                reason: "alpha must exceed 1",
            });
        }
        let m = alpha - 0.5;
        if !is_integer(m) || m < 1.0 {
            return Err(KernelError::InvalidSmoothness {
                alpha,
                reason: "alpha - 1/2 must be a positive integer",
            });
        }
        let m = m.round();
        let c1 = 2f64.powf(2.0 * alpha - 2.0) / (2.0 * alpha - 2.0) * pochhammer(1.0, 2.0 * alpha - 2.0)
            / pochhammer(2.0, 2.0 * alpha - 2.0);
        let sign = if (m as i64) % 2 == 0 { 1.0 } else { -1.0 };
        let gm = super::special::gamma_ratio(&[1.5, m, m], &[1.0]).expect("positive arguments");
        let c2 = sign * 2f64.powf(1.0 - 2.0 * alpha) * gm
            / (PI.sqrt() * pochhammer(0.5, m) * pochhammer(1.0, m));

        let base = HypergeometricSeries::new(
            vec![1.5 - alpha, 1.0 - alpha, 1.5 - alpha],
            vec![2.0 - alpha, 2.0 - 2.0 * alpha],
        );
        let mut series = vec![(1.0, base)];
        for _ in 0..super::MAX_DERIVATIVE {
            let (f, s) = series.last().expect("non-empty");
            let (g, next) = s.derivative();
            series.push((f * g, next));
        }
        Ok(Self { alpha, c1, c2, series })
    }

    pub fn constants(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    fn series_part(&self, u: f64, order: usize) -> f64 {
        let t = (1.0 - u) / 2.0;
        let (f, s) = &self.series[order];
        if *f == 0.0 {
            // derivative of order above the polynomial degree
            return 0.0;
        }
        let v = s.eval(t).expect("terminating series with admissible lower parameters");
        self.c1 * f * (-0.5f64).powi(order as i32) * v
    }

    fn falling(beta: f64, k: usize) -> f64 {
        (0..k).map(|i| beta - i as f64).product()
    }
}

impl RadialProfile for SobolevProfile {
    fn derivative(&self, u: f64, order: usize) -> f64 {
        assert!(order <= super::MAX_DERIVATIVE);
        let beta = self.alpha - 1.0;
        let w = (2.0 - 2.0 * u).max(0.0);
        let power = self.c2 * (-2f64).powi(order as i32) * Self::falling(beta, order) * w.powf(beta - order as f64);
        self.series_part(u, order) + power
    }

    fn damped_derivative(&self, u: f64, order: usize) -> f64 {
        if order < 3 {
            return self.derivative(u, order);
        }
        // (1 - u^2)^(k-2) (2 - 2u)^(beta-k) = (2 - 2u)^(beta-2) ((1 + u)/2)^(k-2)
        let beta = self.alpha - 1.0;
        let w = (2.0 - 2.0 * u).max(0.0);
        let k = order as i32;
        let damp = (1.0 - u * u).max(0.0).powi(k - 2);
        let power = self.c2 * (-2f64).powi(k) * Self::falling(beta, order) * w.powf(beta - 2.0)
            * ((1.0 + u) / 2.0).powi(k - 2);
        damp * self.series_part(u, order) + power
    }

    fn sobolev_order(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn name(&self) -> String {
        format!("k1(alpha={})", self.alpha)
    }
}
