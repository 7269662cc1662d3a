use super::special::{gamma_ratio, hyp2f1_split, is_integer, pochhammer, Hyp2f1Split};
use super::RadialProfile;
use crate::error::{KernelError, SeriesError};

/// Correlation-function kernel
/// `psi(u) = P * 2F1(1/l, 1/l + 1/2; 2/l + 1/2 + alpha; u)`
/// with `P = Gamma(c - a) Gamma(c - b) / (Gamma(c) Gamma(alpha))`, so that
/// `psi(1) = 1`.
///
/// The Gauss margin `c - a - b` equals `alpha`; the `k`-th derivative has
/// margin `alpha - k` and is unbounded at `u = 1` once that goes negative.
/// Its RKHS is not characterized, so [`RadialProfile::rate_is_sharp`] is
/// `false`.
#[derive(Clone, Debug)]
pub struct GeodesicProfile {
    alpha: f64,
    lambda: f64,
    a: f64,
    b: f64,
    c: f64,
    // prefactor times (a)_k (b)_k / (c)_k
    coef: [f64; super::MAX_DERIVATIVE + 1],
}

impl GeodesicProfile {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self, KernelError> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(KernelError::InvalidLengthScale(lambda));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(KernelError::InvalidSmoothness {
                alpha,
                reason: "alpha must be positive",
            });
        }
        if is_integer(alpha) {
            return Err(KernelError::InvalidSmoothness {
                alpha,
                reason: "integer alpha puts a logarithm in the expansion at u = 1",
            });
        }
        let a = 1.0 / lambda;
        let b = a + 0.5;
        let c = 2.0 / lambda + 0.5 + alpha;
        let pref = gamma_ratio(&[c - a, c - b], &[c, alpha]).ok_or(SeriesError::OutOfRange(c))?;
        let mut coef = [0.0; super::MAX_DERIVATIVE + 1];
        for (k, slot) in coef.iter_mut().enumerate() {
            let k = k as f64;
            *slot = pref * pochhammer(a, k) * pochhammer(b, k) / pochhammer(c, k);
        }
        Ok(Self {
            alpha,
            lambda,
            a,
            b,
            c,
            coef,
        })
    }

    fn split(&self, u: f64, order: usize) -> Hyp2f1Split {
        let k = order as f64;
        hyp2f1_split(self.a + k, self.b + k, self.c + k, u.clamp(-1.0, 1.0))
            .expect("parameters validated at construction")
    }

    /// Terms needed by the plain power series at `u`, for diagnostics.
    pub fn direct_series_terms(&self, u: f64) -> Result<usize, SeriesError> {
        super::special::HypergeometricSeries::new(vec![self.a, self.b], vec![self.c])
            .eval_counted(u)
            .map(|(_, n)| n)
    }
}

impl RadialProfile for GeodesicProfile {
    fn derivative(&self, u: f64, order: usize) -> f64 {
        assert!(order <= super::MAX_DERIVATIVE);
        self.coef[order] * self.split(u, order).value()
    }

    fn damped_derivative(&self, u: f64, order: usize) -> f64 {
        if order < 3 {
            return self.derivative(u, order);
        }
        let extra = (order - 2) as f64;
        let plus = (1.0 + u).max(0.0).powf(extra);
        self.coef[order] * plus * self.split(u, order).value_times_power(extra)
    }

    fn sobolev_order(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn length_scale(&self) -> Option<f64> {
        Some(self.lambda)
    }

    fn rate_is_sharp(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        format!("k2(alpha={},lambda={})", self.alpha, self.lambda)
    }
}
