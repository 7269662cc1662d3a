use std::collections::BTreeMap;

use super::RadialProfile;
use crate::error::KernelError;

/// `(1 - r)^power * sum coeffs[m] r^m`, where `m` may be negative.
#[derive(Clone, Debug, PartialEq)]
struct Factored {
    power: i32,
    coeffs: BTreeMap<i32, f64>,
}

impl Factored {
    /// Applies `(1/r) d/dr`, keeping the `(1 - r)` factor pulled out:
    /// `(1-r)^(L-1) [ -L sum c r^(m-1) + (1 - r) sum m c r^(m-2) ]`.
    fn radial_derivative(&self) -> Self {
        let l = self.power as f64;
        let mut out = BTreeMap::new();
        let mut add = |m: i32, v: f64| *out.entry(m).or_insert(0.0) += v;
        for (&m, &c) in &self.coeffs {
            add(m - 1, -l * c);
            add(m - 2, m as f64 * c);
            add(m - 1, -(m as f64) * c);
        }
        out.retain(|_, v| *v != 0.0);
        Self {
            power: self.power - 1,
            coeffs: out,
        }
    }

    fn eval(&self, r: f64, shift: i32) -> f64 {
        let s: f64 = self.coeffs.iter().map(|(&m, &c)| c * r.powi(m + shift)).sum();
        (1.0 - r).powi(self.power) * s
    }
}

/// Wendland function `phi_{3,j}` of the chordal distance scaled by `lambda`:
/// `psi(u) = phi_{3,j}(sqrt(2 - 2u) / lambda)`, normalized to `phi(0) = 1`
/// and zero where `sqrt(2 - 2u) >= lambda`.
///
/// | j | phi_{3,j}(r) |
/// |---|--------------|
/// | 2 | `(1 - r)^6 (35 r^2 + 18 r + 3) / 3` |
/// | 3 | `(1 - r)^8 (32 r^3 + 25 r^2 + 8 r + 1)` |
///
/// Derivatives in `u` use `d/du = -(1 / (lambda^2 r)) d/dr` applied to the
/// factored form, so values near the support edge keep full relative
/// accuracy and the odd powers that make `phi` only finitely smooth at
/// `r = 0` appear as explicit negative exponents.
#[derive(Clone, Debug)]
pub struct WendlandProfile {
    j: u32,
    lambda: f64,
    norm: f64,
    // ladder[k] = (r^-1 d/dr)^k phi, before the (-1/lambda^2)^k factor
    ladder: Vec<Factored>,
}

impl WendlandProfile {
    pub fn new(j: u32, lambda: f64) -> Result<Self, KernelError> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(KernelError::InvalidLengthScale(lambda));
        }
        let (power, poly, norm): (i32, &[f64], f64) = match j {
            2 => (6, &[3.0, 18.0, 35.0], 3.0),
            3 => (8, &[1.0, 8.0, 25.0, 32.0], 1.0),
            _ => return Err(KernelError::UnsupportedSmoothness(j)),
        };
        // integer coefficients keep the cancellations in the ladder exact
        let base = Factored {
            power,
            coeffs: poly
                .iter()
                .enumerate()
                .map(|(m, &c)| (m as i32, c))
                .collect(),
        };
        let mut ladder = vec![base];
        for _ in 0..super::MAX_DERIVATIVE {
            let next = ladder.last().expect("non-empty").radial_derivative();
            ladder.push(next);
        }
        Ok(Self {
            j,
            lambda,
            norm,
            ladder,
        })
    }

    pub fn order(&self) -> u32 {
        self.j
    }

    fn radius(&self, u: f64) -> f64 {
        (2.0 - 2.0 * u).max(0.0).sqrt() / self.lambda
    }

    fn scale(&self, order: usize) -> f64 {
        (-1.0 / (self.lambda * self.lambda)).powi(order as i32) / self.norm
    }
}

impl RadialProfile for WendlandProfile {
    fn derivative(&self, u: f64, order: usize) -> f64 {
        assert!(order <= super::MAX_DERIVATIVE);
        let r = self.radius(u);
        if r >= 1.0 {
            return 0.0;
        }
        self.scale(order) * self.ladder[order].eval(r, 0)
    }

    fn damped_derivative(&self, u: f64, order: usize) -> f64 {
        if order < 3 {
            return self.derivative(u, order);
        }
        let r = self.radius(u);
        if r >= 1.0 {
            return 0.0;
        }
        // 1 - u = lambda^2 r^2 / 2 and 1 + u = 2 - lambda^2 r^2 / 2
        let k = order as i32 - 2;
        let l2 = self.lambda * self.lambda;
        let plus = (2.0 - 0.5 * l2 * r * r).max(0.0);
        self.scale(order) * (0.5 * l2 * plus).powi(k) * self.ladder[order].eval(r, 2 * k)
    }

    fn sobolev_order(&self) -> Option<f64> {
        Some(self.j as f64 + 1.5)
    }

    fn length_scale(&self) -> Option<f64> {
        Some(self.lambda)
    }

    fn name(&self) -> String {
        format!("k3(j={},lambda={})", self.j, self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::test_support::{gram_min_eigenvalue, worst_ladder_error};
    use approx::assert_relative_eq;

    fn phi32(r: f64) -> f64 {
        if r >= 1.0 {
            0.0
        } else {
            (1.0 - r).powi(6) * (35.0 * r * r + 18.0 * r + 3.0) / 3.0
        }
    }

    #[test]
    fn values_and_support() {
        let p = WendlandProfile::new(2, 2.0).unwrap();
        assert_eq!(p.value(1.0), 1.0);
        for u in [-1.0f64, -0.5, 0.0, 0.5, 0.99] {
            let r = (2.0 - 2.0 * u).sqrt() / 2.0;
            assert_relative_eq!(p.value(u), phi32(r), max_relative = 1e-13, epsilon = 1e-300);
        }
        let narrow = WendlandProfile::new(2, 1.0).unwrap();
        // chordal distance 1 at u = 1/2
        assert_eq!(narrow.value(0.4), 0.0);
        assert_eq!(narrow.derivative(0.4, 2), 0.0);
        assert!(narrow.value(0.6) > 0.0);
        assert_eq!(WendlandProfile::new(3, 1.0).unwrap().value(1.0), 1.0);
    }

    #[test]
    fn unsupported_orders() {
        for j in [0, 1, 4] {
            assert!(matches!(WendlandProfile::new(j, 1.0), Err(KernelError::UnsupportedSmoothness(_))));
        }
        assert!(WendlandProfile::new(2, 0.0).is_err());
    }

    #[test]
    fn even_expansion_up_to_smoothness() {
        // phi_{3,j} has no odd powers below r^(2j+1), so the first j
        // u-derivatives are bounded at u = 1
        for j in [2u32, 3] {
            let p = WendlandProfile::new(j, 1.5).unwrap();
            for k in 0..=j as usize {
                assert!(p.derivative(1.0, k).is_finite(), "j {j} k {k}");
            }
            for k in 0..=4 {
                assert!(p.damped_derivative(1.0, k).is_finite());
            }
        }
        let p = WendlandProfile::new(2, 1.5).unwrap();
        assert!(!p.derivative(1.0, 3).is_finite());
    }

    #[test]
    fn derivative_ladder() {
        for (j, lambda) in [(2, 2.0), (3, 2.0), (2, 1.0), (3, 1.3)] {
            let p = WendlandProfile::new(j, lambda).unwrap();
            let e = worst_ladder_error(&p, 101);
            assert!(e < 1e-5, "j {j} lambda {lambda}: {e}");
        }
    }

    #[test]
    fn damped_matches_direct_inside() {
        let p = WendlandProfile::new(2, 2.0).unwrap();
        for u in [-0.9f64, 0.1, 0.8] {
            for k in 3..=4 {
                let direct = (1.0 - u * u).powi(k as i32 - 2) * p.derivative(u, k);
                assert_relative_eq!(p.damped_derivative(u, k), direct, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gram_is_psd() {
        let p = WendlandProfile::new(2, 2.0).unwrap();
        assert!(gram_min_eigenvalue(&p, 50) >= -1e-10);
        for (j, lambda) in [(2, 1.0), (3, 2.0)] {
            let p = WendlandProfile::new(j, lambda).unwrap();
            assert!(gram_min_eigenvalue(&p, 100) >= -1e-8);
        }
    }
}
