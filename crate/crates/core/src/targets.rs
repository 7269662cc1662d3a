//! Unnormalized target densities on the sphere.
//!
//! A target exposes its log-density up to an additive constant and the
//! gradient of a smooth extension of that log-density to the ambient space.
//! Tangential projection is left to the Stein operator.

use std::fmt;
use std::str::FromStr;

use crate::error::{ParseError, TargetError};
use crate::sphere::{self, ChartPoint, Rotation, UnitVector3};

pub trait TargetDensity: Send + Sync {
    /// `log p(x)` up to an unknown additive constant.
    fn log_density(&self, x: &UnitVector3) -> f64;

    /// Gradient of the ambient extension of `log p` at `x`.
    fn grad_log_density(&self, x: &UnitVector3) -> [f64; 3];

    /// Ambient Hessian of the extension, when the target knows it.
    fn hessian_log_density(&self, _x: &UnitVector3) -> Option<[[f64; 3]; 3]> {
        None
    }

    /// Declared `C^k` class of `log p`.
    fn smoothness_order(&self) -> u32;
}

/// von Mises-Fisher density `p(x) ∝ exp(c·x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VonMisesFisher {
    c: [f64; 3],
}

impl VonMisesFisher {
    pub fn new(c: [f64; 3]) -> Self {
        Self { c }
    }

    /// Concentration `kappa` about `mean`.
    pub fn with_mean(mean: &UnitVector3, kappa: f64) -> Self {
        Self::new(sphere::scale(&mean.coords(), kappa))
    }

    pub fn uniform() -> Self {
        Self::new([0.0; 3])
    }

    pub fn c(&self) -> [f64; 3] {
        self.c
    }

    pub fn kappa(&self) -> f64 {
        sphere::norm(&self.c)
    }

    /// `kappa / (4 pi sinh kappa)`, with the `kappa -> 0` limit `1/(4 pi)`.
    ///
    /// Only oracles and tests use this; the method never sees it.
    pub fn normalizing_constant(&self) -> f64 {
        let k = self.kappa();
        let four_pi = 4.0 * std::f64::consts::PI;
        if k < 1e-8 {
            1.0 / four_pi
        } else {
            k / (four_pi * k.sinh())
        }
    }

    pub fn rotated(&self, r: &Rotation) -> Self {
        Self::new(r.apply(self.c))
    }
}

impl TargetDensity for VonMisesFisher {
    fn log_density(&self, x: &UnitVector3) -> f64 {
        sphere::dot(&self.c, &x.coords())
    }

    fn grad_log_density(&self, _x: &UnitVector3) -> [f64; 3] {
        self.c
    }

    fn hessian_log_density(&self, _x: &UnitVector3) -> Option<[[f64; 3]; 3]> {
        Some([[0.0; 3]; 3])
    }

    fn smoothness_order(&self) -> u32 {
        u32::MAX
    }
}

/// `x -> inner(R^T x)`: the pushforward of a target under the rotation `R`.
pub struct RotatedTarget<'a> {
    inner: &'a dyn TargetDensity,
    rotation: Rotation,
    inverse: Rotation,
}

impl<'a> RotatedTarget<'a> {
    pub fn new(inner: &'a dyn TargetDensity, rotation: Rotation) -> Self {
        Self {
            inner,
            rotation,
            inverse: rotation.transpose(),
        }
    }
}

impl TargetDensity for RotatedTarget<'_> {
    fn log_density(&self, x: &UnitVector3) -> f64 {
        self.inner.log_density(&self.inverse.apply_point(x))
    }

    fn grad_log_density(&self, x: &UnitVector3) -> [f64; 3] {
        self.rotation
            .apply(self.inner.grad_log_density(&self.inverse.apply_point(x)))
    }

    fn hessian_log_density(&self, x: &UnitVector3) -> Option<[[f64; 3]; 3]> {
        let h = self.inner.hessian_log_density(&self.inverse.apply_point(x))?;
        // R H R^T
        let rh: Vec<[f64; 3]> = (0..3)
            .map(|j| self.rotation.apply([h[0][j], h[1][j], h[2][j]]))
            .collect();
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            *row = self.rotation.apply([rh[0][i], rh[1][i], rh[2][i]]);
        }
        Some(out)
    }

    fn smoothness_order(&self) -> u32 {
        self.inner.smoothness_order()
    }
}

/// Chart partial derivatives of a scalar function, up to second order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPartials {
    pub first: [f64; 2],
    pub second: Option<[[f64; 2]; 2]>,
}

/// Pulls an ambient gradient (and optionally Hessian) back through the chart:
/// `d_i f = g · d_i phi`, `d_ij f = d_i phi^T H d_j phi + g · d_ij phi`.
pub fn pullback_partials(
    q: &ChartPoint,
    grad: [f64; 3],
    hessian: Option<&[[f64; 3]; 3]>,
) -> ChartPartials {
    let t = sphere::chart_tangents(q);
    let first = [sphere::dot(&grad, &t[0]), sphere::dot(&grad, &t[1])];
    let second = hessian.map(|h| {
        let s = sphere::chart_second_derivatives(q);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let ht: [f64; 3] = [
                    sphere::dot(&h[0], &t[j]),
                    sphere::dot(&h[1], &t[j]),
                    sphere::dot(&h[2], &t[j]),
                ];
                out[i][j] = sphere::dot(&t[i], &ht) + sphere::dot(&grad, &s[i][j]);
            }
        }
        out
    });
    ChartPartials { first, second }
}

/// Chart partials of `log p` at `q`, to first or second order.
pub fn chart_log_density_partials(
    target: &dyn TargetDensity,
    q: &ChartPoint,
    order: u8,
) -> Result<ChartPartials, TargetError> {
    let x = sphere::from_chart(q);
    let g = target.grad_log_density(&x);
    if order >= 2 {
        let h = target
            .hessian_log_density(&x)
            .ok_or(TargetError::MissingHessian)?;
        Ok(pullback_partials(q, g, Some(&h)))
    } else {
        Ok(pullback_partials(q, g, None))
    }
}

/// `E_P[v·x]` for the von Mises-Fisher target `c`, by the reference quadrature.
pub fn vmf_expected_linear(c: [f64; 3], v: [f64; 3]) -> f64 {
    if sphere::norm(&c) == 0.0 {
        return 0.0;
    }
    let target = VonMisesFisher::new(c);
    crate::quadrature::reference_expectation(
        &target,
        |x| sphere::dot(&v, &x.coords()),
        crate::quadrature::REFERENCE_RESOLUTION,
    )
}

/// Target selected on the command line, e.g. `vmf:0,0,2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetSpec {
    Vmf([f64; 3]),
}

impl TargetSpec {
    pub fn build(&self) -> VonMisesFisher {
        match *self {
            TargetSpec::Vmf(c) => VonMisesFisher::new(c),
        }
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Vmf([a, b, c]) => write!(f, "vmf:{a},{b},{c}"),
        }
    }
}

impl FromStr for TargetSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("vmf:")
            .ok_or_else(|| ParseError::spec(s, "expected `vmf:<c1>,<c2>,<c3>`"))?;
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(ParseError::spec(s, "vmf needs exactly three components"));
        }
        let mut c = [0.0; 3];
        for (slot, p) in c.iter_mut().zip(&parts) {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| ParseError::spec(s, format!("`{p}` is not a number")))?;
            if !v.is_finite() || v.abs() > 700.0 {
                return Err(ParseError::spec(s, "components must be finite with |c_i| <= 700"));
            }
            *slot = v;
        }
        Ok(TargetSpec::Vmf(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_partials_vanish() {
        let q = ChartPoint::new(0.3, 0.9).unwrap();
        let p = chart_log_density_partials(&VonMisesFisher::uniform(), &q, 2).unwrap();
        assert_eq!(p.first, [0.0, 0.0]);
        assert_eq!(p.second.unwrap(), [[0.0; 2]; 2]);
    }

    #[test]
    fn axial_partials() {
        let kappa = 2.5;
        let t = VonMisesFisher::new([0.0, 0.0, kappa]);
        for &(q1, q2) in &[(0.4, 0.3), (2.0, 1.7), (5.0, 2.9)] {
            let q = ChartPoint::new(q1, q2).unwrap();
            let p = chart_log_density_partials(&t, &q, 1).unwrap();
            assert_abs_diff_eq!(p.first[0], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p.first[1], -kappa * q2.sin(), epsilon = 1e-14);
            assert!(p.second.is_none());
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let c = [1.0, 2.0, 3.0];
        let t = VonMisesFisher::new(c);
        let q = ChartPoint::new(0.7, 1.1).unwrap();
        let f = |q1: f64, q2: f64| {
            t.log_density(&sphere::from_chart(&ChartPoint::new(q1, q2).unwrap()))
        };
        let p = chart_log_density_partials(&t, &q, 2).unwrap();
        let s = p.second.unwrap();
        let h = 1e-4;
        let (a, b) = (q.q1(), q.q2());
        let d1 = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
        let d2 = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
        let d11 = (f(a + h, b) - 2.0 * f(a, b) + f(a - h, b)) / (h * h);
        let d22 = (f(a, b + h) - 2.0 * f(a, b) + f(a, b - h)) / (h * h);
        let d12 = (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h))
            / (4.0 * h * h);
        assert_abs_diff_eq!(p.first[0], d1, epsilon = 1e-7);
        assert_abs_diff_eq!(p.first[1], d2, epsilon = 1e-7);
        assert_abs_diff_eq!(s[0][0], d11, epsilon = 1e-7);
        assert_abs_diff_eq!(s[1][1], d22, epsilon = 1e-7);
        assert_abs_diff_eq!(s[0][1], d12, epsilon = 1e-7);
        assert_abs_diff_eq!(s[1][0], d12, epsilon = 1e-7);
    }

    #[test]
    fn expected_linear_examples() {
        assert_eq!(vmf_expected_linear([0.0; 3], [1.0, 2.0, 3.0]), 0.0);
        let e = vmf_expected_linear([0.0, 0.0, 2.0], [0.0, 0.0, 1.0]);
        // closed form coth(2) - 1/2 as cross-check
        let closed = 1.0 / 2f64.tanh() - 0.5;
        assert_abs_diff_eq!(e, closed, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.5373, epsilon = 1e-4);
        assert_abs_diff_eq!(
            vmf_expected_linear([0.0, 0.0, 2.0], [1.0, 0.0, 0.0]),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn normalizing_constant_limits() {
        let four_pi = 4.0 * std::f64::consts::PI;
        assert_eq!(VonMisesFisher::uniform().normalizing_constant(), 1.0 / four_pi);
        let v = VonMisesFisher::new([0.0, 0.0, 2.0]);
        assert_abs_diff_eq!(v.normalizing_constant(), 2.0 / (four_pi * 2f64.sinh()), epsilon = 1e-16);
        // matches 1 / integral of exp(c·x)
        let z = crate::quadrature::reference_integral(|x| v.log_density(x).exp(), 64);
        assert_abs_diff_eq!(v.normalizing_constant() * z, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("vmf:0,0,2".parse::<TargetSpec>().unwrap(), TargetSpec::Vmf([0.0, 0.0, 2.0]));
        assert_eq!("vmf:1.5,-2,3e-1".parse::<TargetSpec>().unwrap(), TargetSpec::Vmf([1.5, -2.0, 0.3]));
        for bad in ["vmf:1,2", "vmf:1,2,3,4", "gauss:1,2,3", "vmf:a,b,c", "vmf:nan,0,0", "vmf:1e9,0,0", ""] {
            assert!(bad.parse::<TargetSpec>().is_err(), "{bad}");
        }
        let s = TargetSpec::Vmf([0.25, -1.0, 2.0]);
        assert_eq!(s.to_string().parse::<TargetSpec>().unwrap(), s);
    }

    fn random_rotation(a: f64, b: f64, c: f64) -> Rotation {
        // z-y-z Euler angles
        let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
        let ry = |t: f64| [[t.cos(), 0.0, t.sin()], [0.0, 1.0, 0.0], [-t.sin(), 0.0, t.cos()]];
        let mul = |x: [[f64; 3]; 3], y: [[f64; 3]; 3]| {
            let mut o = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    o[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
                }
            }
            o
        };
        Rotation::from_rows(mul(mul(rz(a), ry(b)), rz(c))).unwrap()
    }

    proptest! {
        #[test]
        fn rotation_equivariance(
            a in 0.0f64..6.0, b in 0.0f64..3.0, cc in 0.0f64..6.0,
            c in prop::array::uniform3(-3.0f64..3.0),
            x in prop::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(sphere::norm(&x) > 1e-3);
            let r = random_rotation(a, b, cc);
            let p = UnitVector3::new(x).unwrap();
            let t = VonMisesFisher::new(c);
            let rt = t.rotated(&r);
            let lhs = t.log_density(&p);
            let rhs = rt.log_density(&r.apply_point(&p));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let wrapped = RotatedTarget::new(&t, r);
            let g1 = wrapped.grad_log_density(&r.apply_point(&p));
            let g2 = rt.grad_log_density(&r.apply_point(&p));
            for k in 0..3 {
                prop_assert!((g1[k] - g2[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn gradient_matches_tangential_differences(
            c in prop::array::uniform3(-3.0f64..3.0),
            x in prop::array::uniform3(-1.0f64..1.0),
            d in prop::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(sphere::norm(&x) > 1e-3);
            let p = UnitVector3::new(x).unwrap();
            let dir = p.tangent_projection(d);
            prop_assume!(sphere::norm(&dir) > 1e-2);
            let dir = sphere::scale(&dir, 1.0 / sphere::norm(&dir));
            let t = VonMisesFisher::new(c);
            let h = 1e-5;
            let fp = t.log_density(&p.geodesic_step(dir, h).unwrap());
            let fm = t.log_density(&p.geodesic_step(dir, -h).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            let an = sphere::dot(&t.grad_log_density(&p), &dir);
            prop_assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()));
        }
    }
}
