//! Zonal kernels on the sphere, written as radial profiles `psi(u)` of the
//! inner product `u = x·y`, each with an analytic derivative ladder up to
//! fourth order.
//!
//! Three reproducing kernels for Sobolev spaces ship here:
//!
//! | profile | form | parameters |
//! |---------|------|------------|
//! | [`SobolevProfile`] | `C1 3F2[...; (1-u)/2] + C2 (2-2u)^(alpha-1)` | `alpha - 1/2` a positive integer |
//! | [`GeodesicProfile`] | `prefactor * 2F1(1/l, 1/l + 1/2; 2/l + 1/2 + alpha; u)` | `alpha > 0` non-integer, `l > 0` |
//! | [`WendlandProfile`] | `phi_{3,j}(sqrt(2-2u)/l)` | `j` in {2, 3}, `l > 0` |
//!
//! Profiles that are only finitely smooth at `u = 1` have unbounded third or
//! fourth derivatives there. The Stein kernel only ever needs those
//! derivatives multiplied by powers of `1 - u^2`, which
//! [`RadialProfile::damped_derivative`] evaluates without forming `0 * inf`.

mod geodesic;
mod schoenberg;
mod sobolev;
pub mod special;
mod wendland;

use std::fmt;
use std::str::FromStr;

pub use geodesic::GeodesicProfile;
pub use schoenberg::{schoenberg_coefficients, SchoenbergDiagnostic};
pub(crate) use schoenberg::least_squares_slope;
pub use sobolev::SobolevProfile;
pub use wendland::WendlandProfile;

use crate::error::{KernelError, ParseError};

/// Highest derivative order a profile must provide.
pub const MAX_DERIVATIVE: usize = 4;

pub trait RadialProfile: Send + Sync {
    /// `psi^(order)(u)` for `order` in `0..=4` and `u` in `[-1, 1]`.
    ///
    /// May return a non-finite value at `u = 1` when the derivative is
    /// unbounded there.
    fn derivative(&self, u: f64, order: usize) -> f64;

    fn value(&self, u: f64) -> f64 {
        self.derivative(u, 0)
    }

    /// `(1 - u^2)^(order - 2) psi^(order)(u)` for `order >= 3`, and
    /// `psi^(order)(u)` below that. Finite on all of `[-1, 1]` for every
    /// shipped profile.
    fn damped_derivative(&self, u: f64, order: usize) -> f64 {
        let d = self.derivative(u, order);
        if order < 3 {
            return d;
        }
        let w = (1.0 - u * u).max(0.0).powi(order as i32 - 2);
        if w == 0.0 {
            0.0
        } else {
            w * d
        }
    }

    /// Sobolev order `alpha` of the reproduced space, when known.
    fn sobolev_order(&self) -> Option<f64>;

    /// Length scale, for profiles that have one.
    fn length_scale(&self) -> Option<f64> {
        None
    }

    /// Whether the reproduced space is characterized; when `false`, rates
    /// derived from `sobolev_order` are lower bounds only.
    fn rate_is_sharp(&self) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// Polynomial profile `psi(u) = sum_k coeffs[k] u^k`.
///
/// Positive definite on the sphere when all coefficients are non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialProfile {
    coeffs: Vec<f64>,
}

impl PolynomialProfile {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }
}

impl RadialProfile for PolynomialProfile {
    fn derivative(&self, u: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(order).rev() {
            let falling: f64 = (0..order).map(|i| (k - i) as f64).product();
            acc = acc * u + c * falling;
        }
        // Horner over the shifted powers
        acc
    }

    fn sobolev_order(&self) -> Option<f64> {
        None
    }

    fn name(&self) -> String {
        format!("poly{:?}", self.coeffs)
    }
}

/// Kernel selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `k1:alpha=<a>`
    Sobolev { alpha: f64 },
    /// `k2:alpha=<a>,lambda=<l>`
    Geodesic { alpha: f64, lambda: f64 },
    /// `k3:j=<j>,lambda=<l>`
    Wendland { j: u32, lambda: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Box<dyn RadialProfile>, KernelError> {
        Ok(match *self {
            KernelSpec::Sobolev { alpha } => Box::new(SobolevProfile::new(alpha)?),
            KernelSpec::Geodesic { alpha, lambda } => Box::new(GeodesicProfile::new(alpha, lambda)?),
            KernelSpec::Wendland { j, lambda } => Box::new(WendlandProfile::new(j, lambda)?),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            KernelSpec::Sobolev { .. } => "k1",
            KernelSpec::Geodesic { .. } => "k2",
            KernelSpec::Wendland { .. } => "k3",
        }
    }

    /// Sobolev order of the reproduced space (`j + 3/2` for Wendland on S^2).
    pub fn alpha(&self) -> f64 {
        match *self {
            KernelSpec::Sobolev { alpha } | KernelSpec::Geodesic { alpha, .. } => alpha,
            KernelSpec::Wendland { j, .. } => j as f64 + 1.5,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            KernelSpec::Sobolev { .. } => None,
            KernelSpec::Geodesic { lambda, .. } | KernelSpec::Wendland { lambda, .. } => Some(lambda),
        }
    }

    /// Predicted log-log slope of the worst-case error against `n` for
    /// quasi-uniform points on S^2: `-(alpha - 2) / 2`.
    pub fn predicted_rate(&self) -> f64 {
        -(self.alpha() - 2.0) / 2.0
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Sobolev { alpha } => write!(f, "k1:alpha={alpha}"),
            KernelSpec::Geodesic { alpha, lambda } => write!(f, "k2:alpha={alpha},lambda={lambda}"),
            KernelSpec::Wendland { j, lambda } => write!(f, "k3:j={j},lambda={lambda}"),
        }
    }
}

fn parse_params<'a>(input: &str, body: &'a str) -> Result<Vec<(&'a str, &'a str)>, ParseError> {
    if body.is_empty() {
        return Ok(Vec::new());
    }
    let mut out: Vec<(&str, &str)> = Vec::new();
    for kv in body.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ParseError::spec(input, format!("`{kv}` is not key=value")))?;
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(ParseError::spec(input, format!("duplicate key `{k}`")));
        }
        out.push((k, v));
    }
    Ok(out)
}

fn take_f64(input: &str, params: &[(&str, &str)], key: &str, default: Option<f64>) -> Result<f64, ParseError> {
    match params.iter().find(|(k, _)| *k == key) {
        Some((_, v)) => {
            let x: f64 = v
                .parse()
                .map_err(|_| ParseError::spec(input, format!("{key}=`{v}` is not a number")))?;
            if !x.is_finite() {
                return Err(ParseError::spec(input, format!("{key} must be finite")));
            }
            Ok(x)
        }
        None => default.ok_or_else(|| ParseError::spec(input, format!("missing `{key}`"))),
    }
}

impl FromStr for KernelSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(s, body)?;
        let allowed: &[&str] = match name {
            "k1" => &["alpha"],
            "k2" => &["alpha", "lambda"],
            "k3" => &["j", "lambda"],
            _ => return Err(ParseError::spec(s, "kernel must be k1, k2 or k3")),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(ParseError::spec(s, format!("unknown key `{k}` for {name}")));
        }
        Ok(match name {
            "k1" => KernelSpec::Sobolev {
                alpha: take_f64(s, &params, "alpha", None)?,
            },
            "k2" => KernelSpec::Geodesic {
                alpha: take_f64(s, &params, "alpha", None)?,
                lambda: take_f64(s, &params, "lambda", Some(1.0))?,
            },
            _ => {
                let j: u32 = params
                    .iter()
                    .find(|(k, _)| *k == "j")
                    .ok_or_else(|| ParseError::spec(s, "missing `j`"))?
                    .1
                    .parse()
                    .map_err(|_| ParseError::spec(s, "j must be a non-negative integer"))?;
                KernelSpec::Wendland {
                    j,
                    lambda: take_f64(s, &params, "lambda", Some(2.0))?,
                }
            }
        })
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::RadialProfile;

    /// Relative error between each analytic derivative and a central
    /// difference of the order below, over a grid in `[-0.95, 0.95]`.
    pub fn worst_ladder_error(p: &dyn RadialProfile, points: usize) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..points {
            let u = -0.95 + 1.9 * i as f64 / (points - 1) as f64;
            for j in 1..=4 {
                let fd = (p.derivative(u + h, j - 1) - p.derivative(u - h, j - 1)) / (2.0 * h);
                let an = p.derivative(u, j);
                let scale = an.abs().max(fd.abs()).max(1e-3 * p.derivative(u, 0).abs()).max(1e-12);
                worst = worst.max((fd - an).abs() / scale);
            }
        }
        worst
    }

    pub fn gram_min_eigenvalue(p: &dyn RadialProfile, n: usize) -> f64 {
        let pts = crate::points::fibonacci_points(n);
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| p.value(pts[i].dot(&pts[j]).clamp(-1.0, 1.0)));
        m.symmetric_eigenvalues().min()
    }
}
