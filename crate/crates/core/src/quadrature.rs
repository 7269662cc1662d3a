//! Reference integration on the sphere: Gauss-Legendre in `cos q2` times the
//! trapezoid rule in longitude.
//!
//! This is the ground truth for tests and experiments. It knows the
//! normalizing constant of the target (by integrating it), which the Stein
//! method itself never uses.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::sphere::UnitVector3;
use crate::stein::{ambient_tau, SmoothFunction, SteinOperatorConfig};
use crate::targets::TargetDensity;

/// Resolution used for ground truth unless a caller asks otherwise.
pub const REFERENCE_RESOLUTION: usize = 200;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product rule with `m` Gauss-Legendre nodes in `cos q2` and `2m`
/// equispaced longitudes offset by half a step. Exact for spherical
/// polynomials of degree up to `2m - 1`.
#[derive(Clone, Debug)]
pub struct ProductGrid {
    points: Vec<UnitVector3>,
    weights: Vec<f64>,
    resolution: usize,
}

impl ProductGrid {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "resolution must be positive");
        let (z, wz) = gauss_legendre(m);
        let n_phi = 2 * m;
        let dphi = 2.0 * PI / n_phi as f64;
        let mut points = Vec::with_capacity(m * n_phi);
        let mut weights = Vec::with_capacity(m * n_phi);
        for (&zi, &wi) in z.iter().zip(&wz) {
            let r = (1.0 - zi * zi).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                let (s, c) = phi.sin_cos();
                points.push(UnitVector3::new([r * c, r * s, zi]).expect("nonzero"));
                weights.push(wi * dphi);
            }
        }
        Self {
            points,
            weights,
            resolution: m,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &[UnitVector3] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ f dV` over the sphere.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&UnitVector3) -> f64 + Sync,
    {
        // evaluate in parallel, sum in a fixed order so results are reproducible
        let terms: Vec<f64> = self
            .points
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(x, w)| w * f(x))
            .collect();
        terms.iter().sum()
    }
}

/// `∫ f dV` with respect to the surface measure (total mass `4 pi`).
pub fn reference_integral<F>(f: F, m: usize) -> f64
where
    F: Fn(&UnitVector3) -> f64 + Sync,
{
    ProductGrid::new(m).integrate(f)
}

/// `E_P[f]` for the normalized version of `target`.
pub fn reference_expectation<F>(target: &dyn TargetDensity, f: F, m: usize) -> f64
where
    F: Fn(&UnitVector3) -> f64 + Sync,
{
    let grid = ProductGrid::new(m);
    // shift log p by its grid maximum so exp never overflows
    let shift = grid
        .points()
        .iter()
        .map(|x| target.log_density(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let p = |x: &UnitVector3| (target.log_density(x) - shift).exp();
    let num = grid.integrate(|x| f(x) * p(x));
    let den = grid.integrate(p);
    num / den
}

/// `|E_P[tau h]| / E_P[|tau h|]`, zero when `tau h` vanishes identically.
pub fn stein_identity_residual(cfg: &SteinOperatorConfig<'_>, h: &dyn SmoothFunction, m: usize) -> f64 {
    let signed = reference_expectation(cfg.target(), |x| ambient_tau(cfg, h, x), m);
    let total = reference_expectation(cfg.target(), |x| ambient_tau(cfg, h, x).abs(), m);
    if total == 0.0 {
        0.0
    } else {
        signed.abs() / total
    }
}
