//! The Stein operator `tau h = div(p grad h) / p` on the sphere and the Stein
//! kernel `k_P(x, y) = tau_y tau_x k(x, y)` it induces from a zonal kernel.
//!
//! `tau h = Lap h + <grad log p, grad h>`. Two independent routes compute
//! `k_P`:
//!
//! * [`stein_kernel`]: closed form in `u = x·y` and the pairings of the
//!   ambient log-density gradients with `x` and `y`, using the profile
//!   derivatives up to fourth order.
//! * [`stein_kernel_fd`]: the chart formula for `tau` applied twice with
//!   nested central differences and one Richardson step, after rotating the
//!   pair onto the equator. Slow; kept as the oracle for the closed form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::SteinError;
use crate::kernels::RadialProfile;
use crate::sphere::{self, from_chart, geodesic_distance, to_chart, ChartPoint, Rotation, UnitVector3};
use crate::targets::{chart_log_density_partials, pullback_partials, RotatedTarget, TargetDensity};

/// Which operator that integrates to zero against `P` is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OperatorVariant {
    /// `tau h = div(p grad h) / p`.
    #[default]
    DivergenceForm,
    /// `tau h = Lap(p h) / p`, from Green's identity with a constant harmonic
    /// weight. Needs the Hessian of `log p`; no closed-form Stein kernel.
    GreenForm,
}

#[derive(Clone, Copy)]
pub struct SteinOperatorConfig<'a> {
    target: &'a dyn TargetDensity,
    variant: OperatorVariant,
    fd_step: f64,
}

impl<'a> SteinOperatorConfig<'a> {
    pub const DEFAULT_FD_STEP: f64 = 3e-2;

    pub fn new(target: &'a dyn TargetDensity) -> Self {
        Self {
            target,
            variant: OperatorVariant::DivergenceForm,
            fd_step: Self::DEFAULT_FD_STEP,
        }
    }

    pub fn with_variant(mut self, variant: OperatorVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Result<Self, SteinError> {
        if !(1e-6..=0.1).contains(&step) {
            return Err(SteinError::InvalidStep(step));
        }
        self.fd_step = step;
        Ok(self)
    }

    pub fn target(&self) -> &'a dyn TargetDensity {
        self.target
    }

    pub fn variant(&self) -> OperatorVariant {
        self.variant
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }
}

/// A function on the sphere given through a smooth ambient extension.
pub trait SmoothFunction: Sync {
    fn value(&self, x: &UnitVector3) -> f64;
    fn gradient(&self, x: &UnitVector3) -> [f64; 3];
    fn hessian(&self, x: &UnitVector3) -> [[f64; 3]; 3];
}

/// `x -> v·x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear(pub [f64; 3]);

impl SmoothFunction for Linear {
    fn value(&self, x: &UnitVector3) -> f64 {
        sphere::dot(&self.0, &x.coords())
    }
    fn gradient(&self, _x: &UnitVector3) -> [f64; 3] {
        self.0
    }
    fn hessian(&self, _x: &UnitVector3) -> [[f64; 3]; 3] {
        [[0.0; 3]; 3]
    }
}

/// `x -> sin(3 x1) cos(2 x2)`.
#[derive(Clone, Copy, Debug)]
pub struct SinCos;

impl SmoothFunction for SinCos {
    fn value(&self, x: &UnitVector3) -> f64 {
        (3.0 * x.x1()).sin() * (2.0 * x.x2()).cos()
    }
    fn gradient(&self, x: &UnitVector3) -> [f64; 3] {
        let (s1, c1) = (3.0 * x.x1()).sin_cos();
        let (s2, c2) = (2.0 * x.x2()).sin_cos();
        [3.0 * c1 * c2, -2.0 * s1 * s2, 0.0]
    }
    fn hessian(&self, x: &UnitVector3) -> [[f64; 3]; 3] {
        let (s1, c1) = (3.0 * x.x1()).sin_cos();
        let (s2, c2) = (2.0 * x.x2()).sin_cos();
        [
            [-9.0 * s1 * c2, -6.0 * c1 * s2, 0.0],
            [-6.0 * c1 * s2, -4.0 * s1 * c2, 0.0],
            [0.0; 3],
        ]
    }
}

/// `x -> x1 x2`.
#[derive(Clone, Copy, Debug)]
pub struct Product12;

impl SmoothFunction for Product12 {
    fn value(&self, x: &UnitVector3) -> f64 {
        x.x1() * x.x2()
    }
    fn gradient(&self, x: &UnitVector3) -> [f64; 3] {
        [x.x2(), x.x1(), 0.0]
    }
    fn hessian(&self, _x: &UnitVector3) -> [[f64; 3]; 3] {
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]
    }
}

/// `x -> exp(x1 + x3 / 2)`.
#[derive(Clone, Copy, Debug)]
pub struct Exponential;

impl SmoothFunction for Exponential {
    fn value(&self, x: &UnitVector3) -> f64 {
        (x.x1() + 0.5 * x.x3()).exp()
    }
    fn gradient(&self, x: &UnitVector3) -> [f64; 3] {
        let e = self.value(x);
        [e, 0.0, 0.5 * e]
    }
    fn hessian(&self, x: &UnitVector3) -> [[f64; 3]; 3] {
        let e = self.value(x);
        [[e, 0.0, 0.5 * e], [0.0; 3], [0.5 * e, 0.0, 0.25 * e]]
    }
}

/// `x -> 1 / (2 + x2)`.
#[derive(Clone, Copy, Debug)]
pub struct Reciprocal;

impl SmoothFunction for Reciprocal {
    fn value(&self, x: &UnitVector3) -> f64 {
        1.0 / (2.0 + x.x2())
    }
    fn gradient(&self, x: &UnitVector3) -> [f64; 3] {
        [0.0, -1.0 / (2.0 + x.x2()).powi(2), 0.0]
    }
    fn hessian(&self, x: &UnitVector3) -> [[f64; 3]; 3] {
        let mut h = [[0.0; 3]; 3];
        h[1][1] = 2.0 / (2.0 + x.x2()).powi(3);
        h
    }
}

/// The five fixed test functions used for Stein-identity checks.
pub fn standard_test_functions() -> Vec<(&'static str, Box<dyn SmoothFunction>)> {
    vec![
        ("x3", Box::new(Linear([0.0, 0.0, 1.0]))),
        ("sin(3x1)cos(2x2)", Box::new(SinCos)),
        ("x1x2", Box::new(Product12)),
        ("exp(x1+x3/2)", Box::new(Exponential)),
        ("1/(2+x2)", Box::new(Reciprocal)),
    ]
}

/// The chart formula
/// `(cos q2 / sin q2) h_2 + (lp_1 h_1 + h_11) / sin^2 q2 + lp_2 h_2 + h_22`
/// for the divergence form; the Green form adds `h_2 lp_2 + h_1 lp_1 / sin^2 q2`
/// once more and `h (Lap log p + |grad log p|^2)`.
#[allow(clippy::too_many_arguments)]
fn tau_from_partials(
    variant: OperatorVariant,
    q2: f64,
    lp: &[f64; 2],
    lp_second: Option<&[[f64; 2]; 2]>,
    h: f64,
    dh: &[f64; 2],
    h11: f64,
    h22: f64,
) -> f64 {
    let (s, c) = q2.sin_cos();
    let s2 = s * s;
    let lap = c / s * dh[1] + h11 / s2 + h22;
    let drift = lp[0] * dh[0] / s2 + lp[1] * dh[1];
    match variant {
        OperatorVariant::DivergenceForm => lap + drift,
        OperatorVariant::GreenForm => {
            let l = lp_second.expect("Green form needs second partials of log p");
            let lap_lp = c / s * lp[1] + l[0][0] / s2 + l[1][1];
            let grad2 = lp[0] * lp[0] / s2 + lp[1] * lp[1];
            lap + 2.0 * drift + h * (lap_lp + grad2)
        }
    }
}

fn log_partials(
    cfg: &SteinOperatorConfig<'_>,
    target: &dyn TargetDensity,
    q: &ChartPoint,
) -> Result<crate::targets::ChartPartials, SteinError> {
    let order = match cfg.variant {
        OperatorVariant::DivergenceForm => 1,
        OperatorVariant::GreenForm => 2,
    };
    Ok(chart_log_density_partials(target, q, order)?)
}

/// `tau h` at `q`, from the chart partials of `h` and `log p`.
pub fn apply_tau_chart(
    cfg: &SteinOperatorConfig<'_>,
    h: &dyn SmoothFunction,
    q: &ChartPoint,
) -> Result<f64, SteinError> {
    let x = from_chart(q);
    let hp = pullback_partials(q, h.gradient(&x), Some(&h.hessian(&x)));
    let second = hp.second.expect("Hessian supplied");
    let lp = log_partials(cfg, cfg.target, q)?;
    Ok(tau_from_partials(
        cfg.variant,
        q.q2(),
        &lp.first,
        lp.second.as_ref(),
        h.value(&x),
        &hp.first,
        second[0][0],
        second[1][1],
    ))
}

fn trace(h: &[[f64; 3]; 3]) -> f64 {
    h[0][0] + h[1][1] + h[2][2]
}

fn quadratic(h: &[[f64; 3]; 3], x: &[f64; 3]) -> f64 {
    (0..3).map(|i| x[i] * sphere::dot(&h[i], x)).sum()
}

/// Laplace-Beltrami of the restriction of an ambient function:
/// `tr H - x^T H x - 2 x·g`.
fn ambient_laplacian(g: &[f64; 3], h: &[[f64; 3]; 3], x: &[f64; 3]) -> f64 {
    trace(h) - quadratic(h, x) - 2.0 * sphere::dot(x, g)
}

/// Riemannian inner product of two ambient gradients restricted to the sphere.
fn tangential_pairing(a: &[f64; 3], b: &[f64; 3], x: &[f64; 3]) -> f64 {
    sphere::dot(a, b) - sphere::dot(a, x) * sphere::dot(b, x)
}

/// `tau h` at `x`, computed from ambient derivatives; defined everywhere
/// on the sphere including the chart's excluded set.
pub fn ambient_tau(cfg: &SteinOperatorConfig<'_>, h: &dyn SmoothFunction, x: &UnitVector3) -> f64 {
    let xc = x.coords();
    let gh = h.gradient(x);
    let lap = ambient_laplacian(&gh, &h.hessian(x), &xc);
    let gp = cfg.target.grad_log_density(x);
    let drift = tangential_pairing(&gp, &gh, &xc);
    match cfg.variant {
        OperatorVariant::DivergenceForm => lap + drift,
        OperatorVariant::GreenForm => {
            let hp = cfg
                .target
                .hessian_log_density(x)
                .expect("Green form needs the Hessian of log p");
            let lap_lp = ambient_laplacian(&gp, &hp, &xc);
            lap + 2.0 * drift + h.value(x) * (lap_lp + tangential_pairing(&gp, &gp, &xc))
        }
    }
}

/// `tau` applied to `x -> psi(x·y)`:
/// `(1 - u^2) psi'' - 2u psi' + psi' (g_x·y - u g_x·x)` for the divergence form.
pub fn tau_x_kernel(
    cfg: &SteinOperatorConfig<'_>,
    profile: &dyn RadialProfile,
    x: &UnitVector3,
    y: &UnitVector3,
) -> f64 {
    let u = x.dot(y).clamp(-1.0, 1.0);
    let gx = cfg.target.grad_log_density(x);
    let a = sphere::dot(&gx, &x.coords());
    let b = sphere::dot(&gx, &y.coords());
    let d1 = profile.derivative(u, 1);
    let d2 = profile.derivative(u, 2);
    let lap = (1.0 - u * u) * d2 - 2.0 * u * d1;
    let drift = d1 * (b - u * a);
    match cfg.variant {
        OperatorVariant::DivergenceForm => lap + drift,
        OperatorVariant::GreenForm => {
            let xc = x.coords();
            let hp = cfg
                .target
                .hessian_log_density(x)
                .expect("Green form needs the Hessian of log p");
            let lap_lp = ambient_laplacian(&gx, &hp, &xc);
            lap + 2.0 * drift + profile.value(u) * (lap_lp + tangential_pairing(&gx, &gx, &xc))
        }
    }
}

/// Gradient data of one point: `x`, the ambient gradient `g` and `g·x`.
#[derive(Clone, Copy, Debug)]
struct PointData {
    x: [f64; 3],
    g: [f64; 3],
    gx: f64,
}

impl PointData {
    fn new(target: &dyn TargetDensity, p: &UnitVector3) -> Self {
        let x = p.coords();
        let g = target.grad_log_density(p);
        Self { x, g, gx: sphere::dot(&g, &x) }
    }
}

/// Closed-form `k_P` for the divergence form.
///
/// With `u = x·y`, `a = g_x·x`, `b1 = g_x·y`, `a2 = g_y·y`, `b2 = g_y·x`,
/// `cc = g_x·g_y`, the function `tau_x psi = G(u, b1)` is linear in `b1`, and
/// applying `tau` in `y` uses `|grad u|^2 = 1 - u^2`,
/// `<grad u, grad b1> = a - u b1`, `Lap u = -2u`, `Lap b1 = -2 b1`.
/// Third and fourth derivatives enter only through `(1 - u^2) psi'''` and
/// `(1 - u^2)^2 psi''''`, which stay finite at `u = +-1`.
fn stein_kernel_data(profile: &dyn RadialProfile, px: &PointData, py: &PointData) -> f64 {
    let u = sphere::dot(&px.x, &py.x).clamp(-1.0, 1.0);
    let s = 1.0 - u * u;
    let a = px.gx;
    let b1 = sphere::dot(&px.g, &py.x);
    let a2 = py.gx;
    let b2 = sphere::dot(&py.g, &px.x);
    let cc = sphere::dot(&px.g, &py.g);

    let p1 = profile.derivative(u, 1);
    let p2 = profile.derivative(u, 2);
    let w3 = profile.damped_derivative(u, 3);
    let w4 = profile.damped_derivative(u, 4);

    let g_u = w3 - 4.0 * u * p2 - 2.0 * p1 - a * (p1 + u * p2) + p2 * b1;
    let s_g_uu = w4 - 6.0 * u * w3 - 6.0 * s * p2 - a * (2.0 * s * p2 + u * w3) + w3 * b1;
    let lap = -2.0 * u * g_u - 2.0 * b1 * p1 + s_g_uu + 2.0 * p2 * (a - u * b1);
    let drift = g_u * (b2 - u * a2) + p1 * (cc - b1 * a2);
    lap + drift
}

/// `k_P(x, y)` in closed form.
pub fn stein_kernel(
    cfg: &SteinOperatorConfig<'_>,
    profile: &dyn RadialProfile,
    x: &UnitVector3,
    y: &UnitVector3,
) -> Result<f64, SteinError> {
    if cfg.variant != OperatorVariant::DivergenceForm {
        return Err(SteinError::ClosedFormUnavailable);
    }
    let px = PointData::new(cfg.target, x);
    let py = PointData::new(cfg.target, y);
    Ok(stein_kernel_data(profile, &px, &py))
}

/// `k_P(x, y)` by nested finite differences of the chart formula, with one
/// Richardson step, at the configured step.
pub fn stein_kernel_fd(
    cfg: &SteinOperatorConfig<'_>,
    profile: &dyn RadialProfile,
    x: &UnitVector3,
    y: &UnitVector3,
) -> Result<f64, SteinError> {
    stein_kernel_fd_with(cfg, profile, x, y, cfg.fd_step, true)
}

/// As [`stein_kernel_fd`] with an explicit step. The stencils are fourth
/// order, so without extrapolation the error is `O(step^4)` and with it
/// `O(step^6)`, until round-off, which grows like `eps / step^4`, takes over.
pub fn stein_kernel_fd_with(
    cfg: &SteinOperatorConfig<'_>,
    profile: &dyn RadialProfile,
    x: &UnitVector3,
    y: &UnitVector3,
    step: f64,
    extrapolate: bool,
) -> Result<f64, SteinError> {
    // place the pair on the equator, far from the excluded half circle
    let rot = Rotation::rotate_frame(x, y);
    let target = RotatedTarget::new(cfg.target, rot);
    let qx = to_chart(&rot.apply_point(x))?;
    let qy = to_chart(&rot.apply_point(y))?;
    let coarse = nested_fd(cfg, &target, profile, &qx, &qy, step)?;
    if !extrapolate {
        return Ok(coarse);
    }
    let fine = nested_fd(cfg, &target, profile, &qx, &qy, step / 2.0)?;
    Ok((16.0 * fine - coarse) / 15.0)
}

/// Chart `tau` at `q` of a function known only through values.
fn fd_tau<F>(
    cfg: &SteinOperatorConfig<'_>,
    target: &dyn TargetDensity,
    q: &ChartPoint,
    step: f64,
    f: F,
) -> Result<f64, SteinError>
where
    F: Fn(&ChartPoint) -> Result<f64, SteinError>,
{
    // five-point central stencils, fourth order in the step
    let f0 = f(q)?;
    let mut d1 = [0.0; 2];
    let mut d2 = [0.0; 2];
    for k in 0..2 {
        let fp = f(&q.offset(k, step)?)?;
        let fm = f(&q.offset(k, -step)?)?;
        let fpp = f(&q.offset(k, 2.0 * step)?)?;
        let fmm = f(&q.offset(k, -2.0 * step)?)?;
        d1[k] = (8.0 * (fp - fm) - (fpp - fmm)) / (12.0 * step);
        d2[k] = (16.0 * (fp + fm) - (fpp + fmm) - 30.0 * f0) / (12.0 * step * step);
    }
    let lp = log_partials(cfg, target, q)?;
    Ok(tau_from_partials(cfg.variant, q.q2(), &lp.first, lp.second.as_ref(), f0, &d1, d2[0], d2[1]))
}

fn nested_fd(
    cfg: &SteinOperatorConfig<'_>,
    target: &dyn TargetDensity,
    profile: &dyn RadialProfile,
    qx: &ChartPoint,
    qy: &ChartPoint,
    step: f64,
) -> Result<f64, SteinError> {
    fd_tau(cfg, target, qy, step, |qy2| {
        let y = from_chart(qy2);
        fd_tau(cfg, target, qx, step, |qx2| {
            Ok(profile.value(from_chart(qx2).dot(&y).clamp(-1.0, 1.0)))
        })
    })
}

/// The matrix `[k_P(x_i, x_j)]` with its Cholesky factorization.
pub struct SteinKernelMatrix {
    entries: DMatrix<f64>,
    jitter: f64,
    factorization: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for SteinKernelMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SteinKernelMatrix")
            .field("n", &self.n())
            .field("jitter", &self.jitter)
            .finish()
    }
}

/// First relative jitter tried when the plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Number of doublings of the relative jitter before giving up.
pub const JITTER_DOUBLINGS: u32 = 20;
/// Points closer than this (geodesic) are rejected as duplicates.
pub const MIN_SEPARATION: f64 = 1e-8;

impl SteinKernelMatrix {
    /// Factorizes `entries`, adding `eps * mean(diag)` to the diagonal with
    /// `eps = 1e-10, 2e-10, ...` (at most 20 doublings) if needed.
    pub fn factorize(entries: DMatrix<f64>) -> Result<Self, SteinError> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(SteinError::NonFiniteEntries);
        }
        if let Some(factorization) = Cholesky::new(entries.clone()) {
            return Ok(Self {
                entries,
                jitter: 0.0,
                factorization,
            });
        }
        let n = entries.nrows();
        let mean_diag = entries.diagonal().sum() / n as f64;
        let mut eps = JITTER_START;
        for _ in 0..=JITTER_DOUBLINGS {
            let jitter = eps * mean_diag.abs().max(f64::MIN_POSITIVE);
            let mut m = entries.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(factorization) = Cholesky::new(m) {
                log::warn!("Stein kernel matrix (n = {n}) needed jitter {jitter:e}");
                return Ok(Self {
                    entries,
                    jitter,
                    factorization,
                });
            }
            eps *= 2.0;
        }
        Err(SteinError::FactorizationFailure { jitter: eps / 2.0 })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Absolute amount added to the diagonal before factorizing.
    pub fn jitter_applied(&self) -> f64 {
        self.jitter
    }

    /// `(K + jitter I)^-1 b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factorization.solve(b)
    }

    /// `w^T K w` with the unjittered entries.
    pub fn quadratic_form(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.entries * w))
    }
}

fn check_distinct(points: &[UnitVector3]) -> Result<(), SteinError> {
    let hit = (0..points.len()).into_par_iter().find_map_first(|i| {
        (0..i).find_map(|j| {
            let d = geodesic_distance(&points[i], &points[j]);
            (d <= MIN_SEPARATION).then_some((j, i, d))
        })
    });
    match hit {
        Some((i, j, distance)) => Err(SteinError::DuplicatePoints {
            i,
            j,
            distance,
            min_distance: MIN_SEPARATION,
        }),
        None => Ok(()),
    }
}

/// Fills `K_P` for `points` without factorizing.
pub fn stein_kernel_entries(
    cfg: &SteinOperatorConfig<'_>,
    profile: &dyn RadialProfile,
    points: &[UnitVector3],
) -> Result<DMatrix<f64>, SteinError> {
    if points.is_empty() {
        return Err(SteinError::EmptyPointSet);
    }
    if cfg.variant != OperatorVariant::DivergenceForm {
        return Err(SteinError::ClosedFormUnavailable);
    }
    check_distinct(points)?;
    let data: Vec<PointData> = points.iter().map(|p| PointData::new(cfg.target, p)).collect();
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| stein_kernel_data(profile, &data[i], &data[j])).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Builds and factorizes `K_P`.
pub fn assemble(
    cfg: &SteinOperatorConfig<'_>,
    profile: &dyn RadialProfile,
    points: &[UnitVector3],
) -> Result<SteinKernelMatrix, SteinError> {
    SteinKernelMatrix::factorize(stein_kernel_entries(cfg, profile, points)?)
}
