//! Point-set generators: the spherical Fibonacci lattice, Riesz-energy
//! descent, i.i.d. uniform draws and an independence Metropolis-Hastings
//! chain.
//!
//! Every stochastic generator takes an explicit [`RngSeed`] and is
//! single-threaded per seed, so a seed reproduces its output bit for bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::sphere::{self, geodesic_distance, UnitVector3};
use crate::targets::TargetDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// A seed for an independent sub-stream labelled by `stream`.
    pub fn derive(self, stream: u64) -> Self {
        // splitmix64 finalizer over the pair
        let mut z = self.0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self(z ^ (z >> 31))
    }
}

/// Spherical Fibonacci lattice: `z_i = 1 - 2(i + 1/2)/n`, longitude
/// `pi (1 + sqrt 5) i`.
pub fn fibonacci_points(n: usize) -> Vec<UnitVector3> {
    let golden = PI * (1.0 + 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            UnitVector3::new([r * c, r * s, z]).expect("lattice point is nonzero")
        })
        .collect()
}

pub fn uniform_point<R: Rng + ?Sized>(rng: &mut R) -> UnitVector3 {
    loop {
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        if let Ok(p) = UnitVector3::new(v) {
            return p;
        }
    }
}

/// Unit tangent vector at `x` in a uniformly random direction.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, x: &UnitVector3) -> [f64; 3] {
    loop {
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        let t = x.tangent_projection(v);
        let n = sphere::norm(&t);
        if n > 1e-6 {
            return sphere::scale(&t, 1.0 / n);
        }
    }
}

pub fn iid_uniform(n: usize, seed: RngSeed) -> Vec<UnitVector3> {
    let mut rng = seed.rng();
    (0..n).map(|_| uniform_point(&mut rng)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RieszOptions {
    pub s: f64,
    pub iters: usize,
    /// Size of the tangent perturbation applied to the Fibonacci start,
    /// relative to the lattice spacing `sqrt(4 pi / n)`.
    pub init_jitter: f64,
}

impl Default for RieszOptions {
    fn default() -> Self {
        Self {
            s: 1.0,
            iters: 500,
            init_jitter: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RieszResult {
    pub points: Vec<UnitVector3>,
    /// Energy at the start and after every accepted step.
    pub energy_trace: Vec<f64>,
}

/// `sum_{i != j} |x_i - x_j|^-s`.
pub fn riesz_energy(points: &[UnitVector3], s: f64) -> f64 {
    let rows: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| points[i].chordal_distance(q).powf(-s))
                .sum::<f64>()
        })
        .collect();
    rows.iter().sum()
}

fn riesz_gradient(points: &[UnitVector3], s: f64) -> Vec<[f64; 3]> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let xc = x.coords();
            let mut g = [0.0; 3];
            for (j, y) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = sphere::sub(&xc, &y.coords());
                let r2 = sphere::dot(&d, &d);
                // each unordered pair appears twice in the energy
                let f = -2.0 * s * r2.powf(-s / 2.0 - 1.0);
                g = sphere::add(&g, &sphere::scale(&d, f));
            }
            x.tangent_projection(g)
        })
        .collect()
}

/// Projected gradient descent on the Riesz `s`-energy from a jittered
/// Fibonacci start. Steps are chosen by backtracking, so the energy trace
/// never increases.
pub fn riesz_minimize(n: usize, opts: &RieszOptions, seed: RngSeed) -> RieszResult {
    assert!(n >= 2, "need at least two points");
    let mut rng = seed.rng();
    let spacing = (4.0 * PI / n as f64).sqrt();
    let mut points: Vec<UnitVector3> = fibonacci_points(n)
        .into_iter()
        .map(|p| {
            let t = random_tangent(&mut rng, &p);
            p.geodesic_step(t, opts.init_jitter * spacing * rng.random::<f64>())
                .expect("tangent step stays on the sphere")
        })
        .collect();
    let mut energy = riesz_energy(&points, opts.s);
    let mut trace = vec![energy];
    // largest per-point move, in radians
    let mut step = 0.1 * spacing;
    for _ in 0..opts.iters {
        let grad = riesz_gradient(&points, opts.s);
        let gmax = grad.iter().map(sphere::norm).fold(0.0, f64::max);
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let eta = step / gmax;
            let trial: Vec<UnitVector3> = points
                .iter()
                .zip(&grad)
                .map(|(p, g)| {
                    let moved = sphere::sub(&p.coords(), &sphere::scale(g, eta));
                    UnitVector3::new(moved).unwrap_or(*p)
                })
                .collect();
            let e = riesz_energy(&trial, opts.s);
            if e <= energy {
                points = trial;
                energy = e;
                trace.push(e);
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    RieszResult {
        points,
        energy_trace: trace,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub chain_length: usize,
    pub burn_in: usize,
    /// States moved off an exact repeat of their predecessor.
    pub perturbed: usize,
}

/// Geodesic distance of the perturbation applied to repeated chain states.
pub const DUPLICATE_STEP: f64 = 1e-7;
/// Perturbed states closer than this to another state in the same run are redrawn.
pub const DUPLICATE_SEPARATION: f64 = 1e-8;

/// Independence Metropolis-Hastings chain with the uniform distribution on
/// the sphere as proposal.
///
/// Returns `n` states after discarding `burn_in`. A rejection repeats the
/// previous state; such repeats are moved by [`DUPLICATE_STEP`] in a random
/// tangent direction so the point set stays pairwise distinct.
pub fn mh_chain(
    target: &dyn TargetDensity,
    n: usize,
    burn_in: usize,
    seed: RngSeed,
) -> (Vec<UnitVector3>, ChainDiagnostics) {
    let mut rng = seed.rng();
    let mut x = uniform_point(&mut rng);
    let mut lx = target.log_density(&x);
    let mut accepted = 0;
    let total = n + burn_in;
    let mut states = Vec::with_capacity(n);
    let mut repeat = Vec::with_capacity(n);
    for step in 0..total {
        let y = uniform_point(&mut rng);
        let ly = target.log_density(&y);
        let u: f64 = rng.random();
        let moved = ly >= lx || u.ln() < ly - lx;
        if moved {
            x = y;
            lx = ly;
            accepted += 1;
        }
        if step >= burn_in {
            states.push(x);
            repeat.push(!moved);
        }
    }
    // first kept state may repeat a burn-in state; that is not a duplicate
    if let Some(r) = repeat.first_mut() {
        *r = false;
    }

    let mut perturbed = 0;
    let mut run_start = 0;
    for i in 0..states.len() {
        if !repeat[i] {
            run_start = i;
            continue;
        }
        let base = states[run_start];
        loop {
            let t = random_tangent(&mut rng, &base);
            let cand = base.geodesic_step(t, DUPLICATE_STEP).expect("small step");
            let clash = states[run_start..i]
                .iter()
                .any(|q| geodesic_distance(q, &cand) <= DUPLICATE_SEPARATION);
            if !clash {
                states[i] = cand;
                break;
            }
        }
        perturbed += 1;
    }

    let diag = ChainDiagnostics {
        acceptance_rate: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
        accepted,
        chain_length: n,
        burn_in,
        perturbed,
    };
    (states, diag)
}
