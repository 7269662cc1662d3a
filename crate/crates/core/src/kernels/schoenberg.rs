use super::RadialProfile;
use crate::quadrature::gauss_legendre;

/// Legendre expansion `psi(u) = sum_n b_n P_n(u)` of a profile on S^2.
///
/// With `P_n(1) = 1` the coefficients sum to `psi(1)`; positive
/// definiteness on S^2 is equivalent to `b_n >= 0` for all `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchoenbergDiagnostic {
    pub coefficients: Vec<f64>,
    pub dimension: usize,
}

impl SchoenbergDiagnostic {
    pub fn min_coefficient(&self) -> f64 {
        self.coefficients.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Least-squares slope of `ln |b_n|` against `ln n` over `lo..=hi`.
    pub fn decay_exponent(&self, lo: usize, hi: usize) -> Option<f64> {
        if lo == 0 || hi >= self.coefficients.len() || hi <= lo {
            return None;
        }
        let pts: Vec<(f64, f64)> = (lo..=hi)
            .filter(|&n| self.coefficients[n] != 0.0)
            .map(|n| ((n as f64).ln(), self.coefficients[n].abs().ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        Some(least_squares_slope(&pts))
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Projects `profile` onto `P_0 ... P_N` with Gauss-Legendre quadrature of
/// order `max(4N, 800)`.
pub fn schoenberg_coefficients(profile: &dyn RadialProfile, n_max: usize) -> SchoenbergDiagnostic {
    let order = (4 * n_max).max(800);
    let (nodes, weights) = gauss_legendre(order);
    let mut b = vec![0.0; n_max + 1];
    for (&u, &w) in nodes.iter().zip(&weights) {
        let f = w * profile.value(u);
        let (mut p0, mut p1) = (1.0, u);
        b[0] += f;
        if n_max >= 1 {
            b[1] += f * u;
        }
        for (n, slot) in b.iter_mut().enumerate().skip(2) {
            let nf = n as f64;
            let p2 = ((2.0 * nf - 1.0) * u * p1 - (nf - 1.0) * p0) / nf;
            *slot += f * p2;
            p0 = p1;
            p1 = p2;
        }
    }
    for (n, slot) in b.iter_mut().enumerate() {
        *slot *= (2.0 * n as f64 + 1.0) / 2.0;
    }
    SchoenbergDiagnostic {
        coefficients: b,
        dimension: 2,
    }
}
