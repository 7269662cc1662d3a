//! Gamma ratios, Pochhammer symbols and generalized hypergeometric series.

use statrs::function::gamma::ln_gamma;

use crate::error::SeriesError;

const INTEGER_TOL: f64 = 1e-12;

fn nonpositive_integer(x: f64) -> Option<u64> {
    let r = x.round();
    if r <= 0.0 && (x - r).abs() <= INTEGER_TOL {
        Some((-r) as u64)
    } else {
        None
    }
}

pub(crate) fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() <= INTEGER_TOL
}

/// `(ln |Gamma(x)|, sign Gamma(x))`, or `None` at the poles `x = 0, -1, -2, ...`.
pub fn ln_gamma_signed(x: f64) -> Option<(f64, f64)> {
    if nonpositive_integer(x).is_some() {
        return None;
    }
    if x > 0.0 {
        return Some((ln_gamma(x), 1.0));
    }
    // reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
    let s = (std::f64::consts::PI * x).sin();
    let ln = std::f64::consts::PI.ln() - s.abs().ln() - ln_gamma(1.0 - x);
    Some((ln, s.signum()))
}

/// `prod Gamma(num_i) / prod Gamma(den_j)`.
///
/// A pole in the denominator makes the ratio zero; a pole in the numerator
/// yields `None`.
pub fn gamma_ratio(num: &[f64], den: &[f64]) -> Option<f64> {
    let mut ln = 0.0;
    let mut sign = 1.0;
    for &d in den {
        match ln_gamma_signed(d) {
            Some((l, s)) => {
                ln -= l;
                sign *= s;
            }
            None => return Some(0.0),
        }
    }
    for &n in num {
        let (l, s) = ln_gamma_signed(n)?;
        ln += l;
        sign *= s;
    }
    Some(sign * ln.exp())
}

/// Pochhammer symbol `(z)_n = Gamma(z + n) / Gamma(z)`.
///
/// Integer `n` uses the finite product, which is exact in sign for negative `z`.
pub fn pochhammer(z: f64, n: f64) -> f64 {
    if n >= 0.0 && is_integer(n) && n <= 10_000.0 {
        let k = n.round() as u64;
        return (0..k).fold(1.0, |acc, i| acc * (z + i as f64));
    }
    gamma_ratio(&[z + n], &[z]).unwrap_or(f64::NAN)
}

/// Generalized hypergeometric series `pFq(upper; lower; t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypergeometricSeries {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub max_terms: usize,
    pub tol: f64,
}

impl HypergeometricSeries {
    pub const DEFAULT_TOL: f64 = 1e-13;
    pub const DEFAULT_MAX_TERMS: usize = 1_000_000;

    pub fn new(upper: Vec<f64>, lower: Vec<f64>) -> Self {
        Self {
            upper,
            lower,
            max_terms: Self::DEFAULT_MAX_TERMS,
            tol: Self::DEFAULT_TOL,
        }
    }

    /// Degree of the polynomial when some upper parameter is a non-positive integer.
    pub fn terminating_degree(&self) -> Option<u64> {
        self.upper.iter().filter_map(|&a| nonpositive_integer(a)).min()
    }

    /// `d/dt pFq(a; b; t) = (prod a / prod b) pFq(a + 1; b + 1; t)`.
    pub fn derivative(&self) -> (f64, Self) {
        let num: f64 = self.upper.iter().product();
        let den: f64 = self.lower.iter().product();
        let shifted = Self {
            upper: self.upper.iter().map(|a| a + 1.0).collect(),
            lower: self.lower.iter().map(|b| b + 1.0).collect(),
            max_terms: self.max_terms,
            tol: self.tol,
        };
        (num / den, shifted)
    }

    pub fn eval(&self, t: f64) -> Result<f64, SeriesError> {
        self.eval_counted(t).map(|(v, _)| v)
    }

    /// Value together with the number of terms summed.
    pub fn eval_counted(&self, t: f64) -> Result<(f64, usize), SeriesError> {
        if !t.is_finite() {
            return Err(SeriesError::OutOfRange(t));
        }
        let degree = self.terminating_degree();
        if let Some(deg) = degree {
            // a pole in the lower parameters reached before termination
            for &b in &self.lower {
                if let Some(m) = nonpositive_integer(b) {
                    if m < deg {
                        return Err(SeriesError::PoleInLowerParameter(b));
                    }
                }
            }
        } else {
            for &b in &self.lower {
                if nonpositive_integer(b).is_some() {
                    return Err(SeriesError::PoleInLowerParameter(b));
                }
            }
            if t.abs() > 1.0 && self.upper.len() > self.lower.len() {
                return Err(SeriesError::OutOfRange(t));
            }
            if t.abs() == 1.0 && self.upper.len() == self.lower.len() + 1 {
                let margin: f64 =
                    self.lower.iter().sum::<f64>() - self.upper.iter().sum::<f64>();
                let converges = margin > 0.0 || (t == -1.0 && margin > -1.0);
                if !converges {
                    return Err(SeriesError::Divergence {
                        t,
                        max_terms: 0,
                        tol: self.tol,
                    });
                }
            }
        }

        let limit = match degree {
            Some(d) => (d as usize).saturating_add(1),
            None => self.max_terms,
        };
        let mut sum = 1.0;
        let mut term = 1.0;
        let mut small_run = 0;
        for k in 0..limit.saturating_sub(1) {
            let kf = k as f64;
            let mut ratio = t / (kf + 1.0);
            for &a in &self.upper {
                ratio *= a + kf;
            }
            for &b in &self.lower {
                ratio /= b + kf;
            }
            term *= ratio;
            sum += term;
            if degree.is_none() {
                // bound the remaining tail by a geometric series in the current ratio
                let r = ratio.abs();
                let tail = if r < 1.0 { term.abs() * r / (1.0 - r) } else { f64::INFINITY };
                if tail.max(term.abs()) <= self.tol * sum.abs().max(f64::MIN_POSITIVE) {
                    small_run += 1;
                    if small_run >= 3 {
                        return Ok((sum, k + 2));
                    }
                } else {
                    small_run = 0;
                }
                if !sum.is_finite() {
                    break;
                }
            }
        }
        match degree {
            Some(_) => Ok((sum, limit)),
            None => Err(SeriesError::Divergence {
                t,
                max_terms: self.max_terms,
                tol: self.tol,
            }),
        }
    }
}

/// Above this argument the Gauss function is evaluated through the
/// connection formula at `1 - z`. The two connection terms cancel strongly
/// for moderate `1 - z`, so the direct series is kept until the slow
/// convergence near `z = 1` becomes the larger cost.
const CONNECTION_THRESHOLD: f64 = 0.9;

/// `2F1(a, b; c; z)` written as `regular + singular_coef * (1 - z)^exponent`.
///
/// The split keeps the branch-point behaviour at `z = 1` explicit so that
/// callers can multiply by powers of `(1 - z)` before evaluating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyp2f1Split {
    pub regular: f64,
    pub singular_coef: f64,
    pub exponent: f64,
    pub one_minus_z: f64,
}

impl Hyp2f1Split {
    pub fn value(&self) -> f64 {
        self.value_times_power(0.0)
    }

    /// `(1 - z)^extra * 2F1(...)`, evaluated without forming `0 * inf`.
    pub fn value_times_power(&self, extra: f64) -> f64 {
        let w = self.one_minus_z;
        let reg = if extra == 0.0 {
            self.regular
        } else {
            self.regular * w.powf(extra)
        };
        if self.singular_coef == 0.0 {
            return reg;
        }
        reg + self.singular_coef * w.powf(self.exponent + extra)
    }
}

/// Gauss hypergeometric function on `[-1, 1]`.
///
/// `z < 0` uses the Pfaff transformation onto `[0, 1/2]`; `z > 0.9` uses the
/// connection formula onto `1 - z` when `c - a - b` is not an integer, and
/// the direct series otherwise.
pub fn hyp2f1_split(a: f64, b: f64, c: f64, z: f64) -> Result<Hyp2f1Split, SeriesError> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(SeriesError::OutOfRange(z));
    }
    let one_minus_z = 1.0 - z;
    let plain = |regular: f64| Hyp2f1Split {
        regular,
        singular_coef: 0.0,
        exponent: 0.0,
        one_minus_z,
    };
    let series = |upper: Vec<f64>, lower: Vec<f64>| HypergeometricSeries {
        tol: f64::EPSILON,
        ..HypergeometricSeries::new(upper, lower)
    };
    if z < 0.0 {
        let w = z / (z - 1.0);
        let f = series(vec![a, c - b], vec![c]).eval(w)?;
        return Ok(plain(one_minus_z.powf(-a) * f));
    }
    let s = c - a - b;
    if z <= CONNECTION_THRESHOLD || is_integer(s) {
        let f = series(vec![a, b], vec![c]).eval(z)?;
        return Ok(plain(f));
    }
    let w = one_minus_z;
    let coef_a = gamma_ratio(&[c, s], &[c - a, c - b]).ok_or(SeriesError::OutOfRange(z))?;
    let coef_b = gamma_ratio(&[c, -s], &[a, b]).ok_or(SeriesError::OutOfRange(z))?;
    let fa = if coef_a != 0.0 {
        series(vec![a, b], vec![1.0 - s]).eval(w)?
    } else {
        0.0
    };
    let fb = if coef_b != 0.0 {
        series(vec![c - a, c - b], vec![s + 1.0]).eval(w)?
    } else {
        0.0
    };
    Ok(Hyp2f1Split {
        regular: coef_a * fa,
        singular_coef: coef_b * fb,
        exponent: s,
        one_minus_z,
    })
}

pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64, SeriesError> {
    hyp2f1_split(a, b, c, z).map(|s| s.value())
}
