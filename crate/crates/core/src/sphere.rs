//! Points, the spherical coordinate patch, and distances on the unit sphere.
//!
//! The ambient [`UnitVector3`] is the canonical point type. The chart
//!
//! ```text
//! (q1, q2) -> (cos q1 sin q2, sin q1 sin q2, cos q2),   q1 in (0, 2pi), q2 in (0, pi)
//! ```
//!
//! covers the sphere minus the closed half great circle through the poles and
//! `(1, 0, 0)`. [`ChartPoint`] values are derived on demand and never stored.

use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::error::GeometryError;

/// Chordal distance below which a point counts as lying on the excluded set.
pub const POLE_TOLERANCE: f64 = 1e-9;

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// A point on the unit sphere in ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector3([f64; 3]);

impl UnitVector3 {
    /// Normalizes `v`. Fails for zero or non-finite input. Vectors already of
    /// unit length to within a few ulps are kept bit for bit, so that
    /// normalizing is idempotent.
    pub fn new(v: [f64; 3]) -> Result<Self, GeometryError> {
        let n = norm(&v);
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::NotNormalizable(v));
        }
        if (dot(&v, &v) - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self(v));
        }
        Ok(Self(scale(&v, 1.0 / n)))
    }

    pub fn north() -> Self {
        Self([0.0, 0.0, 1.0])
    }

    pub fn coords(&self) -> [f64; 3] {
        self.0
    }

    pub fn x1(&self) -> f64 {
        self.0[0]
    }

    pub fn x2(&self) -> f64 {
        self.0[1]
    }

    pub fn x3(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    /// Euclidean distance in the ambient space.
    pub fn chordal_distance(&self, other: &Self) -> f64 {
        norm(&sub(&self.0, &other.0))
    }

    /// Moves along the great circle starting at `self` in tangent direction
    /// `dir` (projected onto the tangent plane) by arc length `angle`.
    pub fn geodesic_step(&self, dir: [f64; 3], angle: f64) -> Result<Self, GeometryError> {
        let x = self.0;
        let t = sub(&dir, &scale(&x, dot(&dir, &x)));
        let tn = norm(&t);
        // also rejects NaN
        if tn.is_nan() || tn <= 0.0 {
            return Err(GeometryError::NotNormalizable(dir));
        }
        let t = scale(&t, 1.0 / tn);
        Self::new(add(&scale(&x, angle.cos()), &scale(&t, angle.sin())))
    }

    /// Orthogonal projection of an ambient vector onto the tangent plane at `self`.
    pub fn tangent_projection(&self, v: [f64; 3]) -> [f64; 3] {
        sub(&v, &scale(&self.0, dot(&v, &self.0)))
    }
}

impl fmt::Display for UnitVector3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.0[0], self.0[1], self.0[2])
    }
}

/// Local coordinates `(q1, q2)` strictly inside `(0, 2pi) x (0, pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    q1: f64,
    q2: f64,
}

impl ChartPoint {
    pub fn new(q1: f64, q2: f64) -> Result<Self, GeometryError> {
        if q1 > 0.0 && q1 < TAU && q2 > 0.0 && q2 < PI {
            Ok(Self { q1, q2 })
        } else {
            Err(GeometryError::ChartDomain { q1, q2 })
        }
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// Shifts one coordinate, failing if the result leaves the patch.
    pub fn offset(&self, coord: usize, delta: f64) -> Result<Self, GeometryError> {
        match coord {
            0 => Self::new(self.q1 + delta, self.q2),
            _ => Self::new(self.q1, self.q2 + delta),
        }
    }
}

/// Metric tensor of the chart at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartFrame {
    pub metric: [[f64; 2]; 2],
    pub sqrt_det: f64,
}

/// Chordal distance from `p` to the excluded half great circle
/// `{(sin t, 0, cos t) : t in [0, pi]}`.
fn distance_to_cut(p: &[f64; 3]) -> f64 {
    let t = p[0].atan2(p[2]).clamp(0.0, PI);
    let c = [t.sin(), 0.0, t.cos()];
    norm(&sub(p, &c))
}

pub fn to_chart(p: &UnitVector3) -> Result<ChartPoint, GeometryError> {
    let x = p.coords();
    if distance_to_cut(&x) <= POLE_TOLERANCE {
        return Err(GeometryError::NearExcludedSet(x));
    }
    let q2 = x[2].clamp(-1.0, 1.0).acos();
    let mut q1 = x[1].atan2(x[0]);
    if q1 < 0.0 {
        q1 += TAU;
    }
    ChartPoint::new(q1, q2)
}

pub fn from_chart(q: &ChartPoint) -> UnitVector3 {
    let (s1, c1) = q.q1.sin_cos();
    let (s2, c2) = q.q2.sin_cos();
    UnitVector3::new([c1 * s2, s1 * s2, c2]).expect("chart image has unit norm")
}

/// First partial derivatives of the chart embedding, `[d/dq1, d/dq2]`.
pub fn chart_tangents(q: &ChartPoint) -> [[f64; 3]; 2] {
    let (s1, c1) = q.q1.sin_cos();
    let (s2, c2) = q.q2.sin_cos();
    [[-s1 * s2, c1 * s2, 0.0], [c1 * c2, s1 * c2, -s2]]
}

/// Second partial derivatives of the chart embedding, indexed `[i][j]`.
pub fn chart_second_derivatives(q: &ChartPoint) -> [[[f64; 3]; 2]; 2] {
    let (s1, c1) = q.q1.sin_cos();
    let (s2, c2) = q.q2.sin_cos();
    let d11 = [-c1 * s2, -s1 * s2, 0.0];
    let d12 = [-s1 * c2, c1 * c2, 0.0];
    let d22 = [-c1 * s2, -s1 * s2, -c2];
    [[d11, d12], [d12, d22]]
}

pub fn chart_frame(q: &ChartPoint) -> ChartFrame {
    let s = q.q2.sin();
    ChartFrame {
        metric: [[s * s, 0.0], [0.0, 1.0]],
        sqrt_det: s,
    }
}

/// Arc length between two points, in `[0, pi]`.
pub fn geodesic_distance(a: &UnitVector3, b: &UnitVector3) -> f64 {
    // atan2 form stays accurate for nearly coincident and nearly antipodal pairs
    let c = norm(&cross(&a.0, &b.0));
    let d = a.dot(b).clamp(-1.0, 1.0);
    c.atan2(d)
}

/// Fibonacci lattice with `z` spaced evenly over `[-1, 1]` including both
/// ends, so the poles are probed too.
pub fn probe_grid(n: usize) -> Vec<UnitVector3> {
    let golden = PI * (1.0 + 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = if n == 1 { 0.0 } else { 1.0 - 2.0 * i as f64 / (n - 1) as f64 };
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            UnitVector3::new([r * c, r * s, z]).expect("lattice point is nonzero")
        })
        .collect()
}

/// Lower bound on the fill distance of `points`: the largest distance from
/// a [`probe_grid`] point to its nearest neighbour in `points`.
pub fn estimate_fill_distance(points: &[UnitVector3], n_probe: usize) -> Result<f64, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    if n_probe < points.len() {
        return Err(GeometryError::TooFewProbes {
            probes: n_probe,
            points: points.len(),
        });
    }
    use rayon::prelude::*;
    let probes = probe_grid(n_probe);
    let h = probes
        .par_iter()
        .map(|p| {
            points
                .iter()
                .map(|x| geodesic_distance(p, x))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(h)
}

/// A proper rotation of the ambient space, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation([[f64; 3]; 3]);

impl Rotation {
    pub fn identity() -> Self {
        Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Builds a rotation from orthonormal rows. Fails unless the rows form a
    /// right-handed orthonormal basis to 1e-10.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(&rows[i], &rows[j]) - target).abs() > 1e-10 {
                    return Err(GeometryError::NotARotation);
                }
            }
        }
        if (dot(&cross(&rows[0], &rows[1]), &rows[2]) - 1.0).abs() > 1e-10 {
            return Err(GeometryError::NotARotation);
        }
        Ok(Self(rows))
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        [dot(&self.0[0], &v), dot(&self.0[1], &v), dot(&self.0[2], &v)]
    }

    pub fn apply_point(&self, p: &UnitVector3) -> UnitVector3 {
        UnitVector3::new(self.apply(p.0)).expect("rotation preserves norm")
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    /// A rotation taking both `a` and `b` onto the equator `x3 = 0`,
    /// symmetric about the point `(-1, 0, 0)`, so that both images sit well
    /// inside the chart unless the pair is nearly antipodal.
    pub fn rotate_frame(a: &UnitVector3, b: &UnitVector3) -> Self {
        let sum = add(&a.0, &b.0);
        let diff = sub(&a.0, &b.0);
        let mid = if norm(&sum) > 1e-8 {
            scale(&sum, 1.0 / norm(&sum))
        } else {
            any_orthogonal(&a.0)
        };
        // e2 lies along the chord, orthogonal to the midpoint
        let mut e2 = sub(&diff, &scale(&mid, dot(&diff, &mid)));
        if norm(&e2) < 1e-12 {
            e2 = any_orthogonal(&mid);
        }
        let e2 = scale(&e2, 1.0 / norm(&e2));
        // mid -> (-1, 0, 0) and chord direction -> (0, 1, 0): the pair lands on
        // the equator at q1 = pi -/+ d/2
        let neg_mid = scale(&mid, -1.0);
        Self([neg_mid, e2, cross(&neg_mid, &e2)])
    }
}

fn any_orthogonal(v: &[f64; 3]) -> [f64; 3] {
    let axis = if v[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let c = cross(v, &axis);
    scale(&c, 1.0 / norm(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uv(v: [f64; 3]) -> UnitVector3 {
        UnitVector3::new(v).unwrap()
    }

    #[test]
    fn to_chart_examples() {
        let q = to_chart(&uv([0.0, 1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(q.q1(), PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.q2(), PI / 2.0, epsilon = 1e-15);
        let q = to_chart(&uv([-1.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(q.q1(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(q.q2(), PI / 2.0, epsilon = 1e-15);
        assert!(matches!(
            to_chart(&UnitVector3::north()),
            Err(GeometryError::NearExcludedSet(_))
        ));
        assert!(to_chart(&uv([0.0, 0.0, -1.0])).is_err());
        assert!(to_chart(&uv([1.0, 0.0, 0.0])).is_err());
        assert!(to_chart(&uv([1.0, 0.0, 1.0])).is_err());
        // just off the meridian on the negative-q1 side wraps to near 2pi
        let q = to_chart(&uv([1.0, -1e-6, 0.0])).unwrap();
        assert!(q.q1() > TAU - 1e-5);
    }

    #[test]
    fn from_chart_examples() {
        let p = from_chart(&ChartPoint::new(PI / 2.0, PI / 2.0).unwrap());
        assert_abs_diff_eq!(p.x1(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x2(), 1.0, epsilon = 1e-15);
        let p = from_chart(&ChartPoint::new(PI, PI / 2.0).unwrap());
        assert_abs_diff_eq!(p.x1(), -1.0, epsilon = 1e-15);
        let p = from_chart(&ChartPoint::new(PI / 4.0, PI / 2.0).unwrap());
        let h = 2f64.sqrt() / 2.0;
        assert_abs_diff_eq!(p.x1(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x2(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(p.x3(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn chart_point_rejects_boundary() {
        assert!(ChartPoint::new(0.0, 1.0).is_err());
        assert!(ChartPoint::new(TAU, 1.0).is_err());
        assert!(ChartPoint::new(1.0, 0.0).is_err());
        assert!(ChartPoint::new(1.0, PI).is_err());
        assert!(ChartPoint::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn frame_examples() {
        for (q2, g11, sd) in [
            (PI / 2.0, 1.0, 1.0),
            (PI / 6.0, 0.25, 0.5),
            (PI / 3.0, 0.75, 3f64.sqrt() / 2.0),
        ] {
            let f = chart_frame(&ChartPoint::new(1.0, q2).unwrap());
            assert_abs_diff_eq!(f.metric[0][0], g11, epsilon = 1e-15);
            assert_eq!(f.metric[1][1], 1.0);
            assert_eq!(f.metric[0][1], 0.0);
            assert_abs_diff_eq!(f.sqrt_det, sd, epsilon = 1e-15);
        }
    }

    #[test]
    fn geodesic_examples() {
        let a = uv([1.0, 0.0, 0.0]);
        assert_eq!(geodesic_distance(&a, &a), 0.0);
        assert_abs_diff_eq!(geodesic_distance(&a, &uv([-1.0, 0.0, 0.0])), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(geodesic_distance(&a, &uv([0.0, 1.0, 0.0])), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn tangents_match_finite_differences() {
        let q = ChartPoint::new(0.7, 1.1).unwrap();
        let t = chart_tangents(&q);
        let s = chart_second_derivatives(&q);
        let h = 1e-6;
        for i in 0..2 {
            let p = from_chart(&q.offset(i, h).unwrap()).coords();
            let m = from_chart(&q.offset(i, -h).unwrap()).coords();
            for k in 0..3 {
                assert_abs_diff_eq!((p[k] - m[k]) / (2.0 * h), t[i][k], epsilon = 1e-9);
            }
            let tp = chart_tangents(&q.offset(i, h).unwrap());
            let tm = chart_tangents(&q.offset(i, -h).unwrap());
            for j in 0..2 {
                for k in 0..3 {
                    assert_abs_diff_eq!((tp[j][k] - tm[j][k]) / (2.0 * h), s[i][j][k], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn fill_distance_examples() {
        assert_eq!(estimate_fill_distance(&probe_grid(200), 200).unwrap(), 0.0);
        let h = estimate_fill_distance(&[UnitVector3::north()], 1000).unwrap();
        assert!((h - PI).abs() < 1e-2, "{h}");
        assert!(matches!(estimate_fill_distance(&[], 10), Err(GeometryError::EmptyPointSet)));
    }

    #[test]
    fn fill_distance_fibonacci_100() {
        let h = estimate_fill_distance(&crate::points::fibonacci_points(100), 10_000).unwrap();
        assert!(h > 0.1 && h < 0.4, "{h}");
        // regression baseline, measured
        assert_abs_diff_eq!(h, 0.263_939_731_086_428, epsilon = 1e-9);
    }

    #[test]
    fn rotate_frame_puts_pair_inside_chart() {
        let pairs = [
            (uv([0.0, 0.0, 1.0]), uv([0.0, 0.1, 1.0])),
            (uv([1.0, 0.0, 0.0]), uv([1.0, 0.0, 0.3])),
            (uv([0.2, -0.5, 0.8]), uv([-0.3, 0.1, -0.9])),
        ];
        for (a, b) in pairs {
            let r = Rotation::rotate_frame(&a, &b);
            let ra = r.apply_point(&a);
            let rb = r.apply_point(&b);
            assert!(to_chart(&ra).is_ok() && to_chart(&rb).is_ok());
            assert_abs_diff_eq!(ra.x3(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rb.x3(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(ra.dot(&rb), a.dot(&b), epsilon = 1e-12);
            assert!(Rotation::from_rows(r.0).is_ok());
        }
    }

    fn arb_point() -> impl Strategy<Value = UnitVector3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-6)
            .prop_map(|(a, b, c)| uv([a, b, c]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn chart_round_trip(q1 in 1e-6f64..(TAU - 1e-6), q2 in 1e-6f64..(PI - 1e-6)) {
            let q = ChartPoint::new(q1, q2).unwrap();
            let p = from_chart(&q);
            prop_assert!((norm(&p.coords()) - 1.0).abs() < 1e-12);
            if let Ok(back) = to_chart(&p) {
                let p2 = from_chart(&back);
                for k in 0..3 {
                    prop_assert!((p.coords()[k] - p2.coords()[k]).abs() < 1e-10);
                }
            }
            prop_assert!(chart_frame(&q).sqrt_det > 0.0);
        }
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = geodesic_distance(&a, &b);
            let bc = geodesic_distance(&b, &c);
            let ac = geodesic_distance(&a, &c);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((ab - geodesic_distance(&b, &a)).abs() == 0.0);
        }

        #[test]
        fn chordal_geodesic_relation(a in arb_point(), b in arb_point()) {
            let dm = geodesic_distance(&a, &b);
            prop_assert!((a.chordal_distance(&b) - 2.0 * (dm / 2.0).sin()).abs() < 1e-12);
        }

        #[test]
        fn geodesic_step_has_requested_length(a in arb_point(), d in arb_point(), t in 1e-6f64..3.0) {
            prop_assume!(a.tangent_projection(d.coords()).iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let b = a.geodesic_step(d.coords(), t).unwrap();
            prop_assert!((geodesic_distance(&a, &b) - t).abs() < 1e-10);
        }
    }
}
