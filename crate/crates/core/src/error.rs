use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector {0:?} cannot be normalized onto the sphere")]
    NotNormalizable([f64; 3]),
    #[error("chart coordinates ({q1}, {q2}) outside (0, 2pi) x (0, pi)")]
    ChartDomain { q1: f64, q2: f64 },
    #[error("point {0:?} lies on or near the half great circle excluded from the chart")]
    NearExcludedSet([f64; 3]),
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("{probes} probe points is fewer than the {points} points being measured")]
    TooFewProbes { probes: usize, points: usize },
    #[error("matrix rows are not a proper rotation")]
    NotARotation,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series did not reach tolerance {tol:e} within {max_terms} terms at t = {t}")]
    Divergence { t: f64, max_terms: usize, tol: f64 },
    #[error("argument {0} outside the unit disc")]
    OutOfRange(f64),
    #[error("lower parameter {0} is a non-positive integer reached before termination")]
    PoleInLowerParameter(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("smoothness {alpha} not admissible: {reason}")]
    InvalidSmoothness { alpha: f64, reason: &'static str },
    #[error("Wendland order j = {0} not shipped (supported: 2, 3)")]
    UnsupportedSmoothness(u32),
    #[error("length scale must be positive, got {0}")]
    InvalidLengthScale(f64),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("target does not provide an ambient Hessian of its log-density")]
    MissingHessian,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteinError {
    #[error("points {i} and {j} are closer than {min_distance:e} (distance {distance:e})")]
    DuplicatePoints {
        i: usize,
        j: usize,
        distance: f64,
        min_distance: f64,
    },
    #[error("Cholesky factorization failed after jitter {jitter:e} x mean diagonal")]
    FactorizationFailure { jitter: f64 },
    #[error("finite-difference step {0} outside [1e-6, 0.1]")]
    InvalidStep(f64),
    #[error("no closed-form Stein kernel for this operator variant")]
    ClosedFormUnavailable,
    #[error("kernel matrix has non-finite entries")]
    NonFiniteEntries,
    #[error("point set is empty")]
    EmptyPointSet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CubatureError {
    #[error("1^T K^-1 1 = {0} is not positive")]
    DegenerateSystem(f64),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sigma must be finite and positive, got {0}")]
    InvalidSigma(f64),
}

/// Errors from the text formats: point-set files, CLI specs, result CSVs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("invalid spec `{input}`: {reason}")]
    Spec { input: String, reason: String },
}

impl ParseError {
    pub(crate) fn spec(input: &str, reason: impl Into<String>) -> Self {
        Self::Spec {
            input: input.chars().take(200).collect(),
            reason: reason.into(),
        }
    }

    pub(crate) fn line(line: usize, reason: impl Into<String>) -> Self {
        Self::Line {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown integrand `{0}` (expected rosenbrock, linear, constant)")]
    UnknownIntegrand(String),
    #[error("need at least {needed} usable records with n >= {n_min}, found {found}")]
    InsufficientData {
        needed: usize,
        found: usize,
        n_min: usize,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
