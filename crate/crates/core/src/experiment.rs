//! Convergence sweeps: generate points, build `K_P`, solve for the weights
//! and record the kernel Stein discrepancy and the integration error against
//! the reference quadrature.

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::cubature::{integrate, integrate_sigma, solve_weights, SigmaEstimatorConfig, SteinInterpolant};
use crate::error::{CubatureError, ExperimentError, ParseError, SteinError};
use crate::kernels::{least_squares_slope, KernelSpec};
use crate::points::{fibonacci_points, iid_uniform, mh_chain, riesz_minimize, RieszOptions, RngSeed};
use crate::quadrature::{reference_expectation, REFERENCE_RESOLUTION};
use crate::sphere::{estimate_fill_distance, UnitVector3};
use crate::stein::{stein_kernel_entries, SteinKernelMatrix, SteinOperatorConfig};
use crate::targets::{TargetDensity, TargetSpec};

pub const CSV_HEADER: &str =
    "n,seed,kernel,alpha,lambda,points,ksd,estimate,truth,abs_error,fill_distance,jitter,flag,wall_ms";

/// Probe count for the fill distance, raised to `n` for larger sets.
pub const FILL_PROBES: usize = 10_000;

/// Kernels must reproduce a Sobolev space of order above `d/2 + 2 = 3` for
/// `k_P` to be well defined.
pub const MIN_ALPHA: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointRegime {
    Fibonacci,
    Riesz,
    Iid,
    Mcmc,
    /// The first `n` points of a point-set file.
    File(PathBuf),
}

impl PointRegime {
    /// Whether the seed changes the point set.
    pub fn is_random(&self) -> bool {
        matches!(self, PointRegime::Riesz | PointRegime::Iid | PointRegime::Mcmc)
    }
}

impl fmt::Display for PointRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointRegime::Fibonacci => f.write_str("fibonacci"),
            PointRegime::Riesz => f.write_str("riesz"),
            PointRegime::Iid => f.write_str("iid"),
            PointRegime::Mcmc => f.write_str("mcmc"),
            PointRegime::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for PointRegime {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fibonacci" => Ok(PointRegime::Fibonacci),
            "riesz" => Ok(PointRegime::Riesz),
            "iid" => Ok(PointRegime::Iid),
            "mcmc" => Ok(PointRegime::Mcmc),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(PointRegime::File(PathBuf::from(path))),
                _ => Err(ParseError::spec(s, "expected fibonacci, riesz, iid, mcmc or file:<path>")),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaMode {
    Limit,
    Finite(SigmaEstimatorConfig),
}

impl fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaMode::Limit => f.write_str("limit"),
            SigmaMode::Finite(c) => write!(f, "{}", c.sigma()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrand {
    /// `(x2 - x1^2)^2 + (1 - x1)^2`
    Rosenbrock,
    /// `v . x` for a unit vector `v`.
    Linear([f64; 3]),
    Constant(f64),
}

impl Integrand {
    pub fn eval(&self, x: &UnitVector3) -> f64 {
        match *self {
            Integrand::Rosenbrock => (x.x2() - x.x1() * x.x1()).powi(2) + (1.0 - x.x1()).powi(2),
            Integrand::Linear(v) => crate::sphere::dot(&v, &x.coords()),
            Integrand::Constant(c) => c,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Integrand::Rosenbrock => "rosenbrock".into(),
            Integrand::Linear([a, b, c]) => format!("linear:{a},{b},{c}"),
            Integrand::Constant(c) => format!("constant:{c}"),
        }
    }

    /// `E_P[f]` by the reference quadrature.
    pub fn truth(&self, target: &dyn TargetDensity) -> f64 {
        match *self {
            Integrand::Constant(c) => c,
            _ => reference_expectation(target, |x| self.eval(x), REFERENCE_RESOLUTION),
        }
    }
}

/// `rosenbrock`, `linear` (`c . x / |c|` for the target's `c`, or `x3` when
/// `c = 0`) or `constant` (`1`).
pub fn default_integrand(name: &str, target: &TargetSpec) -> Result<Integrand, ExperimentError> {
    match name {
        "rosenbrock" => Ok(Integrand::Rosenbrock),
        "constant" => Ok(Integrand::Constant(1.0)),
        "linear" => {
            let TargetSpec::Vmf(c) = *target;
            let norm = crate::sphere::norm(&c);
            if norm == 0.0 {
                Ok(Integrand::Linear([0.0, 0.0, 1.0]))
            } else {
                Ok(Integrand::Linear([c[0] / norm, c[1] / norm, c[2] / norm]))
            }
        }
        _ => Err(ExperimentError::UnknownIntegrand(name.chars().take(64).collect())),
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub target: TargetSpec,
    pub points: PointRegime,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub integrand: Integrand,
    pub sigma: SigmaMode,
    /// Defaults to `n / 10` when `None`.
    pub burn_in: Option<usize>,
    pub riesz: RieszOptions,
    /// Write 0 to `wall_ms` so reruns are byte-identical.
    pub record_timing: bool,
    /// Directory receiving one point file per cell.
    pub save_points: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kernel: KernelSpec, target: TargetSpec, points: PointRegime, n_grid: Vec<usize>) -> Self {
        Self {
            kernel,
            target,
            points,
            n_grid,
            seeds: vec![0],
            integrand: Integrand::Rosenbrock,
            sigma: SigmaMode::Limit,
            burn_in: None,
            riesz: RieszOptions::default(),
            record_timing: true,
            save_points: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n_grid.is_empty() {
            return bad("n grid is empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n grid must be strictly increasing".into());
        }
        let min_n = if self.points == PointRegime::Riesz { 2 } else { 1 };
        if self.n_grid[0] < min_n {
            return bad(format!("n must be at least {min_n} for {} points", self.points));
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.kernel.alpha() <= MIN_ALPHA {
            return bad(format!(
                "kernel {} has smoothness {} but the Stein kernel needs more than {MIN_ALPHA}",
                self.kernel,
                self.kernel.alpha()
            ));
        }
        self.kernel.build()?;
        if let PointRegime::File(path) = &self.points {
            let available = crate::pointfile::read_points(path)?.len();
            let largest = *self.n_grid.last().expect("checked non-empty");
            if available < largest {
                return bad(format!("{} holds {available} points, the grid needs {largest}", path.display()));
            }
        }
        Ok(())
    }

    /// Seeds actually run: a deterministic regime uses only the first.
    pub fn effective_seeds(&self) -> &[u64] {
        if self.points.is_random() {
            &self.seeds
        } else {
            &self.seeds[..1]
        }
    }

    pub fn burn_in_for(&self, n: usize) -> usize {
        self.burn_in.unwrap_or(n / 10)
    }

    /// Every field, for the metadata line.
    pub fn describe(&self) -> String {
        let join = |v: &[String]| v.join(",");
        format!(
            "kernel={} target={} points={} n_grid={} seeds={} integrand={} sigma={} burnin={} riesz_s={} riesz_iters={}",
            self.kernel,
            self.target,
            self.points,
            join(&self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>()),
            join(&self.seeds.iter().map(|n| n.to_string()).collect::<Vec<_>>()),
            self.integrand.name(),
            self.sigma,
            self.burn_in.map_or("n/10".to_string(), |b| b.to_string()),
            self.riesz.s,
            self.riesz.iters,
        )
    }

    pub fn generate_points(
        &self,
        target: &dyn TargetDensity,
        n: usize,
        seed: u64,
    ) -> Result<Vec<UnitVector3>, ExperimentError> {
        let seed = RngSeed(seed);
        Ok(match &self.points {
            PointRegime::File(path) => {
                let mut pts = crate::pointfile::read_points(path)?;
                if pts.len() < n {
                    return Err(ExperimentError::Config(format!("{} holds fewer than {n} points", path.display())));
                }
                pts.truncate(n);
                pts
            }
            PointRegime::Fibonacci => fibonacci_points(n),
            PointRegime::Riesz => riesz_minimize(n, &self.riesz, seed).points,
            PointRegime::Iid => iid_uniform(n, seed),
            PointRegime::Mcmc => {
                let (pts, diag) = mh_chain(target, n, self.burn_in_for(n), seed);
                log::debug!("mh chain n = {n}: acceptance {:.3}", diag.acceptance_rate);
                pts
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordFlag {
    Ok,
    /// Factorized only after adding to the diagonal.
    Jittered,
    Failed(FailureKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Factorization,
    Degenerate,
    Duplicates,
    NonFinite,
    Other,
}

impl FailureKind {
    fn as_str(self) -> &'static str {
        match self {
            FailureKind::Factorization => "factorization",
            FailureKind::Degenerate => "degenerate",
            FailureKind::Duplicates => "duplicates",
            FailureKind::NonFinite => "nonfinite",
            FailureKind::Other => "other",
        }
    }
}

impl From<&SteinError> for FailureKind {
    fn from(e: &SteinError) -> Self {
        match e {
            SteinError::FactorizationFailure { .. } => FailureKind::Factorization,
            SteinError::DuplicatePoints { .. } => FailureKind::Duplicates,
            SteinError::NonFiniteEntries => FailureKind::NonFinite,
            _ => FailureKind::Other,
        }
    }
}

impl fmt::Display for RecordFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordFlag::Ok => f.write_str("ok"),
            RecordFlag::Jittered => f.write_str("jittered"),
            RecordFlag::Failed(k) => write!(f, "failed:{}", k.as_str()),
        }
    }
}

impl FromStr for RecordFlag {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ok" => RecordFlag::Ok,
            "jittered" => RecordFlag::Jittered,
            "failed:factorization" => RecordFlag::Failed(FailureKind::Factorization),
            "failed:degenerate" => RecordFlag::Failed(FailureKind::Degenerate),
            "failed:duplicates" => RecordFlag::Failed(FailureKind::Duplicates),
            "failed:nonfinite" => RecordFlag::Failed(FailureKind::NonFinite),
            "failed:other" => RecordFlag::Failed(FailureKind::Other),
            _ => return Err(ParseError::spec(s, "unknown flag")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub seed: u64,
    pub kernel: String,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub points: PointRegime,
    pub ksd: f64,
    pub estimate: f64,
    pub truth: f64,
    pub abs_error: f64,
    pub fill_distance: f64,
    pub jitter: f64,
    pub flag: RecordFlag,
    pub wall_ms: u64,
}

impl ConvergenceRecord {
    pub fn is_usable(&self) -> bool {
        self.flag == RecordFlag::Ok && self.ksd.is_finite() && self.ksd > 0.0
    }

    fn fields(&self) -> [String; 14] {
        [
            self.n.to_string(),
            self.seed.to_string(),
            self.kernel.clone(),
            self.alpha.to_string(),
            self.lambda.map_or(String::new(), |l| l.to_string()),
            self.points.to_string(),
            self.ksd.to_string(),
            self.estimate.to_string(),
            self.truth.to_string(),
            self.abs_error.to_string(),
            self.fill_distance.to_string(),
            self.jitter.to_string(),
            self.flag.to_string(),
            self.wall_ms.to_string(),
        ]
    }

    fn from_fields(rec: &csv::StringRecord, line: usize) -> Result<Self, ParseError> {
        if rec.len() != 14 {
            return Err(ParseError::line(line, format!("expected 14 fields, found {}", rec.len())));
        }
        let err = |what: &str| ParseError::line(line, format!("bad {what}"));
        let float = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| err(what));
        let abs_error = float(9, "abs_error")?;
        Ok(Self {
            n: rec[0].parse().map_err(|_| err("n"))?,
            seed: rec[1].parse().map_err(|_| err("seed"))?,
            kernel: rec[2].to_string(),
            alpha: float(3, "alpha")?,
            lambda: if rec[4].is_empty() { None } else { Some(float(4, "lambda")?) },
            points: rec[5].parse().map_err(|_| err("points"))?,
            ksd: float(6, "ksd")?,
            estimate: float(7, "estimate")?,
            truth: float(8, "truth")?,
            abs_error,
            fill_distance: float(10, "fill_distance")?,
            jitter: float(11, "jitter")?,
            flag: rec[12].parse().map_err(|_| err("flag"))?,
            wall_ms: rec[13].parse().map_err(|_| err("wall_ms"))?,
        })
    }
}

fn write_row<W: Write>(out: &mut csv::Writer<W>, record: &ConvergenceRecord) -> io::Result<()> {
    out.write_record(record.fields()).map_err(io::Error::other)?;
    out.flush()
}

/// Appends one row per record to a results file, flushing after each.
pub struct CsvSink {
    writer: csv::Writer<File>,
}

impl CsvSink {
    /// Creates `path`, writing the metadata line and the header.
    pub fn create(path: &Path, config: &ExperimentConfig) -> io::Result<Self> {
        let mut file = File::create(path)?;
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(
            file,
            "# geostein {} unix_time={stamp} {}",
            env!("CARGO_PKG_VERSION"),
            config.describe()
        )?;
        writeln!(file, "{CSV_HEADER}")?;
        file.flush()?;
        let writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(Self { writer })
    }

    pub fn append(&mut self, record: &ConvergenceRecord) -> io::Result<()> {
        write_row(&mut self.writer, record)
    }
}

/// Formats records as the CSV body (header included, metadata line not).
pub fn format_records(records: &[ConvergenceRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        w.write_record(r.fields()).expect("writing to memory");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii fields");
    format!("{CSV_HEADER}\n{body}")
}

/// Reads a results file: `#` lines are skipped, the header must match exactly.
pub fn parse_records(text: &str) -> Result<Vec<ConvergenceRecord>, ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((i, _)) => return Err(ParseError::line(i + 1, "header does not match the results schema")),
        None => return Err(ParseError::line(1, "missing header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(line.as_bytes());
        let rec = match reader.records().next() {
            Some(Ok(r)) => r,
            _ => return Err(ParseError::line(i + 1, "malformed CSV row")),
        };
        out.push(ConvergenceRecord::from_fields(&rec, i + 1)?);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<ConvergenceRecord>, ExperimentError> {
    Ok(parse_records(&std::fs::read_to_string(path)?)?)
}

/// One `(n, seed)` cell of a sweep.
pub fn run_cell(
    config: &ExperimentConfig,
    target: &dyn TargetDensity,
    truth: f64,
    n: usize,
    seed: u64,
) -> Result<ConvergenceRecord, ExperimentError> {
    let start = Instant::now();
    let profile = config.kernel.build()?;
    let points = config.generate_points(target, n, seed)?;
    if let Some(dir) = &config.save_points {
        crate::pointfile::write_points(&dir.join(format!("points_n{n}_seed{seed}.txt")), &points)?;
    }
    let fill_distance = estimate_fill_distance(&points, FILL_PROBES.max(n))
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mut record = ConvergenceRecord {
        n,
        seed,
        kernel: config.kernel.label().to_string(),
        alpha: config.kernel.alpha(),
        lambda: config.kernel.lambda(),
        points: config.points.clone(),
        ksd: f64::NAN,
        estimate: f64::NAN,
        truth,
        abs_error: f64::NAN,
        fill_distance,
        jitter: 0.0,
        flag: RecordFlag::Ok,
        wall_ms: 0,
    };

    let cfg = SteinOperatorConfig::new(target);
    let matrix = stein_kernel_entries(&cfg, profile.as_ref(), &points).and_then(SteinKernelMatrix::factorize);
    match matrix {
        Err(e) => {
            log::warn!("n = {n}, seed = {seed}: {e}");
            record.flag = RecordFlag::Failed(FailureKind::from(&e));
            if let SteinError::FactorizationFailure { jitter } = e {
                record.jitter = jitter;
            }
        }
        Ok(k) => {
            record.jitter = k.jitter_applied();
            if record.jitter > 0.0 {
                record.flag = RecordFlag::Jittered;
            }
            let f: Vec<f64> = points.iter().map(|x| config.integrand.eval(x)).collect();
            let solved = solve_weights(&k).and_then(|w| {
                let estimate = match config.sigma {
                    SigmaMode::Limit => integrate(&w, &f)?,
                    SigmaMode::Finite(s) => integrate_sigma(&k, s, &f)?,
                };
                Ok((w.ksd, estimate))
            });
            match solved {
                Ok((ksd, estimate)) => {
                    record.ksd = ksd;
                    record.estimate = estimate;
                    record.abs_error = (estimate - truth).abs();
                }
                Err(e) => {
                    log::warn!("n = {n}, seed = {seed}: {e}");
                    record.flag = RecordFlag::Failed(match e {
                        CubatureError::DegenerateSystem(_) => FailureKind::Degenerate,
                        _ => FailureKind::Other,
                    });
                }
            }
        }
    }
    if config.record_timing {
        record.wall_ms = start.elapsed().as_millis() as u64;
    }
    Ok(record)
}

/// Runs every `(n, seed)` cell in order, appending each row to `sink` as it
/// completes. Numerical failures become flagged rows; only configuration
/// and I/O problems abort.
pub fn run_convergence(
    config: &ExperimentConfig,
    mut sink: Option<&mut CsvSink>,
) -> Result<Vec<ConvergenceRecord>, ExperimentError> {
    config.validate()?;
    if let Some(dir) = &config.save_points {
        std::fs::create_dir_all(dir)?;
    }
    let target = config.target.build();
    let truth = config.integrand.truth(&target);
    let mut records = Vec::new();
    for &n in &config.n_grid {
        for &seed in config.effective_seeds() {
            let record = run_cell(config, &target, truth, n, seed)?;
            log::info!(
                "n = {n}, seed = {seed}: ksd = {:e}, abs error = {:e}, flag = {}",
                record.ksd,
                record.abs_error,
                record.flag
            );
            if let Some(s) = sink.as_deref_mut() {
                s.append(&record)?;
            }
            records.push(record);
        }
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Ordinary least squares of `log y` on `log x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 || pts.iter().all(|p| p.0 == pts[0].0) {
        return None;
    }
    let slope = least_squares_slope(&pts);
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(RateFit {
        slope,
        intercept,
        r_squared,
        points_used: pts.len(),
    })
}

/// Log-log slope of KSD against `n` over unflagged records with `n >= n_min`.
pub fn fit_rate(records: &[ConvergenceRecord], n_min: usize) -> Result<RateFit, ExperimentError> {
    const NEEDED: usize = 4;
    let usable: Vec<&ConvergenceRecord> = records.iter().filter(|r| r.n >= n_min && r.is_usable()).collect();
    let insufficient = || ExperimentError::InsufficientData {
        needed: NEEDED,
        found: usable.len(),
        n_min,
    };
    if usable.len() < NEEDED {
        return Err(insufficient());
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.ksd).collect();
    fit_power_law(&xs, &ys).ok_or_else(insufficient)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub count: usize,
    pub mean_ksd: f64,
    pub stderr_ksd: f64,
    pub mean_abs_error: f64,
    pub stderr_abs_error: f64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Mean and standard error across seeds for each `n`, skipping failed rows.
pub fn summarize(records: &[ConvergenceRecord]) -> Vec<Summary> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let rows: Vec<&ConvergenceRecord> = records
                .iter()
                .filter(|r| r.n == n && !matches!(r.flag, RecordFlag::Failed(_)))
                .collect();
            if rows.is_empty() {
                return None;
            }
            let (mean_ksd, stderr_ksd) = mean_stderr(&rows.iter().map(|r| r.ksd).collect::<Vec<_>>());
            let (mean_abs_error, stderr_abs_error) =
                mean_stderr(&rows.iter().map(|r| r.abs_error).collect::<Vec<_>>());
            Some(Summary {
                n,
                count: rows.len(),
                mean_ksd,
                stderr_ksd,
                mean_abs_error,
                stderr_abs_error,
            })
        })
        .collect()
}

/// A small log-log plot of mean KSD against `n`, with a dashed reference
/// line of slope `predicted_rate` through the first point.
pub fn render_svg(summary: &[Summary], predicted_rate: f64, title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 50.0;
    let pts: Vec<(f64, f64)> = summary
        .iter()
        .filter(|s| s.mean_ksd > 0.0 && s.mean_ksd.is_finite())
        .map(|s| ((s.n as f64).log10(), s.mean_ksd.log10()))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    ));
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, y0) = pts[0];
    let reference: Vec<(f64, f64)> = pts.iter().map(|&(x, _)| (x, y0 + predicted_rate * (x - x0))).collect();
    let all = pts.iter().chain(&reference);
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmax - xmin < 1e-9 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-9 {
        ymax = ymin + 1.0;
    }
    let sx = |x: f64| PAD + (x - xmin) / (xmax - xmin) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - ymin) / (ymax - ymin) * (H - 2.0 * PAD);
    let path = |v: &[(f64, f64)]| {
        v.iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    svg.push_str(&format!(
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    ));
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>\n",
        path(&reference)
    ));
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
        path(&pts)
    ));
    for &(x, y) in &pts {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n",
            sx(x),
            sy(y)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">log10 n</text>\n",
        W / 2.0,
        H - 15.0
    ));
    svg.push_str(&format!(
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 {})\">log10 KSD</text>\n",
        H / 2.0,
        H / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">[{xmin:.2}, {xmax:.2}] x [{ymin:.2}, {ymax:.2}]</text>\n",
        PAD,
        PAD - 5.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fits the interpolant to the integrand on the points of one cell and
/// writes `lat,lon,f,fhat` on a `n_lat x 2 n_lat` grid of cell centres.
pub fn dump_interpolant(
    config: &ExperimentConfig,
    n: usize,
    seed: u64,
    n_lat: usize,
    out: &mut dyn Write,
) -> Result<(), ExperimentError> {
    config.validate()?;
    let target = config.target.build();
    let profile = config.kernel.build()?;
    let points = config.generate_points(&target, n, seed)?;
    let cfg = SteinOperatorConfig::new(&target);
    let k = stein_kernel_entries(&cfg, profile.as_ref(), &points)
        .and_then(SteinKernelMatrix::factorize)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let f: Vec<f64> = points.iter().map(|x| config.integrand.eval(x)).collect();
    let interp = SteinInterpolant::fit(&k, &points, &f).map_err(|e| ExperimentError::Config(e.to_string()))?;
    writeln!(out, "lat,lon,f,fhat")?;
    let n_lon = 2 * n_lat;
    for i in 0..n_lat {
        let lat = -90.0 + 180.0 * (i as f64 + 0.5) / n_lat as f64;
        for j in 0..n_lon {
            let lon = -180.0 + 360.0 * (j as f64 + 0.5) / n_lon as f64;
            let (sl, cl) = lat.to_radians().sin_cos();
            let (so, co) = lon.to_radians().sin_cos();
            let x = UnitVector3::new([cl * co, cl * so, sl]).expect("unit by construction");
            let fhat = interp
                .evaluate(&cfg, profile.as_ref(), &x)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            writeln!(out, "{lat},{lon},{},{fhat}", config.integrand.eval(&x))?;
        }
    }
    Ok(())
}

/// `50,100,200`; strictly increasing positive integers.
pub fn parse_n_grid(s: &str) -> Result<Vec<usize>, ParseError> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| ParseError::spec(s, "expected comma-separated positive integers"))?;
    if v.is_empty() || v.contains(&0) {
        return Err(ParseError::spec(s, "sizes must be positive"));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ParseError::spec(s, "sizes must be strictly increasing"));
    }
    Ok(v)
}

/// `0..9` (inclusive), `3` or `1,4,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, ParseError> {
    const MAX_SEEDS: u64 = 100_000;
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| ParseError::spec(s, "bad range start"))?;
        let b: u64 = b.trim().parse().map_err(|_| ParseError::spec(s, "bad range end"))?;
        if b < a {
            return Err(ParseError::spec(s, "empty seed range"));
        }
        if b - a >= MAX_SEEDS {
            return Err(ParseError::spec(s, "seed range too long"));
        }
        return Ok((a..=b).collect());
    }
    let v: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ParseError::spec(s, "expected a seed, a list or a range a..b"))?;
    let mut sorted = v.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != v.len() {
        return Err(ParseError::spec(s, "duplicate seed"));
    }
    Ok(v)
}
