use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geostein::cubature::SigmaEstimatorConfig;
use geostein::error::ExperimentError;
use geostein::experiment::{
    default_integrand, dump_interpolant, fit_power_law, fit_rate, parse_n_grid, parse_seeds, read_records,
    render_svg, run_convergence, summarize, CsvSink, ExperimentConfig, PointRegime, RecordFlag, SigmaMode,
};
use geostein::kernels::KernelSpec;
use geostein::targets::TargetSpec;

// aliases keep clap from treating these as repeated single values
type SizeList = Vec<usize>;
type SeedList = Vec<u64>;

/// Stein-kernel cubature on the sphere.
#[derive(Parser)]
#[command(name = "geostein", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence sweep and write one CSV row per (n, seed).
    Run(Box<RunArgs>),
    /// Fit the log-log KSD slope of a results file.
    Fit(FitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// k1:alpha=3.5, k2:alpha=5.5,lambda=1 or k3:j=2,lambda=2
    #[arg(long)]
    kernel: KernelSpec,
    #[arg(long, default_value = "vmf:0,0,2")]
    target: TargetSpec,
    /// fibonacci, riesz, iid, mcmc or file:<path>
    #[arg(long, default_value = "fibonacci")]
    points: PointRegime,
    #[arg(long, default_value = "50,100,200,400,800", value_parser = parse_n_grid)]
    n_grid: SizeList,
    /// a..b (inclusive), a single seed or a comma list
    #[arg(long, default_value = "0", value_parser = parse_seeds)]
    seeds: SeedList,
    /// rosenbrock, linear or constant
    #[arg(long, default_value = "rosenbrock")]
    integrand: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write a log-log plot of mean KSD against n.
    #[arg(long)]
    emit_svg: Option<PathBuf>,
    /// Use the finite-sigma estimator instead of the sigma -> infinity limit.
    #[arg(long)]
    sigma: Option<f64>,
    /// Burn-in for mcmc points (default n/10).
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long, default_value_t = 500)]
    riesz_iters: usize,
    /// Write f and its interpolant on a lat-long grid for the largest n and first seed.
    #[arg(long)]
    dump_interpolant: Option<PathBuf>,
    /// Directory for one point file per cell.
    #[arg(long)]
    save_points: Option<PathBuf>,
    /// Write 0 for wall_ms so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct FitArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    n_min: usize,
}

enum Failure {
    Config(String),
    AllCellsFailed,
    Other(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(_) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{}: {e}", path.display()))
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::new(args.kernel, args.target, args.points.clone(), args.n_grid.clone());
    cfg.seeds = args.seeds.clone();
    cfg.integrand = default_integrand(&args.integrand, &args.target)?;
    if let Some(s) = args.sigma {
        let s = SigmaEstimatorConfig::new(s).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.sigma = SigmaMode::Finite(s);
    }
    cfg.burn_in = args.burnin;
    if args.riesz_iters == 0 {
        return Err(Failure::Config("--riesz-iters must be positive".into()));
    }
    cfg.riesz.iters = args.riesz_iters;
    cfg.record_timing = !args.no_timing;
    cfg.save_points = args.save_points.clone();
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = build_config(&args)?;
    let mut sink = CsvSink::create(&args.out, &cfg).map_err(io_err(&args.out))?;
    let records = run_convergence(&cfg, Some(&mut sink))?;

    let summary = summarize(&records);
    for s in &summary {
        println!(
            "n = {:5}  ksd = {:.4e} (se {:.1e})  |error| = {:.4e}  cells = {}",
            s.n, s.mean_ksd, s.stderr_ksd, s.mean_abs_error, s.count
        );
    }
    let ns: Vec<f64> = summary.iter().map(|s| s.n as f64).collect();
    let ksd: Vec<f64> = summary.iter().map(|s| s.mean_ksd).collect();
    if let Some(fit) = fit_power_law(&ns, &ksd) {
        println!(
            "slope {:.3} (predicted {:.3}), r^2 = {:.4}",
            fit.slope,
            cfg.kernel.predicted_rate(),
            fit.r_squared
        );
    }

    if let Some(path) = &args.emit_svg {
        let title = format!("{} {} {}", cfg.kernel, cfg.target, cfg.points);
        std::fs::write(path, render_svg(&summary, cfg.kernel.predicted_rate(), &title)).map_err(io_err(path))?;
    }
    if let Some(path) = &args.dump_interpolant {
        let n = *cfg.n_grid.last().expect("validated non-empty");
        let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
        dump_interpolant(&cfg, n, cfg.seeds[0], 36, &mut out)?;
    }

    if records.iter().all(|r| matches!(r.flag, RecordFlag::Failed(_))) {
        return Err(Failure::AllCellsFailed);
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    let records = read_records(&args.input)?;
    let f = fit_rate(&records, args.n_min)?;
    println!(
        "slope {:.4}  intercept {:.4}  r^2 {:.4}  records {}",
        f.slope, f.intercept, f.r_squared, f.points_used
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(*a),
        Command::Fit(a) => fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::AllCellsFailed) => {
            eprintln!("error: every cell of the sweep failed");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
