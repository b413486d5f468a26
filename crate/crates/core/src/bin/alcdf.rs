use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use alcdf::active_learning::{AlConfig, LearningMode, TailMode};
use alcdf::benchmarks::Benchmark;
use alcdf::cli::{run_experiment, ExperimentConfig};
use alcdf::Error;

/// Active-learning Gaussian-process estimation of output CDF/CCDF on the
/// built-in benchmark problems.
#[derive(Debug, Parser)]
#[command(name = "alcdf", version)]
struct Args {
    /// toy, ishigami or bouc_wen
    #[arg(long, default_value = "toy")]
    benchmark: Benchmark,

    /// Comma-separated learning modes: gaussian, dirac, mov, conventional
    #[arg(long, value_delimiter = ',', default_value = "gaussian")]
    mode: Vec<LearningMode>,

    /// both, cdf or ccdf; defaults to the benchmark preset
    #[arg(long)]
    tail: Option<TailMode>,

    #[arg(long, allow_hyphen_values = true)]
    ymin: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    ymax: Option<f64>,

    #[arg(long, default_value_t = 0.2)]
    eps_bar: f64,

    #[arg(long, default_value_t = 2.0)]
    kbar: f64,

    #[arg(long, default_value_t = 1_000_000)]
    pool_size: usize,

    #[arg(long, default_value_t = 12)]
    init_size: usize,

    #[arg(long, default_value_t = 10)]
    runs: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Maximum number of added samples per run
    #[arg(long, default_value_t = 500)]
    budget: usize,

    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Reference CDF file (`y,F` CSV)
    #[arg(long)]
    reference: Option<PathBuf>,

    /// Generate a Monte Carlo reference with this many samples
    #[arg(long, value_name = "N_SAMPLES")]
    regen_reference: Option<usize>,
}

impl Args {
    fn experiment(&self) -> ExperimentConfig {
        let (lo, hi, tail) = self.benchmark.default_range();
        let base = AlConfig {
            y_min: self.ymin.unwrap_or(lo),
            y_max: self.ymax.unwrap_or(hi),
            eps_bar: self.eps_bar,
            kbar: self.kbar,
            pool_size: self.pool_size,
            init_size: self.init_size,
            tail: self.tail.unwrap_or(tail),
            seed: self.seed,
            budget: self.budget,
            ..AlConfig::default()
        };
        ExperimentConfig {
            benchmark: self.benchmark,
            modes: self.mode.clone(),
            base,
            runs: self.runs,
            out_dir: self.out.clone(),
            reference: self.reference.clone(),
            regen_reference: self.regen_reference,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let config = args.experiment();
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run_experiment(&config) {
        Ok(report) => {
            print!("{}", report.table());
            if report.partial_failure {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::InvalidConfig(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
