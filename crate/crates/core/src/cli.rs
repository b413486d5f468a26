//! Batch experiments: repeated runs, reference solutions and aggregate tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active_learning::{run_active_loop, AlConfig, LearningMode, RunReport, Termination};
use crate::benchmarks::Benchmark;
use crate::distribution::{epsilon_e, MomentSet, ReferenceCdf, ThreeFoldCdf};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, sample_pool, Stream};

/// Nodes of the per-run CDF table.
pub const CDF_TABLE_NODES: usize = 1001;

/// Range and spacing of the exact toy reference table.
const TOY_REFERENCE: (f64, f64, usize) = (-10.0, 10.0, 20_001);

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub modes: Vec<LearningMode>,
    /// Settings shared by every run; `mode` and `seed` are overridden per run.
    pub base: AlConfig,
    pub runs: usize,
    pub out_dir: PathBuf,
    pub reference: Option<PathBuf>,
    /// Monte Carlo sample count for a regenerated reference.
    pub regen_reference: Option<usize>,
}

impl ExperimentConfig {
    /// Preset range, tail and desk-scale pool for `benchmark`.
    pub fn for_benchmark(benchmark: Benchmark, out_dir: impl Into<PathBuf>) -> Self {
        let (lo, hi, tail) = benchmark.default_range();
        Self {
            benchmark,
            modes: vec![LearningMode::GaussianKernel],
            base: AlConfig { tail, pool_size: 200_000, ..AlConfig::with_range(lo, hi) },
            runs: 10,
            out_dir: out_dir.into(),
            reference: None,
            regen_reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::InvalidConfig("at least one run is required".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("no learning mode selected".into()));
        }
        if self.regen_reference == Some(0) {
            return Err(Error::InvalidConfig("reference sample count must be positive".into()));
        }
        for &mode in &self.modes {
            self.run_config(mode, 0).validate()?;
        }
        Ok(())
    }

    /// Seed of run `r`, shared by all modes.
    pub fn run_seed(&self, r: usize) -> u64 {
        derive_seed(self.base.seed, Stream::Run, r as u64)
    }

    pub fn run_config(&self, mode: LearningMode, r: usize) -> AlConfig {
        AlConfig { mode, seed: self.run_seed(r), ..self.base.clone() }
    }
}

/// Outcome of one successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub eps_e: f64,
    pub n_model_calls: usize,
    pub added_samples: usize,
    pub termination: Termination,
    pub final_w_star: f64,
    /// Moments of the mean-model fold.
    pub moments: Option<MomentSet>,
    pub report_file: String,
    pub cdf_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

/// Statistics of one learning mode over the runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mode: LearningMode,
    pub completed: usize,
    pub mean_eps_e: Option<f64>,
    /// Sample standard deviation, 0 for a single run.
    pub std_eps_e: Option<f64>,
    pub mean_model_calls: Option<f64>,
    pub moment_means: Option<MomentSet>,
    /// `|std / mean|` of each moment across runs.
    pub moment_cov: Option<MomentSet>,
    pub runs: Vec<RunSummary>,
    pub failed: Vec<FailedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub benchmark: String,
    pub master_seed: u64,
    pub runs: usize,
    pub reference: String,
    pub methods: Vec<MethodSummary>,
    pub partial_failure: bool,
}

impl AggregateReport {
    pub fn method(&self, mode: LearningMode) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text tables of errors, model calls and moments.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        let _ = writeln!(s, "benchmark {}  runs {}  seed {}  reference {}", self.benchmark, self.runs, self.master_seed, self.reference);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>6}{:>12}{:>12}{:>12}", "method", "ok", "E[eps_e]", "sd[eps_e]", "E[N_M]");
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{:<14}{:>6}{:>12}{:>12}{:>12}",
                m.mode.short_name(),
                m.completed,
                opt(m.mean_eps_e, 4),
                opt(m.std_eps_e, 4),
                opt(m.mean_model_calls, 2)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>22}{:>22}{:>22}{:>22}", "method", "mean (cov)", "std (cov)", "skewness (cov)", "kurtosis (cov)");
        for m in &self.methods {
            let cell = |f: fn(&MomentSet) -> f64| match (&m.moment_means, &m.moment_cov) {
                (Some(a), Some(c)) => format!("{:.4} ({:.3})", f(a), f(c)),
                _ => "-".to_string(),
            };
            let _ = writeln!(
                s,
                "{:<14}{:>22}{:>22}{:>22}{:>22}",
                m.mode.short_name(),
                cell(|v| v.mean),
                cell(|v| v.std),
                cell(|v| v.skewness),
                cell(|v| v.kurtosis)
            );
        }
        if self.partial_failure {
            let _ = writeln!(s);
            let _ = writeln!(s, "some runs failed; statistics cover completed runs only");
        }
        s
    }
}

/// File name of the cached Monte Carlo reference.
pub fn reference_file_name(benchmark: Benchmark, samples: usize, seed: u64) -> String {
    format!("reference_{}_n{samples}_s{seed}.csv", benchmark.name())
}

/// Builds a reference CDF and writes it to `path`. The toy problem uses its
/// exact distribution and ignores `samples`; the others use crude Monte Carlo.
pub fn generate_reference(benchmark: Benchmark, samples: usize, seed: u64, path: &Path) -> Result<ReferenceCdf> {
    let reference = match benchmark.exact_cdf() {
        Some(f) => {
            let (lo, hi, rows) = TOY_REFERENCE;
            ReferenceCdf::from_function(&f, lo, hi, rows)?
        }
        None => {
            if samples == 0 {
                return Err(Error::InvalidConfig("reference sample count must be positive".into()));
            }
            let spec = benchmark.input_spec();
            let pool = sample_pool(&spec, samples, derive_seed(seed, Stream::Reference, 0))?;
            let model = benchmark.model();
            let values = pool
                .flat()
                .par_chunks(spec.dimension())
                .map(|x| model.evaluate(x))
                .collect::<Result<Vec<f64>>>()?;
            ReferenceCdf::from_samples(values)?
        }
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    reference.write_csv(path)?;
    Ok(reference)
}

/// Loads the reference named by the config, generating and caching it when
/// asked to or when an exact solution exists.
pub fn resolve_reference(config: &ExperimentConfig) -> Result<(ReferenceCdf, PathBuf)> {
    let b = config.benchmark;
    let path = match (&config.reference, config.regen_reference) {
        (Some(p), _) => p.clone(),
        (None, Some(n)) => config.out_dir.join(reference_file_name(b, n, config.base.seed)),
        (None, None) if b.exact_cdf().is_some() => config.out_dir.join(format!("reference_{}_exact.csv", b.name())),
        (None, None) => {
            return Err(Error::ReferenceUnavailable(format!(
                "benchmark '{}' has no exact solution; pass a reference file or a sample count to generate one",
                b.name()
            )))
        }
    };
    if path.exists() {
        return Ok((ReferenceCdf::read_csv(&path)?, path));
    }
    let generate = config.regen_reference.is_some() || b.exact_cdf().is_some();
    if !generate {
        return Err(Error::ReferenceUnavailable(format!("{} does not exist", path.display())));
    }
    log::info!("generating reference {}", path.display());
    let reference = generate_reference(b, config.regen_reference.unwrap_or(0), config.base.seed, &path)?;
    Ok((reference, path))
}

/// Writes the three folds on `nodes` evenly spaced points of `[lower, upper]`.
pub fn write_cdf_table(cdf: &ThreeFoldCdf, lower: f64, upper: f64, nodes: usize, path: &Path) -> Result<()> {
    if nodes < 2 || !(lower < upper) {
        return Err(Error::Domain("need at least two nodes on a nonempty range".into()));
    }
    let h = (upper - lower) / (nodes - 1) as f64;
    let mut s = String::with_capacity(96 * nodes);
    s.push_str("y,F_minus,F_mid,F_plus\n");
    for i in 0..nodes {
        let y = if i == nodes - 1 { upper } else { lower + i as f64 * h };
        let f = cdf.eval(y);
        let _ = writeln!(s, "{y:.16e},{:.16e},{:.16e},{:.16e}", f.minus, f.mid, f.plus);
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn run_one(
    config: &ExperimentConfig,
    mode: LearningMode,
    r: usize,
    reference: &ReferenceCdf,
) -> Result<RunSummary> {
    let b = config.benchmark;
    let cfg = config.run_config(mode, r);
    let model = b.model();
    let report: RunReport = run_active_loop(model.as_ref(), &b.input_spec(), &cfg)?;
    let cdf = report.final_cdf.as_ref().ok_or_else(|| Error::DegenerateSample("run produced no estimate".into()))?;
    let eps = epsilon_e(cdf.mid(), reference, cfg.y_min, cfg.y_max, cfg.tail, reference.resolution())?;

    let stem = format!("run_{}_{r:03}", mode.short_name());
    let report_file = format!("{stem}.json");
    let cdf_file = format!("{stem}_cdf.csv");
    std::fs::write(config.out_dir.join(&report_file), report.to_json()?)?;
    write_cdf_table(cdf, cfg.y_min, cfg.y_max, CDF_TABLE_NODES, &config.out_dir.join(&cdf_file))?;

    Ok(RunSummary {
        run: r,
        seed: cfg.seed,
        eps_e: eps,
        n_model_calls: report.n_model_calls,
        added_samples: report.added_samples(),
        termination: report.termination,
        final_w_star: report.final_w_star,
        moments: report.final_moments.map(|m| m.mid),
        report_file,
        cdf_file,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(mode: LearningMode, outcomes: Vec<std::result::Result<RunSummary, FailedRun>>) -> MethodSummary {
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => runs.push(s),
            Err(f) => failed.push(f),
        }
    }
    let eps: Vec<f64> = runs.iter().map(|s| s.eps_e).collect();
    let calls: Vec<f64> = runs.iter().map(|s| s.n_model_calls as f64).collect();
    let (mean_eps_e, std_eps_e, mean_model_calls) = if runs.is_empty() {
        (None, None, None)
    } else {
        let (m, s) = mean_std(&eps);
        (Some(m), Some(s), Some(mean_std(&calls).0))
    };
    let moments: Vec<MomentSet> = runs.iter().filter_map(|s| s.moments).collect();
    let (moment_means, moment_cov) = if moments.is_empty() {
        (None, None)
    } else {
        let stat = |f: fn(&MomentSet) -> f64| {
            let v: Vec<f64> = moments.iter().map(f).collect();
            let (m, s) = mean_std(&v);
            (m, (s / m).abs())
        };
        let (a, b, c, d) = (stat(|m| m.mean), stat(|m| m.std), stat(|m| m.skewness), stat(|m| m.kurtosis));
        (
            Some(MomentSet { mean: a.0, std: b.0, skewness: c.0, kurtosis: d.0 }),
            Some(MomentSet { mean: a.1, std: b.1, skewness: c.1, kurtosis: d.1 }),
        )
    };
    MethodSummary { mode, completed: runs.len(), mean_eps_e, std_eps_e, mean_model_calls, moment_means, moment_cov, runs, failed }
}

/// Runs every mode `config.runs` times, writes per-run reports and CDF
/// tables plus `aggregate.json` and `table.txt` into the output directory.
///
/// A failing run is recorded and excluded from the statistics; the report
/// is then flagged as partial.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let (reference, reference_path) = resolve_reference(config)?;

    let mut methods = Vec::with_capacity(config.modes.len());
    for &mode in &config.modes {
        let outcomes: Vec<_> = (0..config.runs)
            .into_par_iter()
            .map(|r| {
                run_one(config, mode, r, &reference).map_err(|e| {
                    log::error!("{} run {r} failed: {e}", mode.short_name());
                    FailedRun { run: r, seed: config.run_seed(r), error: e.to_string() }
                })
            })
            .collect();
        methods.push(summarize(mode, outcomes));
    }

    let report = AggregateReport {
        benchmark: config.benchmark.name().to_string(),
        master_seed: config.base.seed,
        runs: config.runs,
        reference: reference_path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        partial_failure: methods.iter().any(|m| !m.failed.is_empty()),
        methods,
    };
    std::fs::write(config.out_dir.join("aggregate.json"), report.to_json()?)?;
    std::fs::write(config.out_dir.join("table.txt"), report.table())?;
    Ok(report)
}
