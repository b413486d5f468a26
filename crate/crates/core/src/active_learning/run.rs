//! The active-learning loop, the threshold-by-threshold baseline and the
//! run report.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::benchmarks::{CountingModel, ModelFunction};
use crate::distribution::{FoldMoments, ThreeFoldCdf};
use crate::error::{Error, Result};
use crate::gp::{BatchPrediction, DesignSet, FitOptions, GpSurrogate, ThreeFoldOutputs};
use crate::sampling::{derive_seed, initial_design, sample_pool, CandidatePool, RandomInputSpec, Stream};

use super::config::{AlConfig, LearningMode};
use super::error_measure::{select_threshold, stopping_check, w_star, ErrorProfile, Kernel, PoolBandwidth, WStar};
use super::learning::{select_candidate, select_candidate_mov, select_candidate_unconstrained, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    BudgetExhausted,
}

/// One added training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Integrated error before the sample was added.
    pub w_star: f64,
    /// Output threshold targeted, if the mode uses one.
    pub threshold: Option<f64>,
    pub candidate: Vec<f64>,
    pub model_value: f64,
    /// Sample moments of each fold before the sample was added.
    pub moments: Option<FoldMoments>,
    pub band_fallback: bool,
    #[serde(skip)]
    pub duration: Duration,
}

/// Training inputs and outputs at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl From<&DesignSet> for DesignRecord {
    fn from(d: &DesignSet) -> Self {
        Self { inputs: d.inputs().map(<[f64]>::to_vec).collect(), outputs: d.outputs().to_vec() }
    }
}

/// Complete, replayable record of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: AlConfig,
    pub model: String,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_w_star: f64,
    pub final_moments: Option<FoldMoments>,
    pub n_model_calls: usize,
    pub design: DesignRecord,
    #[serde(skip)]
    pub final_cdf: Option<ThreeFoldCdf>,
}

impl RunReport {
    pub fn added_samples(&self) -> usize {
        self.iterations.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// State of the loop at the start of an iteration, handed to observers.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub surrogate: &'a GpSurrogate,
    pub pool: &'a CandidatePool,
    pub predictions: &'a BatchPrediction,
    pub cdf: &'a ThreeFoldCdf,
    pub w_star: f64,
}

/// Fitted model, fresh pool and derived CDFs for one iteration.
struct Snapshot {
    surrogate: GpSurrogate,
    pool: CandidatePool,
    pred: BatchPrediction,
    cdf: ThreeFoldCdf,
    profile: ErrorProfile,
    w_star: f64,
}

fn snapshot(
    design: &DesignSet,
    spec: &RandomInputSpec,
    config: &AlConfig,
    generation: usize,
    warm: Option<Vec<f64>>,
) -> Result<Snapshot> {
    let opts = FitOptions {
        seed: derive_seed(config.seed, Stream::Optimizer, generation as u64),
        warm_start: warm,
        ..FitOptions::default()
    };
    let surrogate = GpSurrogate::fit(design, &opts)?;
    let pool = sample_pool(spec, config.pool_size, derive_seed(config.seed, Stream::Pool, generation as u64))?
        .with_generation(generation);
    let pred = surrogate.predict_flat(pool.flat())?;
    let cdf = ThreeFoldCdf::from_outputs(ThreeFoldOutputs::from_batch(&pred, config.kbar))?;
    let profile = ErrorProfile::new(&WStar::new(&cdf, config.tail), config.y_min, config.y_max);
    let w_star = profile.integral();
    Ok(Snapshot { surrogate, pool, pred, cdf, profile, w_star })
}

fn initial_training_set(model: &dyn ModelFunction, spec: &RandomInputSpec, config: &AlConfig) -> Result<DesignSet> {
    if model.dimension() != spec.dimension() {
        return Err(Error::DimensionMismatch { expected: spec.dimension(), got: model.dimension() });
    }
    let points = initial_design(spec, config.init_size, derive_seed(config.seed, Stream::InitialDesign, 0))?;
    let mut design = DesignSet::new(spec.dimension());
    for x in &points {
        let y = model.evaluate(x)?;
        design.push(x, y)?;
    }
    Ok(design)
}

/// Picks a pool point with `choose`, skipping candidates that duplicate a
/// training input.
fn choose_fresh<F>(design: &DesignSet, pool: &CandidatePool, mut choose: F) -> Result<Selection>
where
    F: FnMut(&[usize]) -> Result<Selection>,
{
    let mut skip = Vec::new();
    loop {
        let sel = choose(&skip)?;
        if !design.is_near_duplicate(pool.point(sel.index)) {
            return Ok(sel);
        }
        skip.push(sel.index);
        if skip.len() == pool.len() {
            return Err(Error::EmptyPool);
        }
    }
}

/// Runs the global strategy selected by `config.mode`; the conventional
/// mode is dispatched to [`run_conventional_baseline`].
pub fn run_active_loop(model: &dyn ModelFunction, spec: &RandomInputSpec, config: &AlConfig) -> Result<RunReport> {
    run_active_loop_observed(model, spec, config, |_| {})
}

/// [`run_active_loop`] with a callback invoked once per fitted iteration.
pub fn run_active_loop_observed<O>(
    model: &dyn ModelFunction,
    spec: &RandomInputSpec,
    config: &AlConfig,
    mut observe: O,
) -> Result<RunReport>
where
    O: FnMut(&IterationView<'_>),
{
    config.validate()?;
    if config.mode == LearningMode::Conventional {
        return conventional(model, spec, config, &mut observe);
    }
    let counter = CountingModel::new(model);
    let mut design = initial_training_set(&counter, spec, config)?;
    let mut records = Vec::new();
    let mut warm = None;

    let (termination, last) = loop {
        let started = Instant::now();
        let t = records.len();
        let snap = snapshot(&design, spec, config, t, warm.take())?;
        observe(&IterationView {
            iteration: t,
            surrogate: &snap.surrogate,
            pool: &snap.pool,
            predictions: &snap.pred,
            cdf: &snap.cdf,
            w_star: snap.w_star,
        });
        if stopping_check(snap.w_star, config) {
            break (Termination::Converged, snap);
        }
        if t >= config.budget {
            break (Termination::BudgetExhausted, snap);
        }

        let scale = snap.surrogate.output_scale();
        let wfun = WStar::new(&snap.cdf, config.tail);
        let (threshold, sel) = match config.mode {
            LearningMode::MaxOfVariance => {
                (None, choose_fresh(&design, &snap.pool, |skip| select_candidate_mov(&snap.pred, config, skip))?)
            }
            mode => {
                let bandwidth;
                let kernel = if mode == LearningMode::GaussianKernel {
                    bandwidth = PoolBandwidth::new(&snap.pred)?;
                    Kernel::Gaussian(&bandwidth)
                } else {
                    Kernel::Dirac
                };
                let y_star = select_threshold(&wfun, &snap.profile, kernel);
                let sel = choose_fresh(&design, &snap.pool, |skip| select_candidate(&snap.pred, y_star, config, scale, skip))?;
                (Some(y_star), sel)
            }
        };

        let x = snap.pool.point(sel.index).to_vec();
        let y = counter.evaluate(&x)?;
        design.push(&x, y)?;
        warm = Some(snap.surrogate.log_length_scales().to_vec());
        records.push(IterationRecord {
            iteration: t,
            w_star: snap.w_star,
            threshold,
            candidate: x,
            model_value: y,
            moments: snap.cdf.fold_moments().ok(),
            band_fallback: sel.band_fallback,
            duration: started.elapsed(),
        });
    };

    Ok(RunReport {
        config: config.clone(),
        model: model.name().to_string(),
        termination,
        final_w_star: last.w_star,
        final_moments: last.cdf.fold_moments().ok(),
        n_model_calls: counter.calls(),
        design: DesignRecord::from(&design),
        final_cdf: Some(last.cdf),
        iterations: records,
    })
}

/// Threshold order for the baseline: the middle threshold first, then
/// alternating one step below and above until both ends are reached.
pub fn conventional_thresholds(y_min: f64, y_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (y_min + y_max)];
    }
    let h = (y_max - y_min) / (count - 1) as f64;
    let mid = (count - 1) / 2;
    let mut order = vec![mid];
    for step in 1..count {
        if mid >= step {
            order.push(mid - step);
        }
        if mid + step < count {
            order.push(mid + step);
        }
    }
    order.into_iter().map(|i| y_min + i as f64 * h).collect()
}

/// Threshold-by-threshold baseline: at each threshold of the sweep, add
/// samples with the fixed-threshold score until `w*(y) < eps_bar`, reusing
/// the design across thresholds.
pub fn run_conventional_baseline(model: &dyn ModelFunction, spec: &RandomInputSpec, config: &AlConfig) -> Result<RunReport> {
    let config = AlConfig { mode: LearningMode::Conventional, ..config.clone() };
    run_active_loop(model, spec, &config)
}

fn conventional<O>(model: &dyn ModelFunction, spec: &RandomInputSpec, config: &AlConfig, observe: &mut O) -> Result<RunReport>
where
    O: FnMut(&IterationView<'_>),
{
    let counter = CountingModel::new(model);
    let mut design = initial_training_set(&counter, spec, config)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut generation = 0usize;
    let view = |snap: &Snapshot, t: usize, observe: &mut O| {
        observe(&IterationView {
            iteration: t,
            surrogate: &snap.surrogate,
            pool: &snap.pool,
            predictions: &snap.pred,
            cdf: &snap.cdf,
            w_star: snap.w_star,
        })
    };
    let mut snap = snapshot(&design, spec, config, generation, None)?;
    view(&snap, 0, observe);
    let mut termination = Termination::Converged;

    'sweep: for y in conventional_thresholds(config.y_min, config.y_max, config.conventional_thresholds) {
        loop {
            let floor = 1.0 / snap.cdf.len() as f64;
            if w_star(&snap.cdf, y, config.tail, floor) < config.eps_bar {
                break;
            }
            if records.len() >= config.budget {
                termination = Termination::BudgetExhausted;
                break 'sweep;
            }
            let started = Instant::now();
            let scale = snap.surrogate.output_scale();
            let sel = choose_fresh(&design, &snap.pool, |skip| select_candidate_unconstrained(&snap.pred, y, scale, skip))?;
            let x = snap.pool.point(sel.index).to_vec();
            let value = counter.evaluate(&x)?;
            design.push(&x, value)?;
            records.push(IterationRecord {
                iteration: records.len(),
                w_star: snap.w_star,
                threshold: Some(y),
                candidate: x,
                model_value: value,
                moments: snap.cdf.fold_moments().ok(),
                band_fallback: false,
                duration: started.elapsed(),
            });
            generation += 1;
            let warm = Some(snap.surrogate.log_length_scales().to_vec());
            snap = snapshot(&design, spec, config, generation, warm)?;
            view(&snap, records.len(), observe);
        }
    }

    Ok(RunReport {
        config: config.clone(),
        model: model.name().to_string(),
        termination,
        final_w_star: snap.w_star,
        final_moments: snap.cdf.fold_moments().ok(),
        n_model_calls: counter.calls(),
        design: DesignRecord::from(&design),
        final_cdf: Some(snap.cdf),
        iterations: records,
    })
}
