//! Ordinary-kriging Gaussian process surrogate.
//!
//! Anisotropic squared-exponential correlation with a constant trend.
//! Inputs and outputs are standardized on the design before fitting; the
//! trend and process variance are profiled out of the likelihood in closed
//! form (generalized least squares), leaving only the length-scales to be
//! optimized numerically.

mod optimize;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optimize::lbfgs_minimize;

/// Training inputs and the corresponding true-model outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSet {
    dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

/// Standardized distance below which two inputs count as the same point.
pub const DUPLICATE_TOLERANCE: f64 = 1e-10;

impl DesignSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn from_points(inputs: &[Vec<f64>], outputs: &[f64]) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::InvalidDesign(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let dim = inputs.first().map(Vec::len).ok_or_else(|| Error::InvalidDesign("empty design".into()))?;
        let mut design = Self::new(dim);
        for (x, &y) in inputs.iter().zip(outputs) {
            design.push(x, y)?;
        }
        Ok(design)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Per-dimension scale used for the duplicate guard (population std,
    /// or 1 when the design does not spread along that axis yet).
    fn input_scales(&self) -> Vec<f64> {
        column_stats(&self.inputs, self.dim).1
    }

    /// Smallest standardized Euclidean distance from `x` to the design.
    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        let scales = self.input_scales();
        self.inputs()
            .map(|p| {
                p.iter()
                    .zip(x)
                    .zip(&scales)
                    .map(|((a, b), s)| ((a - b) / s).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_near_duplicate(&self, x: &[f64]) -> bool {
        self.nearest_distance(x) <= DUPLICATE_TOLERANCE
    }

    /// Appends a training pair; near-duplicates of existing inputs are rejected.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("non-finite training pair".into()));
        }
        if self.is_near_duplicate(x) {
            return Err(Error::InvalidDesign(format!("duplicate training input {x:?}")));
        }
        self.inputs.extend_from_slice(x);
        self.outputs.push(y);
        Ok(())
    }
}

fn column_stats(flat: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (flat.len() / dim.max(1)) as f64;
    let mut mean = vec![0.0; dim];
    let mut scale = vec![1.0; dim];
    if n == 0.0 {
        return (mean, scale);
    }
    for row in flat.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for k in 0..dim {
        let var = flat.chunks_exact(dim).map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            scale[k] = var.sqrt();
        }
    }
    (mean, scale)
}

/// Settings for hyperparameter estimation.
/// Relative likelihood difference below which multi-start optima tie.
const START_TIE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Log length-scales (standardized units) from a previous fit.
    pub warm_start: Option<Vec<f64>>,
    pub length_scale_bounds: (f64, f64),
    pub variance_bounds: (f64, f64),
    pub initial_nugget: f64,
    pub max_nugget: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 5,
            seed: 0,
            warm_start: None,
            length_scale_bounds: (1e-2, 1e2),
            variance_bounds: (1e-6, 1e6),
            initial_nugget: 1e-10,
            max_nugget: 1e-4,
            max_iterations: 100,
        }
    }
}

/// Predictive mean and standard deviation at one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// Column-wise predictions over a batch of points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchPrediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BatchPrediction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// The three metamodels `mean - k*std`, `mean`, `mean + k*std`.
///
/// The naming follows the CDF they induce: the `plus` outputs are the
/// smallest and therefore give the largest CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeFoldOutputs {
    pub plus: Vec<f64>,
    pub mid: Vec<f64>,
    pub minus: Vec<f64>,
}

impl ThreeFoldOutputs {
    pub fn from_batch(batch: &BatchPrediction, kbar: f64) -> Self {
        let plus = batch.mean.iter().zip(&batch.std).map(|(m, s)| m - kbar * s).collect();
        let minus = batch.mean.iter().zip(&batch.std).map(|(m, s)| m + kbar * s).collect();
        Self { plus, mid: batch.mean.clone(), minus }
    }
}

/// A fitted Gaussian process surrogate. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    design: DesignSet,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    log_length_scales: Vec<f64>,
    /// Standardized training inputs divided by the length-scales, row-major.
    scaled_train: Vec<f64>,
    trend: f64,
    process_variance: f64,
    nugget: f64,
    chol_inv: DMatrix<f64>,
    weights: DVector<f64>,
    log_likelihood: f64,
    degenerate: bool,
}

/// Profiled likelihood at one set of log length-scales.
struct LikelihoodEval {
    value: f64,
    gradient: Vec<f64>,
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
    corr: DMatrix<f64>,
}

fn correlation_matrix(x: &[f64], dim: usize, log_ls: &[f64]) -> DMatrix<f64> {
    let d = x.len() / dim;
    let inv_ls: Vec<f64> = log_ls.iter().map(|t| (-t).exp()).collect();
    let mut r = DMatrix::<f64>::identity(d, d);
    for i in 0..d {
        let xi = &x[i * dim..(i + 1) * dim];
        for j in 0..i {
            let xj = &x[j * dim..(j + 1) * dim];
            let mut s = 0.0;
            for k in 0..dim {
                let u = (xi[k] - xj[k]) * inv_ls[k];
                s += u * u;
            }
            let v = (-0.5 * s).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky of `corr + nugget*I`, escalating the nugget tenfold on failure.
fn factorize(corr: DMatrix<f64>, initial: f64, max: f64) -> Option<Factorized> {
    let d = corr.nrows();
    let mut nugget = initial;
    loop {
        let mut m = corr.clone();
        for i in 0..d {
            m[(i, i)] += nugget;
        }
        if let Some(chol) = m.cholesky() {
            return Some(Factorized { chol, nugget, corr });
        }
        if nugget >= max {
            return None;
        }
        nugget = (nugget * 10.0).min(max);
    }
}

struct Profile {
    trend: f64,
    variance: f64,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

fn profile(f: &Factorized, y: &DVector<f64>, var_bounds: (f64, f64)) -> Profile {
    let d = y.len();
    let ones = DVector::from_element(d, 1.0);
    let rinv_one = f.chol.solve(&ones);
    let rinv_y = f.chol.solve(y);
    let trend = ones.dot(&rinv_y) / ones.dot(&rinv_one);
    let resid = y - DVector::from_element(d, trend);
    let alpha = &rinv_y - &rinv_one * trend;
    let quad = resid.dot(&alpha).max(0.0);
    let variance = (quad / d as f64).clamp(var_bounds.0, var_bounds.1);
    let log_det: f64 = 2.0 * f.chol.l_dirty().diagonal().iter().take(d).map(|v| v.ln()).sum::<f64>();
    let log_likelihood = -0.5
        * (d as f64 * variance.ln() + log_det + quad / variance + d as f64 * (2.0 * std::f64::consts::PI).ln());
    Profile { trend, variance, alpha, log_likelihood }
}

struct Problem<'a> {
    x: &'a [f64],
    y: DVector<f64>,
    dim: usize,
    opts: &'a FitOptions,
}

impl Problem<'_> {
    fn evaluate(&self, log_ls: &[f64]) -> Option<LikelihoodEval> {
        let corr = correlation_matrix(self.x, self.dim, log_ls);
        let f = factorize(corr, self.opts.initial_nugget, self.opts.max_nugget)?;
        let p = profile(&f, &self.y, self.opts.variance_bounds);
        if !p.log_likelihood.is_finite() {
            return None;
        }
        let rinv = f.chol.inverse();
        let d = self.y.len();
        let inv_ls2: Vec<f64> = log_ls.iter().map(|t| (-2.0 * t).exp()).collect();
        let mut gradient = vec![0.0; self.dim];
        for i in 0..d {
            let xi = &self.x[i * self.dim..(i + 1) * self.dim];
            for j in 0..i {
                let xj = &self.x[j * self.dim..(j + 1) * self.dim];
                let c = f.corr[(i, j)] * (p.alpha[i] * p.alpha[j] / p.variance - rinv[(i, j)]);
                if c == 0.0 {
                    continue;
                }
                for k in 0..self.dim {
                    let u = xi[k] - xj[k];
                    gradient[k] += c * u * u * inv_ls2[k];
                }
            }
        }
        Some(LikelihoodEval { value: p.log_likelihood, gradient })
    }
}

impl GpSurrogate {
    /// Fits the surrogate, maximizing the profiled log marginal likelihood
    /// over the length-scale box with a multi-start local search.
    pub fn fit(design: &DesignSet, opts: &FitOptions) -> Result<Self> {
        let d = design.len();
        if d < 2 {
            return Err(Error::InvalidDesign(format!("need at least 2 training points, got {d}")));
        }
        let dim = design.dimension();
        let (x_mean, x_scale) = column_stats(&design.inputs, dim);
        let y = design.outputs();
        let y_mean = y.iter().sum::<f64>() / d as f64;
        let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / d as f64;
        let x_std: Vec<f64> = design
            .inputs()
            .flat_map(|p| p.iter().zip(&x_mean).zip(&x_scale).map(|((v, m), s)| (v - m) / s).collect::<Vec<_>>())
            .collect();

        if y_var <= 0.0 || y_var.sqrt() <= 1e-14 * y_mean.abs() {
            // all outputs equal: the surrogate is the constant function
            return Ok(Self {
                design: design.clone(),
                x_mean,
                x_scale,
                y_mean,
                y_scale: 1.0,
                log_length_scales: vec![0.0; dim],
                scaled_train: x_std,
                trend: 0.0,
                process_variance: 0.0,
                nugget: opts.initial_nugget,
                chol_inv: DMatrix::zeros(d, d),
                weights: DVector::zeros(d),
                log_likelihood: f64::INFINITY,
                degenerate: true,
            });
        }
        let y_scale = y_var.sqrt();
        let y_std = DVector::from_iterator(d, y.iter().map(|v| (v - y_mean) / y_scale));

        let problem = Problem { x: &x_std, y: y_std.clone(), dim, opts };
        let lo = opts.length_scale_bounds.0.ln();
        let hi = opts.length_scale_bounds.1.ln();
        let to_theta = |u: &[f64]| -> Vec<f64> { u.iter().map(|&v| lo + (hi - lo) * sigmoid(v)).collect() };
        let to_u = |theta: &[f64]| -> Vec<f64> {
            theta
                .iter()
                .map(|&t| {
                    let s = ((t - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
                    (s / (1.0 - s)).ln()
                })
                .collect()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.n_starts.max(1));
        match &opts.warm_start {
            Some(w) if w.len() == dim => starts.push(w.clone()),
            _ => starts.push(vec![0.0; dim]),
        }
        let (rlo, rhi) = (0.05f64.ln(), 20f64.ln());
        while starts.len() < opts.n_starts.max(1) {
            starts.push((0..dim).map(|_| rng.gen_range(rlo..rhi)).collect());
        }

        let objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
            let theta = to_theta(u);
            let e = problem.evaluate(&theta)?;
            let grad = u
                .iter()
                .zip(&e.gradient)
                .map(|(&v, g)| {
                    let s = sigmoid(v);
                    -g * (hi - lo) * s * (1.0 - s)
                })
                .collect();
            Some((-e.value, grad))
        };

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in &starts {
            let (u, f) = lbfgs_minimize(objective, &to_u(start), opts.max_iterations);
            // improvements at rounding level do not displace an earlier start
            if f.is_finite() && best.as_ref().map_or(true, |(bf, _)| f < *bf - START_TIE * bf.abs().max(1.0)) {
                best = Some((f, to_theta(&u)));
            }
        }
        let theta = match best {
            Some((_, t)) => t,
            None => {
                return Err(Error::SingularCovariance { nugget: opts.max_nugget });
            }
        };

        let corr = correlation_matrix(&x_std, dim, &theta);
        let f = factorize(corr, opts.initial_nugget, opts.max_nugget)
            .ok_or(Error::SingularCovariance { nugget: opts.max_nugget })?;
        let p = profile(&f, &y_std, opts.variance_bounds);
        let l = f.chol.l();
        let chol_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(Error::SingularCovariance { nugget: f.nugget })?;
        let inv_ls: Vec<f64> = theta.iter().map(|t| (-t).exp()).collect();
        let scaled_train = x_std.chunks_exact(dim).flat_map(|r| r.iter().zip(&inv_ls).map(|(v, s)| v * s).collect::<Vec<_>>()).collect();

        Ok(Self {
            design: design.clone(),
            x_mean,
            x_scale,
            y_mean,
            y_scale,
            log_length_scales: theta,
            scaled_train,
            trend: p.trend,
            process_variance: p.variance,
            nugget: f.nugget,
            chol_inv,
            weights: p.alpha,
            log_likelihood: p.log_likelihood,
            degenerate: false,
        })
    }

    pub fn dimension(&self) -> usize {
        self.design.dimension()
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    /// True when all training outputs were equal and the surrogate is constant.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Log length-scales in standardized input units (warm-start format).
    pub fn log_length_scales(&self) -> &[f64] {
        &self.log_length_scales
    }

    /// Length-scales in original input units.
    pub fn length_scales(&self) -> Vec<f64> {
        self.log_length_scales.iter().zip(&self.x_scale).map(|(t, s)| t.exp() * s).collect()
    }

    /// Process variance in output units.
    pub fn process_variance(&self) -> f64 {
        self.process_variance * self.y_scale * self.y_scale
    }

    /// Constant trend in output units.
    pub fn trend(&self) -> f64 {
        self.trend * self.y_scale + self.y_mean
    }

    /// Relative nugget actually used (multiplies the process variance).
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Output standardization scale (sample std of the training outputs).
    pub fn output_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        let dim = self.dimension();
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            flat.extend_from_slice(p);
        }
        let batch = self.predict_flat(&flat)?;
        Ok(batch.mean.into_iter().zip(batch.std).map(|(mean, std)| Prediction { mean, std }).collect())
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Prediction> {
        let b = self.predict_flat(x)?;
        Ok(Prediction { mean: b.mean[0], std: b.std[0] })
    }

    /// Predictions for row-major points. Chunks are evaluated in parallel
    /// and merged in input order, so the result does not depend on the
    /// thread count.
    pub fn predict_flat(&self, flat: &[f64]) -> Result<BatchPrediction> {
        let dim = self.dimension();
        if flat.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: flat.len() % dim });
        }
        let n = flat.len() / dim;
        if self.degenerate {
            return Ok(BatchPrediction { mean: vec![self.y_mean; n], std: vec![0.0; n] });
        }
        const CHUNK: usize = 512;
        let parts: Vec<BatchPrediction> = flat.par_chunks(CHUNK * dim).map(|c| self.predict_chunk(c)).collect();
        let mut out = BatchPrediction { mean: Vec::with_capacity(n), std: Vec::with_capacity(n) };
        for p in parts {
            out.mean.extend(p.mean);
            out.std.extend(p.std);
        }
        Ok(out)
    }

    fn predict_chunk(&self, chunk: &[f64]) -> BatchPrediction {
        let dim = self.dimension();
        let m = chunk.len() / dim;
        let d = self.design.len();
        let scale: Vec<f64> = self.x_scale.iter().zip(&self.log_length_scales).map(|(s, t)| s * t.exp()).collect();
        let mut test = vec![0.0; chunk.len()];
        for (dst, src) in test.chunks_exact_mut(dim).zip(chunk.chunks_exact(dim)) {
            for k in 0..dim {
                dst[k] = (src[k] - self.x_mean[k]) / scale[k];
            }
        }
        let mut cross = DMatrix::<f64>::zeros(d, m);
        for j in 0..m {
            let t = &test[j * dim..(j + 1) * dim];
            let raw = &chunk[j * dim..(j + 1) * dim];
            let col = cross.column_mut(j);
            for (i, c) in col.into_iter().enumerate() {
                let x = &self.scaled_train[i * dim..(i + 1) * dim];
                let mut s = 0.0;
                for k in 0..dim {
                    let u = x[k] - t[k];
                    s += u * u;
                }
                *c = (-0.5 * s).exp();
                // the jitter belongs to the zero-distance correlation, so
                // training inputs are reproduced exactly
                if s < 1e-20 && self.design.input(i) == raw {
                    *c += self.nugget;
                }
            }
        }
        let mean_std = cross.tr_mul(&self.weights);
        let v = &self.chol_inv * &cross;
        let mut mean = Vec::with_capacity(m);
        let mut std = Vec::with_capacity(m);
        for j in 0..m {
            // the nugget is jitter, not noise: remove it so training inputs get zero variance
            let explained = v.column(j).norm_squared();
            let var = (self.process_variance * (1.0 - self.nugget - explained)).max(0.0);
            mean.push((self.trend + mean_std[j]) * self.y_scale + self.y_mean);
            std.push(var.sqrt() * self.y_scale);
        }
        BatchPrediction { mean, std }
    }

    /// The three metamodels at `points` for band factor `kbar`.
    pub fn three_fold_predict(&self, points: &[Vec<f64>], kbar: f64) -> Result<ThreeFoldOutputs> {
        check_kbar(kbar)?;
        let preds = self.predict(points)?;
        let batch = BatchPrediction {
            mean: preds.iter().map(|p| p.mean).collect(),
            std: preds.iter().map(|p| p.std).collect(),
        };
        Ok(ThreeFoldOutputs::from_batch(&batch, kbar))
    }
}

pub(crate) fn check_kbar(kbar: f64) -> Result<()> {
    if !(kbar > 0.0 && kbar.is_finite()) {
        return Err(Error::InvalidConfig(format!("band factor must be positive, got {kbar}")));
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}
