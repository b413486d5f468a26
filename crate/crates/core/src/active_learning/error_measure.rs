//! The tail-weighted error integrand, its global integral and the localized
//! (kernel-smoothed) version used to pick the next output threshold.

use crate::distribution::{FoldValues, TailMode, ThreeFoldCdf};
use crate::error::{Error, Result};
use crate::gp::BatchPrediction;
use crate::sampling::{std_normal_cdf, std_normal_pdf};

use super::config::AlConfig;

/// Nodes of the uniform grid used for the error integrals.
pub const GRID_NODES: usize = 1001;

/// Gaussian kernel cells farther than this many bandwidths are ignored.
const KERNEL_CUTOFF: f64 = 8.0;

const GOLDEN_ITERATIONS: usize = 60;

/// Error integrand from fold values:
/// `|F+ - F-| / max(tail denominator of F0, floor)`.
pub fn w_star_values(f: FoldValues, tail: TailMode, floor: f64) -> f64 {
    (f.plus - f.minus).abs() / tail.denominator(f.mid).max(floor)
}

/// Error integrand of a three-fold CDF at `y`.
pub fn w_star(cdf: &ThreeFoldCdf, y: f64, tail: TailMode, floor: f64) -> f64 {
    w_star_values(cdf.eval(y), tail, floor)
}

/// A pointwise evaluable error integrand.
pub trait Integrand {
    fn value(&self, y: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Integrand for F {
    fn value(&self, y: f64) -> f64 {
        self(y)
    }
}

/// The integrand of a specific three-fold CDF.
#[derive(Debug, Clone, Copy)]
pub struct WStar<'a> {
    pub cdf: &'a ThreeFoldCdf,
    pub tail: TailMode,
    pub floor: f64,
}

impl<'a> WStar<'a> {
    /// Integrand with the `1/N` floor of the pool size.
    pub fn new(cdf: &'a ThreeFoldCdf, tail: TailMode) -> Self {
        Self { cdf, tail, floor: 1.0 / cdf.len() as f64 }
    }
}

impl Integrand for WStar<'_> {
    fn value(&self, y: f64) -> f64 {
        w_star(self.cdf, y, self.tail, self.floor)
    }
}

/// The integrand tabulated on the uniform grid over `[y_min, y_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    y_min: f64,
    y_max: f64,
    values: Vec<f64>,
}

impl ErrorProfile {
    pub fn new<I: Integrand + ?Sized>(w: &I, y_min: f64, y_max: f64) -> Self {
        let h = (y_max - y_min) / (GRID_NODES - 1) as f64;
        let values = (0..GRID_NODES).map(|i| w.value(node(y_min, y_max, h, i))).collect();
        Self { y_min, y_max, values }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    pub fn step(&self) -> f64 {
        (self.y_max - self.y_min) / (GRID_NODES - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        node(self.y_min, self.y_max, self.step(), i)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoidal integral over the range.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.step() * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }

    /// Piecewise-linear interpolation between grid nodes.
    pub fn interpolate(&self, y: f64) -> f64 {
        let h = self.step();
        let t = ((y - self.y_min) / h).clamp(0.0, (GRID_NODES - 1) as f64);
        let i = (t.floor() as usize).min(GRID_NODES - 2);
        let frac = t - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Truncated-Gaussian average of the piecewise-linear profile around
    /// `center` with standard deviation `sigma`, integrated exactly cell by
    /// cell. Returns `None` when `sigma` is too small to resolve.
    pub fn gaussian_average(&self, center: f64, sigma: f64) -> Option<f64> {
        let h = self.step();
        if !(sigma > 1e-9 * h) {
            return None;
        }
        let lo = self.y_min.max(center - KERNEL_CUTOFF * sigma);
        let hi = self.y_max.min(center + KERNEL_CUTOFF * sigma);
        if !(lo < hi) {
            return None;
        }
        let first = (((lo - self.y_min) / h).floor() as usize).min(GRID_NODES - 2);
        let last = (((hi - self.y_min) / h).ceil() as usize).clamp(first + 1, GRID_NODES - 1);
        let mut acc = 0.0;
        for i in first..last {
            let (ya, yb) = (self.node(i), self.node(i + 1));
            let (wa, wb) = (self.values[i], self.values[i + 1]);
            let slope = (wb - wa) / h;
            // w(y) = c0 + slope * (y - center) on this cell
            let c0 = wa + slope * (center - ya);
            let (ua, ub) = ((ya - center) / sigma, (yb - center) / sigma);
            let mass = std_normal_cdf(ub) - std_normal_cdf(ua);
            let first_moment = std_normal_pdf(ua) - std_normal_pdf(ub);
            acc += c0 * mass + slope * sigma * first_moment;
        }
        let z = std_normal_cdf((self.y_max - center) / sigma) - std_normal_cdf((self.y_min - center) / sigma);
        (z > 0.0).then(|| acc / z)
    }
}

fn node(y_min: f64, y_max: f64, h: f64, i: usize) -> f64 {
    if i == GRID_NODES - 1 {
        y_max
    } else {
        y_min + i as f64 * h
    }
}

/// Integrated error `W*` over the configured range.
pub fn global_error(cdf: &ThreeFoldCdf, config: &AlConfig) -> f64 {
    ErrorProfile::new(&WStar::new(cdf, config.tail), config.y_min, config.y_max).integral()
}

/// True iff `w_star_integral < eps_bar * (y_max - y_min)`.
pub fn stopping_check(w_star_integral: f64, config: &AlConfig) -> bool {
    w_star_integral < config.epsilon()
}

/// Kernel bandwidth lookup: the predictive std of the pool point whose
/// mean prediction is nearest to a given output level.
#[derive(Debug, Clone)]
pub struct PoolBandwidth {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl PoolBandwidth {
    pub fn new(pred: &BatchPrediction) -> Result<Self> {
        if pred.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut idx: Vec<usize> = (0..pred.len()).collect();
        idx.sort_by(|&a, &b| pred.mean[a].total_cmp(&pred.mean[b]).then(a.cmp(&b)));
        Ok(Self { means: idx.iter().map(|&i| pred.mean[i]).collect(), stds: idx.iter().map(|&i| pred.std[i]).collect() })
    }

    /// Std at the nearest mean; ties go to the smaller mean.
    pub fn sigma_at(&self, y: f64) -> f64 {
        let k = self.means.partition_point(|&m| m < y);
        if k == 0 {
            return self.stds[0];
        }
        if k == self.means.len() {
            return self.stds[k - 1];
        }
        if y - self.means[k - 1] <= self.means[k] - y {
            // first of any run of equal means
            let m = self.means[k - 1];
            let j = self.means[..k].partition_point(|&v| v < m);
            self.stds[j]
        } else {
            self.stds[k]
        }
    }
}

/// Localizing kernel applied to the error integrand.
#[derive(Debug, Clone, Copy)]
pub enum Kernel<'a> {
    Dirac,
    /// Bandwidth from the pool's nearest prediction.
    Gaussian(&'a PoolBandwidth),
    /// Fixed bandwidth, in output units.
    FixedGaussian(f64),
}

/// Localized error `W*_L(y')`. The Dirac kernel returns the exact integrand
/// value; Gaussian kernels average the tabulated profile and fall back to
/// the exact value when the bandwidth vanishes.
pub fn localized_error<I: Integrand + ?Sized>(w: &I, profile: &ErrorProfile, y_prime: f64, kernel: Kernel<'_>) -> f64 {
    let sigma = match kernel {
        Kernel::Dirac => return w.value(y_prime),
        Kernel::Gaussian(bw) => bw.sigma_at(y_prime),
        Kernel::FixedGaussian(s) => s,
    };
    profile.gaussian_average(y_prime, sigma).unwrap_or_else(|| w.value(y_prime))
}

/// Maximizer of the localized error over the range: the best of the grid
/// nodes (first one on ties) refined by golden-section search within one
/// cell on either side. The refinement is kept only if strictly better.
pub fn select_threshold<I: Integrand + ?Sized>(w: &I, profile: &ErrorProfile, kernel: Kernel<'_>) -> f64 {
    let eval = |y: f64| localized_error(w, profile, y, kernel);
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..GRID_NODES {
        let v = eval(profile.node(i));
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let (y_min, y_max) = profile.range();
    let mut a = profile.node(best_i.saturating_sub(1));
    let mut b = profile.node((best_i + 1).min(GRID_NODES - 1));
    a = a.max(y_min);
    b = b.min(y_max);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..GOLDEN_ITERATIONS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    let (yr, vr) = if fc >= fd { (c, fc) } else { (d, fd) };
    if vr > best_v {
        yr
    } else {
        profile.node(best_i)
    }
}
