//! Empirical CDF/CCDF estimates, moments and validation errors.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpSurrogate, ThreeFoldOutputs};
use crate::sampling::CandidatePool;

/// Quadrature nodes used by [`moments_from_cdf`].
pub const MOMENT_NODES: usize = 16_001;
/// Grid intervals used by [`epsilon_e`].
pub const EPSILON_INTERVALS: usize = 100;
/// Mass allowed outside the integration range before a warning is raised.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Anything that can evaluate a distribution function.
pub trait Cdf {
    fn cdf(&self, y: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, y: f64) -> f64 {
        self(y)
    }
}

/// Which tail(s) the error measures weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    #[default]
    Both,
    CdfOnly,
    CcdfOnly,
}

impl TailMode {
    /// Tail weight denominator for a CDF value, before flooring.
    pub fn denominator(self, f: f64) -> f64 {
        match self {
            TailMode::Both => f.min(1.0 - f),
            TailMode::CdfOnly => f,
            TailMode::CcdfOnly => 1.0 - f,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TailMode::Both => "both",
            TailMode::CdfOnly => "cdf_only",
            TailMode::CcdfOnly => "ccdf_only",
        }
    }
}

impl std::str::FromStr for TailMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(TailMode::Both),
            "cdf_only" | "cdf" => Ok(TailMode::CdfOnly),
            "ccdf_only" | "ccdf" => Ok(TailMode::CcdfOnly),
            _ => Err(Error::InvalidConfig(format!("unknown tail mode '{s}'"))),
        }
    }
}

/// Complementary probability `1 - p`.
pub fn ccdf(cdf_value: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&cdf_value) {
        return Err(Error::Domain(format!("probability {cdf_value} outside [0, 1]")));
    }
    Ok(1.0 - cdf_value)
}

/// Right-continuous step CDF of a finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateSample("empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sample contains non-finite values".into()));
        }
        values.par_sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Sorted sample values.
    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.sorted.len() as f64
    }

    /// Smallest and largest sample.
    pub fn support(&self) -> (f64, f64) {
        (self.sorted[0], self.sorted[self.sorted.len() - 1])
    }

    /// Sample range padded by three standard deviations, enough to hold all
    /// the mass when integrating moments.
    pub fn moment_range(&self) -> (f64, f64) {
        let (lo, hi) = self.support();
        let n = self.sorted.len() as f64;
        let mean = self.sorted.iter().sum::<f64>() / n;
        let sd = (self.sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let pad = (3.0 * sd).max(1e-12 * (1.0 + lo.abs().max(hi.abs())));
        (lo - pad, hi + pad)
    }
}

impl Cdf for EmpiricalCdf {
    fn cdf(&self, y: f64) -> f64 {
        self.eval(y)
    }
}

/// CDF values of the three folds at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldValues {
    pub plus: f64,
    pub mid: f64,
    pub minus: f64,
}

/// The consistent triple of CDF estimates over one common pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeFoldCdf {
    plus: EmpiricalCdf,
    mid: EmpiricalCdf,
    minus: EmpiricalCdf,
}

impl ThreeFoldCdf {
    /// Builds the triple from unsorted fold outputs of a common pool.
    /// Requires `plus[i] <= mid[i] <= minus[i]` for every pool point.
    pub fn from_fold_values(plus: Vec<f64>, mid: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        if plus.len() != mid.len() || minus.len() != mid.len() {
            return Err(Error::DimensionMismatch { expected: mid.len(), got: plus.len().max(minus.len()) });
        }
        if mid.is_empty() {
            return Err(Error::EmptyPool);
        }
        let ordered = plus.iter().zip(&mid).zip(&minus).all(|((p, m), q)| p <= m && m <= q);
        if !ordered {
            return Err(Error::Domain("fold outputs are not ordered plus <= mid <= minus".into()));
        }
        Ok(Self { plus: EmpiricalCdf::new(plus)?, mid: EmpiricalCdf::new(mid)?, minus: EmpiricalCdf::new(minus)? })
    }

    pub fn from_outputs(outputs: ThreeFoldOutputs) -> Result<Self> {
        Self::from_fold_values(outputs.plus, outputs.mid, outputs.minus)
    }

    pub fn len(&self) -> usize {
        self.mid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mid.is_empty()
    }

    pub fn plus(&self) -> &EmpiricalCdf {
        &self.plus
    }

    pub fn mid(&self) -> &EmpiricalCdf {
        &self.mid
    }

    pub fn minus(&self) -> &EmpiricalCdf {
        &self.minus
    }

    pub fn eval(&self, y: f64) -> FoldValues {
        FoldValues { plus: self.plus.eval(y), mid: self.mid.eval(y), minus: self.minus.eval(y) }
    }

    /// The triple for `-Y`: each fold's CDF becomes the reflected CCDF.
    pub fn reflected(&self) -> Self {
        let neg = |e: &EmpiricalCdf| EmpiricalCdf { sorted: e.sorted.iter().rev().map(|v| -v).collect() };
        Self { plus: neg(&self.minus), mid: neg(&self.mid), minus: neg(&self.plus) }
    }

    /// Population moments of each fold's outputs.
    pub fn fold_moments(&self) -> Result<FoldMoments> {
        Ok(FoldMoments {
            plus: sample_moments(self.plus.values())?,
            mid: sample_moments(self.mid.values())?,
            minus: sample_moments(self.minus.values())?,
        })
    }
}

/// Predicts the three folds over the pool and builds their CDFs.
pub fn estimate_three_fold_cdf(surrogate: &GpSurrogate, pool: &CandidatePool, kbar: f64) -> Result<ThreeFoldCdf> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    crate::gp::check_kbar(kbar)?;
    let batch = surrogate.predict_flat(pool.flat())?;
    ThreeFoldCdf::from_outputs(ThreeFoldOutputs::from_batch(&batch, kbar))
}

/// Mean, standard deviation, skewness and (non-excess) kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl MomentSet {
    fn from_raw(m: [f64; 4]) -> Result<Self> {
        let [m1, m2, m3, m4] = m;
        let var = m2 - m1 * m1;
        if !(var > 0.0) {
            return Err(Error::DegenerateSample(format!("non-positive variance {var:e}")));
        }
        let mu3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
        let mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
        Ok(Self { mean: m1, std: var.sqrt(), skewness: mu3 / var.powf(1.5), kurtosis: mu4 / (var * var) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMoments {
    pub plus: MomentSet,
    pub mid: MomentSet,
    pub minus: MomentSet,
}

/// Raised when the integration range misses part of the probability mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTooNarrow {
    pub lower_mass: f64,
    pub upper_mass: f64,
}

/// Moments from a distribution function through
/// `E[Y^j] = j * int_0^inf y^(j-1) (1 - F(y) + (-1)^j F(-y)) dy`,
/// truncated to the symmetric interval covering `[lower, upper]`.
pub fn moments_from_cdf<C: Cdf + ?Sized>(cdf: &C, lower: f64, upper: f64) -> Result<(MomentSet, Option<RangeTooNarrow>)> {
    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(Error::Domain(format!("invalid integration range [{lower}, {upper}]")));
    }
    let lower_mass = cdf.cdf(lower);
    let upper_mass = 1.0 - cdf.cdf(upper);
    let warning = if lower_mass > MASS_TOLERANCE || upper_mass > MASS_TOLERANCE {
        log::warn!("moment integration range [{lower}, {upper}] misses mass {lower_mass:e} / {upper_mass:e}");
        Some(RangeTooNarrow { lower_mass, upper_mass })
    } else {
        None
    };

    let u = lower.abs().max(upper.abs());
    let h = u / (MOMENT_NODES - 1) as f64;
    let mut raw = [0.0; 4];
    for i in 0..MOMENT_NODES {
        let y = i as f64 * h;
        let w = if i == 0 || i == MOMENT_NODES - 1 { 0.5 * h } else { h };
        let right = 1.0 - cdf.cdf(y);
        let left = cdf.cdf(-y);
        let mut ypow = 1.0;
        for (j, r) in raw.iter_mut().enumerate() {
            let order = (j + 1) as f64;
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            *r += w * order * ypow * (right + sign * left);
            ypow *= y;
        }
    }
    Ok((MomentSet::from_raw(raw)?, warning))
}

/// Biased (population) sample moments.
pub fn sample_moments(values: &[f64]) -> Result<MomentSet> {
    if values.len() < 2 {
        return Err(Error::DegenerateSample(format!("need at least 2 values, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if !(m2 > 0.0) {
        return Err(Error::DegenerateSample("constant sample".into()));
    }
    Ok(MomentSet { mean, std: m2.sqrt(), skewness: m3 / m2.powf(1.5), kurtosis: m4 / (m2 * m2) })
}

/// Mean tail-weighted relative error between an estimate and a reference
/// CDF over `[lower, upper]`, trapezoid on 101 nodes. The denominator is
/// floored at `floor`, usually `1 / N_reference`.
pub fn epsilon_e<A: Cdf + ?Sized, B: Cdf + ?Sized>(
    estimate: &A,
    reference: &B,
    lower: f64,
    upper: f64,
    tail: TailMode,
    floor: f64,
) -> Result<f64> {
    if !(lower < upper) {
        return Err(Error::Domain(format!("invalid range [{lower}, {upper}]")));
    }
    let h = (upper - lower) / EPSILON_INTERVALS as f64;
    let mut acc = 0.0;
    for i in 0..=EPSILON_INTERVALS {
        let y = lower + i as f64 * h;
        let f = reference.cdf(y);
        let v = (estimate.cdf(y) - f).abs() / tail.denominator(f).max(floor);
        let w = if i == 0 || i == EPSILON_INTERVALS { 0.5 } else { 1.0 };
        acc += w * v;
    }
    Ok(acc * h / (upper - lower))
}

/// A tabulated reference CDF, linearly interpolated between rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCdf {
    y: Vec<f64>,
    f: Vec<f64>,
}

/// Rows kept when thinning a large Monte Carlo reference.
const REFERENCE_MAX_ROWS: usize = 20_000;

impl ReferenceCdf {
    pub fn new(y: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != f.len() {
            return Err(Error::InvalidDesign("reference table must have equal, nonzero column lengths".into()));
        }
        if y.windows(2).any(|w| !(w[0] <= w[1])) || f.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidDesign("reference table must be nondecreasing in y and F".into()));
        }
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("reference table has values out of range".into()));
        }
        Ok(Self { y, f })
    }

    /// Order statistics `(y_(i), i/N)`, thinned to about 20001 rows for large samples.
    pub fn from_samples(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateSample("empty reference sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("reference sample contains non-finite values".into()));
        }
        values.par_sort_unstable_by(f64::total_cmp);
        let n = values.len();
        let mut idx: Vec<usize> = if n <= REFERENCE_MAX_ROWS {
            (1..=n).collect()
        } else {
            let step = n as f64 / REFERENCE_MAX_ROWS as f64;
            (0..=REFERENCE_MAX_ROWS).map(|k| ((k as f64 * step).round() as usize).clamp(1, n)).collect()
        };
        idx.extend([1, n - 1, n].into_iter().filter(|&i| i >= 1));
        idx.sort_unstable();
        idx.dedup();
        let y = idx.iter().map(|&i| values[i - 1]).collect();
        let f = idx.iter().map(|&i| i as f64 / n as f64).collect();
        Self::new(y, f)
    }

    /// Tabulates `cdf` on `rows` evenly spaced points of `[lower, upper]`.
    pub fn from_function<C: Cdf + ?Sized>(cdf: &C, lower: f64, upper: f64, rows: usize) -> Result<Self> {
        if rows < 2 || !(lower < upper) {
            return Err(Error::Domain("need at least two rows on a nonempty range".into()));
        }
        let step = (upper - lower) / (rows - 1) as f64;
        let y: Vec<f64> = (0..rows).map(|i| lower + i as f64 * step).collect();
        let mut run = 0.0f64;
        let f = y
            .iter()
            .map(|&v| {
                run = run.max(cdf.cdf(v).clamp(0.0, 1.0));
                run
            })
            .collect();
        Self::new(y, f)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.y.iter().copied().zip(self.f.iter().copied())
    }

    /// Smallest resolvable tail probability: the least positive value of
    /// `F` or `1 - F` in the table.
    pub fn resolution(&self) -> f64 {
        self.f
            .iter()
            .flat_map(|&f| [f, 1.0 - f])
            .filter(|&p| p > 0.0)
            .fold(1.0, f64::min)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let k = self.y.partition_point(|&v| v <= y);
        if k == 0 {
            return 0.0;
        }
        if k == self.y.len() {
            return self.f[k - 1];
        }
        let (y0, y1) = (self.y[k - 1], self.y[k]);
        let (f0, f1) = (self.f[k - 1], self.f[k]);
        f0 + (f1 - f0) * (y - y0) / (y1 - y0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(48 * self.len() + 4);
        s.push_str("y,F\n");
        for (y, f) in self.rows() {
            let _ = writeln!(s, "{y:.16e},{f:.16e}");
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "y,F" => {}
            _ => return Err(Error::Csv { line: 1, msg: "expected header 'y,F'".into() }),
        }
        let (mut y, mut f) = (Vec::new(), Vec::new());
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Csv { line: i + 1, msg: msg.to_string() };
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
            y.push(a.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
            f.push(b.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
        }
        Self::new(y, f)
    }
}

impl Cdf for ReferenceCdf {
    fn cdf(&self, y: f64) -> f64 {
        self.eval(y)
    }
}
