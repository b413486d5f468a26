//! Test models with known or reference output distributions.

mod bouc_wen;

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::distribution::TailMode;
use crate::error::{Error, Result};
use crate::sampling::{std_normal_cdf, RandomInputSpec};

pub use bouc_wen::{bouc_wen_drift, BoucWenFrame, BoucWenModel, LinearModes, DEFAULT_DT};

/// A deterministic, possibly expensive, scalar model `y = M(x)`.
pub trait ModelFunction: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

fn check_dim(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// Wraps a model and counts every evaluation.
pub struct CountingModel<'a> {
    inner: &'a dyn ModelFunction,
    calls: AtomicUsize,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a dyn ModelFunction) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ModelFunction for CountingModel<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x)
    }
}

/// `min(x1 - x2, x1 + x2)`.
pub fn toy_model(x: &[f64]) -> Result<f64> {
    check_dim(x, 2)?;
    Ok((x[0] - x[1]).min(x[0] + x[1]))
}

/// Exact CDF of [`toy_model`] under standard Gaussian inputs.
pub fn toy_exact_cdf(y: f64) -> f64 {
    let u = y / std::f64::consts::SQRT_2;
    if u <= 0.0 {
        let p = std_normal_cdf(u);
        p * (2.0 - p)
    } else {
        let q = std_normal_cdf(-u);
        1.0 - q * q
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyModel;

impl ModelFunction for ToyModel {
    fn name(&self) -> &str {
        "toy"
    }

    fn dimension(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        toy_model(x)
    }
}

/// `sin(x1) + a sin^2(x2) + b x3^4 sin(x1)`.
pub fn ishigami(x: &[f64], a: f64, b: f64) -> Result<f64> {
    check_dim(x, 3)?;
    let s1 = x[0].sin();
    let s2 = x[1].sin();
    Ok(s1 + a * s2 * s2 + b * x[2].powi(4) * s1)
}

#[derive(Debug, Clone, Copy)]
pub struct IshigamiModel {
    pub a: f64,
    pub b: f64,
}

impl Default for IshigamiModel {
    fn default() -> Self {
        Self { a: 7.0, b: 0.1 }
    }
}

impl IshigamiModel {
    pub fn mean(&self) -> f64 {
        self.a / 2.0
    }

    pub fn variance(&self) -> f64 {
        let pi4 = std::f64::consts::PI.powi(4);
        self.a * self.a / 8.0 + self.b * pi4 / 5.0 + self.b * self.b * pi4 * pi4 / 18.0 + 0.5
    }
}

impl ModelFunction for IshigamiModel {
    fn name(&self) -> &str {
        "ishigami"
    }

    fn dimension(&self) -> usize {
        3
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        ishigami(x, self.a, self.b)
    }
}

/// The registered benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Toy,
    Ishigami,
    BoucWen,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::Toy, Benchmark::Ishigami, Benchmark::BoucWen];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Benchmark::Toy),
            "ishigami" => Ok(Benchmark::Ishigami),
            "bouc_wen" => Ok(Benchmark::BoucWen),
            _ => Err(Error::InvalidConfig(format!("unknown benchmark '{name}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Toy => "toy",
            Benchmark::Ishigami => "ishigami",
            Benchmark::BoucWen => "bouc_wen",
        }
    }

    pub fn input_spec(self) -> RandomInputSpec {
        match self {
            Benchmark::Toy => RandomInputSpec::standard_gaussian(2),
            Benchmark::Ishigami => {
                let pi = std::f64::consts::PI;
                RandomInputSpec::uniform(3, -pi, pi).expect("valid bounds")
            }
            Benchmark::BoucWen => RandomInputSpec::standard_gaussian(4),
        }
    }

    pub fn model(self) -> Box<dyn ModelFunction> {
        match self {
            Benchmark::Toy => Box::new(ToyModel),
            Benchmark::Ishigami => Box::new(IshigamiModel::default()),
            Benchmark::BoucWen => Box::new(BoucWenModel::default()),
        }
    }

    /// Output range of interest and tail weighting used for this problem.
    pub fn default_range(self) -> (f64, f64, TailMode) {
        match self {
            Benchmark::Toy => (-5.0, 3.0, TailMode::Both),
            Benchmark::Ishigami => (-10.0, 15.0, TailMode::Both),
            Benchmark::BoucWen => (0.0, 0.12, TailMode::CcdfOnly),
        }
    }

    pub fn exact_cdf(self) -> Option<fn(f64) -> f64> {
        match self {
            Benchmark::Toy => Some(toy_exact_cdf),
            _ => None,
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}
