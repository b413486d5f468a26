use serde::{Deserialize, Serialize};

use crate::distribution::TailMode;
use crate::error::{Error, Result};

/// How the next training sample is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningMode {
    GaussianKernel,
    DiracKernel,
    MaxOfVariance,
    Conventional,
}

impl LearningMode {
    pub const ALL: [LearningMode; 4] =
        [LearningMode::GaussianKernel, LearningMode::DiracKernel, LearningMode::MaxOfVariance, LearningMode::Conventional];

    /// Short name used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            LearningMode::GaussianKernel => "gaussian",
            LearningMode::DiracKernel => "dirac",
            LearningMode::MaxOfVariance => "mov",
            LearningMode::Conventional => "conventional",
        }
    }
}

impl std::str::FromStr for LearningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian_kernel" => Ok(LearningMode::GaussianKernel),
            "dirac" | "dirac_kernel" => Ok(LearningMode::DiracKernel),
            "mov" | "max_of_variance" => Ok(LearningMode::MaxOfVariance),
            "conventional" => Ok(LearningMode::Conventional),
            _ => Err(Error::InvalidConfig(format!("unknown learning mode '{s}'"))),
        }
    }
}

/// Settings of one active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub y_min: f64,
    pub y_max: f64,
    /// Mean tolerated value of the error integrand over the range.
    pub eps_bar: f64,
    /// Band factor of the three-fold metamodels.
    pub kbar: f64,
    pub pool_size: usize,
    pub init_size: usize,
    pub mode: LearningMode,
    pub tail: TailMode,
    pub seed: u64,
    /// Maximum number of samples added after the initial design.
    pub budget: usize,
    /// Number of thresholds swept by the conventional baseline.
    pub conventional_thresholds: usize,
}

pub const MIN_POOL_SIZE: usize = 1000;

impl Default for AlConfig {
    fn default() -> Self {
        Self {
            y_min: -5.0,
            y_max: 3.0,
            eps_bar: 0.2,
            kbar: 2.0,
            pool_size: 1_000_000,
            init_size: 12,
            mode: LearningMode::GaussianKernel,
            tail: TailMode::Both,
            seed: 0,
            budget: 500,
            conventional_thresholds: 101,
        }
    }
}

impl AlConfig {
    /// Defaults with the given output range.
    pub fn with_range(y_min: f64, y_max: f64) -> Self {
        Self { y_min, y_max, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.y_min < self.y_max) || !self.y_min.is_finite() || !self.y_max.is_finite() {
            return bad(format!("range [{}, {}] is empty", self.y_min, self.y_max));
        }
        if !(self.eps_bar > 0.0 && self.eps_bar.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.eps_bar));
        }
        if !(self.kbar > 0.0 && self.kbar.is_finite()) {
            return bad(format!("band factor must be positive, got {}", self.kbar));
        }
        if self.pool_size < MIN_POOL_SIZE {
            return bad(format!("pool size must be at least {MIN_POOL_SIZE}, got {}", self.pool_size));
        }
        if self.init_size < 2 {
            return bad(format!("initial design needs at least 2 points, got {}", self.init_size));
        }
        if self.mode == LearningMode::Conventional && self.conventional_thresholds < 1 {
            return bad("conventional baseline needs at least one threshold".into());
        }
        Ok(())
    }

    /// Stopping threshold on the integrated error, `eps_bar * (y_max - y_min)`.
    pub fn epsilon(&self) -> f64 {
        self.eps_bar * (self.y_max - self.y_min)
    }

    pub fn range_width(&self) -> f64 {
        self.y_max - self.y_min
    }
}
