//! Input distributions, Monte Carlo candidate pools and the space-filling
//! initial design.
//!
//! All randomness is derived from a single master seed through
//! [`derive_seed`], so a run can be replayed exactly from its seed.

use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile function, defined on the open interval (0, 1).
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    // one Newton step against the accurate forward cdf
    let dens = std_normal_pdf(z);
    if dens > 0.0 {
        let step = (std_normal_cdf(z) - p) / dens;
        if step.is_finite() {
            return Ok(z - step);
        }
    }
    Ok(z)
}

/// One independent input marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    StandardGaussian,
    Uniform { lower: f64, upper: f64 },
}

impl Marginal {
    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        match *self {
            Marginal::StandardGaussian => std_normal_inv_cdf(u),
            Marginal::Uniform { lower, upper } => {
                if !(0.0..=1.0).contains(&u) {
                    return Err(Error::Domain(format!("uniform quantile at {u}")));
                }
                Ok(lower + (upper - lower) * u)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::StandardGaussian => std_normal_cdf(x),
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Marginal::StandardGaussian => x.is_finite(),
            Marginal::Uniform { lower, upper } => x > lower && x < upper,
        }
    }

    fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::StandardGaussian => StandardNormal.sample(rng),
            Marginal::Uniform { lower, upper } => {
                let u: f64 = Open01.sample(rng);
                lower + (upper - lower) * u
            }
        }
    }
}

/// Joint distribution of independent input variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInputSpec {
    marginals: Vec<Marginal>,
}

impl RandomInputSpec {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidConfig("input dimension must be at least 1".into()));
        }
        for m in &marginals {
            if let Marginal::Uniform { lower, upper } = m {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "uniform bounds must satisfy lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
        }
        Ok(Self { marginals })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::new(vec![Marginal::StandardGaussian; dim]).expect("dim >= 1")
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![Marginal::Uniform { lower, upper }; dim])
    }

    pub fn dimension(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension() && self.marginals.iter().zip(x).all(|(m, &v)| m.contains(v))
    }
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitialDesign,
    Pool,
    Optimizer,
    Run,
    Reference,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::InitialDesign => 0x1d3a_5e11,
            Stream::Pool => 0x9001_c0de,
            Stream::Optimizer => 0x0b7f_a11e,
            Stream::Run => 0x7e57_2a11,
            Stream::Reference => 0x4ef0_ce00,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th draw of `stream` under `master`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag().rotate_left(32)) ^ splitmix64(index))
}

/// Monte Carlo population used both as learning candidates and as the
/// integration sample for the distribution estimate.
///
/// Points are stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    points: Vec<f64>,
    dim: usize,
    seed: u64,
    generation: usize,
}

impl CandidatePool {
    /// Wraps explicit points (row-major) as a pool.
    pub fn from_flat(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: points.len() });
        }
        if points.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(Self { points, dim, seed: 0, generation: 0 })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn with_generation(mut self, generation: usize) -> Self {
        self.generation = generation;
        self
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

/// Draws `n` i.i.d. points from the product of marginals.
pub fn sample_pool(spec: &RandomInputSpec, n: usize, seed: u64) -> Result<CandidatePool> {
    if n == 0 {
        return Err(Error::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dimension();
    let mut points = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for m in spec.marginals() {
            points.push(m.sample(&mut rng));
        }
    }
    Ok(CandidatePool { points, dim, seed, generation: 0 })
}

/// Maps points of the unit hypercube through each marginal's inverse CDF.
pub fn map_unit_points(spec: &RandomInputSpec, unit: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    unit.iter()
        .map(|u| {
            if u.len() != spec.dimension() {
                return Err(Error::DimensionMismatch { expected: spec.dimension(), got: u.len() });
            }
            spec.marginals().iter().zip(u).map(|(m, &v)| m.inv_cdf(v)).collect()
        })
        .collect()
}

// sobol_burley supports 2^16 indices per sequence
const MAX_SOBOL_POINTS: usize = 1 << 16;

/// Owen-scrambled Sobol points in the open unit hypercube.
pub fn sobol_unit_points(dim: usize, d: usize, seed: u32) -> Result<Vec<Vec<f64>>> {
    if dim as u32 > sobol_burley::NUM_DIMENSIONS {
        return Err(Error::InvalidConfig(format!("sobol design supports at most {} dimensions", sobol_burley::NUM_DIMENSIONS)));
    }
    if d > MAX_SOBOL_POINTS {
        return Err(Error::InvalidConfig(format!("sobol design supports at most {MAX_SOBOL_POINTS} points")));
    }
    // 24-bit outputs; shifting by half a cell keeps every coordinate inside (0, 1)
    let half_cell = 0.5 / (1u32 << 24) as f64;
    Ok((0..d as u32)
        .map(|i| (0..dim as u32).map(|k| sobol_burley::sample(i, k, seed) as f64 + half_cell).collect())
        .collect())
}

/// Space-filling initial design of `d` points for the given inputs.
pub fn initial_design(spec: &RandomInputSpec, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!("initial design needs at least 2 points, got {d}")));
    }
    let mut scramble = (seed ^ (seed >> 32)) as u32;
    loop {
        let unit = sobol_unit_points(spec.dimension(), d, scramble)?;
        let points = map_unit_points(spec, &unit)?;
        if all_distinct(&points) {
            return Ok(points);
        }
        scramble = scramble.wrapping_add(1);
    }
}

fn all_distinct(points: &[Vec<f64>]) -> bool {
    points.iter().enumerate().all(|(i, p)| points[..i].iter().all(|q| q != p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        (m, s)
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        // mpmath: 0.5*erfc(-x/sqrt(2))
        assert!((std_normal_cdf(-2.0) - 0.022750131948179207).abs() < 1e-15);
        assert!((std_normal_cdf(-8.0) - 6.22096057427178e-16).abs() < 1e-25);
        assert!((std_normal_cdf(3.5) - 0.9997673709209645).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_absolute_accuracy() {
        // 40-digit reference values
        let table = [
            (-8.0, 6.2209605742717841235e-16),
            (-6.5, 4.0160005838591178083e-11),
            (-4.0, 0.000031671241833119921254),
            (-3.0, 0.0013498980316300945267),
            (-1.0, 0.15865525393145705141),
            (-0.5, 0.30853753872598689636),
            (0.3, 0.61791142218895263307),
            (1.5, 0.933192798731141934),
            (2.5, 0.99379033467422386483),
            (5.0, 0.99999971334842812081),
            (7.5, 0.99999999999996809108),
        ];
        for (z, p) in table {
            assert!((std_normal_cdf(z) - p).abs() <= 1e-12, "z = {z}");
        }
    }

    #[test]
    fn normal_quantile_roundtrip() {
        assert_eq!(std_normal_inv_cdf(0.5).unwrap(), 0.0);
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = std_normal_inv_cdf(p).unwrap();
            assert!((std_normal_cdf(z) - p).abs() < 1e-9, "p = {p}");
        }
        assert!(matches!(std_normal_inv_cdf(0.0), Err(Error::Domain(_))));
        assert!(matches!(std_normal_inv_cdf(1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_pool_statistics() {
        let spec = RandomInputSpec::standard_gaussian(2);
        let pool = sample_pool(&spec, 1_000_000, 42).unwrap();
        for k in 0..2 {
            let col: Vec<f64> = pool.iter().map(|p| p[k]).collect();
            let (m, s) = mean_std(&col);
            assert!(m.abs() < 0.005, "mean {m}");
            assert!((s - 1.0).abs() < 0.005, "std {s}");
        }
    }

    #[test]
    fn uniform_pool_support() {
        let pi = std::f64::consts::PI;
        let spec = RandomInputSpec::uniform(3, -pi, pi).unwrap();
        let pool = sample_pool(&spec, 100_000, 7).unwrap();
        assert!(pool.iter().all(|p| spec.contains(p)));
        for k in 0..3 {
            let col: Vec<f64> = pool.iter().map(|p| p[k]).collect();
            let (m, _) = mean_std(&col);
            assert!(m.abs() < 0.02);
            assert!(col.iter().cloned().fold(f64::INFINITY, f64::min) > -pi);
            assert!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max) < pi);
        }
    }

    #[test]
    fn pool_is_reproducible() {
        let spec = RandomInputSpec::standard_gaussian(3);
        let a = sample_pool(&spec, 1000, 9).unwrap();
        let b = sample_pool(&spec, 1000, 9).unwrap();
        let c = sample_pool(&spec, 1000, 10).unwrap();
        assert_eq!(a.flat(), b.flat());
        assert_ne!(a.flat(), c.flat());
    }

    #[test]
    fn fresh_seed_keeps_statistics() {
        let spec = RandomInputSpec::standard_gaussian(1);
        for seed in [1u64, 2, 3] {
            let pool = sample_pool(&spec, 200_000, derive_seed(5, Stream::Pool, seed)).unwrap();
            let (m, s) = mean_std(pool.flat());
            assert!(m.abs() < 0.01 && (s - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn design_maps_quartiles_to_normal_quantiles() {
        let spec = RandomInputSpec::standard_gaussian(1);
        let mapped = map_unit_points(&spec, &[vec![0.25], vec![0.75]]).unwrap();
        // Newton iteration on the forward cdf, independent of erfc_inv
        let mut z = 0.0f64;
        for _ in 0..50 {
            z -= (std_normal_cdf(z) - 0.75) / std_normal_pdf(z);
        }
        assert!((mapped[1][0] - z).abs() < 1e-12);
        assert!((mapped[0][0] + z).abs() < 1e-12);
        assert!((z - 0.6744897501960817).abs() < 1e-12);
    }

    #[test]
    fn initial_design_distinct_and_in_support() {
        let spec = RandomInputSpec::standard_gaussian(2);
        let design = initial_design(&spec, 12, 3).unwrap();
        assert_eq!(design.len(), 12);
        assert!(all_distinct(&design));
        let pi = std::f64::consts::PI;
        let ishi = RandomInputSpec::uniform(3, -pi, pi).unwrap();
        for d in [2, 5, 12, 40] {
            assert!(initial_design(&ishi, d, 11).unwrap().iter().all(|p| ishi.contains(p)));
        }
        assert!(initial_design(&spec, 1, 0).is_err());
    }

    fn min_pairwise(points: &[Vec<f64>]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.len() {
            for j in 0..i {
                let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
                best = best.min(d.sqrt());
            }
        }
        best
    }

    #[test]
    fn sobol_design_beats_worst_random_design() {
        let sobol = sobol_unit_points(2, 12, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let worst = (0..100)
            .map(|_| {
                let pts: Vec<Vec<f64>> = (0..12)
                    .map(|_| (0..2).map(|_| Open01.sample(&mut rng)).collect())
                    .collect();
                min_pairwise(&pts)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min_pairwise(&sobol) > worst);
    }

    #[test]
    fn mapped_design_matches_marginal_ks() {
        let spec = RandomInputSpec::standard_gaussian(2);
        let design = initial_design(&spec, 10_000, 5).unwrap();
        for k in 0..2 {
            let mut col: Vec<f64> = design.iter().map(|p| p[k]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len() as f64;
            let ks = col
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = std_normal_cdf(x);
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks <= 0.05, "ks = {ks}");
        }
    }

    #[test]
    fn derived_seeds_differ_by_stream_and_index() {
        let a = derive_seed(1, Stream::Pool, 0);
        assert_ne!(a, derive_seed(1, Stream::Pool, 1));
        assert_ne!(a, derive_seed(1, Stream::Optimizer, 0));
        assert_ne!(a, derive_seed(2, Stream::Pool, 0));
        assert_eq!(a, derive_seed(1, Stream::Pool, 0));
    }
}
