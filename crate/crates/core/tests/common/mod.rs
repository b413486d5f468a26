//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use alcdf::active_learning::{
    global_error, run_active_loop_observed, select_candidate, select_candidate_mov, select_threshold, AlConfig,
    ErrorProfile, Kernel, LearningMode, TailMode, WStar,
};
use alcdf::benchmarks::{bouc_wen_drift, Benchmark, BoucWenFrame, DEFAULT_DT};
use alcdf::distribution::ThreeFoldCdf;
use alcdf::gp::{BatchPrediction, DesignSet, FitOptions, GpSurrogate};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn smoke_config(b: Benchmark, mode: LearningMode, budget: usize, seed: u64) -> AlConfig {
    let (lo, hi, tail) = b.default_range();
    AlConfig { pool_size: 2000, budget, mode, tail, seed, ..AlConfig::with_range(lo, hi) }
}

// ---- candidate selection

fn random_pool(rng: &mut ChaCha8Rng, n: usize, y_min: f64, y_max: f64, shift: f64) -> BatchPrediction {
    let mut pred = BatchPrediction::default();
    for _ in 0..n {
        pred.mean.push(rng.gen_range(y_min - 3.0..y_max + 3.0) + shift);
        pred.std.push(if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.05..1.0) });
    }
    pred
}

fn in_band(m: f64, s: f64, c: &AlConfig) -> bool {
    m >= c.y_min - c.kbar * s && m <= c.y_max + c.kbar * s
}

/// Brute force: first index with the largest key among admissible points,
/// in band if possible.
fn selection_oracle(pred: &BatchPrediction, c: &AlConfig, skip: &[usize], key: impl Fn(usize) -> f64) -> (usize, bool) {
    for banded in [true, false] {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..pred.len() {
            if skip.contains(&i) || (banded && !in_band(pred.mean[i], pred.std[i], c)) {
                continue;
            }
            let v = key(i);
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        if let Some((i, _)) = best {
            return (i, !banded);
        }
    }
    unreachable!("pool has admissible points")
}

/// Compares both selectors with brute force on `pools` random pools of 1000
/// candidates. Returns the number of band fallbacks.
pub fn check_candidate_selection(pools: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fallbacks = 0;
    for pool in 0..pools {
        let (y_min, y_max) = (rng.gen_range(-3.0..0.0), rng.gen_range(0.5..3.0));
        let c = AlConfig { kbar: rng.gen_range(0.5..3.0), ..AlConfig::with_range(y_min, y_max) };
        // every fifth pool lies entirely outside the band
        let shift = if pool % 5 == 4 { 40.0 } else { 0.0 };
        let pred = random_pool(&mut rng, 1000, y_min, y_max, shift);
        let skip: Vec<usize> = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..1000)).collect();
        let y_star = rng.gen_range(y_min..y_max);

        let score = |i: usize| if pred.std[i] == 0.0 { 0.0 } else { phi(-(y_star - pred.mean[i]).abs() / pred.std[i]) };
        let want = selection_oracle(&pred, &c, &skip, score);
        let got = select_candidate(&pred, y_star, &c, 1.0, &skip).map_err(|e| e.to_string())?;
        if (got.index, got.band_fallback) != want {
            return Err(format!("pool {pool}: learning function picked {:?}, oracle {want:?}", (got.index, got.band_fallback)));
        }

        let want = selection_oracle(&pred, &c, &skip, |i| pred.std[i]);
        let got = select_candidate_mov(&pred, &c, &skip).map_err(|e| e.to_string())?;
        if (got.index, got.band_fallback) != want {
            return Err(format!("pool {pool}: max variance picked {:?}, oracle {want:?}", (got.index, got.band_fallback)));
        }
        fallbacks += usize::from(want.1);
    }
    Ok(fallbacks)
}

// ---- threshold selection

pub fn two_bumps(y: f64) -> f64 {
    let bump = |c: f64, h: f64, s: f64| h * (-0.5 * ((y - c) / s).powi(2)).exp();
    bump(0.2, 1.0, 0.025) + bump(0.55, 0.9, 0.25)
}

/// Brute-force argmax of the kernel average truncated and renormalized
/// to `[0, 1]`.
fn brute_force_localized_argmax(sigma: f64) -> f64 {
    let nodes = 4001;
    let h = 1.0 / (nodes - 1) as f64;
    let ys: Vec<f64> = (0..nodes).map(|i| i as f64 * h).collect();
    let mut best = (0.0, f64::MIN);
    for &c in ys.iter().step_by(2) {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &y) in ys.iter().enumerate() {
            let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            let k = (-0.5 * ((y - c) / sigma).powi(2)).exp();
            num += w * k * two_bumps(y);
            den += w * k;
        }
        if num / den > best.1 {
            best = (c, num / den);
        }
    }
    best.0
}

/// Thresholds picked on the two-bump profile by the Dirac kernel and by a
/// broad Gaussian kernel, each checked against brute force.
pub fn check_two_bumps() -> Result<(f64, f64), String> {
    let profile = ErrorProfile::new(&two_bumps, 0.0, 1.0);
    let dirac = select_threshold(&two_bumps, &profile, Kernel::Dirac);
    let peak = (0..=100_000).map(|i| i as f64 * 1e-5).fold(0.0, |b, y| if two_bumps(y) > two_bumps(b) { y } else { b });
    if (dirac - peak).abs() >= 2e-5 || (dirac - 0.2).abs() >= 0.01 {
        return Err(format!("dirac picked {dirac}, brute force {peak}"));
    }
    let sigma = 0.35;
    let gauss = select_threshold(&two_bumps, &profile, Kernel::FixedGaussian(sigma));
    let oracle = brute_force_localized_argmax(sigma);
    if (gauss - oracle).abs() >= 2e-3 || (gauss - 0.55).abs() >= (gauss - 0.2).abs() {
        return Err(format!("gaussian picked {gauss}, brute force {oracle}"));
    }
    if select_threshold(&two_bumps, &profile, Kernel::FixedGaussian(sigma)) != gauss {
        return Err("gaussian pick is not repeatable".into());
    }
    Ok((dirac, gauss))
}

// ---- error measure

pub fn synthetic_cdf(seed: u64) -> (ThreeFoldCdf, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(200..3000);
    let k = rng.gen_range(0.5..3.0);
    let loc = rng.gen_range(-1.0..1.0);
    let spread = rng.gen_range(0.05..0.8);
    let mut plus = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for _ in 0..n {
        let m: f64 = loc + rng.sample::<f64, _>(StandardNormal);
        let s = spread * rng.gen::<f64>();
        plus.push(m - k * s);
        mid.push(m);
        minus.push(m + k * s);
    }
    (ThreeFoldCdf::from_fold_values(plus, mid, minus).unwrap(), rng.gen_range(1.0..3.0))
}

/// `|W*(F) - W*(reflected F)|` and the largest single-cell contribution.
fn reflection_gap(cdf: &ThreeFoldCdf, c: &AlConfig, reflected_tail: TailMode) -> (f64, f64) {
    let r = AlConfig { tail: reflected_tail, ..AlConfig::with_range(-c.y_max, -c.y_min) };
    let a = global_error(cdf, c);
    let b = global_error(&cdf.reflected(), &r);
    let profile = ErrorProfile::new(&WStar::new(cdf, c.tail), c.y_min, c.y_max);
    let cell = profile.step() * profile.values().iter().cloned().fold(0.0, f64::max);
    ((a - b).abs(), cell)
}

/// Reflection check on synthetic CDFs for every tail mode. Returns the
/// largest gap as a fraction of one cell.
pub fn check_reflection_symmetry(instances: u64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let (cdf, half) = synthetic_cdf(seed);
        let base = AlConfig::with_range(-half, 0.7 * half);
        for (tail, reflected) in
            [(TailMode::Both, TailMode::Both), (TailMode::CdfOnly, TailMode::CcdfOnly), (TailMode::CcdfOnly, TailMode::CdfOnly)]
        {
            let (gap, cell) = reflection_gap(&cdf, &AlConfig { tail, ..base.clone() }, reflected);
            if gap > cell {
                return Err(format!("seed {seed}, {tail:?}: gap {gap} exceeds one cell {cell}"));
            }
            worst = worst.max(gap / cell);
        }
    }
    Ok(worst)
}

/// Runs a short loop for every benchmark and mode and checks the fold
/// ordering at 1000 random points per iteration. Returns the number of
/// iterations checked.
pub fn check_fold_ordering(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for b in Benchmark::ALL {
        let budget = if b == Benchmark::BoucWen { 3 } else { 8 };
        for mode in LearningMode::ALL {
            let cfg = smoke_config(b, mode, budget, seed);
            let mut failure = None;
            run_active_loop_observed(b.model().as_ref(), &b.input_spec(), &cfg, |view| {
                checked += 1;
                let (lo, hi) = (view.cdf.plus().support().0, view.cdf.minus().support().1);
                let pad = 0.1 * (hi - lo) + 1e-9;
                for _ in 0..1000 {
                    let y = rng.gen_range(lo - pad..hi + pad);
                    let f = view.cdf.eval(y);
                    let bounded = (0.0..=1.0).contains(&f.plus) && (0.0..=1.0).contains(&f.minus);
                    if failure.is_none() && !(f.plus >= f.mid && f.mid >= f.minus && bounded) {
                        failure = Some(format!("{} {mode:?} at {y}: {f:?}", b.name()));
                    }
                }
            })
            .map_err(|e| e.to_string())?;
            if let Some(f) = failure {
                return Err(f);
            }
        }
    }
    Ok(checked)
}

// ---- surrogate

/// Jittered grid in `dim` dimensions, so points stay well separated.
fn jittered_design(dim: usize, per_axis: usize, jitter: &[f64]) -> Vec<Vec<f64>> {
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|k| {
            let mut rem = k;
            (0..dim)
                .map(|a| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    i as f64 + 0.6 * (jitter[(k * dim + a) % jitter.len()] - 0.5)
                })
                .collect()
        })
        .collect()
}

/// Random 1-D and 2-D designs with smooth responses.
pub fn design_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=2, any::<u64>()).prop_flat_map(|(dim, _)| {
        let per_axis = if dim == 1 { 4usize..=9 } else { 2usize..=3 };
        per_axis.prop_flat_map(move |m| {
            let n = m.pow(dim as u32);
            (
                Just(dim),
                Just(m),
                prop::collection::vec(0.0f64..1.0, n * dim),
                prop::collection::vec(-3.0f64..3.0, n),
                0.2f64..3.0,
            )
                .prop_map(|(dim, m, jitter, amps, freq)| {
                    let x = jittered_design(dim, m, &jitter);
                    let y = x
                        .iter()
                        .zip(&amps)
                        .map(|(p, a)| p.iter().map(|v| (freq * v).sin()).sum::<f64>() + 0.3 * a)
                        .collect();
                    (x, y)
                })
        })
    })
}

/// Interpolation at the design and reversion to the prior far away.
pub fn check_interpolation_and_prior(x: &[Vec<f64>], y: &[f64]) -> Result<(), String> {
    let design = DesignSet::from_points(x, y).map_err(|e| e.to_string())?;
    let gp = GpSurrogate::fit(&design, &FitOptions::default()).map_err(|e| e.to_string())?;
    let range = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    for (p, obs) in gp.predict(x).map_err(|e| e.to_string())?.iter().zip(y) {
        if (p.mean - obs).abs() > 1e-6 * range {
            return Err(format!("mean {} vs observed {obs}", p.mean));
        }
        if p.std > 1e-4 * sd {
            return Err(format!("std {} at a design point", p.std));
        }
    }
    let far: Vec<f64> = gp.length_scales().iter().map(|l| 1e3 + 40.0 * l).collect();
    let p = gp.predict_one(&far).map_err(|e| e.to_string())?;
    if (p.mean - gp.trend()).abs() > 1e-9 * (1.0 + gp.trend().abs()) {
        return Err(format!("far mean {} vs trend {}", p.mean, gp.trend()));
    }
    let prior = gp.process_variance().sqrt();
    if (p.std - prior).abs() > 1e-4 * prior {
        return Err(format!("far std {} vs prior {prior}", p.std));
    }
    Ok(())
}

// ---- frame dynamics

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Harmonic components `(amplitude, angular frequency, phase)` of the ground
/// load, written as cosines.
fn harmonics(x: &[f64]) -> Vec<(f64, f64, f64)> {
    let h = -std::f64::consts::FRAC_PI_2;
    vec![(x[0], TWO_PI, h), (x[1], 2.0 * TWO_PI, h), (x[2], 4.0 * TWO_PI, 0.0), (x[3], 8.0 * TWO_PI, h)]
}

pub fn ground_load(x: &[f64], t: f64) -> f64 {
    harmonics(x).iter().map(|&(a, w, p)| a * (w * t + p).cos()).sum()
}

/// Response from rest of `q'' + 2 zeta w q' + w^2 q = a cos(W t + p)`.
pub fn sdof_from_rest(w: f64, zeta: f64, a: f64, big_w: f64, p: f64, t: f64) -> f64 {
    // particular solution: Re(a e^{i(Wt+p)} / (w^2 - W^2 + 2 i zeta w W))
    let (re, im) = (w * w - big_w * big_w, 2.0 * zeta * w * big_w);
    let den = re * re + im * im;
    let (gr, gi) = (a * re / den, -a * im / den);
    let part = |t: f64| gr * (big_w * t + p).cos() - gi * (big_w * t + p).sin();
    let part_d = |t: f64| -big_w * (gr * (big_w * t + p).sin() + gi * (big_w * t + p).cos());
    let wd = w * (1.0 - zeta * zeta).sqrt();
    let ca = -part(0.0);
    let cb = (-part_d(0.0) + zeta * w * ca) / wd;
    part(t) + (-zeta * w * t).exp() * (ca * (wd * t).cos() + cb * (wd * t).sin())
}

pub fn linear_frame() -> BoucWenFrame {
    BoucWenFrame { alpha: 1.0, ..BoucWenFrame::default() }
}

/// Floor displacements by modal superposition.
fn modal_displacements(frame: &BoucWenFrame, x: &[f64], t: f64) -> Vec<f64> {
    let modes = frame.linear_modes().unwrap();
    let (a0, a1) = frame.rayleigh_coefficients().unwrap();
    let n = frame.stories();
    let load_shape = DVector::from_iterator(n, frame.mass.iter().map(|m| m / 6.0));
    let mut u = vec![0.0; n];
    for (j, &w) in modes.frequencies.iter().enumerate() {
        let phi = modes.shapes.column(j);
        let gamma = phi.dot(&load_shape);
        let zeta = a0 / (2.0 * w) + a1 * w / 2.0;
        let q: f64 = harmonics(x).iter().map(|&(amp, om, p)| sdof_from_rest(w, zeta, gamma * amp, om, p, t)).sum();
        for i in 0..n {
            u[i] += phi[i] * q;
        }
    }
    u
}

pub const LINEAR_CASES: [[f64; 4]; 3] = [[1.0, 0.0, 0.0, 0.0], [0.3, -1.2, 0.8, 0.5], [-2.0, 1.0, -0.4, 1.5]];

/// Relative error of the linear frame against modal superposition: the
/// displacement history (over its peak) and the peak drift.
pub fn linear_limit_errors(x: &[f64]) -> (f64, f64) {
    let frame = linear_frame();
    let n = frame.stories();
    let forcing = |t: f64, f: &mut [f64]| {
        let g = ground_load(x, t);
        for (fi, m) in f.iter_mut().zip(&frame.mass) {
            *fi = m / 6.0 * g;
        }
    };
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut peak_exact = 0.0f64;
    frame
        .integrate(&vec![0.0; 3 * n], DEFAULT_DT, forcing, |t, s| {
            let u = modal_displacements(&frame, x, t);
            for i in 0..n {
                worst = worst.max((s[i] - u[i]).abs());
                scale = scale.max(u[i].abs());
                let below = if i == 0 { 0.0 } else { u[i - 1] };
                peak_exact = peak_exact.max((u[i] - below).abs());
            }
        })
        .unwrap();
    let drift = bouc_wen_drift(x, &frame, DEFAULT_DT).unwrap();
    (worst / scale, (drift - peak_exact).abs() / peak_exact)
}

pub const STEP_CASES: [[f64; 4]; 3] = [[1.0, 0.5, -0.5, 0.2], [-1.5, 2.0, 0.3, -1.0], [2.5, -0.8, 1.1, 0.4]];

/// Relative change of the nonlinear peak drift when the step is halved.
pub fn step_halving_change(x: &[f64]) -> f64 {
    let frame = BoucWenFrame::default();
    let coarse = bouc_wen_drift(x, &frame, DEFAULT_DT).unwrap();
    let fine = bouc_wen_drift(x, &frame, DEFAULT_DT / 2.0).unwrap();
    (coarse - fine).abs() / fine
}
