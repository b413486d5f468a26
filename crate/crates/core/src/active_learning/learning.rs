//! Candidate scoring and selection.

use crate::error::{Error, Result};
use crate::gp::{BatchPrediction, GpSurrogate};
use crate::sampling::std_normal_cdf;

use super::config::AlConfig;

/// Std at or below `GUARD * output_scale` counts as zero.
pub const ZERO_STD_GUARD: f64 = 1e-12;

/// Misclassification probability `Phi(-|y* - mean| / std)`, or 0 when the
/// std vanishes.
pub fn learning_score_value(mean: f64, std: f64, y_star: f64, output_scale: f64) -> f64 {
    if std <= ZERO_STD_GUARD * output_scale {
        return 0.0;
    }
    std_normal_cdf(-(y_star - mean).abs() / std)
}

/// [`learning_score_value`] at a single input.
pub fn learning_score(x: &[f64], y_star: f64, surrogate: &GpSurrogate) -> Result<f64> {
    let p = surrogate.predict_one(x)?;
    Ok(learning_score_value(p.mean, p.std, y_star, surrogate.output_scale()))
}

/// Chosen pool index and whether the band constraint had to be dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub band_fallback: bool,
}

fn in_band(mean: f64, std: f64, config: &AlConfig) -> bool {
    mean >= config.y_min - config.kbar * std && mean <= config.y_max + config.kbar * std
}

/// Ranks candidates by `key` (larger is better, first index wins ties)
/// among in-band points, or among all points if none is in band.
fn argmax_banded<K>(pred: &BatchPrediction, config: Option<&AlConfig>, skip: &[usize], key: K) -> Result<Selection>
where
    K: Fn(usize) -> f64,
{
    if pred.is_empty() {
        return Err(Error::EmptyPool);
    }
    let pick = |banded: bool| {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..pred.len() {
            if skip.contains(&i) {
                continue;
            }
            if let (true, Some(c)) = (banded, config) {
                if !in_band(pred.mean[i], pred.std[i], c) {
                    continue;
                }
            }
            let v = key(i);
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    };
    if config.is_some() {
        if let Some(index) = pick(true) {
            return Ok(Selection { index, band_fallback: false });
        }
        log::warn!("no candidate inside the output band; selecting without the band constraint");
    }
    match pick(false) {
        Some(index) => Ok(Selection { index, band_fallback: config.is_some() }),
        None => Err(Error::EmptyPool),
    }
}

/// Maximizes the learning score for threshold `y_star` subject to the band
/// `mean in [y_min - k std, y_max + k std]`. Candidates listed in `skip`
/// are ignored.
///
/// Ranking uses the standardized distance `|y* - mean| / std`, which orders
/// candidates exactly as the score does but does not underflow far out.
pub fn select_candidate(
    pred: &BatchPrediction,
    y_star: f64,
    config: &AlConfig,
    output_scale: f64,
    skip: &[usize],
) -> Result<Selection> {
    argmax_banded(pred, Some(config), skip, |i| neg_distance(pred, i, y_star, output_scale))
}

/// Unconstrained version used by the conventional baseline.
pub fn select_candidate_unconstrained(
    pred: &BatchPrediction,
    y_star: f64,
    output_scale: f64,
    skip: &[usize],
) -> Result<Selection> {
    argmax_banded(pred, None, skip, |i| neg_distance(pred, i, y_star, output_scale))
}

fn neg_distance(pred: &BatchPrediction, i: usize, y_star: f64, output_scale: f64) -> f64 {
    let s = pred.std[i];
    if s <= ZERO_STD_GUARD * output_scale {
        return f64::NEG_INFINITY;
    }
    -(y_star - pred.mean[i]).abs() / s
}

/// Maximum predictive std under the same band constraint.
pub fn select_candidate_mov(pred: &BatchPrediction, config: &AlConfig, skip: &[usize]) -> Result<Selection> {
    argmax_banded(pred, Some(config), skip, |i| pred.std[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(y_min: f64, y_max: f64) -> AlConfig {
        AlConfig::with_range(y_min, y_max)
    }

    #[test]
    fn score_examples() {
        assert_eq!(learning_score_value(1.0, 0.5, 1.0, 1.0), 0.5);
        assert!((learning_score_value(0.0, 0.5, 1.0, 1.0) - 0.022750131948179207).abs() < 1e-15);
        assert_eq!(learning_score_value(1.0, 0.0, 1.0, 1.0), 0.0);
        assert_eq!(learning_score_value(3.0, 0.0, 1.0, 1.0), 0.0);
        assert_eq!(learning_score_value(3.0, 1e-13, 1.0, 1.0), 0.0);
    }

    #[test]
    fn closer_candidate_wins() {
        let pred = BatchPrediction { mean: vec![0.5, 0.5 + 5.0 * 0.2], std: vec![0.2, 0.2] };
        let s = select_candidate(&pred, 0.5, &cfg(-5.0, 5.0), 1.0, &[]).unwrap();
        assert_eq!(s, Selection { index: 0, band_fallback: false });
    }

    #[test]
    fn out_of_band_falls_back() {
        let pred = BatchPrediction { mean: vec![10.0, 20.0], std: vec![0.1, 0.2] };
        let s = select_candidate(&pred, 0.0, &cfg(-1.0, 1.0), 1.0, &[]).unwrap();
        assert!(s.band_fallback);
        assert_eq!(s.index, 0);
        let m = select_candidate_mov(&pred, &cfg(-1.0, 1.0), &[]).unwrap();
        assert!(m.band_fallback);
        assert_eq!(m.index, 1);
    }

    #[test]
    fn band_excludes_better_outsider() {
        // index 1 scores higher but lies outside the band
        let pred = BatchPrediction { mean: vec![0.0, 3.0], std: vec![0.1, 0.5] };
        let s = select_candidate(&pred, 2.0, &cfg(-1.0, 1.0), 1.0, &[]).unwrap();
        assert_eq!(s, Selection { index: 0, band_fallback: false });
    }

    #[test]
    fn mov_examples() {
        let pred = BatchPrediction { mean: vec![0.0; 3], std: vec![0.1, 0.9, 0.5] };
        assert_eq!(select_candidate_mov(&pred, &cfg(-1.0, 1.0), &[]).unwrap().index, 1);
        assert_eq!(select_candidate_mov(&pred, &cfg(-1.0, 1.0), &[1]).unwrap().index, 2);
        let zero = BatchPrediction { mean: vec![0.0; 3], std: vec![0.0; 3] };
        assert_eq!(select_candidate_mov(&zero, &cfg(-1.0, 1.0), &[]).unwrap().index, 0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pred = BatchPrediction { mean: vec![1.0, 0.0, 1.0], std: vec![0.3, 0.3, 0.3] };
        assert_eq!(select_candidate(&pred, 1.0, &cfg(-2.0, 2.0), 1.0, &[]).unwrap().index, 0);
        assert_eq!(select_candidate(&pred, 1.0, &cfg(-2.0, 2.0), 1.0, &[0]).unwrap().index, 2);
    }

    #[test]
    fn empty_pool_errors() {
        let e = BatchPrediction::default();
        assert!(matches!(select_candidate(&e, 0.0, &cfg(0.0, 1.0), 1.0, &[]), Err(Error::EmptyPool)));
        assert!(matches!(select_candidate_mov(&e, &cfg(0.0, 1.0), &[]), Err(Error::EmptyPool)));
    }
}
