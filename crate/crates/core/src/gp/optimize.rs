//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

const MEMORY: usize = 6;
const GRAD_TOL: f64 = 1e-6;
const REL_F_TOL: f64 = 1e-9;
/// Relative objective noise tolerated by the approximate Wolfe test.
const F_NOISE: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 20;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns `(value, gradient)` or `None` where the
/// objective is undefined. Returns the best point and its value; the value
/// is `+inf` if `f` is undefined at `x0`.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], max_iter: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = match f(&x) {
        Some((v, g)) if v.is_finite() => (v, g),
        _ => return (x, f64::INFINITY),
    };
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);

    for _ in 0..max_iter {
        if g.iter().all(|v| v.abs() < GRAD_TOL * fx.abs().max(1.0)) {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = hist.back().map_or_else(
            || 1.0 / g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0),
            |(s, y, _)| dot(s, y) / dot(y, y),
        );
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Some((fn_, gn)) = f(&xn) {
                let armijo = fn_ <= fx + 1e-4 * step * slope;
                // near the optimum the decrease drowns in rounding; fall back
                // on the directional derivative
                let dn = dot(&gn, &dir);
                let approx_wolfe = fn_ <= fx + F_NOISE * fx.abs().max(1.0) && dn >= 0.9 * slope && dn <= -0.8 * slope;
                if fn_.is_finite() && (armijo || approx_wolfe) {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let done = (fx - fn_).abs() <= REL_F_TOL * fx.abs().max(1.0) && gn.iter().all(|v| v.abs() < 1e3 * GRAD_TOL);
        x = xn;
        fx = fn_;
        g = gn;
        if done {
            break;
        }
    }
    (x, fx)
}
