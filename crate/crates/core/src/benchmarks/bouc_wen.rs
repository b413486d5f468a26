//! Shear frame with Bouc-Wen hysteretic stories under harmonic forcing.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_dim, ModelFunction};
use crate::error::{Error, Result};

/// Structural and hysteresis parameters of an n-story shear frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BoucWenFrame {
    /// Initial interstory stiffness per story, N/m.
    pub stiffness: Vec<f64>,
    /// Floor mass per story, kg.
    pub mass: Vec<f64>,
    /// Post-yield to initial stiffness ratio.
    pub alpha: f64,
    pub exponent: f64,
    pub a: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Rayleigh damping ratio on the first two modes.
    pub damping_ratio: f64,
    /// Excitation length, s.
    pub duration: f64,
}

impl Default for BoucWenFrame {
    fn default() -> Self {
        let uy: f64 = 0.04;
        let n = 5.0;
        let g = 1.0 / (2.0 * uy.powf(n));
        Self {
            stiffness: vec![3.0e8, 2.8e8, 1.5e8],
            mass: vec![1e6; 3],
            alpha: 0.1,
            exponent: n,
            a: 1.0,
            gamma: g,
            eta: g,
            damping_ratio: 0.05,
            duration: 10.0,
        }
    }
}

/// Undamped natural frequencies (rad/s, ascending) and mass-normalized mode
/// shapes, one per column.
#[derive(Debug, Clone)]
pub struct LinearModes {
    pub frequencies: Vec<f64>,
    pub shapes: DMatrix<f64>,
}

impl BoucWenFrame {
    pub fn stories(&self) -> usize {
        self.stiffness.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stories();
        if n == 0 || self.mass.len() != n {
            return Err(Error::InvalidConfig("stiffness and mass must have the same nonzero length".into()));
        }
        if self.stiffness.iter().chain(&self.mass).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("stiffness and mass must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(self.exponent >= 1.0) || !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("invalid hysteresis parameters".into()));
        }
        if !(self.damping_ratio >= 0.0) {
            return Err(Error::InvalidConfig("damping ratio must be non-negative".into()));
        }
        Ok(())
    }

    /// Initial (elastic) tridiagonal stiffness matrix.
    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        let n = self.stories();
        let k = &self.stiffness;
        DMatrix::from_fn(n, n, |i, j| {
            let above = if i + 1 < n { k[i + 1] } else { 0.0 };
            if i == j {
                k[i] + above
            } else if j == i + 1 {
                -k[i + 1]
            } else if i == j + 1 {
                -k[i]
            } else {
                0.0
            }
        })
    }

    pub fn linear_modes(&self) -> Result<LinearModes> {
        self.validate()?;
        let n = self.stories();
        let inv_sqrt_m: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let k = self.stiffness_matrix();
        let a = DMatrix::from_fn(n, n, |i, j| inv_sqrt_m[i] * k[(i, j)] * inv_sqrt_m[j]);
        let eig = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
        let mut frequencies = Vec::with_capacity(n);
        let mut shapes = DMatrix::zeros(n, n);
        for (c, &p) in order.iter().enumerate() {
            let lam = eig.eigenvalues[p];
            if !(lam > 0.0) {
                return Err(Error::Domain(format!("non-positive stiffness eigenvalue {lam}")));
            }
            frequencies.push(lam.sqrt());
            for i in 0..n {
                shapes[(i, c)] = inv_sqrt_m[i] * eig.eigenvectors[(i, p)];
            }
        }
        Ok(LinearModes { frequencies, shapes })
    }

    pub fn linear_modal_frequencies(&self) -> Result<Vec<f64>> {
        Ok(self.linear_modes()?.frequencies)
    }

    /// Mass- and stiffness-proportional coefficients `(a0, a1)` giving the
    /// target damping ratio on modes 1 and 2 (mode 1 only for one story).
    pub fn rayleigh_coefficients(&self) -> Result<(f64, f64)> {
        let w = self.linear_modal_frequencies()?;
        let (w1, w2) = (w[0], *w.get(1).unwrap_or(&w[0]));
        let z = self.damping_ratio;
        Ok((2.0 * z * w1 * w2 / (w1 + w2), 2.0 * z / (w1 + w2)))
    }

    /// Integrates the 3n-state system `[x, x_dot, z]` from `initial` with
    /// classical RK4. `forcing(t, f)` fills the story loads; `observe` sees
    /// every accepted state including the initial one.
    pub fn integrate<F, O>(&self, initial: &[f64], dt: f64, forcing: F, mut observe: O) -> Result<()>
    where
        F: Fn(f64, &mut [f64]),
        O: FnMut(f64, &[f64]),
    {
        self.validate()?;
        let n = self.stories();
        if initial.len() != 3 * n {
            return Err(Error::DimensionMismatch { expected: 3 * n, got: initial.len() });
        }
        let steps = (self.duration / dt).round() as usize;
        if !(dt > 0.0) || steps == 0 || ((steps as f64) * dt - self.duration).abs() > 1e-9 * self.duration {
            return Err(Error::InvalidConfig(format!("time step {dt} does not divide {} s", self.duration)));
        }
        let (a0, a1) = self.rayleigh_coefficients()?;
        let sys = System { frame: self, a0, a1, integer_exponent: integer_power(self.exponent) };

        let dim = 3 * n;
        let mut s = initial.to_vec();
        let mut k1 = vec![0.0; dim];
        let mut k2 = vec![0.0; dim];
        let mut k3 = vec![0.0; dim];
        let mut k4 = vec![0.0; dim];
        let mut tmp = vec![0.0; dim];
        let mut f = vec![0.0; n];
        observe(0.0, &s);
        for step in 0..steps {
            let t = step as f64 * dt;
            let h = 0.5 * dt;
            forcing(t, &mut f);
            sys.rhs(&s, &f, &mut k1);
            forcing(t + h, &mut f);
            axpy(&s, h, &k1, &mut tmp);
            sys.rhs(&tmp, &f, &mut k2);
            axpy(&s, h, &k2, &mut tmp);
            sys.rhs(&tmp, &f, &mut k3);
            forcing(t + dt, &mut f);
            axpy(&s, dt, &k3, &mut tmp);
            sys.rhs(&tmp, &f, &mut k4);
            for i in 0..dim {
                s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t1 = (step + 1) as f64 * dt;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { time: t1 });
            }
            observe(t1, &s);
        }
        Ok(())
    }
}

fn integer_power(p: f64) -> Option<i32> {
    (p.fract() == 0.0 && p.abs() < 64.0).then_some(p as i32)
}

fn axpy(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

struct System<'a> {
    frame: &'a BoucWenFrame,
    a0: f64,
    a1: f64,
    integer_exponent: Option<i32>,
}

impl System<'_> {
    /// `v^(n-1)` for the hysteresis exponent n.
    fn pow_n1(&self, v: f64) -> f64 {
        match self.integer_exponent {
            Some(p) => v.powi(p - 1),
            None => v.powf(self.frame.exponent - 1.0),
        }
    }

    fn rhs(&self, s: &[f64], f: &[f64], out: &mut [f64]) {
        let fr = self.frame;
        let n = fr.stories();
        let (x, rest) = s.split_at(n);
        let (xd, z) = rest.split_at(n);
        let mut r_above = 0.0;
        let mut kxd_above = 0.0;
        for i in (0..n).rev() {
            let below = if i == 0 { 0.0 } else { x[i - 1] };
            let below_d = if i == 0 { 0.0 } else { xd[i - 1] };
            let v = x[i] - below;
            let vd = xd[i] - below_d;
            let r = fr.stiffness[i] * (fr.alpha * v + (1.0 - fr.alpha) * z[i]);
            // initial-stiffness product (K xd)_i = k_i vd_i - k_{i+1} vd_{i+1}
            let kxd = fr.stiffness[i] * vd;
            let damping = self.a0 * fr.mass[i] * xd[i] + self.a1 * (kxd - kxd_above);
            out[i] = xd[i];
            out[n + i] = (f[i] - damping - r + r_above) / fr.mass[i];
            let az = z[i].abs();
            let zn1 = self.pow_n1(az);
            out[2 * n + i] = fr.a * vd - fr.gamma * vd.abs() * zn1 * z[i] - fr.eta * zn1 * az * vd;
            r_above = r;
            kxd_above = kxd;
        }
    }
}

/// Default integration step, s.
pub const DEFAULT_DT: f64 = 0.002;

/// Maximum absolute interstory drift over the excitation for amplitudes
/// `x = (x1, x2, x3, x4)`.
pub fn bouc_wen_drift(x: &[f64], frame: &BoucWenFrame, dt: f64) -> Result<f64> {
    check_dim(x, 4)?;
    let n = frame.stories();
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let two_pi = 2.0 * std::f64::consts::PI;
    let forcing = |t: f64, f: &mut [f64]| {
        let g = x1 * (two_pi * t).sin() + x2 * (2.0 * two_pi * t).sin() + x3 * (4.0 * two_pi * t).cos()
            + x4 * (8.0 * two_pi * t).sin();
        for (fi, m) in f.iter_mut().zip(&frame.mass) {
            *fi = m / 6.0 * g;
        }
    };
    // per story: last two drifts, for parabolic refinement of sampled peaks
    let mut hist = vec![[0.0f64; 2]; n];
    let mut best = 0.0f64;
    let mut seen = 0usize;
    frame.integrate(&vec![0.0; 3 * n], dt, forcing, |_, s| {
        for i in 0..n {
            let v = s[i] - if i == 0 { 0.0 } else { s[i - 1] };
            best = best.max(v.abs());
            if seen >= 2 {
                best = best.max(refined_peak(hist[i][0], hist[i][1], v));
            }
            hist[i] = [hist[i][1], v];
        }
        seen += 1;
    })?;
    Ok(best)
}

/// Peak of `|v|` from a parabola through three equally spaced samples whose
/// middle one is a local extremum.
fn refined_peak(a: f64, b: f64, c: f64) -> f64 {
    let (a, b, c) = if b < 0.0 { (-a, -b, -c) } else { (a, b, c) };
    if !(b >= a && b >= c) {
        return 0.0;
    }
    let curv = a - 2.0 * b + c;
    if curv >= 0.0 {
        return b;
    }
    b - (c - a) * (c - a) / (8.0 * curv)
}

/// The frame benchmark as a model function of the four forcing amplitudes.
#[derive(Debug, Clone)]
pub struct BoucWenModel {
    pub frame: BoucWenFrame,
    pub dt: f64,
}

impl Default for BoucWenModel {
    fn default() -> Self {
        Self { frame: BoucWenFrame::default(), dt: DEFAULT_DT }
    }
}

impl ModelFunction for BoucWenModel {
    fn name(&self) -> &str {
        "bouc_wen"
    }

    fn dimension(&self) -> usize {
        4
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        bouc_wen_drift(x, &self.frame, self.dt)
    }
}
