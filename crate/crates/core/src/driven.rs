//! Sinusoidally forced oscillator channels anchored at an observation time.
//!
//! A key (or value) trajectory is, per coordinate,
//!
//! ```text
//! k(t) = x_hom(t) + x_ss(t) + x_tr(t) + c
//! ```
//!
//! where `x_ss` is the steady-state response to the forcing, and `x_tr` is
//! the decaying free motion chosen so that `x_ss + x_tr` and its derivative
//! vanish at the anchor. The homogeneous part carries the initial state.

use crate::error::{Error, Result};
use crate::oscillator::{DampingRegime, OscParams, State2};
use crate::propagator::exp_at_regime;
use crate::real::Real;

/// `F(t) = sum_m P_m cos(w_m t) + Q_m sin(w_m t)` with vector amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingExpansion<T = f64> {
    pub freqs: Vec<f64>,
    /// `p[m][c]`: cosine amplitude of mode `m` on coordinate `c`.
    pub p: Vec<Vec<T>>,
    pub q: Vec<Vec<T>>,
}

impl<T: Real> ForcingExpansion<T> {
    pub fn new(freqs: Vec<f64>, p: Vec<Vec<T>>, q: Vec<Vec<T>>) -> Result<Self> {
        if p.len() != freqs.len() || q.len() != freqs.len() {
            return Err(Error::Shape(format!(
                "forcing has {} frequencies but {} / {} amplitude rows",
                freqs.len(),
                p.len(),
                q.len()
            )));
        }
        if freqs.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Invalid("forcing frequencies must be positive and finite".into()));
        }
        if let Some(first) = p.first() {
            let dim = first.len();
            if p.iter().chain(&q).any(|row| row.len() != dim) {
                return Err(Error::Shape("forcing amplitude rows differ in width".into()));
            }
        }
        if p.iter().chain(&q).flatten().any(|v| !v.value().is_finite()) {
            return Err(Error::NonFinite("forcing amplitudes"));
        }
        Ok(Self { freqs, p, q })
    }

    /// Zero modes on `dim` coordinates.
    pub fn empty() -> Self {
        Self { freqs: Vec::new(), p: Vec::new(), q: Vec::new() }
    }

    /// Forcing given in the anchor frame,
    /// `sum_m P_m cos(w_m (t - t_i)) + Q_m sin(w_m (t - t_i))`,
    /// converted to absolute time.
    pub fn from_anchor_frame(freqs: Vec<f64>, p_loc: Vec<Vec<T>>, q_loc: Vec<Vec<T>>, anchor: f64) -> Result<Self> {
        let mut p = Vec::with_capacity(freqs.len());
        let mut q = Vec::with_capacity(freqs.len());
        for ((w, pl), ql) in freqs.iter().zip(&p_loc).zip(&q_loc) {
            let (s, c) = (w * anchor).sin_cos();
            p.push(pl.iter().zip(ql).map(|(&a, &b)| a * c - b * s).collect());
            q.push(pl.iter().zip(ql).map(|(&a, &b)| a * s + b * c).collect());
        }
        if p.len() != freqs.len() || q.len() != freqs.len() {
            return Err(Error::Shape("anchor-frame forcing rows do not match frequencies".into()));
        }
        Self::new(freqs, p, q)
    }

    pub fn modes(&self) -> usize {
        self.freqs.len()
    }

    /// Forcing value on coordinate `c` at absolute time `t`.
    pub fn eval(&self, c: usize, t: f64) -> T {
        let mut acc = T::zero();
        for (m, w) in self.freqs.iter().enumerate() {
            let (s, co) = (w * t).sin_cos();
            acc += self.p[m][c] * co + self.q[m][c] * s;
        }
        acc
    }
}

/// Steady-state amplitudes, absolute and rotated into the anchor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState<T = f64> {
    pub freqs: Vec<f64>,
    pub c: Vec<Vec<T>>,
    pub d: Vec<Vec<T>>,
    pub c_hat: Vec<Vec<T>>,
    pub d_hat: Vec<Vec<T>>,
    pub anchor: f64,
}

impl<T: Real> SteadyState<T> {
    pub fn modes(&self) -> usize {
        self.freqs.len()
    }

    /// `(x_ss, x_ss')` on coordinate `c` at `s = t - anchor`.
    pub fn eval(&self, c: usize, s: f64) -> (T, T) {
        let mut x = T::zero();
        let mut v = T::zero();
        for (m, w) in self.freqs.iter().enumerate() {
            let (sn, co) = (w * s).sin_cos();
            let (a, b) = (self.c_hat[m][c], self.d_hat[m][c]);
            x += a * co + b * sn;
            v += (b * co - a * sn) * *w;
        }
        (x, v)
    }
}

/// Cramer solve of the per-mode 2x2 system, one set of amplitudes per
/// coordinate. Rotated fields are filled for anchor 0.
pub fn steady_state<T: Real>(params: &[OscParams<T>], f: &ForcingExpansion<T>) -> Result<SteadyState<T>> {
    let dim = params.len();
    let mut c = Vec::with_capacity(f.modes());
    let mut d = Vec::with_capacity(f.modes());
    for (m, &w) in f.freqs.iter().enumerate() {
        if f.p[m].len() != dim {
            return Err(Error::Shape(format!("forcing width {} vs {dim} channels", f.p[m].len())));
        }
        let mut cm = Vec::with_capacity(dim);
        let mut dm = Vec::with_capacity(dim);
        for (k, p) in params.iter().enumerate() {
            p.validate()?;
            let (g, w0) = (p.gamma.value(), p.omega0.value());
            if g == 0.0 && (w - w0).abs() <= 1e-12 * w0 {
                return Err(Error::Resonance { freq: w });
            }
            let detune = (p.omega0 * p.omega0) - w * w;
            let damp = p.gamma * (2.0 * w);
            let den = detune * detune + damp * damp;
            let (pp, qq) = (f.p[m][k], f.q[m][k]);
            cm.push((pp * detune - qq * damp) / den);
            dm.push((qq * detune + pp * damp) / den);
        }
        c.push(cm);
        d.push(dm);
    }
    Ok(SteadyState { freqs: f.freqs.clone(), c_hat: c.clone(), d_hat: d.clone(), c, d, anchor: 0.0 })
}

/// Fill the rotated amplitudes for a new anchor.
pub fn rotate_steady_state<T: Real>(ss: &SteadyState<T>, anchor: f64) -> SteadyState<T> {
    let mut out = ss.clone();
    for (m, w) in ss.freqs.iter().enumerate() {
        let (s, co) = (w * anchor).sin_cos();
        for k in 0..ss.c[m].len() {
            let (a, b) = (ss.c[m][k], ss.d[m][k]);
            out.c_hat[m][k] = a * co + b * s;
            out.d_hat[m][k] = b * co - a * s;
        }
    }
    out.anchor = anchor;
    out
}

/// Transient coefficients for one coordinate. Underdamped and critical use
/// `e^{-g s}(E cos(wd s) + F sin(wd s))` and `e^{-g s}(E + F s)`; overdamped
/// uses `U e^{-r1 s} + V e^{-r2 s}` with rates `r1 = g - sigma`, `r2 = g + sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransientCoeff<T = f64> {
    Underdamped { omega_d: T, e: T, f: T },
    Critical { e: T, f: T },
    Overdamped { r1: T, r2: T, u: T, v: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientCoeffs<T = f64> {
    pub coords: Vec<TransientCoeff<T>>,
}

/// Slow and fast overdamped decay rates; the slow one avoids the
/// `g - sigma` cancellation for `g >> omega0`.
pub(crate) fn overdamped_rates<T: Real>(p: &OscParams<T>, sigma: T) -> (T, T) {
    let fast = p.gamma + sigma;
    ((p.omega0 * p.omega0) / fast, fast)
}

/// Free-motion coefficients cancelling the steady state at the anchor.
pub fn transient_coeffs<T: Real>(params: &[OscParams<T>], ss: &SteadyState<T>, anchor: f64) -> Result<TransientCoeffs<T>> {
    let rotated;
    let ss = if ss.anchor == anchor {
        ss
    } else {
        rotated = rotate_steady_state(ss, anchor);
        &rotated
    };
    let mut coords = Vec::with_capacity(params.len());
    for (k, p) in params.iter().enumerate() {
        let (x, v) = if ss.modes() == 0 { (T::zero(), T::zero()) } else { ss.eval(k, 0.0) };
        let g = p.gamma;
        coords.push(match p.regime()? {
            DampingRegime::Underdamped { omega_d } => {
                let e = -x;
                TransientCoeff::Underdamped { omega_d, e, f: (g * e - v) / omega_d }
            }
            DampingRegime::Critical => {
                let e = -x;
                TransientCoeff::Critical { e, f: g * e - v }
            }
            DampingRegime::Overdamped { sigma } => {
                let (r1, r2) = overdamped_rates(p, sigma);
                let two_sigma = sigma * 2.0;
                let u = (-(r2 * x) - v) / two_sigma;
                let vv = (r1 * x + v) / two_sigma;
                TransientCoeff::Overdamped { r1, r2, u, v: vv }
            }
        });
    }
    Ok(TransientCoeffs { coords })
}

impl<T: Real> TransientCoeff<T> {
    /// `(x_tr, x_tr')` at `s` after the anchor.
    pub fn eval(&self, gamma: T, s: f64) -> (T, T) {
        match *self {
            TransientCoeff::Underdamped { omega_d, e, f } => {
                let decay = (gamma * -s).exp();
                let arg = omega_d * s;
                let (c, sn) = (arg.cos(), arg.sin());
                let x = decay * (e * c + f * sn);
                let v = decay * ((f * omega_d - gamma * e) * c - (gamma * f + omega_d * e) * sn);
                (x, v)
            }
            TransientCoeff::Critical { e, f } => {
                let decay = (gamma * -s).exp();
                let lin = e + f * s;
                (decay * lin, decay * (f - gamma * lin))
            }
            TransientCoeff::Overdamped { r1, r2, u, v } => {
                let e1 = (r1 * -s).exp();
                let e2 = (r2 * -s).exp();
                (u * e1 + v * e2, -(r1 * u * e1) - r2 * v * e2)
            }
        }
    }
}

/// Anchored oscillator trajectory on `params.len()` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyTrajectory<T = f64> {
    pub params: Vec<OscParams<T>>,
    pub z0: Vec<State2<T>>,
    pub forcing: ForcingExpansion<T>,
    pub offset: Vec<T>,
    pub anchor: f64,
}

impl<T: Real> KeyTrajectory<T> {
    pub fn new(
        params: Vec<OscParams<T>>,
        z0: Vec<State2<T>>,
        forcing: ForcingExpansion<T>,
        offset: Vec<T>,
        anchor: f64,
    ) -> Result<Self> {
        let dim = params.len();
        if dim == 0 {
            return Err(Error::Empty("trajectory channels"));
        }
        if z0.len() != dim || offset.len() != dim {
            return Err(Error::Shape(format!(
                "{dim} channels but {} initial states and {} offsets",
                z0.len(),
                offset.len()
            )));
        }
        if forcing.p.iter().any(|row| row.len() != dim) {
            return Err(Error::Shape("forcing width differs from channel count".into()));
        }
        if !anchor.is_finite() {
            return Err(Error::NonFinite("anchor"));
        }
        for p in &params {
            p.validate()?;
        }
        Ok(Self { params, z0, forcing, offset, anchor })
    }

    /// Undriven trajectory with zero offset.
    pub fn free(params: Vec<OscParams<T>>, z0: Vec<State2<T>>, anchor: f64) -> Result<Self> {
        let dim = params.len();
        Self::new(params, z0, ForcingExpansion::empty(), vec![T::zero(); dim], anchor)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Regimes, steady state and transient coefficients, computed once.
    pub fn prepare(&self) -> Result<PreparedTrajectory<T>> {
        let regimes = self.params.iter().map(|p| p.regime()).collect::<Result<Vec<_>>>()?;
        let ss = if self.forcing.modes() == 0 {
            None
        } else {
            let ss = steady_state(&self.params, &self.forcing)?;
            let ss = rotate_steady_state(&ss, self.anchor);
            let tc = transient_coeffs(&self.params, &ss, self.anchor)?;
            Some((ss, tc))
        };
        Ok(PreparedTrajectory { key: self.clone(), regimes, driven: ss })
    }
}

/// A trajectory with its per-channel closed-form data precomputed.
#[derive(Debug, Clone)]
pub struct PreparedTrajectory<T = f64> {
    pub key: KeyTrajectory<T>,
    pub regimes: Vec<DampingRegime<T>>,
    pub driven: Option<(SteadyState<T>, TransientCoeffs<T>)>,
}

impl<T: Real> PreparedTrajectory<T> {
    fn check_time(&self, t: f64) -> Result<f64> {
        let s = t - self.key.anchor;
        if !(s >= 0.0) {
            return Err(Error::Causality { t, anchor: self.key.anchor });
        }
        Ok(s)
    }

    /// Steady-state plus transient part and its derivative.
    pub fn particular(&self, t: f64) -> Result<(Vec<T>, Vec<T>)> {
        let s = self.check_time(t)?;
        Ok(self.particular_at_offset(s))
    }

    /// Particular part at `s = t - anchor` without the causality check. The
    /// closed form is analytic in `s`, so this is also defined for `s < 0`,
    /// which central differences at the anchor rely on.
    pub fn particular_at_offset(&self, s: f64) -> (Vec<T>, Vec<T>) {
        let dim = self.key.dim();
        let mut x = vec![T::zero(); dim];
        let mut v = vec![T::zero(); dim];
        if let Some((ss, tc)) = &self.driven {
            for k in 0..dim {
                let (xs, vs) = ss.eval(k, s);
                let (xt, vt) = tc.coords[k].eval(self.key.params[k].gamma, s);
                x[k] = xs + xt;
                v[k] = vs + vt;
            }
        }
        (x, v)
    }

    /// Position and velocity of every channel at absolute time `t`.
    pub fn eval_with_derivative(&self, t: f64) -> Result<(Vec<T>, Vec<T>)> {
        let s = self.check_time(t)?;
        let (mut x, mut v) = self.particular(t)?;
        for k in 0..self.key.dim() {
            let m = exp_at_regime(&self.key.params[k], self.regimes[k], T::cst(s));
            let z = m.apply(self.key.z0[k]);
            x[k] = x[k] + z.x + self.key.offset[k];
            v[k] = v[k] + z.p;
        }
        Ok((x, v))
    }

    pub fn eval(&self, t: f64) -> Result<Vec<T>> {
        if t == self.key.anchor {
            // exact anchoring
            return Ok((0..self.key.dim()).map(|k| self.key.z0[k].x + self.key.offset[k]).collect());
        }
        Ok(self.eval_with_derivative(t)?.0)
    }
}

/// Position of every channel at `t >= anchor`.
pub fn eval_trajectory<T: Real>(k: &KeyTrajectory<T>, t: f64) -> Result<Vec<T>> {
    if t < k.anchor {
        return Err(Error::Causality { t, anchor: k.anchor });
    }
    k.prepare()?.eval(t)
}
