//! Homogeneous flow `e^{At}` of `x'' + 2 gamma x' + omega0^2 x = 0` written as
//! `z' = A z` with `A = [[0, 1], [-omega0^2, -2 gamma]]`.

use crate::error::{Error, Result};
use crate::oscillator::{DampingRegime, OscParams, State2};
use crate::real::Real;

/// Below this `|omega_d t|` (or `|sigma t|`) the ratio `sin(x)/x` uses a series.
const SERIES_SWITCH: f64 = 1e-4;
/// Above this `sigma t` the overdamped hyperbolics are formed from paired exponentials.
const PAIRED_EXP_SWITCH: f64 = 20.0;

/// Entries of a 2x2 flow matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator<T = f64> {
    pub m11: T,
    pub m12: T,
    pub m21: T,
    pub m22: T,
}

impl<T: Real> Propagator<T> {
    pub fn identity() -> Self {
        Self { m11: T::one(), m12: T::zero(), m21: T::zero(), m22: T::one() }
    }

    pub fn det(&self) -> T {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn apply(&self, z: State2<T>) -> State2<T> {
        State2 { x: self.m11 * z.x + self.m12 * z.p, p: self.m21 * z.x + self.m22 * z.p }
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            m11: self.m11 * rhs.m11 + self.m12 * rhs.m21,
            m12: self.m11 * rhs.m12 + self.m12 * rhs.m22,
            m21: self.m21 * rhs.m11 + self.m22 * rhs.m21,
            m22: self.m21 * rhs.m12 + self.m22 * rhs.m22,
        }
    }
}

impl Propagator<f64> {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.m11 - other.m11,
            self.m12 - other.m12,
            self.m21 - other.m21,
            self.m22 - other.m22,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
    }
}

/// `sin(x)/x`, with a 3-term series near zero.
fn sinc<T: Real>(x: T) -> T {
    if x.value().abs() < SERIES_SWITCH {
        let x2 = x * x;
        (x2 * (1.0 / 120.0) - 1.0 / 6.0) * x2 + 1.0
    } else {
        x.sin() / x
    }
}

/// `sinh(x)/x`, with a 3-term series near zero.
fn sinhc<T: Real>(x: T) -> T {
    if x.value().abs() < SERIES_SWITCH {
        let x2 = x * x;
        (x2 * (1.0 / 120.0) + 1.0 / 6.0) * x2 + 1.0
    } else {
        x.sinh() / x
    }
}

/// Closed-form `e^{At}` dispatched on the damping regime.
#[allow(non_snake_case)]
pub fn exp_At<T: Real>(p: &OscParams<T>, t: T) -> Result<Propagator<T>> {
    let regime = p.regime()?;
    if !(t.value() >= 0.0) {
        return Err(Error::Invalid(format!("propagation time must be >= 0, got {}", t.value())));
    }
    Ok(exp_at_regime(p, regime, t))
}

/// Same as [`exp_At`] with a precomputed regime.
pub fn exp_at_regime<T: Real>(p: &OscParams<T>, regime: DampingRegime<T>, t: T) -> Propagator<T> {
    let g = p.gamma;
    let w2 = p.omega0 * p.omega0;
    match regime {
        DampingRegime::Underdamped { omega_d } => {
            let decay = (-g * t).exp();
            let arg = omega_d * t;
            let c = arg.cos();
            // sin(omega_d t)/omega_d
            let s = sinc(arg) * t;
            Propagator {
                m11: decay * (c + g * s),
                m12: decay * s,
                m21: -decay * w2 * s,
                m22: decay * (c - g * s),
            }
        }
        DampingRegime::Critical => {
            let decay = (-g * t).exp();
            let gt = g * t;
            Propagator {
                m11: decay * (gt + 1.0),
                m12: decay * t,
                m21: -decay * g * gt,
                m22: decay * gt.rsub(1.0),
            }
        }
        DampingRegime::Overdamped { sigma } => {
            let arg = sigma * t;
            let (ch, sh) = if arg.value() > PAIRED_EXP_SWITCH {
                // e^{-g t} cosh(sigma t) and e^{-g t} sinh(sigma t)/sigma
                let slow = (-(g - sigma) * t).exp();
                let fast = (-(g + sigma) * t).exp();
                ((slow + fast) * 0.5, (slow - fast) / (sigma * 2.0))
            } else {
                let decay = (-g * t).exp();
                (decay * arg.cosh(), decay * sinhc(arg) * t)
            };
            Propagator { m11: ch + g * sh, m12: sh, m21: -w2 * sh, m22: ch - g * sh }
        }
    }
}

/// `exp_At(p, dt) * z0`.
pub fn propagate<T: Real>(z0: State2<T>, p: &OscParams<T>, dt: T) -> Result<State2<T>> {
    Ok(exp_At(p, dt)?.apply(z0))
}

/// Generic 2x2 matrix exponential `e^{A t}` by scaling and squaring with a
/// Taylor core. Test-only reference for the closed forms.
pub fn expm_oracle(a11: f64, a12: f64, a21: f64, a22: f64, t: f64) -> Result<Propagator<f64>> {
    let entries = [a11, a12, a21, a22, t];
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expm_oracle input"));
    }
    let b = [a11 * t, a12 * t, a21 * t, a22 * t];
    let norm = (b[0].abs() + b[1].abs()).max(b[2].abs() + b[3].abs());
    if norm > 700.0 {
        return Err(Error::Magnitude(norm));
    }
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let m = Propagator { m11: b[0] * scale, m12: b[1] * scale, m21: b[2] * scale, m22: b[3] * scale };
    // Taylor series to 24 terms; with ||m|| <= 1/4 the remainder is < 1e-30.
    let mut sum = Propagator::<f64>::identity();
    let mut term = Propagator::<f64>::identity();
    for k in 1..=24 {
        term = term.compose(&m);
        let inv = 1.0 / k as f64;
        term = Propagator { m11: term.m11 * inv, m12: term.m12 * inv, m21: term.m21 * inv, m22: term.m22 * inv };
        sum = Propagator {
            m11: sum.m11 + term.m11,
            m12: sum.m12 + term.m12,
            m21: sum.m21 + term.m21,
            m22: sum.m22 + term.m22,
        };
    }
    for _ in 0..squarings {
        sum = sum.compose(&sum);
    }
    Ok(sum)
}

/// `A` for an oscillator channel, as `(a11, a12, a21, a22)`.
pub fn generator(p: &OscParams<f64>) -> (f64, f64, f64, f64) {
    (0.0, 1.0, -p.omega0 * p.omega0, -2.0 * p.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn p(g: f64, w: f64) -> OscParams {
        OscParams::new(g, w).unwrap()
    }

    #[test]
    fn identity_at_zero() {
        let m = exp_At(&p(0.3, 2.0), 0.0).unwrap();
        assert!(m.max_abs_diff(&Propagator::identity()) < 1e-15);
    }

    #[test]
    fn quarter_period_rotation() {
        let m = exp_At(&p(0.0, 1.0), FRAC_PI_2).unwrap();
        let want = Propagator { m11: 0.0, m12: 1.0, m21: -1.0, m22: 0.0 };
        assert!(m.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn critical_jordan_block() {
        let m = exp_At(&p(1.0, 1.0), 1.0).unwrap();
        let e = (-1.0f64).exp();
        let want = Propagator { m11: 2.0 * e, m12: e, m21: -e, m22: 0.0 };
        assert!(m.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn underdamped_matches_oracle() {
        let q = p(0.5, 1.5);
        let (a, b, c, d) = generator(&q);
        let m = exp_At(&q, 0.7).unwrap();
        let o = expm_oracle(a, b, c, d, 0.7).unwrap();
        assert!(m.max_abs_diff(&o) < 1e-10);
    }

    #[test]
    fn overdamped_matches_oracle() {
        let q = p(2.0, 1.0);
        let (a, b, c, d) = generator(&q);
        let m = exp_At(&q, 0.5).unwrap();
        let o = expm_oracle(a, b, c, d, 0.5).unwrap();
        assert!(m.max_abs_diff(&o) < 1e-10);
    }

    #[test]
    fn oracle_trivial_cases() {
        let z = expm_oracle(0.0, 0.0, 0.0, 0.0, 3.0).unwrap();
        assert!(z.max_abs_diff(&Propagator::identity()) == 0.0);
        let d = expm_oracle(-1.0, 0.0, 0.0, -2.0, 1.0).unwrap();
        let want = Propagator { m11: (-1.0f64).exp(), m12: 0.0, m21: 0.0, m22: (-2.0f64).exp() };
        assert!(d.max_abs_diff(&want) < 1e-15);
        assert!(matches!(expm_oracle(1000.0, 0.0, 0.0, 0.0, 1.0), Err(Error::Magnitude(_))));
    }

    #[test]
    fn propagate_examples() {
        let z = propagate(State2::new(1.0, 0.0), &p(0.0, 1.0), 2.0 * PI).unwrap();
        assert!((z.x - 1.0).abs() < 1e-14 && z.p.abs() < 1e-14);
        let z = propagate(State2::zero(), &p(0.4, 0.9), 3.3).unwrap();
        assert_eq!(z, State2::zero());
    }

    #[test]
    fn negative_time_rejected() {
        assert!(exp_At(&p(0.1, 1.0), -1e-3).is_err());
    }

    #[test]
    fn large_sigma_t_stays_finite() {
        let q = p(400.0, 1.0);
        let m = exp_At(&q, 5.0).unwrap();
        for v in [m.m11, m.m12, m.m21, m.m22] {
            assert!(v.is_finite());
        }
        // m11 = ((sigma + g) e^{-(g - sigma) t} + (sigma - g) e^{-(g + sigma) t}) / (2 sigma)
        let sigma = (400.0f64 * 400.0 - 1.0).sqrt();
        let slow = (-(400.0 - sigma) * 5.0).exp();
        let want = (sigma + 400.0) * slow / (2.0 * sigma);
        assert!((m.m11 - want).abs() < 1e-12);
    }

    #[test]
    fn sinc_series_continuity() {
        for &x in &[0.99e-4, 1.01e-4] {
            assert!((sinc(x) - x.sin() / x).abs() < 2e-16);
            assert!((sinhc(x) - x.sinh() / x).abs() < 2e-16);
        }
    }
}
