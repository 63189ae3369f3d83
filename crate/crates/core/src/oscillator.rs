//! Oscillator parameters, damping regimes, phase-space state and time grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Relative tolerance used to snap (gamma, omega0) onto the critical line.
pub const REGIME_REL_TOL: f64 = 1e-9;

/// Damping coefficient and natural frequency of one oscillator channel,
/// i.e. `x'' + 2 gamma x' + omega0^2 x = F(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscParams<T = f64> {
    pub gamma: T,
    pub omega0: T,
}

impl<T: Real> OscParams<T> {
    pub fn new(gamma: T, omega0: T) -> Result<Self> {
        let p = Self { gamma, omega0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (g, w) = (self.gamma.value(), self.omega0.value());
        if !(g.is_finite() && w.is_finite()) || g < 0.0 || w <= 0.0 {
            return Err(Error::InvalidParams { gamma: g, omega0: w });
        }
        Ok(())
    }

    pub fn regime(&self) -> Result<DampingRegime<T>> {
        classify_regime(self, REGIME_REL_TOL)
    }

    pub fn to_f64(&self) -> OscParams<f64> {
        OscParams { gamma: self.gamma.value(), omega0: self.omega0.value() }
    }
}

impl<T: Real> OscParams<T> {
    /// Steady-state amplitude response `1/sqrt((w0^2 - w^2)^2 + (2 gamma w)^2)`.
    pub fn transfer_magnitude(&self, omega: f64) -> T {
        let detune = (self.omega0 * self.omega0).rsub(omega * omega);
        let damp = self.gamma * (2.0 * omega);
        (detune.sq() + damp.sq()).sqrt().recip_scaled(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingRegime<T = f64> {
    Underdamped { omega_d: T },
    Critical,
    Overdamped { sigma: T },
}

impl<T> DampingRegime<T> {
    pub fn name(&self) -> &'static str {
        match self {
            DampingRegime::Underdamped { .. } => "underdamped",
            DampingRegime::Critical => "critical",
            DampingRegime::Overdamped { .. } => "overdamped",
        }
    }
}

/// Classify a channel into its damping regime.
///
/// Returns `Critical` when `|gamma - omega0| <= rel_tol * max(gamma, omega0, 1)`.
/// The derived frequency is computed as `sqrt((w - g)(w + g))` to avoid
/// cancellation near the critical line.
pub fn classify_regime<T: Real>(p: &OscParams<T>, rel_tol: f64) -> Result<DampingRegime<T>> {
    p.validate()?;
    if !(rel_tol > 0.0 && rel_tol <= 1e-3) {
        return Err(Error::Invalid(format!("rel_tol {rel_tol} outside (0, 1e-3]")));
    }
    let (g, w) = (p.gamma.value(), p.omega0.value());
    let scale = g.max(w).max(1.0);
    if (g - w).abs() <= rel_tol * scale {
        return Ok(DampingRegime::Critical);
    }
    if g < w {
        let omega_d = ((p.omega0 - p.gamma) * (p.omega0 + p.gamma)).sqrt();
        Ok(DampingRegime::Underdamped { omega_d })
    } else {
        let sigma = ((p.gamma - p.omega0) * (p.gamma + p.omega0)).sqrt();
        Ok(DampingRegime::Overdamped { sigma })
    }
}

/// Phase-space state `(x, p = dx/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State2<T = f64> {
    pub x: T,
    pub p: T,
}

impl<T: Real> State2<T> {
    pub fn new(x: T, p: T) -> Self {
        Self { x, p }
    }

    pub fn zero() -> Self {
        Self { x: T::zero(), p: T::zero() }
    }
}

/// Strictly increasing observation instants normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Wrap instants that are already normalized.
    pub fn from_normalized(times: Vec<f64>) -> Result<Self> {
        check_increasing(&times)?;
        if times.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::Invalid("normalized times must lie in [0, 1]".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Empty("time grid"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("time grid"));
    }
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::Ordering { index: i + 1 });
        }
    }
    Ok(())
}

/// Affine map of `[t_1, t_N]` onto `[0, 1]`; a single instant maps to 0.
pub fn normalize_times(raw: &[f64]) -> Result<TimeGrid> {
    check_increasing(raw)?;
    let t0 = raw[0];
    let span = raw[raw.len() - 1] - t0;
    let times = if raw.len() == 1 {
        vec![0.0]
    } else {
        let mut v: Vec<f64> = raw.iter().map(|&t| (t - t0) / span).collect();
        let last = v.len() - 1;
        v[last] = 1.0;
        v
    };
    Ok(TimeGrid { times })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(g: f64, w: f64) -> OscParams {
        OscParams::new(g, w).unwrap()
    }

    #[test]
    fn regimes_of_reference_points() {
        assert_eq!(p(1.0, 1.0).regime().unwrap(), DampingRegime::Critical);
        assert_eq!(p(0.0, 1.0).regime().unwrap(), DampingRegime::Underdamped { omega_d: 1.0 });
        match p(2.0, 1.0).regime().unwrap() {
            DampingRegime::Overdamped { sigma } => assert!((sigma - 3f64.sqrt()).abs() < 1e-15),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(OscParams::new(-0.1, 1.0).is_err());
        assert!(OscParams::new(0.1, 0.0).is_err());
        assert!(OscParams::new(f64::NAN, 1.0).is_err());
        let raw = OscParams { gamma: -1.0, omega0: 1.0 };
        assert!(classify_regime(&raw, 1e-9).is_err());
    }

    #[test]
    fn rel_tol_range_enforced() {
        assert!(classify_regime(&p(1.0, 2.0), 0.0).is_err());
        assert!(classify_regime(&p(1.0, 2.0), 1e-2).is_err());
    }

    #[test]
    fn near_critical_snaps() {
        assert_eq!(p(1.0 + 1e-12, 1.0).regime().unwrap(), DampingRegime::Critical);
        assert!(matches!(p(1.0 + 1e-6, 1.0).regime().unwrap(), DampingRegime::Overdamped { .. }));
    }

    #[test]
    fn scale_consistency() {
        for &(g, w) in &[(0.3, 2.0), (2.0, 0.7), (1.5, 1.5)] {
            let base = p(g, w).regime().unwrap();
            for &c in &[0.5, 3.0, 40.0] {
                let scaled = p(c * g, c * w).regime().unwrap();
                assert_eq!(base.name(), scaled.name());
                match (base, scaled) {
                    (DampingRegime::Underdamped { omega_d: a }, DampingRegime::Underdamped { omega_d: b }) => {
                        assert!((b - c * a).abs() < 1e-12 * c)
                    }
                    (DampingRegime::Overdamped { sigma: a }, DampingRegime::Overdamped { sigma: b }) => {
                        assert!((b - c * a).abs() < 1e-12 * c)
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_times(&[3.0, 5.0, 7.0]).unwrap().times(), &[0.0, 0.5, 1.0]);
        assert_eq!(normalize_times(&[0.0, 1.0]).unwrap().times(), &[0.0, 1.0]);
        assert_eq!(normalize_times(&[42.0]).unwrap().times(), &[0.0]);
    }

    #[test]
    fn normalize_rejects_non_monotone() {
        assert_eq!(normalize_times(&[0.0, 2.0, 2.0]), Err(Error::Ordering { index: 2 }));
        assert!(normalize_times(&[1.0, 0.0]).is_err());
        assert!(normalize_times(&[]).is_err());
    }

    #[test]
    fn transfer_magnitude_peaks_near_resonance() {
        let q = p(0.1, 3.0);
        let at = |w: f64| q.transfer_magnitude(w);
        assert!(at(3.0) > at(2.0) && at(3.0) > at(4.0));
        assert!((at(0.0) - 1.0 / 9.0).abs() < 1e-15);
    }
}
