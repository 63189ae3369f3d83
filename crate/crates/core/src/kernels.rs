//! Exponential-trigonometric integrals over a window `[0, delta]`.
//!
//! Everything reduces to the complex integrals
//!
//! ```text
//! E0(z) = int_0^delta e^{-z s} ds,      E1(z) = int_0^delta s e^{-z s} ds,
//! ```
//!
//! with `z = gamma - i lambda`, so that `C = Re E0`, `S = Im E0`,
//! `tC = Re E1`, `tS = Im E1`. For `|z delta| < 1/2` both are evaluated by
//! their power series, which covers the `lambda -> 0`, `gamma -> 0` and
//! equal-frequency limits without a separate branch. Products of two
//! trigonometric factors go through product-to-sum on `C`/`S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

const SERIES_RADIUS: f64 = 0.5;
const SERIES_TERMS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IKind {
    /// `cos(l1 s) cos(l2 s)`
    Cc,
    /// `sin(l1 s) sin(l2 s)`
    Ss,
    /// `sin(l1 s) cos(l2 s)`
    Sc,
    /// `cos(l1 s) sin(l2 s)`
    Cs,
}

impl IKind {
    pub const ALL: [IKind; 4] = [IKind::Cc, IKind::Ss, IKind::Sc, IKind::Cs];
}

/// Window length, decay and the two angular frequencies of a kernel call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelArgs {
    pub delta: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl KernelArgs {
    pub fn new(delta: f64, gamma: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(delta > 0.0) || !(gamma >= 0.0) || !lambda1.is_finite() || !lambda2.is_finite() {
            return Err(Error::Invalid(format!(
                "kernel args require delta > 0, gamma >= 0 (delta={delta}, gamma={gamma})"
            )));
        }
        Ok(Self { delta, gamma, lambda1, lambda2 })
    }

    pub fn i(&self, kind: IKind) -> f64 {
        kernel_i(kind, self.delta, self.gamma, self.lambda1, self.lambda2)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cx<T> {
    re: T,
    im: T,
}

impl<T: Real> Cx<T> {
    fn mul(self, o: Self) -> Self {
        Cx { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }

    fn div(self, o: Self) -> Self {
        let den = o.re * o.re + o.im * o.im;
        Cx { re: (self.re * o.re + self.im * o.im) / den, im: (self.im * o.re - self.re * o.im) / den }
    }
}

/// `(phi1(w), phi2(w))` with `phi1 = (1 - e^{-w})/w` and
/// `phi2 = (1 - e^{-w}(1 + w))/w^2`, where `w = a - i b`.
fn phi12<T: Real>(a: T, b: T) -> (Cx<T>, Cx<T>) {
    let (av, bv) = (a.value(), b.value());
    if (av * av + bv * bv).sqrt() < SERIES_RADIUS {
        // phi1 = sum (-w)^k / (k+1)!,   phi2 = sum (-w)^k / (k! (k+2))
        let mw = Cx { re: -a, im: b };
        let mut pow = Cx { re: T::one(), im: T::zero() };
        let mut fact = 1.0f64;
        let mut p1 = Cx { re: T::zero(), im: T::zero() };
        let mut p2 = Cx { re: T::zero(), im: T::zero() };
        for k in 0..SERIES_TERMS {
            if k > 0 {
                pow = pow.mul(mw);
                fact *= k as f64;
            }
            let c1 = 1.0 / (fact * (k as f64 + 1.0));
            let c2 = 1.0 / (fact * (k as f64 + 2.0));
            p1 = Cx { re: p1.re + pow.re * c1, im: p1.im + pow.im * c1 };
            p2 = Cx { re: p2.re + pow.re * c2, im: p2.im + pow.im * c2 };
        }
        (p1, p2)
    } else {
        // e^{-w} = e^{-a} (cos b + i sin b)
        let mag = (-a).exp();
        let ew = Cx { re: mag * b.cos(), im: mag * b.sin() };
        let w = Cx { re: a, im: -b };
        let one_minus = Cx { re: ew.re.rsub(1.0), im: -ew.im };
        let p1 = one_minus.div(w);
        let ew1w = ew.mul(Cx { re: a + 1.0, im: -b });
        let num2 = Cx { re: ew1w.re.rsub(1.0), im: -ew1w.im };
        let p2 = num2.div(w.mul(w));
        (p1, p2)
    }
}

/// `(C, S)` = `int_0^delta e^{-gamma s} (cos, sin)(lambda s) ds`.
pub fn kernel_cs_pair<T: Real>(delta: T, gamma: T, lambda: T) -> (T, T) {
    let (p1, _) = phi12(gamma * delta, lambda * delta);
    (p1.re * delta, p1.im * delta)
}

/// `(tC, tS)` = `int_0^delta s e^{-gamma s} (cos, sin)(lambda s) ds`.
pub fn kernel_t_pair<T: Real>(delta: T, gamma: T, lambda: T) -> (T, T) {
    let (_, p2) = phi12(gamma * delta, lambda * delta);
    let d2 = delta * delta;
    (p2.re * d2, p2.im * d2)
}

/// All four of `C, S, tC, tS` from one series/exponential evaluation.
pub fn kernel_all<T: Real>(delta: T, gamma: T, lambda: T) -> [T; 4] {
    let (p1, p2) = phi12(gamma * delta, lambda * delta);
    let d2 = delta * delta;
    [p1.re * delta, p1.im * delta, p2.re * d2, p2.im * d2]
}

pub fn kernel_c<T: Real>(delta: T, gamma: T, lambda: T) -> T {
    kernel_cs_pair(delta, gamma, lambda).0
}

pub fn kernel_s<T: Real>(delta: T, gamma: T, lambda: T) -> T {
    kernel_cs_pair(delta, gamma, lambda).1
}

pub fn kernel_tc<T: Real>(delta: T, gamma: T, lambda: T) -> T {
    kernel_t_pair(delta, gamma, lambda).0
}

pub fn kernel_ts<T: Real>(delta: T, gamma: T, lambda: T) -> T {
    kernel_t_pair(delta, gamma, lambda).1
}

/// The four product kernels `[I_cc, I_ss, I_sc, I_cs]` for one `(l1, l2)` pair.
pub fn kernel_i_all<T: Real>(delta: T, gamma: T, lambda1: T, lambda2: T) -> [T; 4] {
    let (cm, sm) = kernel_cs_pair(delta, gamma, lambda1 - lambda2);
    let (cp, sp) = kernel_cs_pair(delta, gamma, lambda1 + lambda2);
    [(cm + cp) * 0.5, (cm - cp) * 0.5, (sp + sm) * 0.5, (sp - sm) * 0.5]
}

pub fn kernel_i<T: Real>(kind: IKind, delta: T, gamma: T, lambda1: T, lambda2: T) -> T {
    let all = kernel_i_all(delta, gamma, lambda1, lambda2);
    match kind {
        IKind::Cc => all[0],
        IKind::Ss => all[1],
        IKind::Sc => all[2],
        IKind::Cs => all[3],
    }
}

/// The particular-solution integrals
/// `I1 = int_0^t e^{-g s} sin(wd s) cos(wj s) ds`,
/// `I2 = int_0^t e^{-g s} sin(wd s) sin(wj s) ds`,
/// evaluated directly from the `lambda_{+-} = wd +- wj` antiderivatives.
/// Kept separate from [`kernel_i`] so the two derivations can be cross-checked.
pub fn particular_i1_i2(t: f64, gamma: f64, omega_d: f64, omega_j: f64) -> (f64, f64) {
    let decay = (-gamma * t).exp();
    let sine_part = |lambda: f64| -> f64 {
        let den = gamma * gamma + lambda * lambda;
        if den * t * t < 1e-24 {
            // limit of int_0^t e^{-g s} sin(l s) ds for g, l -> 0
            return 0.5 * lambda * t * t;
        }
        (-gamma * (decay * (lambda * t).sin()) - lambda * (decay * (lambda * t).cos() - 1.0)) / den
    };
    let cosine_part = |lambda: f64| -> f64 {
        let den = gamma * gamma + lambda * lambda;
        if den * t * t < 1e-24 {
            return t - 0.5 * gamma * t * t;
        }
        (-gamma * decay * (lambda * t).cos() + lambda * decay * (lambda * t).sin() + gamma) / den
    };
    let lp = omega_d + omega_j;
    let lm = omega_d - omega_j;
    let i1 = 0.5 * (sine_part(lp) + sine_part(lm));
    let i2 = 0.5 * (cosine_part(lm) - cosine_part(lp));
    (i1, i2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::quad::quad_gauss;
    use std::f64::consts::PI;

    #[test]
    fn lambda_zero_limits() {
        assert_eq!(kernel_s(2.0, 0.7, 0.0), 0.0);
        assert!((kernel_c(2.0, 0.0, 0.0) - 2.0).abs() < 1e-15);
        assert!((kernel_c(1.0, 1.0, 0.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn c_matches_quadrature() {
        let (d, g, l) = (1.3, 0.4, 2.1);
        let q = quad_gauss(|s| (-g * s).exp() * (l * s).cos(), 0.0, d, 256);
        assert!((kernel_c(d, g, l) - q).abs() < 1e-12);
        let q = quad_gauss(|s| (-g * s).exp() * (l * s).sin(), 0.0, d, 256);
        assert!((kernel_s(d, g, l) - q).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_printed_formula_away_from_origin() {
        let (d, g, l): (f64, f64, f64) = (1.7, 0.9, 3.3);
        let den = g * g + l * l;
        let e = (-g * d).exp();
        let c = (e * (-g * (l * d).cos() + l * (l * d).sin()) + g) / den;
        let s = (e * (-g * (l * d).sin() - l * (l * d).cos()) + l) / den;
        assert!((kernel_c(d, g, l) - c).abs() < 1e-14);
        assert!((kernel_s(d, g, l) - s).abs() < 1e-14);
    }

    #[test]
    fn equal_frequency_limits() {
        let cc = kernel_i(IKind::Cc, PI, 0.0, 1.0, 1.0);
        let ss = kernel_i(IKind::Ss, PI, 0.0, 1.0, 1.0);
        assert!((cc - PI / 2.0).abs() < 1e-14);
        assert!((ss - PI / 2.0).abs() < 1e-14);
        let a: f64 = 1.7;
        let d: f64 = 0.9;
        let sc = kernel_i(IKind::Sc, d, 0.0, a, a);
        assert!((sc - (1.0 - (2.0 * a * d).cos()) / (4.0 * a)).abs() < 1e-14);
    }

    #[test]
    fn swapped_frequencies() {
        let cs = kernel_i(IKind::Cs, 0.8, 0.0, 2.0, 3.0);
        let sc = kernel_i(IKind::Sc, 0.8, 0.0, 3.0, 2.0);
        assert!((cs - sc).abs() < 1e-15);
    }

    #[test]
    fn undamped_textbook_forms() {
        let (d, a, b): (f64, f64, f64) = (1.3, 2.2, 0.7);
        let cc = (((a - b) * d).sin()) / (2.0 * (a - b)) + (((a + b) * d).sin()) / (2.0 * (a + b));
        let sc = (1.0 - ((a + b) * d).cos()) / (2.0 * (a + b)) + (1.0 - ((a - b) * d).cos()) / (2.0 * (a - b));
        assert!((kernel_i(IKind::Cc, d, 0.0, a, b) - cc).abs() < 1e-14);
        assert!((kernel_i(IKind::Sc, d, 0.0, a, b) - sc).abs() < 1e-14);
    }

    #[test]
    fn sc_matches_quadrature() {
        let (d, g, l1, l2) = (1.1, 0.6, 1.4, 2.2);
        let q = quad_gauss(|s| (-g * s).exp() * (l1 * s).sin() * (l2 * s).cos(), 0.0, d, 256);
        assert!((kernel_i(IKind::Sc, d, g, l1, l2) - q).abs() < 1e-12);
    }

    #[test]
    fn t_kernels() {
        assert_eq!(kernel_ts(1.0, 0.0, 0.0), 0.0);
        assert!((kernel_tc(1.0, 0.0, 0.0) - 0.5).abs() < 1e-15);
        let (d, g, l) = (1.5, 0.8, 2.0);
        let q = quad_gauss(|s| s * (-g * s).exp() * (l * s).cos(), 0.0, d, 256);
        assert!((kernel_tc(d, g, l) - q).abs() < 1e-11);
    }

    #[test]
    fn t_kernel_is_minus_gamma_derivative() {
        let (d, g, l) = (1.2, 0.7, 3.1);
        let h = 1e-5;
        let fd = -(kernel_c(d, g + h, l) - kernel_c(d, g - h, l)) / (2.0 * h);
        assert!((kernel_tc(d, g, l) - fd).abs() < 1e-6);
        let fd = -(kernel_s(d, g + h, l) - kernel_s(d, g - h, l)) / (2.0 * h);
        assert!((kernel_ts(d, g, l) - fd).abs() < 1e-6);
    }

    #[test]
    fn series_branch_is_continuous() {
        // |w| just below and above the series radius
        for &(g, l) in &[(0.499, 0.0), (0.501, 0.0), (0.3, 0.399), (0.3, 0.401)] {
            let q = quad_gauss(|s| (-g * s).exp() * (l * s).cos(), 0.0, 1.0, 64);
            assert!((kernel_c(1.0, g, l) - q).abs() < 1e-15, "g={g} l={l}");
            let q = quad_gauss(|s| s * (-g * s).exp() * (l * s).sin(), 0.0, 1.0, 64);
            assert!((kernel_ts(1.0, g, l) - q).abs() < 1e-15, "g={g} l={l}");
        }
    }

    #[test]
    fn particular_integrals() {
        let (i1, _) = particular_i1_i2(1e-300, 0.3, 1.2, 0.9);
        assert!(i1.abs() < 1e-300);
        let (i1, i2) = particular_i1_i2(1.0, 0.3, 1.2, 0.9);
        assert!((i1 - kernel_i(IKind::Sc, 1.0, 0.3, 1.2, 0.9)).abs() < 1e-12);
        assert!((i2 - kernel_i(IKind::Ss, 1.0, 0.3, 1.2, 0.9)).abs() < 1e-12);
        let (i1, i2) = particular_i1_i2(2.0, 0.1, 2.0, 2.0);
        let q1 = quad_gauss(|s| (-0.1 * s).exp() * (2.0 * s).sin() * (2.0 * s).cos(), 0.0, 2.0, 256);
        let q2 = quad_gauss(|s| (-0.1 * s).exp() * (2.0 * s).sin() * (2.0 * s).sin(), 0.0, 2.0, 256);
        assert!((i1 - q1).abs() < 1e-12 && (i2 - q2).abs() < 1e-12);
    }

    #[test]
    fn kernel_args_validation() {
        assert!(KernelArgs::new(0.0, 0.1, 1.0, 1.0).is_err());
        assert!(KernelArgs::new(1.0, -0.1, 1.0, 1.0).is_err());
        let k = KernelArgs::new(1.0, 0.2, 1.0, 2.0).unwrap();
        assert_eq!(k.i(IKind::Cc), kernel_i(IKind::Cc, 1.0, 0.2, 1.0, 2.0));
    }
}
