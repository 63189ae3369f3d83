//! Averaged query-key logits in closed form, masked softmax and value means.
//!
//! For a key anchored at `t_i` and an evaluation time `t_j > t_i`, with
//! `delta = t_j - t_i` and `s = t - t_i`,
//!
//! ```text
//! alpha_i(t_j) = (1/delta) int_0^delta <q(t_i + s), k_i(t_i + s)> ds
//! ```
//!
//! splits into a homogeneous term, the offset term `<mean q, c_i>`, and a
//! driven term (steady state plus transient). Every piece is a finite sum of
//! exponential-trigonometric kernels.

pub mod layer;

use crate::driven::{PreparedTrajectory, SteadyState, TransientCoeff, TransientCoeffs};
use crate::error::{Error, Result};
use crate::kernels::{kernel_all, kernel_cs_pair, kernel_i_all};
use crate::oscillator::{DampingRegime, OscParams, State2};
use crate::query::{mean_rotated, rotate_query, QueryExpansion, RotatedQuery};
use crate::real::{dot, Real};

pub use layer::{layer_forward, layer_forward_detailed, AttentionResult, HeadParams, LayerOutput, LayerParams};

/// Free decaying motion of one channel in its regime's natural basis.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Damped<T> {
    /// `e^{-g s} (a cos(wd s) + b sin(wd s))`
    Osc { gamma: T, omega_d: T, a: T, b: T },
    /// `e^{-g s} (a + b s)`
    Poly { gamma: T, a: T, b: T },
    /// `u e^{-r1 s} + v e^{-r2 s}`
    TwoExp { r1: T, r2: T, u: T, v: T },
}

impl<T: Real> Damped<T> {
    /// Homogeneous motion from `(x0, p0)` at `s = 0`.
    pub(crate) fn homogeneous(p: &OscParams<T>, regime: DampingRegime<T>, z0: State2<T>) -> Self {
        let g = p.gamma;
        match regime {
            DampingRegime::Underdamped { omega_d } => {
                Damped::Osc { gamma: g, omega_d, a: z0.x, b: (g * z0.x + z0.p) / omega_d }
            }
            DampingRegime::Critical => Damped::Poly { gamma: g, a: z0.x, b: z0.p + g * z0.x },
            DampingRegime::Overdamped { sigma } => {
                let (r1, r2) = crate::driven::overdamped_rates(p, sigma);
                let u = (r2 * z0.x + z0.p) / (sigma * 2.0);
                Damped::TwoExp { r1, r2, u, v: z0.x - u }
            }
        }
    }

    pub(crate) fn transient(p: &OscParams<T>, tc: &TransientCoeff<T>) -> Self {
        match *tc {
            TransientCoeff::Underdamped { omega_d, e, f } => Damped::Osc { gamma: p.gamma, omega_d, a: e, b: f },
            TransientCoeff::Critical { e, f } => Damped::Poly { gamma: p.gamma, a: e, b: f },
            TransientCoeff::Overdamped { r1, r2, u, v } => Damped::TwoExp { r1, r2, u, v },
        }
    }

    /// Sum of two motions in the same regime.
    pub(crate) fn plus(self, o: Self) -> Self {
        match (self, o) {
            (Damped::Osc { gamma, omega_d, a, b }, Damped::Osc { a: a2, b: b2, .. }) => {
                Damped::Osc { gamma, omega_d, a: a + a2, b: b + b2 }
            }
            (Damped::Poly { gamma, a, b }, Damped::Poly { a: a2, b: b2, .. }) => Damped::Poly { gamma, a: a + a2, b: b + b2 },
            (Damped::TwoExp { r1, r2, u, v }, Damped::TwoExp { u: u2, v: v2, .. }) => {
                Damped::TwoExp { r1, r2, u: u + u2, v: v + v2 }
            }
            _ => unreachable!("motions of one channel share a regime"),
        }
    }

    /// Coefficients of the motion in its regime's two basis functions.
    pub(crate) fn coeffs(&self) -> (T, T) {
        match *self {
            Damped::Osc { a, b, .. } | Damped::Poly { a, b, .. } => (a, b),
            Damped::TwoExp { u, v, .. } => (u, v),
        }
    }

    /// `(int cos(l s) phi_k(s), int sin(l s) phi_k(s))` over `[0, delta]` for
    /// both basis functions `phi_k`; only the regime parameters are used.
    pub(crate) fn basis_moments(&self, delta: T, lambda: T) -> [(T, T); 2] {
        match *self {
            Damped::Osc { gamma, omega_d, .. } => {
                let [cc, ss, sc, cs] = kernel_i_all(delta, gamma, omega_d, lambda);
                [(cc, cs), (sc, ss)]
            }
            Damped::Poly { gamma, .. } => {
                let [c, s, tc, ts] = kernel_all(delta, gamma, lambda);
                [(c, s), (tc, ts)]
            }
            Damped::TwoExp { r1, r2, .. } => [kernel_cs_pair(delta, r1, lambda), kernel_cs_pair(delta, r2, lambda)],
        }
    }

    /// `(int cos(l s) x(s), int sin(l s) x(s))` over `[0, delta]`.
    pub(crate) fn moments(&self, delta: T, lambda: T) -> (T, T) {
        let (a, b) = self.coeffs();
        let [(c1, s1), (c2, s2)] = self.basis_moments(delta, lambda);
        (a * c1 + b * c2, a * s1 + b * s2)
    }

    /// `int_0^delta x(s) ds`.
    pub(crate) fn integral(&self, delta: T) -> T {
        match *self {
            Damped::Osc { gamma, omega_d, a, b } => {
                let (c, s) = kernel_cs_pair(delta, gamma, omega_d);
                a * c + b * s
            }
            _ => self.moments(delta, T::zero()).0,
        }
    }
}

/// `int_0^delta <q, x> ds` for one channel of a damped motion.
fn project_damped<T: Real>(form: &Damped<T>, rq: &RotatedQuery<T>, c: usize, delta: T) -> T {
    let mut acc = T::zero();
    for (j, &w) in rq.freqs.iter().enumerate() {
        let (mc, ms) = form.moments(delta, T::cst(w));
        acc += rq.a_tilde[j][c] * mc + rq.b_tilde[j][c] * ms;
    }
    if let Some(dc) = &rq.dc {
        acc += dc[c] * form.integral(delta);
    }
    acc
}

/// `int_0^delta <q, x_ss> ds` summed over channels, with the undamped kernels
/// shared across channels.
fn project_steady<T: Real>(ss: &SteadyState<T>, rq: &RotatedQuery<T>, delta: f64) -> T {
    let dim = rq.dim();
    let mut acc = T::zero();
    for (j, &wj) in rq.freqs.iter().enumerate() {
        for (m, &wm) in ss.freqs.iter().enumerate() {
            let [cc, sn, sc, cs] = kernel_i_all(delta, 0.0, wj, wm);
            for c in 0..dim {
                let (ch, dh) = (ss.c_hat[m][c], ss.d_hat[m][c]);
                acc += rq.a_tilde[j][c] * (ch * cc + dh * cs) + rq.b_tilde[j][c] * (ch * sc + dh * sn);
            }
        }
    }
    if let Some(dc) = &rq.dc {
        for (m, &wm) in ss.freqs.iter().enumerate() {
            let (c0, s0) = kernel_cs_pair(delta, 0.0, wm);
            for (c, &q0) in dc.iter().enumerate() {
                acc += q0 * (ss.c_hat[m][c] * c0 + ss.d_hat[m][c] * s0);
            }
        }
    }
    acc
}

fn window<T: Real>(k: &PreparedTrajectory<T>, t_j: f64) -> Result<f64> {
    let delta = t_j - k.key.anchor;
    if !(delta > 0.0) {
        return Err(Error::Window { start: k.key.anchor, end: t_j });
    }
    Ok(delta)
}

fn check_dims<T: Real>(rq: &RotatedQuery<T>, k: &PreparedTrajectory<T>) -> Result<()> {
    if rq.dim() != k.key.dim() {
        return Err(Error::Shape(format!("query width {} vs key width {}", rq.dim(), k.key.dim())));
    }
    Ok(())
}

/// Homogeneous contribution, averaged over `[t_i, t_j]`. `rq` must be rotated
/// to the key's anchor.
pub fn hom_logit<T: Real>(rq: &RotatedQuery<T>, k: &PreparedTrajectory<T>, t_j: f64) -> Result<T> {
    check_dims(rq, k)?;
    let delta = window(k, t_j)?;
    let mut acc = T::zero();
    for c in 0..k.key.dim() {
        let form = Damped::homogeneous(&k.key.params[c], k.regimes[c], k.key.z0[c]);
        acc += project_damped(&form, rq, c, T::cst(delta));
    }
    Ok(acc / delta)
}

/// Steady-state plus transient contribution, averaged over a window `delta`.
pub fn driven_logit<T: Real>(
    rq: &RotatedQuery<T>,
    params: &[OscParams<T>],
    ss: &SteadyState<T>,
    tc: &TransientCoeffs<T>,
    delta: f64,
) -> Result<T> {
    if !(delta > 0.0) {
        return Err(Error::Window { start: 0.0, end: delta });
    }
    let mut acc = project_steady(ss, rq, delta);
    for (c, p) in params.iter().enumerate() {
        acc += project_damped(&Damped::transient(p, &tc.coords[c]), rq, c, T::cst(delta));
    }
    Ok(acc / delta)
}

/// Complete averaged logit of key `k` at `t_j`; the pointwise product at the anchor.
pub fn attention_logit<T: Real>(q: &QueryExpansion<T>, k: &PreparedTrajectory<T>, t_j: f64) -> Result<T> {
    let anchor = k.key.anchor;
    if t_j < anchor {
        return Err(Error::Causality { t: t_j, anchor });
    }
    if q.dim() != k.key.dim() {
        return Err(Error::Shape(format!("query width {} vs key width {}", q.dim(), k.key.dim())));
    }
    if t_j == anchor {
        return Ok(dot(&q.eval(anchor), &k.eval(anchor)?));
    }
    let rq = rotate_query(q, anchor);
    Ok(rotated_logit(&rq, k, t_j - anchor))
}

/// Closed-form logit for a query already rotated to the key's anchor.
pub fn rotated_logit<T: Real>(rq: &RotatedQuery<T>, k: &PreparedTrajectory<T>, delta: f64) -> T {
    let d = T::cst(delta);
    let mut acc = T::zero();
    for c in 0..k.key.dim() {
        let p = &k.key.params[c];
        let mut form = Damped::homogeneous(p, k.regimes[c], k.key.z0[c]);
        if let Some((_, tc)) = &k.driven {
            form = form.plus(Damped::transient(p, &tc.coords[c]));
        }
        acc += project_damped(&form, rq, c, d);
    }
    if let Some((ss, _)) = &k.driven {
        acc += project_steady(ss, rq, delta);
    }
    let mut out = acc / delta;
    if k.key.offset.iter().any(|v| v.value() != 0.0) {
        out += dot(&mean_rotated(rq, delta), &k.key.offset);
    }
    out
}

/// Time average of a value trajectory over `[anchor, t_j]`; the value itself at the anchor.
pub fn mean_value<T: Real>(v: &PreparedTrajectory<T>, t_j: f64) -> Result<Vec<T>> {
    let anchor = v.key.anchor;
    if t_j < anchor {
        return Err(Error::Causality { t: t_j, anchor });
    }
    if t_j == anchor {
        return v.eval(anchor);
    }
    let delta = t_j - anchor;
    let d = T::cst(delta);
    let mut out = Vec::with_capacity(v.key.dim());
    for c in 0..v.key.dim() {
        let p = &v.key.params[c];
        let mut form = Damped::homogeneous(p, v.regimes[c], v.key.z0[c]);
        let mut acc = T::zero();
        if let Some((ss, tc)) = &v.driven {
            form = form.plus(Damped::transient(p, &tc.coords[c]));
            for (m, &wm) in ss.freqs.iter().enumerate() {
                let (c0, s0) = kernel_cs_pair(delta, 0.0, wm);
                acc += ss.c_hat[m][c] * c0 + ss.d_hat[m][c] * s0;
            }
        }
        acc += form.integral(d);
        out.push(acc / delta + v.key.offset[c]);
    }
    Ok(out)
}

/// Softmax of `logits / sqrt(d_k)` over entries with `mask[i] == true`.
pub fn masked_softmax<T: Real>(logits: &[T], d_k: usize, mask: &[bool]) -> Result<Vec<T>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!("{} logits but {} mask flags", logits.len(), mask.len())));
    }
    if d_k == 0 {
        return Err(Error::Invalid("d_k must be >= 1".into()));
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| l.value() * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Mask);
    }
    let mut out = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    for (o, (&l, &m)) in out.iter_mut().zip(logits.iter().zip(mask)) {
        if m {
            *o = (l * scale - max).exp();
            total += *o;
        }
    }
    for (o, &m) in out.iter_mut().zip(mask) {
        if m {
            *o = *o / total;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driven::{ForcingExpansion, KeyTrajectory};
    use crate::oracles::quad::quad_gauss;
    use crate::query::FrequencyGrid;
    use std::f64::consts::PI;

    fn p(g: f64, w: f64) -> OscParams {
        OscParams::new(g, w).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(masked_softmax(&[1.0; 4], 1, &[true; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(masked_softmax(&[3.0, 9.0], 4, &[false, true]).unwrap(), vec![0.0, 1.0]);
        let w = masked_softmax(&[0.0, 3f64.ln()], 1, &[true, true]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert_eq!(masked_softmax(&[1.0], 1, &[false]).unwrap_err(), Error::Mask);
    }

    fn single_mode_query(w: f64, a: f64, b: f64) -> QueryExpansion {
        QueryExpansion::new(FrequencyGrid::new(vec![w], false).unwrap(), vec![vec![a]], vec![vec![b]], None).unwrap()
    }

    fn oracle(q: &QueryExpansion, k: &PreparedTrajectory, t_j: f64) -> f64 {
        let t_i = k.key.anchor;
        quad_gauss(|t| dot(&q.eval(t), &k.eval(t).unwrap()), t_i, t_j, 512) / (t_j - t_i)
    }

    #[test]
    fn zero_state_gives_zero_hom_logit() {
        let k = KeyTrajectory::free(vec![p(0.3, 1.0)], vec![State2::zero()], 0.0).unwrap().prepare().unwrap();
        let rq = rotate_query(&single_mode_query(1.0, 1.0, 0.5), 0.0);
        assert_eq!(hom_logit(&rq, &k, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn undamped_full_period() {
        let k = KeyTrajectory::free(vec![p(0.0, 1.0)], vec![State2::new(0.8, 0.0)], 0.0).unwrap().prepare().unwrap();
        let q = single_mode_query(1.0, 1.3, 0.0);
        let got = attention_logit(&q, &k, 2.0 * PI).unwrap();
        assert!((got - 0.5 * 1.3 * 0.8).abs() < 1e-10);
        assert!((got - oracle(&q, &k, 2.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn overdamped_hom_matches_quadrature() {
        let k = KeyTrajectory::free(vec![p(2.0, 1.0)], vec![State2::new(0.6, -1.4)], 0.3).unwrap().prepare().unwrap();
        let q = single_mode_query(2.5, 0.7, -0.4);
        let rq = rotate_query(&q, 0.3);
        let got = hom_logit(&rq, &k, 1.6).unwrap();
        assert!((got - oracle(&q, &k, 1.6)).abs() < 1e-9);
    }

    fn driven(g: f64, w: f64) -> PreparedTrajectory {
        let f = ForcingExpansion::new(vec![1.7], vec![vec![0.9]], vec![vec![-0.4]]).unwrap();
        KeyTrajectory::new(vec![p(g, w)], vec![State2::zero()], f, vec![0.0], 0.2).unwrap().prepare().unwrap()
    }

    #[test]
    fn driven_logit_matches_quadrature() {
        for &(g, w) in &[(0.3, 1.2), (1.1, 1.1), (2.0, 0.8)] {
            let k = driven(g, w);
            let q = single_mode_query(2.9, 0.5, 1.1);
            let rq = rotate_query(&q, 0.2);
            let (ss, tc) = k.driven.as_ref().unwrap();
            let got = driven_logit(&rq, &k.key.params, ss, tc, 1.3).unwrap();
            assert!((got - oracle(&q, &k, 1.5)).abs() < 1e-9, "{g} {w}");
        }
    }

    #[test]
    fn constant_key_gives_mean_query() {
        let k = KeyTrajectory::new(
            vec![p(0.4, 1.0)],
            vec![State2::zero()],
            ForcingExpansion::empty(),
            vec![1.5],
            0.1,
        )
        .unwrap()
        .prepare()
        .unwrap();
        let q = single_mode_query(3.0, 0.6, 0.2);
        let want = crate::query::mean_query(&q, 0.1, 0.9).unwrap()[0] * 1.5;
        assert!((attention_logit(&q, &k, 0.9).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn pointwise_at_anchor() {
        let k = driven(0.3, 1.2);
        let q = single_mode_query(2.0, 0.5, 0.1);
        let want = q.eval(0.2)[0] * k.eval(0.2).unwrap()[0];
        assert_eq!(attention_logit(&q, &k, 0.2).unwrap(), want);
        assert!(matches!(attention_logit(&q, &k, 0.1), Err(Error::Causality { .. })));
    }

    #[test]
    fn mean_value_examples() {
        let c = KeyTrajectory::new(vec![p(0.4, 1.0)], vec![State2::zero()], ForcingExpansion::empty(), vec![2.0], 0.0)
            .unwrap()
            .prepare()
            .unwrap();
        assert!((mean_value(&c, 0.7).unwrap()[0] - 2.0).abs() < 1e-15);
        let osc = KeyTrajectory::new(vec![p(0.0, 1.0)], vec![State2::new(1.0, 0.0)], ForcingExpansion::empty(), vec![0.5], 0.0)
            .unwrap()
            .prepare()
            .unwrap();
        assert!((mean_value(&osc, 2.0 * PI).unwrap()[0] - 0.5).abs() < 1e-12);
        let v = driven(2.0, 0.8);
        let want = quad_gauss(|t| v.eval(t).unwrap()[0], 0.2, 1.4, 256) / 1.2;
        assert!((mean_value(&v, 1.4).unwrap()[0] - want).abs() < 1e-9);
    }
}
