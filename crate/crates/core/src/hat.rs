//! Fejér approximation of key trajectories and their exact realization by a
//! shared bank of harmonic oscillators on the grid `w_n = n pi / L`.
//!
//! [`hat_certificate`] runs the whole chain numerically: approximate every
//! key by a Fejér mean, realize all of them with one bank, and check the
//! key, logit and softmax-weight gaps against their bounds, then repeat with
//! a slightly damped bank reusing the same initial states.

use std::f64::consts::PI;

use serde::Serialize;

use crate::attention::masked_softmax;
use crate::error::{Error, Result};
use crate::oracles::quad::quad_gauss_composite;
use crate::oscillator::{OscParams, State2};
use crate::propagator::exp_At;
use crate::query::QueryExpansion;

/// Trapezoid intervals used for the Fourier coefficients of the even extension.
pub const FOURIER_INTERVALS: usize = 8192;
/// Dense grid used for sup-norm measurements.
const SUP_POINTS: usize = 4097;

/// `K_N(theta)`, with the limit `N + 1` at multiples of `2 pi`.
pub fn fejer_kernel_eval(n: usize, theta: f64) -> f64 {
    let half = (0.5 * theta).sin();
    let m = (n + 1) as f64;
    if half.abs() < 1e-8 {
        // (sin(m x)/sin(x))^2 / m with x = theta/2 -> m, next term O(x^2)
        let x = 0.5 * theta;
        return m * (1.0 - (m * m - 1.0) * x * x / 3.0);
    }
    let r = (m * 0.5 * theta).sin() / half;
    r * r / m
}

/// `c0 + sum_n c_n cos(w_n (t - base)) + s_n sin(w_n (t - base))`, `w_n = n pi / l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    pub base: f64,
    pub l: f64,
    pub c0: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
}

impl TrigPolynomial {
    pub fn degree(&self) -> usize {
        self.c.len()
    }

    pub fn dim(&self) -> usize {
        self.c0.len()
    }

    pub fn freq(&self, n: usize) -> f64 {
        n as f64 * PI / self.l
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = self.c0.clone();
        for n in 1..=self.degree() {
            let (sn, cs) = (self.freq(n) * (t - self.base)).sin_cos();
            for (o, (c, s)) in out.iter_mut().zip(self.c[n - 1].iter().zip(&self.s[n - 1])) {
                *o += c * cs + s * sn;
            }
        }
        out
    }

    /// Per-mode `|c_n|^2 + |s_n|^2`.
    pub fn mode_energy(&self) -> Vec<f64> {
        self.c.iter().zip(&self.s).map(|(c, s)| c.iter().chain(s).map(|v| v * v).sum()).collect()
    }
}

/// Cesàro mean of order `n` of the even `2L`-periodic extension of `f` on `[a, b]`.
pub fn fejer_approx<F: Fn(f64) -> Vec<f64>>(f: F, a: f64, b: f64, n: usize) -> Result<TrigPolynomial> {
    if !(b > a) {
        return Err(Error::Range { lo: a, hi: b });
    }
    let l = b - a;
    let k = FOURIER_INTERVALS;
    let h = l / k as f64;
    let samples: Vec<Vec<f64>> = (0..=k).map(|i| f(a + i as f64 * h)).collect();
    let dim = samples[0].len();
    if samples.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("sampled function changes width".into()));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampled function"));
    }
    let weight = |i: usize| if i == 0 || i == k { 0.5 } else { 1.0 };
    let mut c0 = vec![0.0; dim];
    for (i, v) in samples.iter().enumerate() {
        for (o, x) in c0.iter_mut().zip(v) {
            *o += weight(i) * x;
        }
    }
    c0.iter_mut().for_each(|o| *o /= k as f64);
    let mut c = Vec::with_capacity(n);
    for m in 1..=n {
        let mut coef = vec![0.0; dim];
        for (i, v) in samples.iter().enumerate() {
            let w = weight(i) * (PI * (m * i) as f64 / k as f64).cos();
            for (o, x) in coef.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        let cesaro = 1.0 - m as f64 / (n + 1) as f64;
        coef.iter_mut().for_each(|o| *o *= 2.0 * cesaro / k as f64);
        c.push(coef);
    }
    Ok(TrigPolynomial { base: a, l, c0, s: vec![vec![0.0; dim]; n], c })
}

/// Re-express `p` around a new base point.
pub fn phase_shift(p: &TrigPolynomial, to: f64) -> TrigPolynomial {
    let mut out = p.clone();
    for n in 1..=p.degree() {
        let (s, c) = (p.freq(n) * (to - p.base)).sin_cos();
        for l in 0..p.dim() {
            let (cn, sn) = (p.c[n - 1][l], p.s[n - 1][l]);
            out.c[n - 1][l] = cn * c + sn * s;
            out.s[n - 1][l] = sn * c - cn * s;
        }
    }
    out.base = to;
    out
}

/// Modes `0..=M` on the grid `n pi / l`; the zero mode holds a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorBank {
    pub anchor: f64,
    pub l: f64,
    /// `z[n][coord]`, `n = 0..=M`.
    pub z: Vec<Vec<State2>>,
    /// Per-mode damping; entry 0 is unused because the zero mode has no velocity.
    pub gammas: Vec<f64>,
}

impl OscillatorBank {
    pub fn modes(&self) -> usize {
        self.z.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.z.first().map(|v| v.len()).unwrap_or(0)
    }

    /// Same initial states, uniform damping `gamma` on every mode.
    pub fn with_damping(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        out.gammas.iter_mut().for_each(|g| *g = gamma);
        out
    }

    pub fn max_gamma(&self) -> f64 {
        self.gammas.iter().cloned().fold(0.0, f64::max)
    }
}

/// Initial states reproducing `p` (based at the anchor) on `M >= degree` modes.
pub fn realize_bank(p: &TrigPolynomial, m: usize) -> Result<OscillatorBank> {
    if m < p.degree() {
        return Err(Error::Capacity { have: m, need: p.degree() });
    }
    let dim = p.dim();
    let mut z = Vec::with_capacity(m + 1);
    z.push(p.c0.iter().map(|&c| State2::new(c, 0.0)).collect());
    for n in 1..=m {
        if n <= p.degree() {
            let w = p.freq(n);
            z.push((0..dim).map(|l| State2::new(p.c[n - 1][l], w * p.s[n - 1][l])).collect());
        } else {
            z.push(vec![State2::zero(); dim]);
        }
    }
    Ok(OscillatorBank { anchor: p.base, l: p.l, z, gammas: vec![0.0; m + 1] })
}

/// Sum of mode positions at `t >= anchor`.
pub fn bank_readout(bank: &OscillatorBank, t: f64) -> Result<Vec<f64>> {
    if t < bank.anchor {
        return Err(Error::Causality { t, anchor: bank.anchor });
    }
    let dt = t - bank.anchor;
    let mut out = vec![0.0; bank.dim()];
    for (n, states) in bank.z.iter().enumerate() {
        if n == 0 {
            // zero initial velocity: the zero mode is constant under any damping
            for (o, s) in out.iter_mut().zip(states) {
                *o += s.x;
            }
            continue;
        }
        let w = n as f64 * PI / bank.l;
        let prop = exp_At(&OscParams::new(bank.gammas[n], w)?, dt)?;
        for (o, s) in out.iter_mut().zip(states) {
            *o += prop.apply(*s).x;
        }
    }
    Ok(out)
}

fn dense_grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let n = points.max(2);
    (0..n).map(move |k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PerturbationReport {
    pub gamma_max: f64,
    pub sup_difference: f64,
}

/// Sup over `[anchor, anchor + l]` of the readout change caused by the bank's damping.
pub fn damping_perturbation(bank: &OscillatorBank, gamma_max: f64) -> Result<PerturbationReport> {
    if bank.gammas.iter().any(|g| !(*g >= 0.0 && *g <= gamma_max)) {
        return Err(Error::Invalid(format!("bank damping must lie in [0, {gamma_max}]")));
    }
    let undamped = bank.with_damping(0.0);
    let mut sup = 0.0f64;
    for t in dense_grid(bank.anchor, bank.anchor + bank.l, SUP_POINTS) {
        let a = bank_readout(bank, t)?;
        let b = bank_readout(&undamped, t)?;
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        sup = sup.max(l2(&diff));
    }
    Ok(PerturbationReport { gamma_max, sup_difference: sup })
}

/// A key trajectory on `[anchor, b]`.
pub enum KeySource<'a> {
    /// Arbitrary continuous function, extended to `[a, anchor]` by its anchor value.
    Function { anchor: f64, f: &'a dyn Fn(f64) -> Vec<f64> },
    /// Already a trigonometric polynomial on the bank grid; realized exactly.
    Polynomial { anchor: f64, p: TrigPolynomial },
}

impl KeySource<'_> {
    pub fn anchor(&self) -> f64 {
        match self {
            KeySource::Function { anchor, .. } | KeySource::Polynomial { anchor, .. } => *anchor,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self {
            KeySource::Function { anchor, f } => f(t.max(*anchor)),
            KeySource::Polynomial { p, .. } => p.eval(t),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HatConfig {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub n_start: usize,
    pub n_max: usize,
    /// Damping of the corollary rerun; zero disables it.
    pub damped_gamma: f64,
}

impl HatConfig {
    pub fn new(a: f64, b: f64, epsilon: f64) -> Self {
        Self { a, b, epsilon, n_start: 8, n_max: 256, damped_gamma: 1e-4 }
    }
}

/// Measured gaps for one bank (undamped or damped).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GapReport {
    pub gamma: f64,
    pub per_key_sup_error: Vec<f64>,
    pub max_logit_gap: f64,
    pub max_l1_gap: f64,
    pub keys_ok: bool,
    pub logit_bound_ok: bool,
    pub l1_bound_ok: bool,
    /// Measured chain: logit gap <= |q| * key error and l1 gap <= |q| * key error / sqrt(d_k).
    pub chain_ok: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HatReport {
    pub epsilon: f64,
    #[serde(rename = "N_used")]
    pub n_used: usize,
    pub per_key_sup_error: Vec<f64>,
    pub max_logit_gap: f64,
    pub max_l1_gap: f64,
    pub bounds_ok: bool,
    pub capacity_exhausted: bool,
    pub q_sup_norm: f64,
    pub d_k: usize,
    pub damped: Option<GapReport>,
}

/// `(1/(t_j - t_i)) int <q, k>` by composite Gauss, or the pointwise product.
fn averaged_logit(q: &QueryExpansion, k: &dyn Fn(f64) -> Vec<f64>, t_i: f64, t_j: f64) -> f64 {
    let dot = |t: f64| -> f64 { q.eval(t).iter().zip(k(t)).map(|(a, b)| a * b).sum() };
    if t_j == t_i {
        return dot(t_i);
    }
    quad_gauss_composite(dot, t_i, t_j, 24, 64) / (t_j - t_i)
}

fn measure(
    q: &QueryExpansion,
    keys: &[KeySource],
    banks: &[OscillatorBank],
    b: f64,
    epsilon: f64,
    q_sup: f64,
) -> Result<GapReport> {
    let d_k = q.dim();
    let gamma = banks.iter().map(|bk| bk.max_gamma()).fold(0.0, f64::max);
    let mut per_key = Vec::with_capacity(keys.len());
    for (key, bank) in keys.iter().zip(banks) {
        let mut sup = 0.0f64;
        for t in dense_grid(key.anchor(), b, SUP_POINTS) {
            let gap: Vec<f64> = key.eval(t).iter().zip(bank_readout(bank, t)?).map(|(x, y)| x - y).collect();
            sup = sup.max(l2(&gap));
        }
        per_key.push(sup);
    }
    let key_err = per_key.iter().cloned().fold(0.0, f64::max);
    let anchors: Vec<f64> = keys.iter().map(|k| k.anchor()).collect();
    let mut max_logit = 0.0f64;
    let mut max_l1 = 0.0f64;
    let scale = (d_k as f64).sqrt();
    for &t_j in &anchors {
        let valid: Vec<bool> = anchors.iter().map(|&t_i| t_i <= t_j).collect();
        let mut exact = vec![0.0; keys.len()];
        let mut approx = vec![0.0; keys.len()];
        for (i, key) in keys.iter().enumerate() {
            if !valid[i] {
                continue;
            }
            let t_i = key.anchor();
            exact[i] = averaged_logit(q, &|t| key.eval(t), t_i, t_j);
            approx[i] = averaged_logit(q, &|t| bank_readout(&banks[i], t).expect("t >= anchor"), t_i, t_j);
            max_logit = max_logit.max((exact[i] - approx[i]).abs());
        }
        let w = masked_softmax(&exact, d_k, &valid)?;
        let w2 = masked_softmax(&approx, d_k, &valid)?;
        max_l1 = max_l1.max(w.iter().zip(&w2).map(|(x, y)| (x - y).abs()).sum());
    }
    let keys_ok = per_key.iter().all(|e| *e < epsilon);
    Ok(GapReport {
        gamma,
        per_key_sup_error: per_key,
        max_logit_gap: max_logit,
        max_l1_gap: max_l1,
        keys_ok,
        logit_bound_ok: max_logit <= q_sup * epsilon,
        l1_bound_ok: max_l1 <= q_sup * epsilon / scale,
        chain_ok: max_logit <= q_sup * key_err * (1.0 + 1e-9) + 1e-12
            && max_l1 <= q_sup * key_err / scale * (1.0 + 1e-9) + 1e-12,
    })
}

/// Search the mode count, realize every key with one bank and verify the bounds.
pub fn hat_certificate(q: &QueryExpansion, keys: &[KeySource], cfg: &HatConfig) -> Result<HatReport> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if !(cfg.b > cfg.a) {
        return Err(Error::Range { lo: cfg.a, hi: cfg.b });
    }
    if keys.is_empty() {
        return Err(Error::Empty("keys"));
    }
    for k in keys {
        if !(k.anchor() >= cfg.a && k.anchor() <= cfg.b) {
            return Err(Error::Invalid(format!("anchor {} outside [{}, {}]", k.anchor(), cfg.a, cfg.b)));
        }
        if let KeySource::Polynomial { p, .. } = k {
            if p.l != cfg.b - cfg.a || p.base != cfg.a {
                return Err(Error::Invalid("polynomial keys must live on the bank grid based at a".into()));
            }
        }
    }
    let q_sup = q.sup_norm(cfg.a, cfg.b, SUP_POINTS);
    let d_k = q.dim();
    let max_poly_degree = keys
        .iter()
        .map(|k| if let KeySource::Polynomial { p, .. } = k { p.degree() } else { 0 })
        .max()
        .unwrap_or(0);

    let mut n = cfg.n_start.max(1);
    while n < max_poly_degree {
        n *= 2;
    }
    let mut exhausted = false;
    let polys = loop {
        let mut polys = Vec::with_capacity(keys.len());
        let mut worst = 0.0f64;
        for k in keys {
            let p = match k {
                KeySource::Polynomial { p, .. } => p.clone(),
                KeySource::Function { .. } => fejer_approx(|t| k.eval(t), cfg.a, cfg.b, n)?,
            };
            for t in dense_grid(cfg.a, cfg.b, SUP_POINTS) {
                let gap: Vec<f64> = k.eval(t).iter().zip(p.eval(t)).map(|(x, y)| x - y).collect();
                worst = worst.max(l2(&gap));
            }
            polys.push(p);
        }
        if worst < 0.5 * cfg.epsilon {
            break polys;
        }
        if n * 2 > cfg.n_max {
            exhausted = true;
            break polys;
        }
        n *= 2;
    };

    let banks = keys
        .iter()
        .zip(&polys)
        .map(|(k, p)| realize_bank(&phase_shift(p, k.anchor()), n))
        .collect::<Result<Vec<_>>>()?;
    let undamped = measure(q, keys, &banks, cfg.b, cfg.epsilon, q_sup)?;
    let damped = if cfg.damped_gamma > 0.0 {
        let damped_banks: Vec<OscillatorBank> = banks.iter().map(|bk| bk.with_damping(cfg.damped_gamma)).collect();
        Some(measure(q, keys, &damped_banks, cfg.b, cfg.epsilon, q_sup)?)
    } else {
        None
    };
    let ok = |g: &GapReport| g.keys_ok && g.logit_bound_ok && g.l1_bound_ok && g.chain_ok;
    let bounds_ok = !exhausted && ok(&undamped) && damped.as_ref().is_none_or(ok);
    Ok(HatReport {
        epsilon: cfg.epsilon,
        n_used: n,
        per_key_sup_error: undamped.per_key_sup_error.clone(),
        max_logit_gap: undamped.max_logit_gap,
        max_l1_gap: undamped.max_l1_gap,
        bounds_ok,
        capacity_exhausted: exhausted,
        q_sup_norm: q_sup,
        d_k,
        damped,
    })
}

/// Symmetric triangle wave with values in `[-amp, amp]`.
pub fn triangle_wave(t: f64, period: f64, phase: f64, amp: f64) -> f64 {
    let u = ((t / period + phase) % 1.0 + 1.0) % 1.0;
    amp * (4.0 * (u - 0.5).abs() - 1.0)
}

/// Key whose coordinates are triangle waves, held constant before the anchor by the certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleKey {
    pub anchor: f64,
    pub periods: Vec<f64>,
    pub phases: Vec<f64>,
    pub amps: Vec<f64>,
}

impl TriangleKey {
    /// Periods in `[L, 2L]`, amplitude 0.5, random phase.
    pub fn random(anchor: f64, d_k: usize, l: f64, rng: &mut crate::rng::Rng) -> Self {
        Self {
            anchor,
            periods: (0..d_k).map(|_| l * (1.0 + rng.unit())).collect(),
            phases: (0..d_k).map(|_| rng.unit()).collect(),
            amps: vec![0.5; d_k],
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (0..self.periods.len()).map(|c| triangle_wave(t, self.periods[c], self.phases[c], self.amps[c])).collect()
    }
}

/// Triangle-wave keys on `[0, 1]` against a random query.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriangleDemo {
    pub epsilon: f64,
    pub keys: usize,
    pub d_k: usize,
    pub query_modes: usize,
    pub n_max: usize,
    pub damped_gamma: f64,
}

impl Default for TriangleDemo {
    fn default() -> Self {
        Self { epsilon: 0.05, keys: 4, d_k: 4, query_modes: 3, n_max: 256, damped_gamma: 1e-4 }
    }
}

impl TriangleDemo {
    pub fn run(&self, seed: u64) -> Result<HatReport> {
        if self.keys == 0 || self.d_k == 0 || self.query_modes == 0 {
            return Err(Error::Invalid("triangle demo needs keys, d_k and query_modes >= 1".into()));
        }
        let mut rng = crate::rng::Rng::new(seed);
        let freqs: Vec<f64> = (1..=self.query_modes).map(|j| 2.0 * PI * j as f64).collect();
        let grid = crate::query::FrequencyGrid::new(freqs, true)?;
        let coeffs = |rng: &mut crate::rng::Rng| -> Vec<Vec<f64>> {
            (0..self.query_modes).map(|_| (0..self.d_k).map(|_| rng.normal(0.0, 0.5)).collect()).collect()
        };
        let (a, b) = (coeffs(&mut rng), coeffs(&mut rng));
        let dc = (0..self.d_k).map(|_| rng.normal(0.0, 0.5)).collect();
        let q = QueryExpansion::new(grid, a, b, Some(dc))?;
        let tri: Vec<TriangleKey> =
            (0..self.keys).map(|i| TriangleKey::random(0.5 * i as f64 / self.keys as f64, self.d_k, 1.0, &mut rng)).collect();
        let fns: Vec<Box<dyn Fn(f64) -> Vec<f64> + '_>> =
            tri.iter().map(|k| Box::new(move |t: f64| k.eval(t)) as Box<dyn Fn(f64) -> Vec<f64>>).collect();
        let keys: Vec<KeySource> =
            tri.iter().zip(&fns).map(|(k, f)| KeySource::Function { anchor: k.anchor, f: f.as_ref() }).collect();
        let cfg = HatConfig { n_max: self.n_max, damped_gamma: self.damped_gamma, ..HatConfig::new(0.0, 1.0, self.epsilon) };
        hat_certificate(&q, &keys, &cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::quad::quad_gauss;
    use crate::query::FrequencyGrid;

    #[test]
    fn kernel_examples() {
        for n in [0usize, 3, 10] {
            assert!((fejer_kernel_eval(n, 0.0) - (n + 1) as f64).abs() < 1e-12);
        }
        for th in [0.3, 1.7, -2.9] {
            assert!((fejer_kernel_eval(0, th) - 1.0).abs() < 1e-14);
        }
        let mass = quad_gauss(|t| fejer_kernel_eval(5, t), -PI, PI, 256) / (2.0 * PI);
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn approx_examples() {
        let p = fejer_approx(|_| vec![0.7, -1.2], 0.0, 2.0, 8).unwrap();
        assert!((p.c0[0] - 0.7).abs() < 1e-12 && (p.c0[1] + 1.2).abs() < 1e-12);
        assert!(p.c.iter().flatten().all(|v| v.abs() < 1e-12));

        let (a, b) = (0.5, 2.5);
        let w1 = PI / (b - a);
        let p = fejer_approx(|t| vec![(w1 * (t - a)).cos()], a, b, 8).unwrap();
        assert!((p.c[0][0] - 8.0 / 9.0).abs() < 1e-9);
        assert!(p.c.iter().skip(1).flatten().all(|v| v.abs() < 1e-9));

        let mid = 0.5 * (a + b);
        let errs: Vec<f64> = [8usize, 32, 128]
            .iter()
            .map(|&n| {
                let p = fejer_approx(|t| vec![(t - mid).abs()], a, b, n).unwrap();
                dense_grid(a, b, 2001).map(|t| (p.eval(t)[0] - (t - mid).abs()).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    fn random_poly(seed: u64, degree: usize) -> TrigPolynomial {
        let mut rng = crate::rng::Rng::new(seed);
        let mut v = |n: usize| (0..n).map(|_| rng.normal(0.0, 1.0)).collect::<Vec<_>>();
        TrigPolynomial {
            base: 0.0,
            l: 1.5,
            c0: v(2),
            c: (0..degree).map(|_| v(2)).collect(),
            s: (0..degree).map(|_| v(2)).collect(),
        }
    }

    #[test]
    fn shift_examples() {
        let p = random_poly(1, 5);
        assert_eq!(phase_shift(&p, 0.0), p);
        let q = phase_shift(&p, 0.37);
        for t in dense_grid(0.0, 1.5, 100) {
            for (x, y) in p.eval(t).iter().zip(q.eval(t)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        for (e0, e1) in p.mode_energy().iter().zip(q.mode_energy()) {
            assert!((e0 - e1).abs() < 1e-12);
        }
    }

    #[test]
    fn realization_examples() {
        let constant = TrigPolynomial { base: 0.2, l: 1.0, c0: vec![0.4], c: vec![], s: vec![] };
        let bank = realize_bank(&constant, 4).unwrap();
        assert!(bank.z.iter().skip(1).flatten().all(|s| *s == State2::zero()));
        assert_eq!(bank_readout(&bank, 0.9).unwrap(), vec![0.4]);

        let p = phase_shift(&random_poly(2, 8), 0.3);
        let bank = realize_bank(&p, 8).unwrap();
        for t in dense_grid(0.3, 1.5, 400) {
            for (x, y) in p.eval(t).iter().zip(bank_readout(&bank, t).unwrap()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(realize_bank(&p, 7).unwrap_err(), Error::Capacity { have: 7, need: 8 });
        let empty = OscillatorBank { anchor: 0.0, l: 1.0, z: vec![], gammas: vec![] };
        assert!(bank_readout(&empty, 0.5).unwrap().is_empty());
    }

    #[test]
    fn perturbation_is_linear() {
        let bank = realize_bank(&random_poly(3, 6), 6).unwrap();
        assert_eq!(damping_perturbation(&bank, 0.0).unwrap().sup_difference, 0.0);
        let big = damping_perturbation(&bank.with_damping(1e-3), 1e-3).unwrap().sup_difference;
        let small = damping_perturbation(&bank.with_damping(5e-4), 5e-4).unwrap().sup_difference;
        let ratio = big / small;
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn polynomial_keys_certify_exactly() {
        let grid = FrequencyGrid::new(vec![2.0, 5.0], true).unwrap();
        let q = QueryExpansion::new(grid, vec![vec![0.5, 0.1], vec![0.2, -0.3]], vec![vec![0.0, 0.4], vec![0.1, 0.1]], Some(vec![0.3, 0.2]))
            .unwrap();
        let mut p = random_poly(4, 3);
        p.l = 1.0;
        let keys = vec![
            KeySource::Polynomial { anchor: 0.0, p: p.clone() },
            KeySource::Polynomial { anchor: 0.4, p },
        ];
        let report = hat_certificate(&q, &keys, &HatConfig::new(0.0, 1.0, 0.05)).unwrap();
        assert_eq!(report.n_used, 8);
        assert!(report.per_key_sup_error.iter().all(|e| *e < 1e-12));
        assert!(report.bounds_ok);
    }
}
