//! Gauss–Legendre and composite Simpson quadrature.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest rule the node cache will build.
pub const MAX_GAUSS_NODES: usize = 1024;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn build_rule(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and P_{n-1}(z)
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        weights[0] = 2.0;
    }
    GaussRule { nodes, weights }
}

/// Cached Gauss–Legendre rule with `n` nodes.
pub fn gauss_rule(n: usize) -> Arc<GaussRule> {
    assert!((1..=MAX_GAUSS_NODES).contains(&n), "gauss rule size {n} out of range");
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("gauss cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build_rule(n))).clone()
}

/// `int_a^b f` by `nodes`-point Gauss–Legendre.
pub fn quad_gauss<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, nodes: usize) -> f64 {
    let rule = gauss_rule(nodes);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Vector-valued Gauss–Legendre: accumulates `f(t)` componentwise into `out`.
pub fn quad_gauss_vec<F: FnMut(f64) -> Vec<f64>>(mut f: F, a: f64, b: f64, nodes: usize, dim: usize) -> Vec<f64> {
    let rule = gauss_rule(nodes);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = vec![0.0; dim];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(mid + half * x);
        for (o, vi) in acc.iter_mut().zip(v) {
            *o += w * vi;
        }
    }
    acc.iter_mut().for_each(|o| *o *= half);
    acc
}

/// Composite Gauss–Legendre: `panels` equal panels of `nodes` points each.
pub fn quad_gauss_composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, nodes: usize, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| quad_gauss(&mut f, a + k as f64 * h, a + (k + 1) as f64 * h, nodes)).sum()
}

/// Composite Simpson with `panels` panels (rounded up to even).
pub fn quad_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson's rule on equally spaced samples (trapezoid fallback for an odd
/// number of intervals, applied to the last interval).
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let intervals = n - 1;
            let even = intervals - intervals % 2;
            let mut acc = values[0] + values[even];
            for (k, v) in values.iter().enumerate().take(even).skip(1) {
                acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if even < intervals {
                total += 0.5 * h * (values[even] + values[even + 1]);
            }
            total
        }
    }
}

/// Trapezoid rule on an arbitrary (sorted) grid.
pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2).zip(ys.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}
