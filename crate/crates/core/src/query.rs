//! Query trajectories as finite sinusoidal expansions on a shared grid.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::kernel_cs_pair;
use crate::real::Real;

/// Default number of grid frequencies.
pub const DEFAULT_MODES: usize = 8;
/// Default ridge parameter of the least-squares fit.
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Condition number above which a ridge fit is retried with a larger ridge.
const COND_LIMIT: f64 = 1e12;
/// With zero ridge, a normal matrix this ill-conditioned is treated as singular.
const SINGULAR_COND: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    dc: bool,
}

impl FrequencyGrid {
    pub fn new(freqs: Vec<f64>, dc: bool) -> Result<Self> {
        if freqs.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Invalid("grid frequencies must be positive and finite".into()));
        }
        if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Ordering { index: i + 1 });
        }
        if freqs.is_empty() && !dc {
            return Err(Error::Empty("frequency grid"));
        }
        Ok(Self { freqs, dc })
    }

    /// `j` frequencies log-spaced on `[lo, hi]`.
    pub fn log_spaced(j: usize, lo: f64, hi: f64, dc: bool) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Range { lo, hi });
        }
        let freqs = match j {
            0 => Vec::new(),
            1 => vec![lo],
            _ => {
                let step = (hi / lo).ln() / (j - 1) as f64;
                (0..j).map(|k| lo * (step * k as f64).exp()).collect()
            }
        };
        Self::new(freqs, dc)
    }

    /// `j` modes from `2 pi / span` to `pi * n_max`, with DC.
    pub fn default_for(span: f64, n_max: usize, j: usize) -> Result<Self> {
        let lo = 2.0 * std::f64::consts::PI / span;
        let hi = (std::f64::consts::PI * n_max as f64).max(lo * 2.0);
        Self::log_spaced(j, lo, hi, true)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn has_dc(&self) -> bool {
        self.dc
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Columns of the design matrix: optional DC, then J cosines, then J sines.
    pub fn n_coeffs(&self) -> usize {
        2 * self.freqs.len() + usize::from(self.dc)
    }

    fn design_row(&self, t: f64, row: &mut [f64]) {
        let off = usize::from(self.dc);
        if self.dc {
            row[0] = 1.0;
        }
        let j = self.freqs.len();
        for (k, w) in self.freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            row[off + k] = c;
            row[off + j + k] = s;
        }
    }
}

/// `q(t) = dc + sum_j A_j cos(w_j t) + B_j sin(w_j t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryExpansion<T = f64> {
    pub grid: FrequencyGrid,
    pub a: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
    pub dc: Option<Vec<T>>,
}

impl<T: Real> QueryExpansion<T> {
    pub fn new(grid: FrequencyGrid, a: Vec<Vec<T>>, b: Vec<Vec<T>>, dc: Option<Vec<T>>) -> Result<Self> {
        if a.len() != grid.len() || b.len() != grid.len() || dc.is_some() != grid.has_dc() {
            return Err(Error::Shape("query coefficients do not match the grid".into()));
        }
        let width = dc.as_ref().map(|v| v.len()).or_else(|| a.first().map(|v| v.len())).unwrap_or(0);
        if a.iter().chain(&b).any(|v| v.len() != width) {
            return Err(Error::Shape("query coefficient vectors differ in width".into()));
        }
        Ok(Self { grid, a, b, dc })
    }

    pub fn dim(&self) -> usize {
        self.dc.as_ref().map(|v| v.len()).or_else(|| self.a.first().map(|v| v.len())).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> Vec<T> {
        let mut out = self.dc.clone().unwrap_or_else(|| vec![T::zero(); self.dim()]);
        for (k, w) in self.grid.freqs().iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            for (o, (&a, &b)) in out.iter_mut().zip(self.a[k].iter().zip(&self.b[k])) {
                *o += a * c + b * s;
            }
        }
        out
    }

    /// Sup of `||q(t)||_2` over `samples` equally spaced points of `[lo, hi]`.
    pub fn sup_norm(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        (0..n)
            .map(|k| {
                let t = lo + (hi - lo) * k as f64 / (n - 1) as f64;
                self.eval(t).iter().map(|v| v.value() * v.value()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Query coefficients re-expressed in `s = t - t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedQuery<T = f64> {
    pub freqs: Vec<f64>,
    pub a_tilde: Vec<Vec<T>>,
    pub b_tilde: Vec<Vec<T>>,
    pub dc: Option<Vec<T>>,
    pub anchor: f64,
}

impl<T: Real> RotatedQuery<T> {
    pub fn dim(&self) -> usize {
        self.dc.as_ref().map(|v| v.len()).or_else(|| self.a_tilde.first().map(|v| v.len())).unwrap_or(0)
    }

    /// `q(anchor + s)`.
    pub fn eval(&self, s: f64) -> Vec<T> {
        let mut out = self.dc.clone().unwrap_or_else(|| vec![T::zero(); self.dim()]);
        for (k, w) in self.freqs.iter().enumerate() {
            let (sn, c) = (w * s).sin_cos();
            for (o, (&a, &b)) in out.iter_mut().zip(self.a_tilde[k].iter().zip(&self.b_tilde[k])) {
                *o += a * c + b * sn;
            }
        }
        out
    }
}

/// Linear map from stacked samples to coefficients, `coef = G y`, for one
/// set of sample times. `G` has `n_coeffs` rows and one column per sample.
#[derive(Debug, Clone)]
pub struct FitOperator {
    pub grid: FrequencyGrid,
    pub g: DMatrix<f64>,
    /// Ridge actually used after any conditioning fallback.
    pub ridge: f64,
}

impl FitOperator {
    pub fn new(times: &[f64], grid: &FrequencyGrid, ridge: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("query samples"));
        }
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::Invalid(format!("ridge must be >= 0, got {ridge}")));
        }
        let n = grid.n_coeffs();
        let mut phi = DMatrix::<f64>::zeros(times.len(), n);
        let mut row = vec![0.0; n];
        for (l, &t) in times.iter().enumerate() {
            grid.design_row(t, &mut row);
            for (c, v) in row.iter().enumerate() {
                phi[(l, c)] = *v;
            }
        }
        let gram = phi.transpose() * &phi;
        let mut ridge_used = ridge;
        loop {
            let normal = &gram + DMatrix::<f64>::identity(n, n) * ridge_used;
            let cond = condition_estimate(&normal);
            if ridge_used == 0.0 {
                if cond > SINGULAR_COND {
                    return Err(Error::RankDeficient);
                }
            } else if cond > COND_LIMIT {
                ridge_used = ridge_used.max(1e-8) * 10.0;
                continue;
            }
            let chol = normal.cholesky().ok_or(Error::RankDeficient)?;
            let g = chol.solve(&phi.transpose());
            return Ok(Self { grid: grid.clone(), g, ridge: ridge_used });
        }
    }

    /// Apply to samples `y[l][c]`.
    pub fn apply<T: Real>(&self, samples: &[Vec<T>]) -> Result<QueryExpansion<T>> {
        if samples.len() != self.g.ncols() {
            return Err(Error::Shape(format!("{} samples for an operator built on {}", samples.len(), self.g.ncols())));
        }
        let dim = samples[0].len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Shape("query samples differ in width".into()));
        }
        let n = self.grid.n_coeffs();
        let mut coef = vec![vec![T::zero(); dim]; n];
        for (r, row) in coef.iter_mut().enumerate() {
            for (l, sample) in samples.iter().enumerate() {
                let w = self.g[(r, l)];
                if w != 0.0 {
                    for (o, &y) in row.iter_mut().zip(sample) {
                        *o += y * w;
                    }
                }
            }
        }
        let j = self.grid.len();
        let mut it = coef.into_iter();
        let dc = if self.grid.has_dc() { it.next() } else { None };
        let a: Vec<Vec<T>> = it.by_ref().take(j).collect();
        let b: Vec<Vec<T>> = it.collect();
        QueryExpansion::new(self.grid.clone(), a, b, dc)
    }
}

/// Ratio of extreme eigenvalues of a symmetric positive semidefinite matrix.
fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Ridge least-squares fit of `samples = (t, q)` onto the grid.
pub fn fit_query<T: Real>(samples: &[(f64, Vec<T>)], grid: &FrequencyGrid, ridge: f64) -> Result<QueryExpansion<T>> {
    let times: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let values: Vec<Vec<T>> = samples.iter().map(|s| s.1.clone()).collect();
    FitOperator::new(&times, grid, ridge)?.apply(&values)
}

/// Per-mode rotation into the frame of `anchor`.
pub fn rotate_query<T: Real>(q: &QueryExpansion<T>, anchor: f64) -> RotatedQuery<T> {
    let mut a_tilde = Vec::with_capacity(q.grid.len());
    let mut b_tilde = Vec::with_capacity(q.grid.len());
    for (k, w) in q.grid.freqs().iter().enumerate() {
        let (s, c) = (w * anchor).sin_cos();
        a_tilde.push(q.a[k].iter().zip(&q.b[k]).map(|(&a, &b)| a * c + b * s).collect());
        b_tilde.push(q.a[k].iter().zip(&q.b[k]).map(|(&a, &b)| b * c - a * s).collect());
    }
    RotatedQuery { freqs: q.grid.freqs().to_vec(), a_tilde, b_tilde, dc: q.dc.clone(), anchor }
}

/// Mean of the rotated query over `[anchor, anchor + delta]`.
pub fn mean_rotated<T: Real>(rq: &RotatedQuery<T>, delta: f64) -> Vec<T> {
    let mut out = rq.dc.clone().unwrap_or_else(|| vec![T::zero(); rq.dim()]);
    for (k, &w) in rq.freqs.iter().enumerate() {
        let (c, s) = kernel_cs_pair(delta, 0.0, w);
        let (c, s) = (c / delta, s / delta);
        for (o, (&a, &b)) in out.iter_mut().zip(rq.a_tilde[k].iter().zip(&rq.b_tilde[k])) {
            *o += a * c + b * s;
        }
    }
    out
}

/// Mean of `q` over `[t_i, t]`.
pub fn mean_query<T: Real>(q: &QueryExpansion<T>, t_i: f64, t: f64) -> Result<Vec<T>> {
    if !(t > t_i) {
        return Err(Error::Window { start: t_i, end: t });
    }
    Ok(mean_rotated(&rotate_query(q, t_i), t - t_i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::quad::quad_gauss;
    use std::f64::consts::PI;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::log_spaced(4, 2.0 * PI, 20.0 * PI, true).unwrap()
    }

    #[test]
    fn recovers_in_span_signal() {
        let g = grid();
        let w2 = g.freqs()[1];
        let samples: Vec<(f64, Vec<f64>)> = (0..20).map(|l| {
            let t = l as f64 / 19.0;
            (t, vec![(w2 * t).cos()])
        }).collect();
        let q = fit_query(&samples, &g, 0.0).unwrap();
        for k in 0..4 {
            let want = if k == 1 { 1.0 } else { 0.0 };
            assert!((q.a[k][0] - want).abs() < 1e-9 && q.b[k][0].abs() < 1e-9);
        }
        assert!(q.dc.unwrap()[0].abs() < 1e-9);
    }

    #[test]
    fn zero_samples_give_zero_coefficients() {
        let samples: Vec<(f64, Vec<f64>)> = (0..12).map(|l| (l as f64 / 11.0, vec![0.0, 0.0])).collect();
        let q = fit_query(&samples, &grid(), 1e-6).unwrap();
        assert!(q.a.iter().chain(&q.b).flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn underdetermined_zero_ridge_rejected() {
        let samples = vec![(0.1, vec![1.0]), (0.5, vec![2.0])];
        assert_eq!(fit_query(&samples, &grid(), 0.0).unwrap_err(), Error::RankDeficient);
        assert!(fit_query(&samples, &grid(), 1e-6).is_ok());
    }

    #[test]
    fn rotation_examples() {
        let g = FrequencyGrid::new(vec![2.0], false).unwrap();
        let q = QueryExpansion::new(g, vec![vec![0.3]], vec![vec![-0.8]], None).unwrap();
        assert_eq!(rotate_query(&q, 0.0).a_tilde, q.a);
        let r = rotate_query(&q, PI / 4.0);
        assert!((r.a_tilde[0][0] + 0.8).abs() < 1e-15 && (r.b_tilde[0][0] + 0.3).abs() < 1e-15);
        let r = rotate_query(&q, 0.77);
        for k in 0..50 {
            let s = k as f64 * 0.03;
            assert!((r.eval(s)[0] - q.eval(0.77 + s)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_examples() {
        let g = FrequencyGrid::new(vec![1.0], true).unwrap();
        let c = QueryExpansion::new(g.clone(), vec![vec![0.0]], vec![vec![0.0]], Some(vec![1.7])).unwrap();
        assert!((mean_query(&c, 0.1, 0.9).unwrap()[0] - 1.7).abs() < 1e-15);
        let cosq = QueryExpansion::new(g, vec![vec![1.0]], vec![vec![0.0]], Some(vec![0.0])).unwrap();
        assert!(mean_query(&cosq, 0.0, 2.0 * PI).unwrap()[0].abs() < 1e-12);
        assert!(matches!(mean_query(&cosq, 1.0, 1.0), Err(Error::Window { .. })));

        let g = grid();
        let q = QueryExpansion::new(
            g,
            vec![vec![0.4], vec![-1.1], vec![0.2], vec![0.9]],
            vec![vec![0.7], vec![0.3], vec![-0.5], vec![0.1]],
            Some(vec![0.25]),
        )
        .unwrap();
        let want = quad_gauss(|t| q.eval(t)[0], 0.2, 1.1, 256) / 0.9;
        assert!((mean_query(&q, 0.2, 1.1).unwrap()[0] - want).abs() < 1e-10);
    }

    #[test]
    fn default_grid_spans_range() {
        let g = FrequencyGrid::default_for(1.0, 64, DEFAULT_MODES).unwrap();
        assert_eq!(g.len(), 8);
        assert!((g.freqs()[0] - 2.0 * PI).abs() < 1e-12);
        assert!((g.freqs()[7] - 64.0 * PI).abs() < 1e-9);
        assert!(g.has_dc());
    }
}
