//! Synthetic irregular time series for the two toy tasks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    /// Number of classes; class `m` oscillates at `omega_min + m * d_omega`.
    pub m: usize,
    /// Timestamps per sequence.
    pub l: usize,
    pub horizon: f64,
    pub poisson_rate: f64,
    pub amp_lo: f64,
    pub amp_hi: f64,
    pub noise: f64,
    pub omega_min: f64,
    pub d_omega: f64,
    /// Embedding width.
    pub d: usize,
    /// Query and drive modes.
    pub j: usize,
    pub hidden: usize,
    /// Key natural frequencies start log-uniform on this range.
    pub omega_init: [f64; 2],
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Stop once validation accuracy has not improved for this many epochs.
    pub patience: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            m: 8,
            l: 32,
            horizon: 5.0,
            poisson_rate: 6.0,
            amp_lo: 0.8,
            amp_hi: 1.2,
            noise: 0.05,
            omega_min: 2.0 * PI * 0.5,
            d_omega: 2.0 * PI * 0.1,
            d: 32,
            j: 8,
            hidden: 64,
            omega_init: [1e-2, 1e1],
            n_train: 2000,
            n_val: 500,
            epochs: 200,
            batch: 128,
            lr: 1e-2,
            weight_decay: 1e-2,
            patience: 20,
        }
    }
}

impl ClassifyConfig {
    pub fn class_freq(&self, m: usize) -> f64 {
        self.omega_min + m as f64 * self.d_omega
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.m, self.l, self.d, self.j, self.hidden, self.n_train, self.n_val, self.epochs, self.batch];
        let reals = [self.horizon, self.poisson_rate, self.amp_lo, self.omega_min, self.d_omega, self.lr];
        if counts.contains(&0) || reals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid("classification config needs positive sizes and rates".into()));
        }
        if !(self.omega_init[0] > 0.0 && self.omega_init[1] >= self.omega_init[0] && self.omega_init[1].is_finite()) {
            return Err(Error::Invalid("omega_init must be a positive range".into()));
        }
        if !(self.amp_hi >= self.amp_lo) || !(self.noise >= 0.0) || !(self.weight_decay >= 0.0) || self.m < 2 {
            return Err(Error::Invalid("classification config has an empty amplitude range or negative noise".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub times: Vec<f64>,
    pub obs: Vec<[f64; 2]>,
    pub label: usize,
}

/// `l` Poisson arrivals rescaled so the last one lands on `horizon`.
pub fn poisson_times(l: usize, rate: f64, horizon: f64, rng: &mut Rng) -> Vec<f64> {
    let mut acc = 0.0;
    let arrivals: Vec<f64> = (0..l)
        .map(|_| {
            acc += rng.exponential(rate);
            acc
        })
        .collect();
    let last = *arrivals.last().unwrap_or(&1.0);
    arrivals.iter().map(|a| horizon * a / last).collect()
}

pub fn gen_class_sample(cfg: &ClassifyConfig, label: usize, rng: &mut Rng) -> ClassSample {
    let times = poisson_times(cfg.l, cfg.poisson_rate, cfg.horizon, rng);
    let amp = cfg.amp_lo + (cfg.amp_hi - cfg.amp_lo) * rng.unit();
    let phase = 2.0 * PI * rng.unit();
    let w = cfg.class_freq(label);
    let obs = times
        .iter()
        .map(|&t| {
            let (s, c) = (w * t + phase).sin_cos();
            [amp * c + rng.normal(0.0, cfg.noise), amp * s + rng.normal(0.0, cfg.noise)]
        })
        .collect();
    ClassSample { times, obs, label }
}

/// `n` sequences with labels uniform over the `m` classes.
pub fn gen_classification(cfg: &ClassifyConfig, n: usize, rng: &mut Rng) -> Vec<ClassSample> {
    (0..n)
        .map(|_| {
            let label = rng.index(cfg.m);
            gen_class_sample(cfg, label, rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressConfig {
    pub freqs: Vec<f64>,
    /// Number of oscillator keys.
    pub k: usize,
    pub t_future: f64,
    /// Observations stop before this time; features integrate over it.
    pub t_obs: f64,
    pub gap_shape: f64,
    pub gap_scale: f64,
    pub noise: f64,
    pub amp_lo: f64,
    pub amp_hi: f64,
    pub max_components: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for RegressConfig {
    fn default() -> Self {
        Self {
            freqs: vec![2.0, 3.2, 4.4, 5.6, 6.0, 7.2, 8.0, 9.0],
            k: 8,
            t_future: 7.0,
            t_obs: 5.0,
            gap_shape: 2.0,
            gap_scale: 0.05,
            noise: 0.1,
            amp_lo: 0.5,
            amp_hi: 1.5,
            max_components: 3,
            n_train: 2000,
            n_val: 400,
            epochs: 150,
            batch: 64,
            lr: 0.1,
            weight_decay: 0.0,
        }
    }
}

impl RegressConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.k, self.n_train, self.n_val, self.epochs, self.batch, self.max_components];
        let reals = [self.t_future, self.t_obs, self.gap_shape, self.gap_scale, self.amp_lo, self.lr];
        if self.freqs.is_empty() || counts.contains(&0) || reals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid("regression config needs positive sizes, rates and frequencies".into()));
        }
        if self.freqs.iter().any(|w| !(w.is_finite() && *w > 0.0)) || self.max_components > self.freqs.len() {
            return Err(Error::Invalid("regression frequencies must be positive and cover max_components".into()));
        }
        if !(self.t_obs < self.t_future) || !(self.amp_hi >= self.amp_lo) || !(self.noise >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Invalid("regression config needs t_obs < t_future and a valid amplitude range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressSample {
    pub times: Vec<f64>,
    pub obs: Vec<f64>,
    pub target: f64,
    /// `(frequency, amplitude)` of each component.
    pub components: Vec<(f64, f64)>,
}

pub fn gen_regress_sample(cfg: &RegressConfig, rng: &mut Rng) -> Result<RegressSample> {
    let count = 1 + rng.index(cfg.max_components);
    let mut idx: Vec<usize> = (0..cfg.freqs.len()).collect();
    rng.shuffle(&mut idx);
    let components: Vec<(f64, f64)> =
        idx[..count].iter().map(|&i| (cfg.freqs[i], cfg.amp_lo + (cfg.amp_hi - cfg.amp_lo) * rng.unit())).collect();
    let y = |t: f64| components.iter().map(|(w, a)| a * (w * t).cos()).sum::<f64>();
    let mut times = Vec::new();
    let mut t = rng.gamma(cfg.gap_shape, cfg.gap_scale)?;
    while t < cfg.t_obs {
        times.push(t);
        t += rng.gamma(cfg.gap_shape, cfg.gap_scale)?;
    }
    if times.len() < 2 {
        return Err(Error::Invalid("gap distribution too wide for the observation window".into()));
    }
    let obs = times.iter().map(|&t| y(t) + rng.normal(0.0, cfg.noise)).collect();
    Ok(RegressSample { obs, target: y(cfg.t_future), times, components })
}

pub fn gen_regression(cfg: &RegressConfig, n: usize, rng: &mut Rng) -> Result<Vec<RegressSample>> {
    (0..n).map(|_| gen_regress_sample(cfg, rng)).collect()
}
