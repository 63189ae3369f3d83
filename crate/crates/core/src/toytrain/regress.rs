//! Forecasting a future value of a multi-cosine signal from irregular samples.
//!
//! Features are trapezoid-rule cosine/sine coefficients on the analysis grid,
//! turned into standardized log-energies `Z_j`. The query spectrum is
//! `Q_j = softplus(w_j Z_j + b_j)`, key `i` is an oscillator with transfer
//! magnitude `|H_i|`, the logits are `sum_j Q_j |H_i(w_j)|`, and the prediction
//! blends learned scalar values with the softmax weights.

use serde::Serialize;

use super::data::{gen_regression, RegressConfig, RegressSample};
use super::{correlation, softmax, value_and_grad, AdamW, CurvePoint, Nn, Schedule};
use crate::error::{Error, Result};
use crate::oscillator::OscParams;
use crate::rng::Rng;

/// Offset keeping natural frequencies strictly positive.
pub const OMEGA_FLOOR: f64 = 1e-3;

/// Inverse of `softplus`, for initialization.
pub fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// `(2/T) * trapezoid(y cos(w t))` and the sine counterpart.
pub fn trig_features(times: &[f64], obs: &[f64], freqs: &[f64], horizon: f64) -> Vec<(f64, f64)> {
    freqs
        .iter()
        .map(|&w| {
            let mut a = 0.0;
            let mut b = 0.0;
            for k in 1..times.len() {
                let h = 0.5 * (times[k] - times[k - 1]);
                let (s0, c0) = (w * times[k - 1]).sin_cos();
                let (s1, c1) = (w * times[k]).sin_cos();
                a += h * (obs[k - 1] * c0 + obs[k] * c1);
                b += h * (obs[k - 1] * s0 + obs[k] * s1);
            }
            (2.0 * a / horizon, 2.0 * b / horizon)
        })
        .collect()
}

pub fn log_energies(times: &[f64], obs: &[f64], freqs: &[f64], horizon: f64) -> Vec<f64> {
    trig_features(times, obs, freqs, horizon).iter().map(|(a, b)| (a * a + b * b).ln_1p()).collect()
}

/// Per-feature mean and standard deviation over a training set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let dim = rows[0].len();
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

/// Flat parameter layout: `[u (K), v (K), w (J), b (J), values (K)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressLayout {
    pub k: usize,
    pub j: usize,
}

impl RegressLayout {
    pub fn len(&self) -> usize {
        3 * self.k + 2 * self.j
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named contiguous groups, used by gradient checks.
    pub fn groups(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let (k, j) = (self.k, self.j);
        vec![
            ("omega0", 0..k),
            ("gamma", k..2 * k),
            ("query_w", 2 * k..2 * k + j),
            ("query_b", 2 * k + j..2 * k + 2 * j),
            ("values", 2 * k + 2 * j..3 * k + 2 * j),
        ]
    }

    pub fn init(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut p = Vec::with_capacity(self.len());
        for _ in 0..self.k {
            p.push(inv_softplus(rng.log_uniform(1e-2, 1e1)? - OMEGA_FLOOR).max(-30.0));
        }
        for _ in 0..self.k {
            p.push(inv_softplus(rng.uniform(0.05, 0.4)?));
        }
        for _ in 0..self.j {
            p.push(rng.normal(0.0, 0.5));
        }
        p.extend(std::iter::repeat_n(0.0, self.j));
        for _ in 0..self.k {
            p.push(rng.normal(0.0, 0.5));
        }
        Ok(p)
    }

    /// Oscillator parameters of every key.
    pub fn oscillators<T: Nn>(&self, p: &[T]) -> Result<Vec<OscParams<T>>> {
        (0..self.k).map(|i| OscParams::new(p[self.k + i].softplus(), p[i].softplus() + OMEGA_FLOOR)).collect()
    }
}

/// Model prediction for a standardized feature row, with the attention weights.
pub fn predict<T: Nn>(layout: &RegressLayout, p: &[T], h: &[Vec<T>], z: &[f64]) -> (T, Vec<T>) {
    let (k, j) = (layout.k, layout.j);
    let q: Vec<T> = (0..j).map(|jj| (p[2 * k + jj] * z[jj] + p[2 * k + j + jj]).softplus()).collect();
    let logits: Vec<T> = (0..k)
        .map(|i| {
            let mut a = T::zero();
            for jj in 0..j {
                a += q[jj] * h[i][jj];
            }
            a
        })
        .collect();
    let w = softmax(&logits);
    let mut y = T::zero();
    for i in 0..k {
        y += w[i] * p[2 * k + 2 * j + i];
    }
    (y, w)
}

/// `|H_i(w_j)|` for every key and analysis frequency.
pub fn transfer_table<T: Nn>(layout: &RegressLayout, p: &[T], freqs: &[f64]) -> Result<Vec<Vec<T>>> {
    Ok(layout.oscillators(p)?.iter().map(|o| freqs.iter().map(|&w| o.transfer_magnitude(w)).collect()).collect())
}

/// Mean squared error over a batch of `(features, target)` pairs.
pub fn batch_loss<T: Nn>(layout: &RegressLayout, p: &[T], freqs: &[f64], batch: &[(&[f64], f64)]) -> Result<T> {
    let h = transfer_table(layout, p, freqs)?;
    let mut acc = T::zero();
    for (z, y) in batch {
        let (pred, _) = predict(layout, p, &h, z);
        acc += (pred - *y).sq();
    }
    Ok(acc / batch.len() as f64)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RegressMetrics {
    pub seed: u64,
    pub epochs_run: usize,
    pub val_mse: f64,
    pub val_rmse: f64,
    pub correlation: f64,
    pub baseline_mse: f64,
    pub target_std: f64,
    pub reduction: f64,
    pub omega0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub seconds: f64,
    pub curve: Vec<CurvePoint>,
}

/// Features and targets for one split.
pub struct RegressData {
    pub z: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

pub fn prepare_data(cfg: &RegressConfig, rng: &mut Rng) -> Result<(RegressData, RegressData, Standardizer)> {
    let train = gen_regression(cfg, cfg.n_train, rng)?;
    let val = gen_regression(cfg, cfg.n_val, rng)?;
    let raw = |set: &[RegressSample]| -> Vec<Vec<f64>> {
        set.iter().map(|s| log_energies(&s.times, &s.obs, &cfg.freqs, cfg.t_obs)).collect()
    };
    let (rt, rv) = (raw(&train), raw(&val));
    let st = Standardizer::fit(&rt);
    let pack = |rows: &[Vec<f64>], set: &[RegressSample]| RegressData {
        z: rows.iter().map(|r| st.apply(r)).collect(),
        y: set.iter().map(|s| s.target).collect(),
    };
    Ok((pack(&rt, &train), pack(&rv, &val), st))
}

pub fn evaluate(layout: &RegressLayout, p: &[f64], freqs: &[f64], data: &RegressData) -> Result<Vec<f64>> {
    let h = transfer_table(layout, p, freqs)?;
    Ok(data.z.iter().map(|z| predict(layout, p, &h, z).0).collect())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Train on a fresh synthetic split and report validation metrics.
pub fn train_regressor(cfg: &RegressConfig, seed: u64) -> Result<RegressMetrics> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut rng = Rng::new(seed);
    let (train, val, _) = prepare_data(cfg, &mut rng)?;
    let layout = RegressLayout { k: cfg.k, j: cfg.freqs.len() };
    let mut params = layout.init(&mut rng)?;
    let steps_per_epoch = train.y.len().div_ceil(cfg.batch);
    let schedule = Schedule::new(cfg.lr, cfg.epochs * steps_per_epoch);
    let mut opt = AdamW::new(params.len(), cfg.weight_decay);
    let mut order: Vec<usize> = (0..train.y.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| (train.z[i].as_slice(), train.y[i])).collect();
            let (loss, grads) = value_and_grad(&params, |p| batch_loss(&layout, p, &cfg.freqs, &batch))
                .map_err(|_| Error::Diverged { epoch, seed })?;
            opt.step(&mut params, &grads, &schedule)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let val_pred = evaluate(&layout, &params, &cfg.freqs, &val)?;
        let val_mse = mse(&val_pred, &val.y);
        if !val_mse.is_finite() {
            return Err(Error::Diverged { epoch, seed });
        }
        curve.push(CurvePoint { epoch, loss: epoch_loss / train.y.len() as f64, val_metric: val_mse });
    }
    let mean_y = train.y.iter().sum::<f64>() / train.y.len() as f64;
    let baseline_mse = val.y.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / val.y.len() as f64;
    let val_pred = evaluate(&layout, &params, &cfg.freqs, &val)?;
    let val_mse = mse(&val_pred, &val.y);
    let vm = val.y.iter().sum::<f64>() / val.y.len() as f64;
    let osc = layout.oscillators(&params)?;
    Ok(RegressMetrics {
        seed,
        epochs_run: cfg.epochs,
        val_mse,
        val_rmse: val_mse.sqrt(),
        correlation: correlation(&val_pred, &val.y),
        baseline_mse,
        target_std: (val.y.iter().map(|y| (y - vm).powi(2)).sum::<f64>() / val.y.len() as f64).sqrt(),
        reduction: 1.0 - val_mse / baseline_mse,
        omega0: osc.iter().map(|o| o.omega0).collect(),
        gamma: osc.iter().map(|o| o.gamma).collect(),
        seconds: start.elapsed().as_secs_f64(),
        curve,
    })
}
