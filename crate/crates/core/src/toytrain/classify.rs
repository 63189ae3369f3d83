//! Frequency classification of irregularly sampled sinusoids.
//!
//! Each sequence is least-squares fitted on the query grid, giving a
//! continuous input `x(t)`. The model holds `K` key oscillators (one per
//! class by default), all driven by the projected input from a zero state at
//! `t = 0`. The query is the projected input as well, so key `r` scores
//!
//! `alpha_r = (1/T) int_0^T <P_Q x(t), P_K y_r(t)> dt`,
//!
//! where `y_r` is the response of oscillator `r` to `x`. Because every key
//! coordinate shares the oscillator, the integrand equals
//! `<G^T x(t), y_r(t)>` with `G = P_Q^T P_K`, which keeps the closed form in
//! the two input dimensions. Softmax weights over keys blend learned value
//! vectors, and a ReLU MLP maps the blend to class logits.

use serde::Serialize;

use super::data::{gen_classification, ClassSample, ClassifyConfig};
use super::regress::{inv_softplus, OMEGA_FLOOR};
use super::{cross_entropy, softmax, value_and_grad, AdamW, CurvePoint, Nn, Schedule};
use crate::attention::Damped;
use crate::kernels::kernel_i_all;
use crate::error::{Error, Result};
use crate::oscillator::{OscParams, State2};
use crate::query::{fit_query, FrequencyGrid};
use crate::rng::Rng;

/// Ridge used when fitting the input expansion of a sequence.
pub const INPUT_RIDGE: f64 = 1e-4;
/// Points on each resonance profile.
const PROFILE_POINTS: usize = 200;

/// Query and drive frequencies: `j` class frequencies spread over the class band.
pub fn query_grid(cfg: &ClassifyConfig) -> Result<FrequencyGrid> {
    let j = cfg.j.min(cfg.m);
    let freqs = (0..j)
        .map(|k| {
            let idx = if j == 1 { 0 } else { (k * (cfg.m - 1) + (j - 1) / 2) / (j - 1) };
            cfg.class_freq(idx)
        })
        .collect();
    FrequencyGrid::new(freqs, false)
}

/// Fitted input expansion of one sequence; cosine and sine amplitudes per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct InputExpansion {
    pub a: Vec<[f64; 2]>,
    pub b: Vec<[f64; 2]>,
}

pub fn fit_input(sample: &ClassSample, grid: &FrequencyGrid) -> Result<InputExpansion> {
    let pts: Vec<(f64, Vec<f64>)> = sample.times.iter().zip(&sample.obs).map(|(&t, x)| (t, x.to_vec())).collect();
    let q = fit_query(&pts, grid, INPUT_RIDGE)?;
    Ok(InputExpansion {
        a: q.a.iter().map(|r| [r[0], r[1]]).collect(),
        b: q.b.iter().map(|r| [r[0], r[1]]).collect(),
    })
}

/// Undamped product integrals over `[0, horizon]` for every (query, drive) mode pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorKernels {
    pub freqs: Vec<f64>,
    pub horizon: f64,
    /// `k[j][m] = [cc, ss, sc, cs]`, query mode first.
    k: Vec<Vec<[f64; 4]>>,
}

impl ResonatorKernels {
    pub fn new(grid: &FrequencyGrid, horizon: f64) -> Self {
        let freqs = grid.freqs().to_vec();
        let k = freqs.iter().map(|&wj| freqs.iter().map(|&wm| kernel_i_all(horizon, 0.0, wj, wm)).collect()).collect();
        Self { freqs, horizon, k }
    }
}

/// Flat parameter layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyLayout {
    pub d: usize,
    pub keys: usize,
    pub hidden: usize,
    pub classes: usize,
    pub omega_init: [f64; 2],
}

impl ClassifyLayout {
    pub fn from_config(cfg: &ClassifyConfig) -> Self {
        Self { d: cfg.d, keys: cfg.m, hidden: cfg.hidden, classes: cfg.m, omega_init: cfg.omega_init }
    }

    /// Named contiguous groups in storage order.
    pub fn groups(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let sizes = [
            ("query_proj", 2 * self.d),
            ("key_proj", 2 * self.d),
            ("omega0", self.keys),
            ("gamma", self.keys),
            ("values", self.keys * self.d),
            ("mlp_w1", self.hidden * self.d),
            ("mlp_b1", self.hidden),
            ("mlp_w2", self.classes * self.hidden),
            ("mlp_b2", self.classes),
        ];
        let mut start = 0;
        sizes
            .iter()
            .map(|&(name, n)| {
                let r = start..start + n;
                start += n;
                (name, r)
            })
            .collect()
    }

    /// Oscillator scalars and biases, which weight decay leaves alone.
    pub fn undecayed(&self) -> Vec<std::ops::Range<usize>> {
        ["omega0", "gamma", "mlp_b1", "mlp_b2"].iter().map(|n| self.range(n)).collect()
    }

    pub fn len(&self) -> usize {
        self.groups().last().map(|g| g.1.end).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self, name: &str) -> std::ops::Range<usize> {
        self.groups().into_iter().find(|g| g.0 == name).map(|g| g.1).expect("known group")
    }

    pub fn init(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.len()];
        let proj_std = (0.5f64).sqrt();
        for name in ["query_proj", "key_proj"] {
            for i in self.range(name) {
                p[i] = rng.normal(0.0, proj_std);
            }
        }
        for i in self.range("omega0") {
            p[i] = inv_softplus(rng.log_uniform(self.omega_init[0], self.omega_init[1])? - OMEGA_FLOOR).max(-30.0);
        }
        for i in self.range("gamma") {
            p[i] = inv_softplus(rng.uniform(0.05, 0.4)?);
        }
        for i in self.range("values") {
            p[i] = rng.normal(0.0, 1.0);
        }
        let w1 = (2.0 / self.d as f64).sqrt();
        for i in self.range("mlp_w1") {
            p[i] = rng.normal(0.0, w1);
        }
        let w2 = (1.0 / self.hidden as f64).sqrt();
        for i in self.range("mlp_w2") {
            p[i] = rng.normal(0.0, w2);
        }
        Ok(p)
    }

    pub fn oscillators<T: Nn>(&self, p: &[T]) -> Result<Vec<OscParams<T>>> {
        let (w, g) = (self.range("omega0"), self.range("gamma"));
        (0..self.keys).map(|r| OscParams::new(p[g.start + r].softplus(), p[w.start + r].softplus() + OMEGA_FLOOR)).collect()
    }
}

/// Averaged query-key logits of every key oscillator, before the `sqrt(d)` scaling.
///
/// All keys start at rest at `t = 0` and share the drive, so the steady-state
/// part reduces to per-mode aggregates of the query, and each key only adds
/// its transfer factors and one set of damped kernels per query mode.
pub fn key_logits<T: Nn>(osc: &[OscParams<T>], g: &[[T; 2]; 2], kern: &ResonatorKernels, input: &InputExpansion) -> Result<Vec<T>> {
    let modes = kern.freqs.len();
    let through_g = |v: &[f64; 2]| -> [T; 2] { [g[0][0] * v[0] + g[1][0] * v[1], g[0][1] * v[0] + g[1][1] * v[1]] };
    let aq: Vec<[T; 2]> = input.a.iter().map(through_g).collect();
    let bq: Vec<[T; 2]> = input.b.iter().map(through_g).collect();
    let mut x_agg = Vec::with_capacity(modes);
    let mut y_agg = Vec::with_capacity(modes);
    for m in 0..modes {
        let (mut x, mut y) = (T::zero(), T::zero());
        for b in 0..2 {
            let (mut uc, mut us) = (T::zero(), T::zero());
            for j in 0..modes {
                let [cc, ss, sc, cs] = kern.k[j][m];
                uc += aq[j][b] * cc + bq[j][b] * sc;
                us += aq[j][b] * cs + bq[j][b] * ss;
            }
            let (pm, qm) = (input.a[m][b], input.b[m][b]);
            x += uc * pm + us * qm;
            y += us * pm - uc * qm;
        }
        x_agg.push(x);
        y_agg.push(y);
    }
    let horizon = T::cst(kern.horizon);
    osc.iter()
        .map(|o| {
            let regime = o.regime()?;
            let w2 = o.omega0 * o.omega0;
            let mut acc = T::zero();
            let mut x0 = [T::zero(); 2];
            let mut v0 = [T::zero(); 2];
            for (m, &wm) in kern.freqs.iter().enumerate() {
                let a = w2 - wm * wm;
                let bb = o.gamma * (2.0 * wm);
                let den = a * a + bb * bb;
                acc += (a * x_agg[m] + bb * y_agg[m]) / den;
                for b in 0..2 {
                    let (pm, qm) = (input.a[m][b], input.b[m][b]);
                    x0[b] += (a * pm - bb * qm) / den;
                    v0[b] += (a * qm + bb * pm) / den * wm;
                }
            }
            let forms = [0, 1].map(|b| Damped::homogeneous(o, regime, State2::new(-x0[b], -v0[b])));
            for (j, &wj) in kern.freqs.iter().enumerate() {
                let [(c1, s1), (c2, s2)] = forms[0].basis_moments(horizon, T::cst(wj));
                for (b, form) in forms.iter().enumerate() {
                    let (ca, cb) = form.coeffs();
                    acc += aq[j][b] * (ca * c1 + cb * c2) + bq[j][b] * (ca * s1 + cb * s2);
                }
            }
            Ok(acc / kern.horizon)
        })
        .collect()
}

/// `G = P_Q^T P_K` from the two `d x 2` projections.
fn contraction<T: Nn>(layout: &ClassifyLayout, p: &[T]) -> [[T; 2]; 2] {
    let pq = layout.range("query_proj").start;
    let pk = layout.range("key_proj").start;
    let mut g = [[T::zero(); 2]; 2];
    for (a, row) in g.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            for c in 0..layout.d {
                *slot += p[pq + 2 * c + a] * p[pk + 2 * c + b];
            }
        }
    }
    g
}

/// Class logits and key attention weights for one sequence.
pub fn forward<T: Nn>(layout: &ClassifyLayout, p: &[T], kern: &ResonatorKernels, input: &InputExpansion) -> Result<(Vec<T>, Vec<T>)> {
    let d = layout.d;
    let scale = (d as f64).sqrt();
    let g = contraction(layout, p);
    let logits: Vec<T> = key_logits(&layout.oscillators(p)?, &g, kern, input)?.into_iter().map(|a| a / scale).collect();
    let w = softmax(&logits);

    let vals = layout.range("values").start;
    let mut blend = vec![T::zero(); d];
    for (r, &wr) in w.iter().enumerate() {
        for (c, slot) in blend.iter_mut().enumerate() {
            *slot += wr * p[vals + r * d + c];
        }
    }
    let (w1, b1) = (layout.range("mlp_w1").start, layout.range("mlp_b1").start);
    let hidden: Vec<T> = (0..layout.hidden)
        .map(|h| {
            let mut acc = p[b1 + h];
            for (c, &x) in blend.iter().enumerate() {
                acc += p[w1 + h * d + c] * x;
            }
            acc.relu()
        })
        .collect();
    let (w2, b2) = (layout.range("mlp_w2").start, layout.range("mlp_b2").start);
    let out = (0..layout.classes)
        .map(|k| {
            let mut acc = p[b2 + k];
            for (h, &x) in hidden.iter().enumerate() {
                acc += p[w2 + k * layout.hidden + h] * x;
            }
            acc
        })
        .collect();
    Ok((out, w))
}

/// Mean cross-entropy over a batch.
pub fn batch_loss<T: Nn>(
    layout: &ClassifyLayout,
    p: &[T],
    kern: &ResonatorKernels,
    batch: &[(&InputExpansion, usize)],
) -> Result<T> {
    let mut acc = T::zero();
    for (input, label) in batch {
        let (z, _) = forward(layout, p, kern, input)?;
        acc += cross_entropy(&z, *label);
    }
    Ok(acc / batch.len() as f64)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ResonanceProfile {
    pub omega0: f64,
    pub gamma: f64,
    pub omega: Vec<f64>,
    pub magnitude: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassifyMetrics {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub untrained_accuracy: f64,
    /// Rows: true class; columns: keys sorted by natural frequency.
    pub confusion: Vec<Vec<f64>>,
    pub diagonal_mass: f64,
    pub uniform_mass: f64,
    pub class_freqs: Vec<f64>,
    pub key_omega0: Vec<f64>,
    pub key_gamma: Vec<f64>,
    pub profiles: Vec<ResonanceProfile>,
    pub seconds: f64,
    pub curve: Vec<CurvePoint>,
}

struct Evaluation {
    accuracy: f64,
    confusion: Vec<Vec<f64>>,
}

fn evaluate(
    layout: &ClassifyLayout,
    p: &[f64],
    kern: &ResonatorKernels,
    data: &[(InputExpansion, usize)],
) -> Result<Evaluation> {
    let order = key_order(layout, p)?;
    let mut confusion = vec![vec![0.0; layout.keys]; layout.classes];
    let mut counts = vec![0usize; layout.classes];
    let mut correct = 0usize;
    for (input, label) in data {
        let (z, w) = forward(layout, p, kern, input)?;
        let pred = (0..z.len()).fold(0, |best, k| if z[k] > z[best] { k } else { best });
        correct += usize::from(pred == *label);
        counts[*label] += 1;
        for (col, &r) in order.iter().enumerate() {
            confusion[*label][col] += w[r];
        }
    }
    for (row, &n) in confusion.iter_mut().zip(&counts) {
        if n > 0 {
            row.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(Evaluation { accuracy: correct as f64 / data.len() as f64, confusion })
}

/// Key indices sorted by natural frequency.
fn key_order(layout: &ClassifyLayout, p: &[f64]) -> Result<Vec<usize>> {
    let osc = layout.oscillators(p)?;
    let mut order: Vec<usize> = (0..layout.keys).collect();
    order.sort_by(|&a, &b| osc[a].omega0.total_cmp(&osc[b].omega0));
    Ok(order)
}

/// Mean diagonal entry of a square confusion matrix.
pub fn diagonal_mass(confusion: &[Vec<f64>]) -> f64 {
    confusion.iter().enumerate().map(|(i, row)| row[i]).sum::<f64>() / confusion.len() as f64
}

pub fn prepare(samples: &[ClassSample], grid: &FrequencyGrid) -> Result<Vec<(InputExpansion, usize)>> {
    samples.iter().map(|s| Ok((fit_input(s, grid)?, s.label))).collect()
}

/// Train on a fresh synthetic split and report validation metrics.
pub fn train_classifier(cfg: &ClassifyConfig, seed: u64) -> Result<ClassifyMetrics> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut rng = Rng::new(seed);
    let grid = query_grid(cfg)?;
    let train = prepare(&gen_classification(cfg, cfg.n_train, &mut rng), &grid)?;
    let val = prepare(&gen_classification(cfg, cfg.n_val, &mut rng), &grid)?;
    let kern = ResonatorKernels::new(&grid, cfg.horizon);
    let layout = ClassifyLayout::from_config(cfg);
    let mut params = layout.init(&mut rng)?;
    let untrained = evaluate(&layout, &params, &kern, &val)?.accuracy;

    let steps_per_epoch = train.len().div_ceil(cfg.batch);
    let schedule = Schedule::new(cfg.lr, cfg.epochs * steps_per_epoch);
    let mut opt = AdamW::new(params.len(), cfg.weight_decay).without_decay(&layout.undecayed());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    let (mut best_acc, mut best_epoch, mut best_params) = (f64::NEG_INFINITY, 0, params.clone());
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = vec![0.0; params.len()];
            for &i in chunk {
                let one = [(&train[i].0, train[i].1)];
                let (loss, g) = value_and_grad(&params, |p| batch_loss(&layout, p, &kern, &one))
                    .map_err(|_| Error::Diverged { epoch, seed })?;
                epoch_loss += loss;
                grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b / chunk.len() as f64);
            }
            opt.step(&mut params, &grads, &schedule)?;
        }
        let acc = evaluate(&layout, &params, &kern, &val)?.accuracy;
        curve.push(CurvePoint { epoch, loss: epoch_loss / train.len() as f64, val_metric: acc });
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch, seed });
        }
        if acc > best_acc {
            (best_acc, best_epoch, best_params) = (acc, epoch, params.clone());
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let params = best_params;
    let ev = evaluate(&layout, &params, &kern, &val)?;
    let order = key_order(&layout, &params)?;
    let osc = layout.oscillators(&params)?;
    let class_freqs: Vec<f64> = (0..cfg.m).map(|m| cfg.class_freq(m)).collect();
    let top = 2.0 * class_freqs.last().copied().unwrap_or(1.0);
    let omega: Vec<f64> = (0..PROFILE_POINTS).map(|k| top * (k as f64 + 0.5) / PROFILE_POINTS as f64).collect();
    let profiles = order
        .iter()
        .map(|&r| ResonanceProfile {
            omega0: osc[r].omega0,
            gamma: osc[r].gamma,
            magnitude: omega.iter().map(|&w| osc[r].transfer_magnitude(w)).collect(),
            omega: omega.clone(),
        })
        .collect();
    Ok(ClassifyMetrics {
        seed,
        epochs_run,
        best_epoch,
        val_accuracy: ev.accuracy,
        untrained_accuracy: untrained,
        diagonal_mass: diagonal_mass(&ev.confusion),
        uniform_mass: 1.0 / layout.keys as f64,
        confusion: ev.confusion,
        class_freqs,
        key_omega0: order.iter().map(|&r| osc[r].omega0).collect(),
        key_gamma: order.iter().map(|&r| osc[r].gamma).collect(),
        profiles,
        seconds: start.elapsed().as_secs_f64(),
        curve,
    })
}
