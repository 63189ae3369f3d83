//! Multi-head oscillator attention layer.
//!
//! Per head, token `i` yields a key and a value trajectory anchored at `t_i`:
//! initial position is the projected token, initial velocity is `U K_i`,
//! and the optional drive is `sum_m (g_m * K_i) cos(w_m (t - t_i)) +
//! (h_m * K_i) sin(w_m (t - t_i))` on the first `M_f` grid frequencies.
//! Row `j` fits its own query expansion on the projected queries observed up
//! to `t_j`, attends over keys `i <= j`, and aggregates time-averaged values.

use crate::driven::{ForcingExpansion, KeyTrajectory, PreparedTrajectory};
use crate::error::{Error, Result};
use crate::oscillator::{OscParams, State2, TimeGrid};
use crate::query::{rotate_query, FitOperator, FrequencyGrid, QueryExpansion};
use crate::rng::Rng;

use super::{attention_logit, masked_softmax, mean_value, rotated_logit};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Spectra, velocity maps and drive gains of one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub omega_k: Vec<f64>,
    pub zeta_k: Vec<f64>,
    pub omega_v: Vec<f64>,
    pub zeta_v: Vec<f64>,
    /// `d_h x d_h`, row-major.
    pub u_k: Vec<f64>,
    pub u_v: Vec<f64>,
    /// `M_f x d_h`.
    pub g_k: Vec<Vec<f64>>,
    pub h_k: Vec<Vec<f64>>,
    pub g_v: Vec<Vec<f64>>,
    pub h_v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Key,
    Value,
}

impl HeadParams {
    pub fn width(&self) -> usize {
        self.omega_k.len()
    }

    /// Anchored trajectory of one projected token.
    pub fn trajectory(&self, stream: Stream, proj: &[f64], anchor: f64, drive_freqs: &[f64]) -> Result<KeyTrajectory> {
        let (omega, zeta, u, g, h) = match stream {
            Stream::Key => (&self.omega_k, &self.zeta_k, &self.u_k, &self.g_k, &self.h_k),
            Stream::Value => (&self.omega_v, &self.zeta_v, &self.u_v, &self.g_v, &self.h_v),
        };
        let dh = self.width();
        let params = omega.iter().zip(zeta).map(|(&w, &z)| OscParams::new(z, w)).collect::<Result<Vec<_>>>()?;
        let z0 = (0..dh)
            .map(|r| {
                let vel: f64 = (0..dh).map(|c| u[r * dh + c] * proj[c]).sum();
                State2::new(proj[r], vel)
            })
            .collect();
        let forcing = if drive_freqs.is_empty() {
            ForcingExpansion::empty()
        } else {
            let scale = |gains: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                gains.iter().take(drive_freqs.len()).map(|gm| gm.iter().zip(proj).map(|(a, b)| a * b).collect()).collect()
            };
            ForcingExpansion::from_anchor_frame(drive_freqs.to_vec(), scale(g), scale(h), anchor)?
        };
        KeyTrajectory::new(params, z0, forcing, vec![0.0; dh], anchor)
    }
}

/// All learnable parameters of one layer plus its fixed collocation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub d: usize,
    pub heads: Vec<HeadParams>,
    /// `d x d`, row-major; `Q_i = W_Q x_i + b_Q`.
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_q: Vec<f64>,
    pub b_k: Vec<f64>,
    pub b_v: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub grid: FrequencyGrid,
    /// Drive frequencies, taken from the grid; empty for an undriven layer.
    pub drive_freqs: Vec<f64>,
    pub ridge: f64,
}

impl LayerParams {
    /// Random initialization: projections `N(0, 1/d)`, spectra log-uniform on
    /// `[1e-2, 1e1]`, damping uniform on `[0.05, 0.4]`, zero velocity maps,
    /// drive gains `N(0, 0.5^2)` on the first `drive_modes` grid frequencies.
    pub fn init(d: usize, n_heads: usize, grid: FrequencyGrid, drive_modes: usize, rng: &mut Rng) -> Result<Self> {
        if n_heads == 0 || d == 0 || d % n_heads != 0 {
            return Err(Error::Shape(format!("width {d} is not divisible into {n_heads} heads")));
        }
        if drive_modes > grid.len() {
            return Err(Error::Shape(format!("{drive_modes} drive modes but grid has {}", grid.len())));
        }
        let dh = d / n_heads;
        let std = 1.0 / (d as f64).sqrt();
        let mat = |rng: &mut Rng| (0..d * d).map(|_| rng.normal(0.0, std)).collect::<Vec<_>>();
        let (w_q, w_k, w_v, w_o) = (mat(rng), mat(rng), mat(rng), mat(rng));
        let mut heads = Vec::with_capacity(n_heads);
        for _ in 0..n_heads {
            let spectrum = |rng: &mut Rng| -> Result<Vec<f64>> { (0..dh).map(|_| rng.log_uniform(1e-2, 1e1)).collect() };
            let omega_k = spectrum(rng)?;
            let omega_v = spectrum(rng)?;
            let damping = |rng: &mut Rng| -> Result<Vec<f64>> { (0..dh).map(|_| rng.uniform(0.05, 0.4)).collect() };
            let zeta_k = damping(rng)?;
            let zeta_v = damping(rng)?;
            let gains = |rng: &mut Rng| (0..drive_modes).map(|_| (0..dh).map(|_| rng.normal(0.0, 0.5)).collect()).collect();
            let (g_k, h_k, g_v, h_v) = (gains(rng), gains(rng), gains(rng), gains(rng));
            heads.push(HeadParams {
                omega_k,
                zeta_k,
                omega_v,
                zeta_v,
                u_k: vec![0.0; dh * dh],
                u_v: vec![0.0; dh * dh],
                g_k,
                h_k,
                g_v,
                h_v,
            });
        }
        let drive_freqs = grid.freqs()[..drive_modes].to_vec();
        Ok(Self {
            d,
            heads,
            w_q,
            w_k,
            w_v,
            w_o,
            b_q: vec![0.0; d],
            b_k: vec![0.0; d],
            b_v: vec![0.0; d],
            ln_gain: vec![1.0; d],
            ln_bias: vec![0.0; d],
            grid,
            drive_freqs,
            ridge: crate::query::DEFAULT_RIDGE,
        })
    }

    /// Fill the velocity maps with `N(0, std^2)` entries.
    pub fn randomize_velocity_maps(&mut self, std: f64, rng: &mut Rng) {
        for h in &mut self.heads {
            for v in h.u_k.iter_mut().chain(h.u_v.iter_mut()) {
                *v = rng.normal(0.0, std);
            }
        }
    }

    pub fn head_width(&self) -> usize {
        self.d / self.heads.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        let n_heads = self.heads.len();
        if n_heads == 0 || d % n_heads != 0 {
            return Err(Error::Shape(format!("width {d} is not divisible into {n_heads} heads")));
        }
        for (name, m) in [("W_Q", &self.w_q), ("W_K", &self.w_k), ("W_V", &self.w_v), ("W_O", &self.w_o)] {
            if m.len() != d * d {
                return Err(Error::Shape(format!("{name} has {} entries, expected {}", m.len(), d * d)));
            }
        }
        for (name, v) in [
            ("b_Q", &self.b_q),
            ("b_K", &self.b_k),
            ("b_V", &self.b_v),
            ("ln gain", &self.ln_gain),
            ("ln bias", &self.ln_bias),
        ] {
            if v.len() != d {
                return Err(Error::Shape(format!("{name} has {} entries, expected {d}", v.len())));
            }
        }
        let dh = d / n_heads;
        let mf = self.drive_freqs.len();
        for h in &self.heads {
            let vecs = [&h.omega_k, &h.zeta_k, &h.omega_v, &h.zeta_v];
            if vecs.iter().any(|v| v.len() != dh) || h.u_k.len() != dh * dh || h.u_v.len() != dh * dh {
                return Err(Error::Shape("head spectra or velocity maps have the wrong size".into()));
            }
            for g in [&h.g_k, &h.h_k, &h.g_v, &h.h_v] {
                if g.len() < mf || g.iter().take(mf).any(|row| row.len() != dh) {
                    return Err(Error::Shape("drive gains do not cover the drive frequencies".into()));
                }
            }
            if h.omega_k.iter().chain(&h.omega_v).any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(Error::Invalid("head frequencies must be positive".into()));
            }
            if h.zeta_k.iter().chain(&h.zeta_v).any(|z| !(*z >= 0.0 && z.is_finite())) {
                return Err(Error::Invalid("head damping must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Logits, weights and aggregated outputs of one head. Row `j` is the
/// evaluation time `t_j`, column `i` the key; entries with `i > j` are masked.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub logits: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub output: Vec<Vec<f64>>,
    pub heads: Vec<AttentionResult>,
}

/// Per-head projected queries, keys and values (`N x d_h` each).
#[derive(Debug, Clone)]
pub struct HeadProjections {
    pub q: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let d = b.len();
    (0..d).map(|r| b[r] + w[r * d..(r + 1) * d].iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).collect()
}

/// Shape checks plus the three projections split into heads.
pub fn project_heads(tokens: &[Vec<f64>], times: &TimeGrid, params: &LayerParams) -> Result<Vec<HeadProjections>> {
    params.validate()?;
    if tokens.is_empty() {
        return Err(Error::Empty("tokens"));
    }
    if tokens.len() != times.len() {
        return Err(Error::Shape(format!("{} tokens but {} time stamps", tokens.len(), times.len())));
    }
    if let Some(bad) = tokens.iter().find(|t| t.len() != params.d) {
        return Err(Error::Shape(format!("token width {} vs layer width {}", bad.len(), params.d)));
    }
    let dh = params.head_width();
    let full = |w: &[f64], b: &[f64]| tokens.iter().map(|x| affine(w, b, x)).collect::<Vec<_>>();
    let (q, k, v) = (full(&params.w_q, &params.b_q), full(&params.w_k, &params.b_k), full(&params.w_v, &params.b_v));
    let split = |m: &Vec<Vec<f64>>, h: usize| m.iter().map(|row| row[h * dh..(h + 1) * dh].to_vec()).collect();
    Ok((0..params.heads.len()).map(|h| HeadProjections { q: split(&q, h), k: split(&k, h), v: split(&v, h) }).collect())
}

/// One fit operator per row `j`, over the sample times `t_0..=t_j`.
pub fn causal_fit_operators(times: &TimeGrid, params: &LayerParams) -> Result<Vec<FitOperator>> {
    let t = times.times();
    (0..t.len()).map(|j| FitOperator::new(&t[..=j], &params.grid, params.ridge)).collect()
}

/// Causal query expansions of one head.
pub fn causal_queries(ops: &[FitOperator], q: &[Vec<f64>]) -> Result<Vec<QueryExpansion>> {
    ops.iter().enumerate().map(|(j, op)| op.apply(&q[..=j])).collect()
}

/// Softmax each row over `i <= j` and aggregate the supplied value means.
/// `means[j][i]` is the mean of value `i` over `[t_i, t_j]`.
pub fn aggregate(logit_rows: Vec<Vec<f64>>, means: &[Vec<Vec<f64>>], dh: usize) -> Result<AttentionResult> {
    let n = logit_rows.len();
    let mut logits = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for (j, row) in logit_rows.into_iter().enumerate() {
        let mut full = vec![f64::NEG_INFINITY; n];
        full[..=j].copy_from_slice(&row);
        let mask: Vec<bool> = (0..n).map(|i| i <= j).collect();
        let w = masked_softmax(&full, dh, &mask)?;
        let mut y = vec![0.0; dh];
        for (i, wi) in w.iter().enumerate().take(j + 1) {
            for (o, v) in y.iter_mut().zip(&means[j][i]) {
                *o += wi * v;
            }
        }
        logits.push(full);
        weights.push(w);
        outputs.push(y);
    }
    Ok(AttentionResult { logits, weights, outputs })
}

/// Concatenate heads, apply `W_O`, add the residual and layer-normalize.
pub fn merge_heads(tokens: &[Vec<f64>], params: &LayerParams, heads: &[AttentionResult]) -> Vec<Vec<f64>> {
    let d = params.d;
    let zero = vec![0.0; d];
    tokens
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let cat: Vec<f64> = heads.iter().flat_map(|h| h.outputs[j].iter().copied()).collect();
            let mixed = affine(&params.w_o, &zero, &cat);
            let pre: Vec<f64> = x.iter().zip(&mixed).map(|(a, b)| a + b).collect();
            layer_norm(&pre, &params.ln_gain, &params.ln_bias)
        })
        .collect()
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    x.iter().zip(gain.iter().zip(bias)).map(|(v, (g, b))| (v - mean) * inv * g + b).collect()
}

fn closed_form_head(
    head: &HeadParams,
    proj: &HeadProjections,
    ops: &[FitOperator],
    times: &[f64],
    drive: &[f64],
) -> Result<AttentionResult> {
    let n = times.len();
    let keys = (0..n)
        .map(|i| head.trajectory(Stream::Key, &proj.k[i], times[i], drive)?.prepare())
        .collect::<Result<Vec<PreparedTrajectory>>>()?;
    let values = (0..n)
        .map(|i| head.trajectory(Stream::Value, &proj.v[i], times[i], drive)?.prepare())
        .collect::<Result<Vec<PreparedTrajectory>>>()?;
    let queries = causal_queries(ops, &proj.q)?;
    let mut rows = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for j in 0..n {
        let q = &queries[j];
        let mut row = Vec::with_capacity(j + 1);
        let mut mrow = Vec::with_capacity(j + 1);
        for i in 0..=j {
            if i == j {
                row.push(attention_logit(q, &keys[i], times[j])?);
            } else {
                let rq = rotate_query(q, times[i]);
                row.push(rotated_logit(&rq, &keys[i], times[j] - times[i]));
            }
            mrow.push(mean_value(&values[i], times[j])?);
        }
        rows.push(row);
        means.push(mrow);
    }
    aggregate(rows, &means, head.width())
}

/// Closed-form forward pass with per-head attention details.
pub fn layer_forward_detailed(tokens: &[Vec<f64>], times: &TimeGrid, params: &LayerParams) -> Result<LayerOutput> {
    let projections = project_heads(tokens, times, params)?;
    let ops = causal_fit_operators(times, params)?;
    let heads = params
        .heads
        .iter()
        .zip(&projections)
        .map(|(h, p)| closed_form_head(h, p, &ops, times.times(), &params.drive_freqs))
        .collect::<Result<Vec<_>>>()?;
    let output = merge_heads(tokens, params, &heads);
    Ok(LayerOutput { output, heads })
}

/// Closed-form forward pass, `N x d` in and out.
pub fn layer_forward(tokens: &[Vec<f64>], times: &TimeGrid, params: &LayerParams) -> Result<Vec<Vec<f64>>> {
    Ok(layer_forward_detailed(tokens, times, params)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::normalize_times;

    fn setup(n: usize, d: usize, heads: usize, seed: u64) -> (Vec<Vec<f64>>, TimeGrid, LayerParams) {
        let mut rng = Rng::new(seed);
        let grid = FrequencyGrid::default_for(1.0, n.max(2), 4).unwrap();
        let mut params = LayerParams::init(d, heads, grid, 2, &mut rng).unwrap();
        params.randomize_velocity_maps(0.3, &mut rng);
        let tokens = (0..n).map(|_| (0..d).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
        let mut raw: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        raw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (tokens, normalize_times(&raw).unwrap(), params)
    }

    #[test]
    fn single_token() {
        let (tokens, _, params) = setup(1, 8, 2, 3);
        let times = TimeGrid::from_normalized(vec![0.0]).unwrap();
        let out = layer_forward_detailed(&tokens, &times, &params).unwrap();
        let dh = 4;
        for (h, res) in out.heads.iter().enumerate() {
            assert_eq!(res.weights, vec![vec![1.0]]);
            let vproj: Vec<f64> = (0..dh)
                .map(|r| params.w_v[(h * dh + r) * 8..(h * dh + r + 1) * 8].iter().zip(&tokens[0]).map(|(a, b)| a * b).sum())
                .collect();
            for (a, b) in res.outputs[0].iter().zip(&vproj) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let (tokens, times, params) = setup(6, 8, 2, 11);
        let out = layer_forward_detailed(&tokens, &times, &params).unwrap();
        for res in &out.heads {
            for (j, w) in res.weights.iter().enumerate() {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w[j + 1..].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn head_permutation_invariance() {
        let (tokens, times, params) = setup(5, 8, 2, 5);
        let base = layer_forward(&tokens, &times, &params).unwrap();
        let mut swapped = params.clone();
        swapped.heads.swap(0, 1);
        let dh = 4;
        let perm: Vec<usize> = (dh..2 * dh).chain(0..dh).collect();
        let permute_rows = |m: &[f64]| -> Vec<f64> { perm.iter().flat_map(|&r| m[r * 8..(r + 1) * 8].to_vec()).collect() };
        swapped.w_q = permute_rows(&params.w_q);
        swapped.w_k = permute_rows(&params.w_k);
        swapped.w_v = permute_rows(&params.w_v);
        swapped.b_q = perm.iter().map(|&r| params.b_q[r]).collect();
        swapped.b_k = perm.iter().map(|&r| params.b_k[r]).collect();
        swapped.b_v = perm.iter().map(|&r| params.b_v[r]).collect();
        swapped.w_o = (0..8).flat_map(|r| perm.iter().map(move |&c| (r, c))).map(|(r, c)| params.w_o[r * 8 + c]).collect();
        let out = layer_forward(&tokens, &times, &swapped).unwrap();
        for (a, b) in out.iter().flatten().zip(base.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_rows_ignore_future_tokens() {
        let (mut tokens, times, params) = setup(6, 8, 2, 9);
        let base = layer_forward(&tokens, &times, &params).unwrap();
        tokens[5] = vec![3.0; 8];
        tokens[4][2] += 1.0;
        let out = layer_forward(&tokens, &times, &params).unwrap();
        for j in 0..4 {
            assert_eq!(out[j], base[j]);
        }
    }

    #[test]
    fn shape_errors() {
        let (tokens, times, params) = setup(3, 8, 2, 1);
        let short: Vec<Vec<f64>> = tokens.iter().map(|t| t[..7].to_vec()).collect();
        assert!(matches!(layer_forward(&short, &times, &params), Err(Error::Shape(_))));
        assert!(matches!(layer_forward(&tokens[..2], &times, &params), Err(Error::Shape(_))));
    }
}
