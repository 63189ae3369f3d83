//! Solver-based attention layer: for every pair `i <= j` the key and value
//! trajectories are advanced from `t_i` to `t_j` by fixed-step RK4 and the
//! averaged logit and value mean are integrated by Simpson's rule on the
//! `S + 1` stored nodes. Same semantics as the closed-form layer when the
//! vector field is the linear oscillator.

use crate::attention::layer::{
    aggregate, causal_fit_operators, causal_queries, merge_heads, project_heads, HeadParams, HeadProjections, LayerParams,
    Stream,
};
use crate::attention::AttentionResult;
use crate::driven::KeyTrajectory;
use crate::error::{Error, Result};
use crate::oracles::quad::simpson_samples;
use crate::oracles::rk4::{OdeSystem, Rk4Workspace};
use crate::oscillator::TimeGrid;
use crate::query::QueryExpansion;
use crate::rng::Rng;

/// Dynamics used by the solver layer.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    /// The forced linear oscillator of each channel; reproduces the closed form.
    LinearOscillator,
    /// `k' = tanh(W k + b)` on the `d_h`-dimensional position, shared by all
    /// heads and both streams. Only meaningful for timing.
    DenseTanh { w: Vec<f64>, b: Vec<f64> },
}

impl VectorField {
    pub fn dense_tanh(dh: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / (dh as f64).sqrt();
        VectorField::DenseTanh {
            w: (0..dh * dh).map(|_| rng.normal(0.0, std)).collect(),
            b: (0..dh).map(|_| rng.normal(0.0, 0.1)).collect(),
        }
    }
}

struct LinearSystem<'a> {
    key: &'a KeyTrajectory,
}

impl OdeSystem for LinearSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.key.dim()
    }

    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) {
        let dh = self.key.dim();
        for c in 0..dh {
            let p = &self.key.params[c];
            let (x, v) = (z[c], z[dh + c]);
            out[c] = v;
            out[dh + c] = -2.0 * p.gamma * v - p.omega0 * p.omega0 * x + self.key.forcing.eval(c, t);
        }
    }
}

struct DenseSystem<'a> {
    w: &'a [f64],
    b: &'a [f64],
}

impl OdeSystem for DenseSystem<'_> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn rhs(&self, _t: f64, z: &[f64], out: &mut [f64]) {
        let n = self.b.len();
        for r in 0..n {
            let row = &self.w[r * n..(r + 1) * n];
            let mut acc = self.b[r];
            for (a, x) in row.iter().zip(z) {
                acc += a * x;
            }
            out[r] = acc.tanh();
        }
    }
}

/// Positions (first `d_h` state entries) at the `steps + 1` RK4 nodes.
fn solve_path(
    field: &VectorField,
    key: &KeyTrajectory,
    t0: f64,
    t1: f64,
    steps: usize,
    ws: &mut Option<Rk4Workspace>,
) -> Vec<Vec<f64>> {
    let dh = key.dim();
    let (sys_linear, sys_dense);
    // the offset is a constant shift of the position and is added on readout
    let (sys, mut z): (&dyn OdeSystem, Vec<f64>) = match field {
        VectorField::LinearOscillator => {
            sys_linear = LinearSystem { key };
            let z = key.z0.iter().map(|s| s.x).chain(key.z0.iter().map(|s| s.p)).collect();
            (&sys_linear, z)
        }
        VectorField::DenseTanh { w, b } => {
            sys_dense = DenseSystem { w, b };
            (&sys_dense, key.z0.iter().map(|s| s.x).collect())
        }
    };
    let ws = ws.get_or_insert_with(|| Rk4Workspace::new(z.len()));
    let h = (t1 - t0) / steps as f64;
    let mut path = Vec::with_capacity(steps + 1);
    let position = |z: &[f64]| -> Vec<f64> { (0..dh).map(|c| z[c] + key.offset[c]).collect() };
    path.push(position(&z));
    for k in 0..steps {
        ws.step(sys, t0 + k as f64 * h, h, &mut z);
        path.push(position(&z));
    }
    path
}

fn solver_head(
    head: &HeadParams,
    proj: &HeadProjections,
    queries: &[QueryExpansion],
    times: &[f64],
    drive: &[f64],
    field: &VectorField,
    steps: usize,
) -> Result<AttentionResult> {
    let n = times.len();
    let dh = head.width();
    let keys = (0..n).map(|i| head.trajectory(Stream::Key, &proj.k[i], times[i], drive)).collect::<Result<Vec<_>>>()?;
    let values = (0..n).map(|i| head.trajectory(Stream::Value, &proj.v[i], times[i], drive)).collect::<Result<Vec<_>>>()?;
    let mut ws_k = None;
    let mut ws_v = None;
    let mut rows = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for j in 0..n {
        let q = &queries[j];
        let mut row = Vec::with_capacity(j + 1);
        let mut mrow = Vec::with_capacity(j + 1);
        for i in 0..=j {
            if i == j {
                let qj = q.eval(times[j]);
                let k0: Vec<f64> = (0..dh).map(|c| keys[i].z0[c].x + keys[i].offset[c]).collect();
                row.push(qj.iter().zip(&k0).map(|(a, b)| a * b).sum());
                mrow.push((0..dh).map(|c| values[i].z0[c].x + values[i].offset[c]).collect());
                continue;
            }
            let (t0, t1) = (times[i], times[j]);
            let delta = t1 - t0;
            let h = delta / steps as f64;
            let kpath = solve_path(field, &keys[i], t0, t1, steps, &mut ws_k);
            let integrand: Vec<f64> = kpath
                .iter()
                .enumerate()
                .map(|(s, x)| {
                    let qv = q.eval(t0 + s as f64 * h);
                    qv.iter().zip(x).map(|(a, b)| a * b).sum()
                })
                .collect();
            row.push(simpson_samples(&integrand, h) / delta);
            let vpath = solve_path(field, &values[i], t0, t1, steps, &mut ws_v);
            let mut column = vec![0.0; vpath.len()];
            let mut mean = Vec::with_capacity(dh);
            for c in 0..dh {
                for (slot, node) in column.iter_mut().zip(&vpath) {
                    *slot = node[c];
                }
                mean.push(simpson_samples(&column, h) / delta);
            }
            mrow.push(mean);
        }
        rows.push(row);
        means.push(mrow);
    }
    aggregate(rows, &means, dh)
}

/// Solver-based forward pass with per-head attention details.
pub fn numerical_attention_layer_detailed(
    tokens: &[Vec<f64>],
    times: &TimeGrid,
    params: &LayerParams,
    field: &VectorField,
    steps: usize,
) -> Result<(Vec<Vec<f64>>, Vec<AttentionResult>)> {
    if steps < 2 {
        return Err(Error::Invalid(format!("solver needs at least 2 steps, got {steps}")));
    }
    if let VectorField::DenseTanh { w, b } = field {
        let dh = params.head_width();
        if w.len() != dh * dh || b.len() != dh {
            return Err(Error::Shape("dense vector field does not match the head width".into()));
        }
    }
    let projections = project_heads(tokens, times, params)?;
    let ops = causal_fit_operators(times, params)?;
    let heads = params
        .heads
        .iter()
        .zip(&projections)
        .map(|(h, p)| {
            let queries = causal_queries(&ops, &p.q)?;
            solver_head(h, p, &queries, times.times(), &params.drive_freqs, field, steps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((merge_heads(tokens, params, &heads), heads))
}

/// Solver-based forward pass, `N x d` in and out.
pub fn numerical_attention_layer(
    tokens: &[Vec<f64>],
    times: &TimeGrid,
    params: &LayerParams,
    field: &VectorField,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    Ok(numerical_attention_layer_detailed(tokens, times, params, field, steps)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::layer_forward_detailed;
    use crate::oscillator::normalize_times;
    use crate::query::FrequencyGrid;

    fn setup(n: usize, seed: u64) -> (Vec<Vec<f64>>, TimeGrid, LayerParams) {
        let mut rng = Rng::new(seed);
        let grid = FrequencyGrid::default_for(1.0, n.max(2), 4).unwrap();
        let mut params = LayerParams::init(8, 2, grid, 2, &mut rng).unwrap();
        params.randomize_velocity_maps(0.3, &mut rng);
        let tokens = (0..n).map(|_| (0..8).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
        let mut raw: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        raw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (tokens, normalize_times(&raw).unwrap(), params)
    }

    fn max_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn single_token_matches_closed_form() {
        let (tokens, _, params) = setup(1, 2);
        let times = TimeGrid::from_normalized(vec![0.0]).unwrap();
        let closed = layer_forward_detailed(&tokens, &times, &params).unwrap().output;
        let solver = numerical_attention_layer(&tokens, &times, &params, &VectorField::LinearOscillator, 8).unwrap();
        assert_eq!(closed, solver);
    }

    #[test]
    fn error_shrinks_with_resolution() {
        let (tokens, times, params) = setup(5, 4);
        let closed = layer_forward_detailed(&tokens, &times, &params).unwrap().output;
        let coarse = numerical_attention_layer(&tokens, &times, &params, &VectorField::LinearOscillator, 20).unwrap();
        let fine = numerical_attention_layer(&tokens, &times, &params, &VectorField::LinearOscillator, 80).unwrap();
        assert!(max_gap(&fine, &closed) < max_gap(&coarse, &closed));
    }

    #[test]
    fn dense_field_runs() {
        let (tokens, times, params) = setup(4, 6);
        let field = VectorField::dense_tanh(4, &mut Rng::new(1));
        let out = numerical_attention_layer(&tokens, &times, &params, &field, 10).unwrap();
        assert!(out.iter().flatten().all(|v| v.is_finite()));
    }
}
