//! Reverse-mode tape, AdamW and the two synthetic resonance experiments.

pub mod adamw;
pub mod classify;
pub mod data;
pub mod regress;
pub mod tape;

use serde::Serialize;

use crate::error::Result;
use crate::real::Real;
use tape::Var;

pub use adamw::{AdamW, Schedule};
pub use classify::{train_classifier, ClassifyMetrics};
pub use data::{gen_classification, gen_regression, ClassifyConfig, RegressConfig};
pub use regress::{train_regressor, RegressMetrics};

/// Scalar operations the toy models need beyond [`Real`].
pub trait Nn: Real {
    fn ln(self) -> Self;
    fn relu(self) -> Self;
    fn softplus(self) -> Self;
}

impl Nn for f64 {
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn relu(self) -> Self {
        self.max(0.0)
    }
    fn softplus(self) -> Self {
        tape::softplus(self)
    }
}

impl Nn for Var {
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn relu(self) -> Self {
        Var::relu(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
}

/// Plain softmax over all entries.
pub fn softmax<T: Nn>(z: &[T]) -> Vec<T> {
    let m = z.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let mut s = T::zero();
    for &v in &e {
        s += v;
    }
    e.iter().map(|&v| v / s).collect()
}

/// `-log softmax(z)[label]`.
pub fn cross_entropy<T: Nn>(z: &[T], label: usize) -> T {
    let m = z.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
    let mut s = T::zero();
    for &v in z {
        s += (v - m).exp();
    }
    s.ln() + m - z[label]
}

/// Loss value and gradient with respect to `params`, on a fresh tape.
pub fn value_and_grad<F>(params: &[f64], f: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Var]) -> Result<Var>,
{
    tape::reset();
    let vars: Vec<Var> = params.iter().map(|&p| Var::param(p)).collect();
    let loss = f(&vars)?;
    let g = tape::grad(loss)?;
    let out = (loss.value(), g.wrt_all(&vars));
    tape::reset();
    Ok(out)
}

/// One row of a training curve.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: f64,
}

/// `epoch,loss,val_metric` lines with a header.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,loss,val_metric\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.epoch, p.loss, p.val_metric));
    }
    out
}

/// Pearson correlation; zero when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
