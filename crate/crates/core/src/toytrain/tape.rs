//! Reverse-mode differentiation over a thread-local tape.
//!
//! A [`Var`] is a primal value plus an index into the current thread's tape;
//! constants carry no index. Every closed-form routine written against
//! [`Real`] therefore records itself when instantiated with `Var`.
//!
//! ```
//! use harmonic_attention::toytrain::tape::{self, Var};
//! tape::reset();
//! let p = Var::param(3.0);
//! let g = tape::grad(p * p).unwrap();
//! assert_eq!(g.wrt(p), 6.0);
//! ```

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::real::Real;

const CONST: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddC(f64),
    MulC(f64),
    /// `c / a`
    RDivC(f64),
    Exp,
    Ln,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Sqrt,
    Powi(i32),
    Relu,
    Softplus,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    a: u32,
    b: u32,
    val: f64,
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
}

/// Drop every recorded node on this thread. Outstanding `Var`s become invalid.
pub fn reset() {
    TAPE.with(|t| t.borrow_mut().clear());
}

/// Number of nodes recorded on this thread.
pub fn len() -> usize {
    TAPE.with(|t| t.borrow().len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Var {
    idx: u32,
    val: f64,
}

impl Var {
    /// A new differentiable leaf.
    pub fn param(v: f64) -> Self {
        push(Op::Leaf, CONST, CONST, v)
    }

    pub fn is_const(self) -> bool {
        self.idx == CONST
    }

    pub fn ln(self) -> Self {
        unary(self, Op::Ln, self.val.ln())
    }

    pub fn relu(self) -> Self {
        unary(self, Op::Relu, self.val.max(0.0))
    }

    /// `ln(1 + e^x)` without overflow.
    pub fn softplus(self) -> Self {
        unary(self, Op::Softplus, softplus(self.val))
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn push(op: Op, a: u32, b: u32, val: f64) -> Var {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let idx = u32::try_from(t.len()).ok().filter(|&i| i != CONST).expect("tape overflow");
        t.push(Node { op, a, b, val });
        Var { idx, val }
    })
}

fn unary(x: Var, op: Op, val: f64) -> Var {
    if x.is_const() {
        Var { idx: CONST, val }
    } else {
        push(op, x.idx, CONST, val)
    }
}

fn eval_op(op: Op, a: f64, b: f64) -> f64 {
    match op {
        Op::Leaf => a,
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => a / b,
        Op::Neg => -a,
        Op::AddC(c) => a + c,
        Op::MulC(c) => a * c,
        Op::RDivC(c) => c / a,
        Op::Exp => a.exp(),
        Op::Ln => a.ln(),
        Op::Sin => a.sin(),
        Op::Cos => a.cos(),
        Op::Sinh => a.sinh(),
        Op::Cosh => a.cosh(),
        Op::Sqrt => a.sqrt(),
        Op::Powi(n) => a.powi(n),
        Op::Relu => a.max(0.0),
        Op::Softplus => softplus(a),
    }
}

fn binary(x: Var, y: Var, op: Op) -> Var {
    let val = eval_op(op, x.val, y.val);
    match (x.is_const(), y.is_const()) {
        (true, true) => Var { idx: CONST, val },
        (false, true) => match op {
            Op::Add => push(Op::AddC(y.val), x.idx, CONST, val),
            Op::Sub => push(Op::AddC(-y.val), x.idx, CONST, val),
            Op::Mul => push(Op::MulC(y.val), x.idx, CONST, val),
            Op::Div => push(Op::MulC(1.0 / y.val), x.idx, CONST, val),
            _ => unreachable!(),
        },
        (true, false) => match op {
            Op::Add => push(Op::AddC(x.val), y.idx, CONST, val),
            Op::Sub => {
                let n = push(Op::Neg, y.idx, CONST, -y.val);
                push(Op::AddC(x.val), n.idx, CONST, val)
            }
            Op::Mul => push(Op::MulC(x.val), y.idx, CONST, val),
            Op::Div => push(Op::RDivC(x.val), y.idx, CONST, val),
            _ => unreachable!(),
        },
        (false, false) => push(op, x.idx, y.idx, val),
    }
}

/// Adjoints of every recorded node for one scalar output.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    /// `d loss / d v`; zero for constants and for nodes recorded after the loss.
    pub fn wrt(&self, v: Var) -> f64 {
        if v.is_const() {
            return 0.0;
        }
        self.adj.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// Reverse sweep from `loss`.
pub fn grad(loss: Var) -> Result<Gradients> {
    if !loss.val.is_finite() {
        return Err(Error::PoisonedGradient);
    }
    if loss.is_const() {
        return Ok(Gradients { adj: Vec::new() });
    }
    TAPE.with(|t| {
        let t = t.borrow();
        let end = loss.idx as usize + 1;
        if t[..end].iter().any(|n| !n.val.is_finite()) {
            return Err(Error::PoisonedGradient);
        }
        let mut adj = vec![0.0; end];
        adj[end - 1] = 1.0;
        for i in (0..end).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = t[i];
            let (a, b) = (n.a as usize, n.b as usize);
            let av = if n.a != CONST { t[a].val } else { 0.0 };
            match n.op {
                Op::Leaf => {}
                Op::Add => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul => {
                    adj[a] += g * t[b].val;
                    adj[b] += g * av;
                }
                Op::Div => {
                    let bv = t[b].val;
                    adj[a] += g / bv;
                    adj[b] -= g * n.val / bv;
                }
                Op::Neg => adj[a] -= g,
                Op::AddC(_) => adj[a] += g,
                Op::MulC(c) => adj[a] += g * c,
                Op::RDivC(_) => adj[a] -= g * n.val / av,
                Op::Exp => adj[a] += g * n.val,
                Op::Ln => adj[a] += g / av,
                Op::Sin => adj[a] += g * av.cos(),
                Op::Cos => adj[a] -= g * av.sin(),
                Op::Sinh => adj[a] += g * av.cosh(),
                Op::Cosh => adj[a] += g * av.sinh(),
                Op::Sqrt => adj[a] += g * 0.5 / n.val,
                Op::Powi(k) => adj[a] += g * k as f64 * av.powi(k - 1),
                Op::Relu => {
                    if av > 0.0 {
                        adj[a] += g
                    }
                }
                Op::Softplus => adj[a] += g * sigmoid(av),
            }
        }
        Ok(Gradients { adj })
    })
}

/// Recompute every node from the recorded leaves; returns the value of `out`.
pub fn replay(out: Var) -> f64 {
    if out.is_const() {
        return out.val;
    }
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        for i in 0..=out.idx as usize {
            let n = t[i];
            if n.op == Op::Leaf {
                continue;
            }
            let a = t[n.a as usize].val;
            let b = if n.b != CONST { t[n.b as usize].val } else { 0.0 };
            t[i].val = eval_op(n.op, a, b);
        }
        t[out.idx as usize].val
    })
}

impl Add for Var {
    type Output = Var;
    fn add(self, rhs: Var) -> Var {
        binary(self, rhs, Op::Add)
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, rhs: Var) -> Var {
        binary(self, rhs, Op::Sub)
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, rhs: Var) -> Var {
        binary(self, rhs, Op::Mul)
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, rhs: Var) -> Var {
        binary(self, rhs, Op::Div)
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        unary(self, Op::Neg, -self.val)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    fn add(self, c: f64) -> Var {
        unary(self, Op::AddC(c), self.val + c)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    fn sub(self, c: f64) -> Var {
        unary(self, Op::AddC(-c), self.val - c)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    fn mul(self, c: f64) -> Var {
        unary(self, Op::MulC(c), self.val * c)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    fn div(self, c: f64) -> Var {
        unary(self, Op::MulC(1.0 / c), self.val / c)
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, rhs: Var) {
        *self = *self + rhs;
    }
}

impl Real for Var {
    fn cst(v: f64) -> Self {
        Var { idx: CONST, val: v }
    }
    fn value(self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        unary(self, Op::Exp, self.val.exp())
    }
    fn sin(self) -> Self {
        unary(self, Op::Sin, self.val.sin())
    }
    fn cos(self) -> Self {
        unary(self, Op::Cos, self.val.cos())
    }
    fn sinh(self) -> Self {
        unary(self, Op::Sinh, self.val.sinh())
    }
    fn cosh(self) -> Self {
        unary(self, Op::Cosh, self.val.cosh())
    }
    fn sqrt(self) -> Self {
        unary(self, Op::Sqrt, self.val.sqrt())
    }
    fn powi(self, n: i32) -> Self {
        unary(self, Op::Powi(n), self.val.powi(n))
    }
}
