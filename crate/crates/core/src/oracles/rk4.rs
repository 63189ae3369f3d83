//! Classic fixed-step fourth-order Runge–Kutta.

/// First-order system `z' = f(t, z)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]);
}

/// Closure-backed system.
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) {
        (self.f)(t, z, out)
    }
}

/// Scratch buffers for repeated stepping without reallocation.
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// One RK4 step of size `h` from `(t, z)`, in place.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, h: f64, z: &mut [f64]) {
        let n = z.len();
        sys.rhs(t, z, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = z[i] + 0.5 * h * self.k1[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = z[i] + 0.5 * h * self.k2[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = z[i] + h * self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            z[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrate from `t0` to `t1` in `steps` equal steps; returns the final state.
pub fn rk4_integrate<S: OdeSystem + ?Sized>(sys: &S, z0: &[f64], t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 1 && t1 >= t0, "rk4 requires steps >= 1 and t1 >= t0");
    let mut z = z0.to_vec();
    let mut ws = Rk4Workspace::new(z.len());
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        ws.step(sys, t0 + k as f64 * h, h, &mut z);
    }
    z
}

/// Same as [`rk4_integrate`] but keeps the `steps + 1` node states.
pub fn rk4_path<S: OdeSystem + ?Sized>(sys: &S, z0: &[f64], t0: f64, t1: f64, steps: usize) -> Vec<Vec<f64>> {
    assert!(steps >= 1 && t1 >= t0, "rk4 requires steps >= 1 and t1 >= t0");
    let mut z = z0.to_vec();
    let mut ws = Rk4Workspace::new(z.len());
    let h = (t1 - t0) / steps as f64;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(z.clone());
    for k in 0..steps {
        ws.step(sys, t0 + k as f64 * h, h, &mut z);
        path.push(z.clone());
    }
    path
}
