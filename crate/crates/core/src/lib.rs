//! Continuous-time attention whose keys and values are damped, driven
//! harmonic oscillators, evaluated entirely in closed form.

pub mod attention;
pub mod bench;
pub mod driven;
pub mod error;
pub mod hat;
pub mod kernels;
pub mod oracles;
pub mod oscillator;
pub mod propagator;
pub mod query;
pub mod real;
pub mod rng;
pub mod toytrain;
pub mod verify;

pub use error::{Error, Result};
pub use oscillator::{classify_regime, normalize_times, DampingRegime, OscParams, State2, TimeGrid};
pub use propagator::{exp_At, propagate, Propagator};
pub use real::Real;
pub use rng::Rng;
