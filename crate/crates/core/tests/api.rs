use harmonic_attention::kernels::kernel_c;
use harmonic_attention::propagator::expm_oracle;
use harmonic_attention::verify::{self, VerifyConfig};
use harmonic_attention::{exp_At, normalize_times, propagate, OscParams, State2};

#[test]
fn propagator_matches_generic_matrix_exponential() {
    for (g, w) in [(0.1, 2.0), (2.0, 2.0), (3.0, 0.5)] {
        let p = OscParams::new(g, w).unwrap();
        let closed = exp_At(&p, 0.7).unwrap();
        let oracle = expm_oracle(0.0, 1.0, -w * w, -2.0 * g, 0.7).unwrap();
        assert!(closed.max_abs_diff(&oracle) < 1e-10, "gamma={g} omega0={w}");
    }
}

#[test]
fn propagate_composes_over_split_steps() {
    let p = OscParams::new(0.3, 1.7).unwrap();
    let z0 = State2::new(1.0, -0.5);
    let once = propagate(z0, &p, 1.0).unwrap();
    let twice = propagate(propagate(z0, &p, 0.4).unwrap(), &p, 0.6).unwrap();
    assert!((once.x - twice.x).abs() < 1e-12 && (once.p - twice.p).abs() < 1e-12);
}

#[test]
fn cosine_kernel_against_trapezoid() {
    let (delta, gamma, lambda) = (0.8, 0.4, 3.0);
    let n = 200_000;
    let h = delta / n as f64;
    let f = |t: f64| (-gamma * t).exp() * (lambda * t).cos();
    let trap = h * ((1..n).map(|k| f(k as f64 * h)).sum::<f64>() + 0.5 * (f(0.0) + f(delta)));
    assert!((kernel_c(delta, gamma, lambda) - trap).abs() < 1e-9);
}

#[test]
fn times_are_normalized_to_unit_interval() {
    let grid = normalize_times(&[3.0, 5.0, 7.0]).unwrap();
    assert_eq!(grid.times(), &[0.0, 0.5, 1.0]);
    assert!(normalize_times(&[2.0, 1.0]).is_err());
}

#[test]
fn small_verify_run_is_deterministic() {
    let cfg = VerifyConfig { kernel_cases: 50, propagator_cases: 20, logit_cases: 10, ..VerifyConfig::default() };
    let a = verify::kernel_suite(&cfg);
    let b = verify::kernel_suite(&cfg);
    assert!(a.passed);
    assert_eq!(a.worst_ratio, b.worst_ratio);
    assert!(verify::propagator_suite(&cfg).passed);
    assert!(verify::logit_suite(&cfg).passed);
}
