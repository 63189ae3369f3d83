//! End-to-end acceptance checks. Runs as one sequential test so timing
//! measurements are not disturbed by other tests, and prints one PASS/FAIL
//! line per criterion before asserting.

use std::time::Instant;

use harmonic_attention::attention::{layer_forward, LayerParams};
use harmonic_attention::bench::{self, BenchConfig, CountingAlloc};
use harmonic_attention::driven::{ForcingExpansion, KeyTrajectory};
use harmonic_attention::hat::{damping_perturbation, fejer_approx, realize_bank, TriangleDemo, TriangleKey};
use harmonic_attention::oracles::{numerical_attention_layer, VectorField};
use harmonic_attention::query::FrequencyGrid;
use harmonic_attention::toytrain::{train_classifier, train_regressor, ClassifyConfig, RegressConfig};
use harmonic_attention::verify::{self, Tolerances, VerifyConfig};
use harmonic_attention::{normalize_times, OscParams, Rng, State2};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn pinned() -> VerifyConfig {
    VerifyConfig {
        seed: 2024,
        tolerances: Tolerances {
            kernel: 1e-9,
            propagator: 1e-10,
            ode_residual: 1e-4,
            anchor_value: 1e-10,
            anchor_derivative: 1e-7,
            logit_rel: 1e-6,
            softmax: 1e-12,
            gradient_rel: 1e-4,
            perturbation: 0.1,
        },
        kernel_cases: 1000,
        propagator_cases: 300,
        anchoring_cases: 300,
        logit_cases: 300,
        softmax_pairs: 10_000,
        gradient_seeds: 5,
        hat: TriangleDemo { epsilon: 0.05, n_max: 256, damped_gamma: 1e-4, ..TriangleDemo::default() },
    }
}

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{:<34} {}  {}", name, if pass { "PASS" } else { "FAIL" }, detail);
    Outcome { name, pass, detail }
}

fn kernels(cfg: &VerifyConfig) -> Outcome {
    let r = verify::kernel_suite(cfg);
    let fast = r.seconds < 10.0;
    outcome("kernel oracle equivalence", r.passed && fast && r.cases == 8000, format!("{} cases, worst/bound {:.2e}, {:.2}s", r.cases, r.worst_ratio, r.seconds))
}

/// Residual of `x'' + 2 gamma x' + w^2 (x - offset) = F(t)` for driven keys.
fn driven_residual(cases: usize) -> f64 {
    let mut rng = Rng::new(77);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let w = 0.3 + 3.7 * rng.unit();
        let g = match case % 3 {
            0 => w * (0.05 + 0.85 * rng.unit()),
            1 => w,
            _ => w * (1.1 + 1.9 * rng.unit()),
        };
        let p = OscParams::new(g, w).unwrap();
        let mut freqs = vec![0.2 + 5.8 * rng.unit(), 0.2 + 5.8 * rng.unit()];
        freqs.sort_by(f64::total_cmp);
        let f = ForcingExpansion::new(freqs, vec![vec![rng.normal(0.0, 1.0)]; 2], vec![vec![rng.normal(0.0, 1.0)]; 2]).unwrap();
        let anchor = rng.unit();
        let offset = rng.normal(0.0, 0.5);
        let key = KeyTrajectory::new(vec![p], vec![State2::new(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0))], f.clone(), vec![offset], anchor)
            .unwrap()
            .prepare()
            .unwrap();
        let t = anchor + 0.01 + 3.0 * rng.unit();
        let h = 1e-4;
        let x = |u: f64| key.eval(u).unwrap()[0];
        let xpp = (x(t + h) - 2.0 * x(t) + x(t - h)) / (h * h);
        let xp = (x(t + h) - x(t - h)) / (2.0 * h);
        worst = worst.max((xpp + 2.0 * g * xp + w * w * (x(t) - offset) - f.eval(0, t)).abs());
    }
    worst
}

fn propagator(cfg: &VerifyConfig) -> Outcome {
    let r = verify::propagator_suite(cfg);
    let res = driven_residual(300);
    outcome(
        "propagator laws and ode residual",
        r.passed && res <= 1e-4,
        format!("{} checks, worst/bound {:.2e}; driven residual {:.2e}", r.cases, r.worst_ratio, res),
    )
}

fn anchoring(cfg: &VerifyConfig) -> Outcome {
    let r = verify::anchoring_suite(cfg);
    outcome("clean anchoring", r.passed, format!("{} checks, worst/bound {:.2e}", r.cases, r.worst_ratio))
}

fn logits(cfg: &VerifyConfig) -> Outcome {
    let r = verify::logit_suite(cfg);
    outcome(
        "attention logit equivalence",
        r.passed && r.seconds < 30.0 && r.cases == 300,
        format!("{} configs, worst/bound {:.2e}, {:.2}s", r.cases, r.worst_ratio, r.seconds),
    )
}

fn hat(cfg: &VerifyConfig) -> Outcome {
    let r = cfg.hat.run(cfg.seed).expect("certificate runs");
    let q = r.q_sup_norm;
    let logit_ok = r.max_logit_gap <= q * 0.05;
    let l1_ok = r.max_l1_gap <= q * 0.05 / (r.d_k as f64).sqrt();
    let keys_ok = r.per_key_sup_error.iter().all(|e| *e <= 0.05);
    let damped_ok = r.damped.as_ref().is_some_and(|d| {
        d.gamma == 1e-4
            && d.per_key_sup_error.iter().all(|e| *e <= 0.05)
            && d.max_logit_gap <= q * 0.05
            && d.max_l1_gap <= q * 0.05 / (r.d_k as f64).sqrt()
    });
    outcome(
        "hat certificate",
        r.n_used <= 256 && keys_ok && logit_ok && l1_ok && damped_ok && r.bounds_ok,
        format!(
            "N={} logit gap {:.3e} <= {:.3e}, l1 gap {:.3e} <= {:.3e}, damped {}",
            r.n_used,
            r.max_logit_gap,
            q * 0.05,
            r.max_l1_gap,
            q * 0.05 / (r.d_k as f64).sqrt(),
            damped_ok
        ),
    )
}

fn softmax(cfg: &VerifyConfig) -> Outcome {
    let r = verify::softmax_suite(cfg);
    outcome("softmax lipschitz", r.passed && r.cases == 10_000, format!("{} pairs, worst excess/1e-12 {:.2e}", r.cases, r.worst_ratio))
}

fn perturbation() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let tri = TriangleKey::random(0.0, 3, 1.0, &mut Rng::new(seed));
        let bank = realize_bank(&fejer_approx(|t| tri.eval(t), 0.0, 1.0, 24).unwrap(), 24).unwrap();
        for gamma in [1e-2, 1e-3, 1e-4] {
            let big = damping_perturbation(&bank.with_damping(gamma), gamma).unwrap().sup_difference;
            let small = damping_perturbation(&bank.with_damping(gamma / 2.0), gamma / 2.0).unwrap().sup_difference;
            ratios.push(big / small);
        }
    }
    let pass = ratios.iter().all(|r| (1.8..=2.2).contains(r));
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    outcome("perturbation linearity", pass, format!("halving ratios in [{lo:.4}, {hi:.4}]"))
}

fn gradients(cfg: &VerifyConfig) -> Outcome {
    let r = verify::gradient_suite(cfg);
    outcome("gradient checks", r.passed, format!("{} group checks, worst rel/1e-4 {:.2e}", r.cases, r.worst_ratio))
}

fn complexity() -> Outcome {
    let cfg = BenchConfig { n: vec![64], d: vec![64], s: vec![20, 40, 80], j: vec![8], repeats: 5, warmup: 2, min_sample_ms: 5.0, svg: false };
    let rows = bench::run_bench(&cfg).expect("bench runs");
    let at80 = rows.iter().find(|r| r.S == 80).expect("S=80 row");
    let ratio_ok = at80.predicted_ratio == 1.0 / 640.0 && bench::to_csv(&rows).lines().nth(3).is_some_and(|l| l.ends_with(",0.0015625"));
    let speed_ok = at80.speedup >= 10.0;
    let mono = bench::monotone_in_s(&rows);
    let mem = bench::memory_probe(16, 16, 8, &[20, 40, 80]).expect("allocator installed");
    let closed_flat = mem.iter().all(|m| m.closed_peak_bytes == mem[0].closed_peak_bytes);
    let per_step_a = (mem[1].numeric_peak_bytes as f64 - mem[0].numeric_peak_bytes as f64) / 20.0;
    let per_step_b = (mem[2].numeric_peak_bytes as f64 - mem[1].numeric_peak_bytes as f64) / 40.0;
    let linear = per_step_a > 0.0 && (per_step_b / per_step_a - 1.0).abs() <= 0.1;
    let speedups: Vec<String> = rows.iter().map(|r| format!("S={}:{:.1}x", r.S, r.speedup)).collect();
    outcome(
        "complexity reproduction",
        ratio_ok && speed_ok && mono && closed_flat && linear,
        format!(
            "{}; ratio 1/640 {}; numeric bytes/step {:.0} then {:.0}; closed peak fixed {}",
            speedups.join(" "),
            ratio_ok,
            per_step_a,
            per_step_b,
            closed_flat
        ),
    )
}

fn classification() -> Outcome {
    let cfg = ClassifyConfig::default();
    let m = train_classifier(&cfg, 0).expect("training runs");
    let p = 1.0 / cfg.m as f64;
    let chance_band = 3.0 * (p * (1.0 - p) / cfg.n_val as f64).sqrt();
    let acc_ok = m.val_accuracy >= 0.90 && m.epochs_run <= 200 && m.seconds <= 300.0;
    let diag_ok = m.diagonal_mass >= 2.0 * m.uniform_mass;
    let chance_ok = (m.untrained_accuracy - p).abs() <= chance_band;
    outcome(
        "toy classification",
        acc_ok && diag_ok && chance_ok,
        format!(
            "val acc {:.3} in {} epochs / {:.0}s; diagonal mass {:.3} vs 2x uniform {:.3}; untrained {:.3}",
            m.val_accuracy,
            m.epochs_run,
            m.seconds,
            m.diagonal_mass,
            2.0 * m.uniform_mass,
            m.untrained_accuracy
        ),
    )
}

fn regression() -> Outcome {
    let m = train_regressor(&RegressConfig::default(), 0).expect("training runs");
    let pass = m.baseline_mse.is_finite()
        && m.val_mse <= 0.20
        && m.val_mse <= 0.5 * m.baseline_mse
        && m.correlation >= 0.85
        && m.seconds <= 120.0;
    outcome(
        "toy regression",
        pass,
        format!(
            "val MSE {:.4}, baseline {:.4} ({:.0}% lower), correlation {:.3}, {:.1}s",
            m.val_mse,
            m.baseline_mse,
            100.0 * (1.0 - m.val_mse / m.baseline_mse),
            m.correlation,
            m.seconds
        ),
    )
}

fn baseline_convergence() -> Outcome {
    let mut rng = Rng::new(5);
    let n = 6;
    let grid = FrequencyGrid::default_for(1.0, n, 4).unwrap();
    let mut params = LayerParams::init(8, 2, grid, 2, &mut rng).unwrap();
    params.randomize_velocity_maps(0.3, &mut rng);
    let tokens: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
    let mut raw: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
    raw.sort_by(f64::total_cmp);
    let times = normalize_times(&raw).unwrap();
    let closed = layer_forward(&tokens, &times, &params).unwrap();
    let solver = numerical_attention_layer(&tokens, &times, &params, &VectorField::LinearOscillator, 4096).unwrap();
    let gap = closed.iter().flatten().zip(solver.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome("baseline convergence", gap <= 1e-6, format!("max |closed - rk4(S=4096)| = {gap:.2e}"))
}

#[test]
fn acceptance() {
    let cfg = pinned();
    let start = Instant::now();
    let results = vec![
        kernels(&cfg),
        propagator(&cfg),
        anchoring(&cfg),
        logits(&cfg),
        hat(&cfg),
        softmax(&cfg),
        perturbation(),
        gradients(&cfg),
        complexity(),
        classification(),
        regression(),
        baseline_convergence(),
    ];
    let passed = results.iter().filter(|r| r.pass).count();
    println!("acceptance: {passed}/{} passed in {:.0}s", results.len(), start.elapsed().as_secs_f64());
    let failed: Vec<String> = results.iter().filter(|r| !r.pass).map(|r| format!("{}: {}", r.name, r.detail)).collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
