//! `hattn`: verification suites, benchmarks, toy training and HAT certificates.
//!
//! Exit codes: 0 success, 1 verification or run failure, 2 usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use harmonic_attention::bench::{self, BenchConfig, CountingAlloc};
use harmonic_attention::hat::TriangleDemo;
use harmonic_attention::toytrain::{self, ClassifyConfig, RegressConfig};
use harmonic_attention::verify::{self, VerifyConfig};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

#[derive(Parser, Debug)]
#[command(name = "hattn", version, about = "Closed-form oscillator attention: checks, benchmarks and toy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Run every closed-form vs oracle property suite.
    Verify {
        /// Override every tolerance with this value.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Time the closed-form layer against the RK4 layer.
    Bench {
        /// Also write an SVG chart.
        #[arg(long)]
        svg: bool,
    },
    /// Train the frequency classifier.
    TrainClassify,
    /// Train the spectral regressor.
    TrainRegress,
    /// Certify triangle-wave keys with a shared oscillator bank.
    Hat,
}

/// Contents of `--config`. Every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    command: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    verify: Option<VerifyConfig>,
    #[serde(default)]
    bench: Option<BenchConfig>,
    #[serde(default)]
    classify: Option<ClassifyConfig>,
    #[serde(default)]
    regress: Option<RegressConfig>,
    #[serde(default)]
    hat: Option<TriangleDemo>,
}

enum Failure {
    Usage(String),
    Run(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn command_from_name(name: &str) -> Result<Command, Failure> {
    match name {
        "verify" => Ok(Command::Verify { tol: None }),
        "bench" => Ok(Command::Bench { svg: false }),
        "train-classify" => Ok(Command::TrainClassify),
        "train-regress" => Ok(Command::TrainRegress),
        "hat" => Ok(Command::Hat),
        other => Err(Failure::Usage(format!("unknown command {other:?}"))),
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    json: bool,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.out).map_err(|e| Failure::Run(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(e.to_string()))?;
        self.write(name, &text)
    }

    fn report(&self, summary: Value, line: String) {
        if self.json {
            println!("{summary}");
        } else {
            println!("{line}");
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    let command = match (cli.command, cfg.command.as_deref()) {
        (Some(c), _) => c,
        (None, Some(name)) => command_from_name(name)?,
        (None, None) => return Err(Failure::Usage("no command given; see --help".into())),
    };
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        out: cli.out.or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        json: cli.json,
    };
    match command {
        Command::Verify { tol } => cmd_verify(&ctx, cfg.verify.unwrap_or_default(), tol),
        Command::Bench { svg } => cmd_bench(&ctx, cfg.bench.unwrap_or_default(), svg),
        Command::TrainClassify => cmd_train_classify(&ctx, cfg.classify.unwrap_or_default()),
        Command::TrainRegress => cmd_train_regress(&ctx, cfg.regress.unwrap_or_default()),
        Command::Hat => cmd_hat(&ctx, cfg.hat.unwrap_or_default()),
    }
}

fn cmd_verify(ctx: &Ctx, mut cfg: VerifyConfig, tol: Option<f64>) -> Result<bool, Failure> {
    cfg.seed = ctx.seed;
    if let Some(t) = tol {
        if !t.is_finite() {
            return Err(Failure::Usage(format!("tolerance must be finite, got {t}")));
        }
        let tl = &mut cfg.tolerances;
        for slot in [
            &mut tl.kernel,
            &mut tl.propagator,
            &mut tl.ode_residual,
            &mut tl.anchor_value,
            &mut tl.anchor_derivative,
            &mut tl.logit_rel,
            &mut tl.softmax,
            &mut tl.gradient_rel,
            &mut tl.perturbation,
        ] {
            *slot = t;
        }
    }
    let reports = verify::run_all(&cfg);
    let all = reports.iter().all(|r| r.passed);
    ctx.write_json("verify.json", &reports)?;
    if ctx.json {
        println!("{}", json!({"passed": all, "suites": reports}));
    } else {
        let mut table = format!("{:<20} {:>6} {:>8} {:>12}\n", "suite", "result", "cases", "worst/bound");
        for r in &reports {
            let _ = writeln!(
                table,
                "{:<20} {:>6} {:>8} {:>12.3e}",
                r.name,
                if r.passed { "PASS" } else { "FAIL" },
                r.cases,
                r.worst_ratio
            );
        }
        print!("{table}");
        for r in reports.iter().filter(|r| !r.passed) {
            println!("failing case in {}: {}", r.name, r.worst_case);
        }
    }
    Ok(all)
}

fn cmd_bench(ctx: &Ctx, cfg: BenchConfig, svg: bool) -> Result<bool, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let rows = bench::run_bench(&cfg).map_err(|e| Failure::Run(e.to_string()))?;
    bench::emit_report(&rows, &ctx.out, svg || cfg.svg).map_err(|e| Failure::Run(e.to_string()))?;
    let (n, d, j) = (cfg.n[0], cfg.d[0], cfg.j[0]);
    let memory = bench::memory_probe(n.min(16), d.min(16), j, &cfg.s).map_err(|e| Failure::Run(e.to_string()))?;
    ctx.write_json("memory.json", &memory)?;
    let summary = bench::summarize(&rows);
    ctx.report(
        json!({"rows": rows.len(), "max_speedup": summary.max_speedup, "monotone_in_s": summary.monotone_in_s, "memory": memory}),
        format!(
            "bench: {} rows, max speedup {:.1}x, monotone in S: {}, wrote {}",
            rows.len(),
            summary.max_speedup,
            summary.monotone_in_s,
            ctx.out.join("bench.csv").display()
        ),
    );
    Ok(true)
}

fn cmd_train_classify(ctx: &Ctx, cfg: ClassifyConfig) -> Result<bool, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let m = toytrain::train_classifier(&cfg, ctx.seed).map_err(|e| Failure::Run(e.to_string()))?;
    ctx.write_json("classify_metrics.json", &m)?;
    ctx.write("classify_curve.csv", &toytrain::curve_csv(&m.curve))?;
    let mut confusion = String::from("class");
    for k in 0..m.key_omega0.len() {
        let _ = write!(confusion, ",key{k}");
    }
    confusion.push('\n');
    for (c, row) in m.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(confusion, "{c},{}", cells.join(","));
    }
    ctx.write("classify_confusion.csv", &confusion)?;
    ctx.report(
        json!({"val_accuracy": m.val_accuracy, "untrained_accuracy": m.untrained_accuracy, "diagonal_mass": m.diagonal_mass,
               "uniform_mass": m.uniform_mass, "epochs_run": m.epochs_run, "seconds": m.seconds}),
        format!(
            "classify: val accuracy {:.4} (untrained {:.4}), diagonal mass {:.4} vs uniform {:.4}, {} epochs in {:.1}s",
            m.val_accuracy, m.untrained_accuracy, m.diagonal_mass, m.uniform_mass, m.epochs_run, m.seconds
        ),
    );
    Ok(true)
}

fn cmd_train_regress(ctx: &Ctx, cfg: RegressConfig) -> Result<bool, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let m = toytrain::train_regressor(&cfg, ctx.seed).map_err(|e| Failure::Run(e.to_string()))?;
    ctx.write_json("regress_metrics.json", &m)?;
    ctx.write("regress_curve.csv", &toytrain::curve_csv(&m.curve))?;
    ctx.report(
        json!({"val_mse": m.val_mse, "baseline_mse": m.baseline_mse, "reduction": m.reduction, "correlation": m.correlation, "seconds": m.seconds}),
        format!(
            "regress: val MSE {:.4} vs baseline {:.4} ({:.0}% lower), correlation {:.3}, {:.1}s",
            m.val_mse,
            m.baseline_mse,
            100.0 * m.reduction,
            m.correlation,
            m.seconds
        ),
    );
    Ok(true)
}

fn cmd_hat(ctx: &Ctx, cfg: TriangleDemo) -> Result<bool, Failure> {
    if !(cfg.epsilon > 0.0) || cfg.keys == 0 || cfg.d_k == 0 || cfg.n_max < 8 {
        return Err(Failure::Usage("hat needs epsilon > 0, keys and d_k >= 1, n_max >= 8".into()));
    }
    let r = cfg.run(ctx.seed).map_err(|e| Failure::Run(e.to_string()))?;
    ctx.write_json("hat_certificate.json", &r)?;
    ctx.report(
        serde_json::to_value(&r).unwrap_or(Value::Null),
        format!(
            "hat: epsilon {} with N={} modes, logit gap {:.3e}, l1 gap {:.3e}, bounds_ok {}",
            r.epsilon, r.n_used, r.max_logit_gap, r.max_l1_gap, r.bounds_ok
        ),
    );
    Ok(r.bounds_ok)
}
