//! Wall-clock comparison of the closed-form layer against the RK4 + Simpson
//! layer, plus an allocation-based memory proxy.
//!
//! Both paths run one head of width `d` on identical tokens. The solver path
//! integrates a dense `tanh` field, so its per-step cost is `Theta(d^2)`.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::{layer_forward, LayerParams};
use crate::error::{Error, Result};
use crate::oracles::baseline::{numerical_attention_layer, VectorField};
use crate::oscillator::{normalize_times, TimeGrid};
use crate::query::FrequencyGrid;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub s: Vec<usize>,
    pub j: Vec<usize>,
    pub repeats: usize,
    pub warmup: usize,
    /// Inner iterations grow until one timed sample lasts at least this long.
    pub min_sample_ms: f64,
    pub svg: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: vec![64],
            d: vec![64],
            s: vec![20, 40, 80],
            j: vec![8],
            repeats: 5,
            warmup: 2,
            min_sample_ms: 5.0,
            svg: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let lists = [&self.n, &self.d, &self.s, &self.j];
        if lists.iter().any(|l| l.is_empty() || l.contains(&0)) {
            return Err(Error::Invalid("bench sweep lists must be non-empty and positive".into()));
        }
        if self.s.iter().any(|&s| s < 2) {
            return Err(Error::Invalid("solver steps must be at least 2".into()));
        }
        if self.repeats < 3 {
            return Err(Error::Invalid(format!("need at least 3 repeats, got {}", self.repeats)));
        }
        if !(self.min_sample_ms >= 0.0 && self.min_sample_ms.is_finite()) {
            return Err(Error::Invalid("min_sample_ms must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BenchRow {
    pub N: usize,
    pub d: usize,
    pub S: usize,
    pub J: usize,
    pub t_closed_ms: f64,
    pub t_numeric_ms: f64,
    pub speedup: f64,
    pub predicted_ratio: f64,
}

/// Dominant-term cost ratio `J / (S d)` of closed form over solver.
pub fn predicted_ratio(s: usize, d: usize, j: usize) -> f64 {
    j as f64 / (s as f64 * d as f64)
}

/// Tokens, times, single-head parameters and a dense field for one case.
pub struct BenchCase {
    pub tokens: Vec<Vec<f64>>,
    pub times: TimeGrid,
    pub params: LayerParams,
    pub field: VectorField,
}

impl BenchCase {
    pub fn new(n: usize, d: usize, j: usize, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let grid = FrequencyGrid::default_for(1.0, n.max(2), j)?;
        let params = LayerParams::init(d, 1, grid, 0, &mut rng)?;
        let tokens = (0..n).map(|_| (0..d).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
        let mut raw: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        raw.sort_by(f64::total_cmp);
        let times = normalize_times(&raw)?;
        let field = VectorField::dense_tanh(d, &mut rng);
        Ok(Self { tokens, times, params, field })
    }

    pub fn closed(&self) -> Result<Vec<Vec<f64>>> {
        layer_forward(&self.tokens, &self.times, &self.params)
    }

    pub fn numeric(&self, steps: usize) -> Result<Vec<Vec<f64>>> {
        numerical_attention_layer(&self.tokens, &self.times, &self.params, &self.field, steps)
    }
}

/// Median milliseconds per call of `f`.
///
/// Each sample repeats `f` enough times to last `min_sample_ms`; the count is
/// fixed from the first warmup call.
pub fn time_median<F>(mut f: F, repeats: usize, warmup: usize, min_sample_ms: f64) -> Result<f64>
where
    F: FnMut() -> Result<()>,
{
    let start = Instant::now();
    f()?;
    let once = start.elapsed().as_secs_f64() * 1e3;
    let inner = if once >= min_sample_ms { 1 } else { (min_sample_ms / once.max(1e-6)).ceil() as usize };
    for _ in 1..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for _ in 0..inner {
            f()?;
        }
        samples.push(start.elapsed().as_secs_f64() * 1e3 / inner as f64);
    }
    Ok(median(&mut samples))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times every `(N, d, S, J)` combination of the sweep.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.d {
            for &j in &cfg.j {
                let case = BenchCase::new(n, d, j, 0x5eed ^ (n * 131 + d * 17 + j) as u64)?;
                let t_closed = time_median(|| case.closed().map(|_| ()), cfg.repeats, cfg.warmup, cfg.min_sample_ms)?;
                for &s in &cfg.s {
                    let t_numeric =
                        time_median(|| case.numeric(s).map(|_| ()), cfg.repeats, cfg.warmup, cfg.min_sample_ms)?;
                    rows.push(BenchRow {
                        N: n,
                        d,
                        S: s,
                        J: j,
                        t_closed_ms: t_closed,
                        t_numeric_ms: t_numeric,
                        speedup: t_numeric / t_closed,
                        predicted_ratio: predicted_ratio(s, d, j),
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const CSV_HEADER: &str = "N,d,S,J,t_closed_ms,t_numeric_ms,speedup,predicted_ratio";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.N,
            r.d,
            r.S,
            r.J,
            sig6(r.t_closed_ms),
            sig6(r.t_numeric_ms),
            sig6(r.speedup),
            sig6(r.predicted_ratio)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub rows: Vec<BenchRow>,
    pub max_speedup: f64,
    /// Speedup increases with `S` within every `(N, d, J)` group.
    pub monotone_in_s: bool,
}

pub fn summarize(rows: &[BenchRow]) -> BenchSummary {
    BenchSummary {
        rows: rows.to_vec(),
        max_speedup: rows.iter().map(|r| r.speedup).fold(f64::NEG_INFINITY, f64::max),
        monotone_in_s: monotone_in_s(rows),
    }
}

pub fn monotone_in_s(rows: &[BenchRow]) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.N, r.d, r.J, r.S));
    sorted.windows(2).all(|w| (w[0].N, w[0].d, w[0].J) != (w[1].N, w[1].d, w[1].J) || w[1].speedup > w[0].speedup)
}

/// Speedup against `S`, one polyline per `(N, d, J)` group.
pub fn svg_chart(rows: &[BenchRow]) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let s_max = rows.iter().map(|r| r.S).max().unwrap_or(1) as f64;
    let y_max = rows.iter().map(|r| r.speedup).fold(1.0, f64::max) * 1.1;
    let px = |s: f64| pad + (w - 2.0 * pad) * s / s_max;
    let py = |v: f64| h - pad - (h - 2.0 * pad) * v / y_max;
    let mut out = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    let _ = writeln!(
        out,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"12\">S</text>", w / 2.0, h - 8.0);
    let _ = writeln!(out, "<text x=\"4\" y=\"{}\" font-size=\"12\">speedup (max {:.1})</text>", pad - 12.0, y_max / 1.1);
    let mut groups: Vec<(usize, usize, usize)> = rows.iter().map(|r| (r.N, r.d, r.J)).collect();
    groups.sort();
    groups.dedup();
    for (g, key) in groups.iter().enumerate() {
        let mut pts: Vec<&BenchRow> = rows.iter().filter(|r| (r.N, r.d, r.J) == *key).collect();
        pts.sort_by_key(|r| r.S);
        let line: Vec<String> = pts.iter().map(|r| format!("{:.1},{:.1}", px(r.S as f64), py(r.speedup))).collect();
        let hue = (g * 67) % 360;
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"hsl({hue},70%,40%)\" stroke-width=\"2\" points=\"{}\"/>",
            line.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">N={} d={} J={}</text>",
            w - pad - 110.0,
            pad + 14.0 * g as f64,
            key.0,
            key.1,
            key.2
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `bench.csv`, `bench.json` and, when asked, `bench.svg` into `dir`.
pub fn emit_report(rows: &[BenchRow], dir: &Path, svg: bool) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Empty("bench rows"));
    }
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("bench.csv"), to_csv(rows)).map_err(io)?;
    let json = serde_json::to_string_pretty(&summarize(rows)).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("bench.json"), json).map_err(io)?;
    if svg {
        std::fs::write(dir.join("bench.svg"), svg_chart(rows)).map_err(io)?;
    }
    Ok(())
}

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static CALLS: AtomicUsize = AtomicUsize::new(0);

/// System allocator that tracks live and peak heap bytes.
///
/// Install it with `#[global_allocator]` in a binary or test target to make
/// [`peak_bytes_during`] meaningful.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let live = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(live, Ordering::Relaxed);
            CALLS.fetch_add(1, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                let live = LIVE.fetch_add(new_size - layout.size(), Ordering::Relaxed) + new_size - layout.size();
                PEAK.fetch_max(live, Ordering::Relaxed);
            } else {
                LIVE.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
            CALLS.fetch_add(1, Ordering::Relaxed);
        }
        p
    }
}

/// Peak heap growth above the starting level while `f` runs, or `None` when
/// [`CountingAlloc`] is not the global allocator.
pub fn peak_bytes_during<R>(f: impl FnOnce() -> R) -> (R, Option<usize>) {
    let calls = CALLS.load(Ordering::Relaxed);
    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let out = f();
    let peak = PEAK.load(Ordering::Relaxed);
    let installed = CALLS.load(Ordering::Relaxed) != calls;
    (out, installed.then(|| peak.saturating_sub(base)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct MemoryRow {
    pub S: usize,
    pub closed_peak_bytes: usize,
    pub numeric_peak_bytes: usize,
}

/// Peak transient allocation of both paths for each solver step count.
pub fn memory_probe(n: usize, d: usize, j: usize, steps: &[usize]) -> Result<Vec<MemoryRow>> {
    let case = BenchCase::new(n, d, j, 7)?;
    let mut rows = Vec::with_capacity(steps.len());
    for &s in steps {
        let (closed, cb) = peak_bytes_during(|| case.closed());
        closed?;
        let (numeric, nb) = peak_bytes_during(|| case.numeric(s));
        numeric?;
        let (Some(cb), Some(nb)) = (cb, nb) else {
            return Err(Error::Invalid("the counting allocator is not installed".into()));
        };
        rows.push(MemoryRow { S: s, closed_peak_bytes: cb, numeric_peak_bytes: nb });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: usize, speedup: f64) -> BenchRow {
        BenchRow {
            N: 4,
            d: 8,
            S: s,
            J: 2,
            t_closed_ms: 1.0,
            t_numeric_ms: speedup,
            speedup,
            predicted_ratio: predicted_ratio(s, 8, 2),
        }
    }

    #[test]
    fn ratio_example() {
        assert_eq!(predicted_ratio(80, 64, 8), 1.0 / 640.0);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0 / 640.0), "0.0015625");
        assert_eq!(sig6(2.0 / 3.0), "0.666667");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(12.0), "12");
        assert_eq!(sig6(1.234567e-7), "1.23457e-7");
    }

    #[test]
    fn csv_one_row() {
        let csv = to_csv(&[row(20, 3.5)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec![CSV_HEADER, "4,8,20,2,1,3.5,3.5,0.0125"]);
    }

    #[test]
    fn monotonicity_check() {
        assert!(monotone_in_s(&[row(40, 2.0), row(20, 1.0), row(80, 3.0)]));
        assert!(!monotone_in_s(&[row(40, 2.0), row(20, 2.5)]));
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig::default().validate().is_ok());
        assert!(BenchConfig { repeats: 2, ..Default::default() }.validate().is_err());
        assert!(BenchConfig { s: vec![], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn tiny_sweep_runs() {
        let cfg = BenchConfig { n: vec![3], d: vec![4], s: vec![4, 8], j: vec![2], repeats: 3, warmup: 1, min_sample_ms: 0.0, svg: false };
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.t_closed_ms > 0.0 && r.t_numeric_ms > 0.0));
        assert!(rows.iter().all(|r| (r.speedup - r.t_numeric_ms / r.t_closed_ms).abs() < 1e-12));
    }
}
