//! Replays a scroll script and measures how far estimates land from the
//! true row numbers.
//!
//! Script lines (`#` starts a comment):
//!
//! ```text
//! wait                      # until the row count is known and the worker is idle
//! probe 200                 # random thumb drops, measuring the bounce
//! warmup [threshold] [max]  # run warmup and wait for it
//! scroll 5000 | scroll 50%  # one thumb drop
//! release                   # refine the current anchor and wait
//! locate <csv cells>        # position to a key
//! step -3                   # small step with adjacency check
//! steps 100                 # random small steps from random anchors
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use keyscroll_core::dataset::{parse_field, thread_counters, IndexedTable, QueryCounters};
use keyscroll_core::{EngineConfig, Ordinal, Row, ScrollEngine, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DEFAULT_SCRIPT: &str = "\
wait
probe 200
warmup
probe 200
steps 200
";

const IDLE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Wait,
    Probe(usize),
    Warmup { threshold: Option<f64>, max_iter: Option<usize> },
    Scroll(Target),
    Release,
    Locate(Vec<String>),
    Step(i64),
    Steps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Row(u64),
    Percent(f64),
}

pub fn parse_script(text: &str) -> Result<Vec<Command>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let args: Vec<&str> = rest.split_whitespace().collect();
        let number = |i: usize| -> Result<&str> {
            args.get(i).copied().with_context(|| format!("line {}: `{word}` needs an argument", no + 1))
        };
        let cmd = match word {
            "wait" => Command::Wait,
            "probe" => Command::Probe(number(0)?.parse()?),
            "warmup" => Command::Warmup {
                threshold: args.first().map(|s| s.parse()).transpose()?,
                max_iter: args.get(1).map(|s| s.parse()).transpose()?,
            },
            "scroll" => {
                let arg = number(0)?;
                Command::Scroll(match arg.strip_suffix('%') {
                    Some(p) => Target::Percent(p.parse()?),
                    None => Target::Row(arg.parse()?),
                })
            }
            "release" => Command::Release,
            "locate" => {
                let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(rest.as_bytes());
                let record = reader
                    .records()
                    .next()
                    .with_context(|| format!("line {}: `locate` needs key cells", no + 1))??;
                Command::Locate(record.iter().map(str::to_owned).collect())
            }
            "step" => match number(0)?.parse()? {
                0 => bail!("line {}: step of zero rows", no + 1),
                n => Command::Step(n),
            },
            "steps" => Command::Steps(number(0)?.parse()?),
            other => bail!("line {}: unknown command {other:?}", no + 1),
        };
        out.push(cmd);
    }
    Ok(out)
}

/// Absolute estimate errors for one phase.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ErrorStats {
    pub samples: u64,
    pub mean: f64,
    pub max: u64,
    /// `max` as a fraction of the row range.
    pub max_fraction: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OpStats {
    pub calls: u64,
    pub mean_touches: f64,
    pub max_touches: u64,
    /// Counting queries issued on the caller's thread.
    pub slow_queries: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: usize,
    pub lambda_max: u64,
    pub h: usize,
    pub before_warmup: ErrorStats,
    pub after_warmup: ErrorStats,
    /// Interior points added by warmup runs.
    pub warmup_iterations: u64,
    pub steps_checked: u64,
    pub adjacency_errors: u64,
    pub operations: BTreeMap<&'static str, OpStats>,
    /// Counting queries run by the background worker.
    pub background_slow_queries: u64,
    pub elapsed_ms: u64,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let root = (self.lambda_max as f64).sqrt();
        writeln!(f, "rows {}, lambda_max {}, h {}", self.rows, self.lambda_max, self.h)?;
        for (name, e) in [("before warmup", &self.before_warmup), ("after warmup", &self.after_warmup)] {
            writeln!(
                f,
                "{name:<14} {:>6} samples  mean {:>10.1} ({:.3}·√λmax)  max {:>9} ({:.1}% of λmax)",
                e.samples,
                e.mean,
                e.mean / root.max(1.0),
                e.max,
                100.0 * e.max_fraction
            )?;
        }
        writeln!(f, "warmup points   {}", self.warmup_iterations)?;
        writeln!(f, "small steps     {} checked, {} adjacency errors", self.steps_checked, self.adjacency_errors)?;
        writeln!(f, "{:<14} {:>7} {:>12} {:>12} {:>6}", "operation", "calls", "mean touch", "max touch", "slow")?;
        for (name, op) in &self.operations {
            writeln!(
                f,
                "{name:<14} {:>7} {:>12.1} {:>12} {:>6}",
                op.calls, op.mean_touches, op.max_touches, op.slow_queries
            )?;
        }
        writeln!(f, "background slow queries {}", self.background_slow_queries)?;
        write!(f, "elapsed {} ms", self.elapsed_ms)
    }
}

#[derive(Default)]
struct Errors {
    sum: f64,
    count: u64,
    max: u64,
}

impl Errors {
    fn add(&mut self, err: u64) {
        self.sum += err as f64;
        self.count += 1;
        self.max = self.max.max(err);
    }

    fn finish(&self, lambda_max: u64) -> ErrorStats {
        ErrorStats {
            samples: self.count,
            mean: if self.count == 0 { 0.0 } else { self.sum / self.count as f64 },
            max: self.max,
            max_fraction: self.max as f64 / lambda_max.max(1) as f64,
        }
    }
}

struct Bench<'a> {
    engine: &'a ScrollEngine,
    table: &'a IndexedTable,
    rng: ChaCha8Rng,
    warmed: bool,
    before: Errors,
    after: Errors,
    steps_checked: u64,
    adjacency_errors: u64,
    ops: BTreeMap<&'static str, (OpStats, u64)>,
}

impl Bench<'_> {
    fn timed<T>(&mut self, op: &'static str, f: impl FnOnce(&ScrollEngine) -> T) -> T {
        let before = thread_counters();
        let out = f(self.engine);
        let QueryCounters { touches, slow_queries } = thread_counters() - before;
        let (stats, total) = self.ops.entry(op).or_default();
        stats.calls += 1;
        stats.max_touches = stats.max_touches.max(touches);
        stats.slow_queries += slow_queries;
        *total += touches;
        out
    }

    /// True row number of the first row shown.
    fn oracle_start(&self, rows: &[Row]) -> Option<u64> {
        let kappa: Ordinal = self.table.schema().encode(&rows.first()?.key).ok()?;
        let n = self.table.len();
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.table.ordinal_at(mid).unwrap() < &kappa {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        Some(lo as u64)
    }

    fn record(&mut self, w: &Window) {
        if let Some(exact) = self.oracle_start(&w.rows) {
            let errors = if self.warmed { &mut self.after } else { &mut self.before };
            errors.add(exact.abs_diff(w.lambda));
        }
    }

    fn check_adjacent(&mut self, from: Option<u64>, step: i64, w: &Window) {
        let (Some(from), Some(to)) = (from, self.oracle_start(&w.rows)) else {
            return;
        };
        let last_start = self.table.len().saturating_sub(self.engine.config().h) as i64;
        let expect = (from as i64 + step).clamp(0, last_start) as u64;
        let contiguous = w.rows.iter().enumerate().all(|(i, r)| {
            self.table.row_at(to as usize + i).map(|x| &x.key) == Some(&r.key)
        });
        self.steps_checked += 1;
        if to != expect || !contiguous || w.rows.len() != self.engine.config().h.min(self.table.len()) {
            self.adjacency_errors += 1;
        }
    }

    fn step(&mut self, n: i64) {
        let from = self.oracle_start(&self.engine.state().rows);
        let w = self.timed("small_step", |e| e.small_step(n));
        self.check_adjacent(from, n, &w);
    }

    fn run(&mut self, cmd: &Command) -> Result<()> {
        let lambda_max = self.engine.lambda_max();
        match cmd {
            Command::Wait => {
                if !self.engine.wait_idle(IDLE_TIMEOUT) {
                    bail!("engine did not go idle");
                }
            }
            Command::Probe(n) => {
                let top = lambda_max.saturating_sub(self.engine.config().h as u64);
                for _ in 0..*n {
                    let lambda = self.rng.gen_range(0..=top);
                    let w = self.timed("scroll", |e| e.on_scroll(lambda));
                    self.record(&w);
                }
            }
            Command::Warmup { threshold, max_iter } => {
                let config = self.engine.config();
                let (t, m) = (threshold.unwrap_or(config.warmup_threshold), max_iter.unwrap_or(config.warmup_max_iter));
                self.engine.wait_idle(IDLE_TIMEOUT);
                self.engine.warmup(t, m);
                if !self.engine.wait_idle(IDLE_TIMEOUT) {
                    bail!("warmup did not finish");
                }
                self.warmed = true;
            }
            Command::Scroll(target) => {
                let lambda = match target {
                    Target::Row(r) => *r,
                    Target::Percent(p) => (p / 100.0 * lambda_max as f64).round() as u64,
                };
                let w = self.timed("scroll", |e| e.on_scroll(lambda));
                self.record(&w);
            }
            Command::Release => {
                self.timed("release", |e| e.on_scroll_release());
                self.engine.wait_idle(IDLE_TIMEOUT);
            }
            Command::Locate(cells) => {
                let schema = self.table.schema();
                if cells.len() != schema.arity() {
                    bail!("locate needs {} cells", schema.arity());
                }
                let keys = schema
                    .fields()
                    .iter()
                    .zip(cells)
                    .map(|(f, c)| parse_field(f.kind, c)?.ok_or_else(|| format!("{}: NULL key", f.name)))
                    .collect::<Result<Vec<_>, String>>()
                    .map_err(anyhow::Error::msg)?;
                let w = self.timed("locate", |e| e.position_to(&keys))?;
                self.record(&w);
            }
            Command::Step(n) => self.step(*n),
            Command::Steps(count) => {
                let page = self.engine.config().page_size as i64;
                let n = self.table.len();
                for _ in 0..*count {
                    if n == 0 {
                        break;
                    }
                    let anchor = self.table.row_at(self.rng.gen_range(0..n)).unwrap().key.clone();
                    self.timed("locate", |e| e.position_to(&anchor))?;
                    let size = self.rng.gen_range(1..=page);
                    let forward: bool = self.rng.gen();
                    self.step(if forward { size } else { -size });
                }
            }
        }
        Ok(())
    }
}

/// Runs `script` against a fresh engine whose automatic warmup is off, so
/// the first phase sees only the endpoints.
pub fn run(table: Arc<IndexedTable>, mut config: EngineConfig, script: &[Command], seed: u64) -> Result<BenchReport> {
    let started = Instant::now();
    config.warmup_enabled = false;
    let global_before = table.counters();
    let engine = ScrollEngine::start(Arc::clone(&table), config);
    let caller_before = thread_counters();
    let mut bench = Bench {
        engine: &engine,
        table: &table,
        rng: ChaCha8Rng::seed_from_u64(seed),
        warmed: false,
        before: Errors::default(),
        after: Errors::default(),
        steps_checked: 0,
        adjacency_errors: 0,
        ops: BTreeMap::new(),
    };
    for cmd in script {
        bench.run(cmd)?;
    }
    engine.wait_idle(IDLE_TIMEOUT);
    let caller_slow = (thread_counters() - caller_before).slow_queries;
    let background = (table.counters() - global_before).slow_queries - caller_slow;
    let lambda_max = engine.lambda_max();
    let operations = bench
        .ops
        .into_iter()
        .map(|(name, (mut stats, total))| {
            stats.mean_touches = total as f64 / stats.calls.max(1) as f64;
            (name, stats)
        })
        .collect();
    Ok(BenchReport {
        rows: table.len(),
        lambda_max,
        h: engine.config().h,
        before_warmup: bench.before.finish(lambda_max),
        after_warmup: bench.after.finish(lambda_max),
        warmup_iterations: engine.stats().warmup_iterations,
        steps_checked: bench.steps_checked,
        adjacency_errors: bench.adjacency_errors,
        operations,
        background_slow_queries: background,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}
