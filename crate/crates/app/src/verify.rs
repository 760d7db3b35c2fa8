//! Checks a loaded table and an engine on it against brute-force oracles.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use keyscroll_core::dataset::{IndexedTable, KeySchema};
use keyscroll_core::numerators::FieldValue;
use keyscroll_core::{EngineConfig, Row, ScrollEngine, SegmentModel};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SHOWN_FAILURES: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct Suite {
    pub name: &'static str,
    pub checks: u64,
    pub failures: u64,
    pub examples: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            failures: 0,
            examples: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.examples.len() < SHOWN_FAILURES {
                self.examples.push(describe());
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: usize,
    pub suites: Vec<Suite>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failures == 0)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {} rows", "table", self.rows)?;
        for s in &self.suites {
            let verdict = if s.failures == 0 { "ok" } else { "FAILED" };
            writeln!(f, "{:<14} {:>9} checks {:>6} failures  {verdict}", s.name, s.checks, s.failures)?;
            for e in &s.examples {
                writeln!(f, "    {e}")?;
            }
        }
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Field-by-field comparison written independently of the codecs.
pub fn oracle_cmp(schema: &KeySchema, a: &[FieldValue], b: &[FieldValue]) -> Ordering {
    for ((spec, x), y) in schema.fields().iter().zip(a).zip(b) {
        let ord = match (x, y) {
            (FieldValue::Bit(x), FieldValue::Bit(y)) => x.cmp(y),
            (FieldValue::Int32(x), FieldValue::Int32(y)) => x.cmp(y),
            (FieldValue::Int64(x), FieldValue::Int64(y)) => x.cmp(y),
            (FieldValue::DateTime(x), FieldValue::DateTime(y)) => x.cmp(y),
            (FieldValue::Float64(x), FieldValue::Float64(y)) => x.total_cmp(y),
            (FieldValue::Str(x), FieldValue::Str(y)) => spec
                .rules
                .as_ref()
                .expect("string fields carry rules")
                .compare(x, y, keyscroll_core::Sensitivity::FULL)
                .expect("conforming strings"),
            _ => panic!("field kinds differ"),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

fn keys_of(rows: &[Row]) -> Vec<&[FieldValue]> {
    rows.iter().map(|r| r.key.as_slice()).collect()
}

fn rows_between(table: &IndexedTable, from: usize, to: usize) -> Vec<&[FieldValue]> {
    (from..to).map(|i| table.row_at(i).unwrap().key.as_slice()).collect()
}

pub fn run(table: Arc<IndexedTable>, engine_config: &EngineConfig, samples: usize, seed: u64) -> Report {
    let latency = table.slow_latency();
    table.set_slow_latency(Duration::ZERO);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let suites = vec![
        ordering(&table),
        round_trip(&table),
        seeks(&table, engine_config.h, samples, &mut rng),
        counts(&table, samples.min(50), &mut rng),
        engine(&table, engine_config, samples.min(50), &mut rng),
        model(),
    ];
    table.set_slow_latency(latency);
    Report {
        rows: table.len(),
        suites,
    }
}

fn ordering(table: &IndexedTable) -> Suite {
    let mut suite = Suite::new("ordering");
    let schema = table.schema();
    for i in 1..table.len() {
        let (a, b) = (table.row_at(i - 1).unwrap(), table.row_at(i).unwrap());
        suite.check(oracle_cmp(schema, &a.key, &b.key) == Ordering::Less, || {
            format!("rows {} and {i} out of order: {a} / {b}", i - 1)
        });
        suite.check(table.ordinal_at(i - 1) < table.ordinal_at(i), || {
            format!("ordinals of rows {} and {i} out of order", i - 1)
        });
    }
    suite
}

fn round_trip(table: &IndexedTable) -> Suite {
    let mut suite = Suite::new("round-trip");
    let codec = table.schema().codec();
    for i in 0..table.len() {
        let (row, kappa) = (table.row_at(i).unwrap(), table.ordinal_at(i).unwrap());
        let encoded = codec.encode(&row.key);
        suite.check(encoded.as_ref() == Ok(kappa), || format!("row {i} encodes differently: {row}"));
        let decoded = codec.decode(kappa);
        suite.check(decoded.as_ref() == Ok(&row.key), || format!("row {i} does not decode back: {row}"));
    }
    suite
}

fn seeks(table: &IndexedTable, h: usize, samples: usize, rng: &mut impl Rng) -> Suite {
    let mut suite = Suite::new("seek");
    let n = table.len();
    for i in sample(rng, n, samples.min(n)) {
        let key = &table.row_at(i).unwrap().key;
        let ge = table.seek_ge(key, h).unwrap();
        suite.check(keys_of(&ge) == rows_between(table, i, (i + h).min(n)), || format!("seek_ge at row {i}"));
        let gt = table.seek_gt(key, h).unwrap();
        suite.check(keys_of(&gt) == rows_between(table, i + 1, (i + 1 + h).min(n)), || {
            format!("seek_gt at row {i}")
        });
        let lt = table.seek_lt_desc(key, h).unwrap();
        let mut expect = rows_between(table, i.saturating_sub(h), i);
        expect.reverse();
        suite.check(keys_of(&lt) == expect, || format!("seek_lt_desc at row {i}"));
    }
    suite
}

fn counts(table: &IndexedTable, samples: usize, rng: &mut impl Rng) -> Suite {
    let mut suite = Suite::new("count");
    let n = table.len();
    suite.check(table.count_all() == n as u64, || "count_all disagrees with row count".into());
    for i in sample(rng, n, samples.min(n)) {
        let got = table.count_less(&table.row_at(i).unwrap().key).unwrap();
        suite.check(got == i as u64, || format!("count_less at row {i} gave {got}"));
    }
    suite
}

/// Positioning, stepping and refinement against row indices.
fn engine(table: &Arc<IndexedTable>, config: &EngineConfig, samples: usize, rng: &mut impl Rng) -> Suite {
    let mut suite = Suite::new("engine");
    let mut config = config.clone();
    config.warmup_enabled = false;
    let engine = ScrollEngine::start(Arc::clone(table), config.clone());
    let n = table.len();
    let h = config.h;
    let last_start = n.saturating_sub(h);
    let idle = Duration::from_secs(60);
    suite.check(engine.wait_idle(idle), || "count did not finish".into());
    for i in sample(rng, n, samples.min(n)) {
        let w = engine.position_to(&table.row_at(i).unwrap().key).unwrap();
        let start = i.min(last_start);
        suite.check(keys_of(&w.rows) == rows_between(table, start, (start + h).min(n)), || {
            format!("window at row {i}")
        });
        engine.on_scroll_release();
        suite.check(engine.wait_idle(idle), || "refinement did not finish".into());
        let refined = engine.last_refinement().map(|r| r.lambda_exact);
        suite.check(refined == Some(start as u64), || {
            format!("refinement at row {start} gave {refined:?}")
        });

        let step = rng.gen_range(1..=config.page_size as i64) * if rng.gen() { 1 } else { -1 };
        let w = engine.small_step(step);
        let moved = (start as i64 + step).clamp(0, last_start as i64) as usize;
        suite.check(keys_of(&w.rows) == rows_between(table, moved, (moved + h).min(n)), || {
            format!("step {step} from row {start}")
        });
    }
    suite
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Segment statistics against enumeration of every record placement.
fn model() -> Suite {
    let mut suite = Suite::new("model");
    let k_min = 5u64;
    for span in 1..=10u64 {
        for lambda_max in 1..=span.min(4) {
            let k_max = k_min + span;
            let model = SegmentModel::new(k_min.into(), k_max.into(), lambda_max).unwrap();
            let inner = span - 1;
            let mut totals = vec![0f64; span as usize + 1];
            let mut placements = 0u64;
            for mask in 0u32..1 << inner {
                if mask.count_ones() as u64 != lambda_max - 1 {
                    continue;
                }
                placements += 1;
                let mut below = 0;
                for (j, total) in totals.iter_mut().enumerate().skip(1) {
                    below += u64::from(j == 1 || mask >> (j - 2) & 1 == 1);
                    *total += below as f64;
                }
            }
            suite.check(placements as f64 == binomial(inner, lambda_max - 1), || {
                format!("placement count for span {span}, λ_max {lambda_max}")
            });
            suite.check(model.total_functions() == placements.into(), || {
                format!("function count for span {span}, λ_max {lambda_max}")
            });
            for (j, total) in totals.iter().enumerate() {
                let mean = total / placements as f64;
                let got: f64 = model.expected_lambda(&(k_min + j as u64).into());
                suite.check((got - mean).abs() < 1e-9, || {
                    format!("mean at k_min+{j}, span {span}, λ_max {lambda_max}: {got} vs {mean}")
                });
            }
        }
    }
    suite
}
