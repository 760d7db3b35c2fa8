//! Ordered, instrumented in-memory table standing in for an indexed DBMS
//! relation.
//!
//! Fast queries (first/last row, keyset seeks) touch `O(h + log N)` index
//! entries. Counting queries scan every row, as a database without
//! precomputed counts would, and can be slowed down further with an
//! injected latency so asynchronous callers can be tested deterministically.
//! Every query records how many entries it touched, both globally and per
//! calling thread.

mod ingest;
pub mod sql;

use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

pub use self::ingest::{format_datetime, ingest_csv, ingest_reader, parse_datetime, parse_field};
use crate::collation::CollationRules;
use crate::numerators::{CodecError, CompositeCodec, FieldValue, ScalarCodec, ScalarKind};
use crate::Ordinal;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("key does not conform to schema: {0}")]
    Key(#[from] CodecError),
    #[error("row {row}: {message}")]
    Ingest { row: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One key column.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub name: String,
    pub kind: ScalarKind,
    /// Required for strings.
    pub max_length: Option<usize>,
    /// Required for strings.
    pub rules: Option<Arc<CollationRules>>,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, kind: ScalarKind) -> Self {
        Self {
            name: name.into(),
            kind,
            max_length: None,
            rules: None,
        }
    }

    pub fn string(name: impl Into<String>, rules: Arc<CollationRules>, max_length: usize) -> Self {
        Self {
            name: name.into(),
            kind: ScalarKind::Str,
            max_length: Some(max_length),
            rules: Some(rules),
        }
    }

    fn codec(&self) -> Result<ScalarCodec, DatasetError> {
        Ok(match self.kind {
            ScalarKind::Bit => ScalarCodec::Bit,
            ScalarKind::Int32 => ScalarCodec::Int32,
            ScalarKind::Int64 => ScalarCodec::Int64,
            ScalarKind::Float64 => ScalarCodec::Float64,
            ScalarKind::DateTime => ScalarCodec::DateTime,
            ScalarKind::Str => {
                let (Some(rules), Some(m)) = (&self.rules, self.max_length) else {
                    return Err(DatasetError::Schema(format!(
                        "string field {:?} needs collation rules and a max length",
                        self.name
                    )));
                };
                ScalarCodec::string(rules.clone(), m)
            }
        })
    }
}

/// Ordered key columns of a table together with their composite codec.
#[derive(Debug, Clone)]
pub struct KeySchema {
    fields: Vec<FieldSpec>,
    codec: CompositeCodec,
}

impl KeySchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self, DatasetError> {
        if fields.is_empty() {
            return Err(DatasetError::Schema("at least one key field is required".into()));
        }
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(DatasetError::Schema(format!("duplicate field name {:?}", f.name)));
            }
        }
        let codecs = fields.iter().map(FieldSpec::codec).collect::<Result<_, _>>()?;
        Ok(Self {
            fields,
            codec: CompositeCodec::new(codecs),
        })
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn codec(&self) -> &CompositeCodec {
        &self.codec
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    /// Encodes a key tuple, which need not exist in any table.
    pub fn encode(&self, keys: &[FieldValue]) -> Result<Ordinal, DatasetError> {
        Ok(self.codec.encode(keys)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub key: Vec<FieldValue>,
    pub payload: Vec<String>,
}

impl Row {
    pub fn new(key: Vec<FieldValue>, payload: Vec<String>) -> Self {
        Self { key, payload }
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in &self.key {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{v}")?;
        }
        for p in &self.payload {
            write!(f, " | {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

/// Instrumentation snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryCounters {
    /// Index entries examined.
    pub touches: u64,
    /// Counting queries executed.
    pub slow_queries: u64,
}

impl std::ops::Sub for QueryCounters {
    type Output = QueryCounters;

    fn sub(self, rhs: Self) -> Self {
        QueryCounters {
            touches: self.touches - rhs.touches,
            slow_queries: self.slow_queries - rhs.slow_queries,
        }
    }
}

thread_local! {
    static THREAD_COUNTERS: Cell<QueryCounters> = const { Cell::new(QueryCounters { touches: 0, slow_queries: 0 }) };
}

/// Counters accumulated by queries issued from the current thread, across
/// all tables.
pub fn thread_counters() -> QueryCounters {
    THREAD_COUNTERS.with(Cell::get)
}

fn record_thread(touches: u64, slow: u64) {
    THREAD_COUNTERS.with(|c| {
        let mut v = c.get();
        v.touches += touches;
        v.slow_queries += slow;
        c.set(v);
    });
}

/// Rows kept in key order, indexed by their composite ordinal.
#[derive(Debug)]
pub struct IndexedTable {
    schema: Arc<KeySchema>,
    payload_columns: Vec<String>,
    ordinals: Vec<Ordinal>,
    rows: Vec<Row>,
    touches: AtomicU64,
    slow_queries: AtomicU64,
    slow_latency_us: AtomicU64,
}

impl IndexedTable {
    /// Builds the index. Keys must conform to the schema and be unique.
    pub fn from_rows(schema: Arc<KeySchema>, rows: Vec<Row>) -> Result<Self, DatasetError> {
        Self::from_rows_with_columns(schema, Vec::new(), rows)
    }

    pub fn from_rows_with_columns(
        schema: Arc<KeySchema>,
        payload_columns: Vec<String>,
        rows: Vec<Row>,
    ) -> Result<Self, DatasetError> {
        let mut entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                schema
                    .encode(&row.key)
                    .map(|k| (k, i as u64 + 1, row))
                    .map_err(|e| DatasetError::Ingest {
                        row: i as u64 + 1,
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(DatasetError::Ingest {
                row: w[0].1.max(w[1].1),
                message: format!("duplicate key, same as row {}", w[0].1.min(w[1].1)),
            });
        }
        let (ordinals, rows) = entries.into_iter().map(|(k, _, r)| (k, r)).unzip();
        Ok(Self {
            schema,
            payload_columns,
            ordinals,
            rows,
            touches: AtomicU64::new(0),
            slow_queries: AtomicU64::new(0),
            slow_latency_us: AtomicU64::new(0),
        })
    }

    pub fn schema(&self) -> &Arc<KeySchema> {
        &self.schema
    }

    pub fn payload_columns(&self) -> &[String] {
        &self.payload_columns
    }

    /// Number of rows, without going through the instrumented count.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Direct positional access for oracles and diagnostics; not a query.
    pub fn row_at(&self, index: usize) -> Option<&Row> {
        self.rows.get(index)
    }

    pub fn ordinal_at(&self, index: usize) -> Option<&Ordinal> {
        self.ordinals.get(index)
    }

    pub fn set_slow_latency(&self, latency: Duration) {
        self.slow_latency_us
            .store(latency.as_micros() as u64, Ordering::Relaxed);
    }

    pub fn slow_latency(&self) -> Duration {
        Duration::from_micros(self.slow_latency_us.load(Ordering::Relaxed))
    }

    pub fn counters(&self) -> QueryCounters {
        QueryCounters {
            touches: self.touches.load(Ordering::Relaxed),
            slow_queries: self.slow_queries.load(Ordering::Relaxed),
        }
    }

    fn touch(&self, n: u64) {
        self.touches.fetch_add(n, Ordering::Relaxed);
        record_thread(n, 0);
    }

    fn slow(&self) {
        self.slow_queries.fetch_add(1, Ordering::Relaxed);
        record_thread(0, 1);
        let latency = self.slow_latency();
        if !latency.is_zero() {
            thread::sleep(latency);
        }
    }

    /// First index whose ordinal is `>= kappa`, counting probes as touches.
    fn lower_bound(&self, kappa: &Ordinal) -> usize {
        let (mut lo, mut hi) = (0, self.ordinals.len());
        let mut probes = 0;
        while lo < hi {
            probes += 1;
            let mid = lo + (hi - lo) / 2;
            if &self.ordinals[mid] < kappa {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        self.touch(probes);
        lo
    }

    fn take_forward(&self, from: usize, h: usize) -> Vec<Row> {
        let end = (from + h).min(self.rows.len());
        self.touch((end - from.min(end)) as u64);
        self.rows.get(from..end).map(<[Row]>::to_vec).unwrap_or_default()
    }

    fn take_backward(&self, before: usize, h: usize) -> Vec<Row> {
        let start = before.saturating_sub(h);
        self.touch((before - start) as u64);
        self.rows[start..before].iter().rev().cloned().collect()
    }

    /// Minimal (`Asc`) or maximal (`Desc`) row.
    pub fn first_last(&self, direction: Direction) -> Option<Row> {
        let row = match direction {
            Direction::Asc => self.rows.first(),
            Direction::Desc => self.rows.last(),
        };
        self.touch(row.is_some() as u64);
        row.cloned()
    }

    /// Up to `h` rows with key `>= keys`, ascending.
    pub fn seek_ge(&self, keys: &[FieldValue], h: usize) -> Result<Vec<Row>, DatasetError> {
        let kappa = self.schema.encode(keys)?;
        Ok(self.seek_ge_ordinal(&kappa, h))
    }

    /// Up to `h` rows with key `> keys`, ascending.
    pub fn seek_gt(&self, keys: &[FieldValue], h: usize) -> Result<Vec<Row>, DatasetError> {
        let kappa = self.schema.encode(keys)?;
        Ok(self.seek_gt_ordinal(&kappa, h))
    }

    /// Up to `h` rows with key `< keys`, descending.
    pub fn seek_lt_desc(&self, keys: &[FieldValue], h: usize) -> Result<Vec<Row>, DatasetError> {
        let kappa = self.schema.encode(keys)?;
        Ok(self.seek_lt_desc_ordinal(&kappa, h))
    }

    pub fn seek_ge_ordinal(&self, kappa: &Ordinal, h: usize) -> Vec<Row> {
        let from = self.lower_bound(kappa);
        self.take_forward(from, h)
    }

    pub fn seek_gt_ordinal(&self, kappa: &Ordinal, h: usize) -> Vec<Row> {
        let mut from = self.lower_bound(kappa);
        if self.ordinals.get(from) == Some(kappa) {
            from += 1;
        }
        self.take_forward(from, h)
    }

    pub fn seek_lt_desc_ordinal(&self, kappa: &Ordinal, h: usize) -> Vec<Row> {
        let before = self.lower_bound(kappa);
        self.take_backward(before, h)
    }

    /// Total row count. Scans the whole table.
    pub fn count_all(&self) -> u64 {
        self.slow();
        let n = self.rows.len() as u64;
        self.touch(n);
        n
    }

    /// Number of rows with key `< keys`. Scans the whole table.
    pub fn count_less(&self, keys: &[FieldValue]) -> Result<u64, DatasetError> {
        let kappa = self.schema.encode(keys)?;
        Ok(self.count_less_ordinal(&kappa))
    }

    pub fn count_less_ordinal(&self, kappa: &Ordinal) -> u64 {
        self.slow();
        self.touch(self.ordinals.len() as u64);
        self.ordinals.iter().filter(|k| *k < kappa).count() as u64
    }
}
