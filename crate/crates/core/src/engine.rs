//! Scroll engine: turns scrollbar positions into index seeks and refines the
//! interpolation table in the background.
//!
//! User-facing calls (`on_scroll`, `position_to`, `small_step`) only issue
//! fast seeks. Row counts run on a single worker thread: first the total
//! count, then refinements requested on scroll release, then warmup probes
//! whenever no refinement is waiting. Refinements coalesce, so at most one
//! is pending at a time.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};
use thiserror::Error;
use tracing::{debug, warn};

use crate::dataset::{DatasetError, Direction, IndexedTable, KeySchema, Row};
use crate::interpolator::{InterpolationTable, DEFAULT_CAPACITY, DEFAULT_LAMBDA_MAX};
use crate::numerators::FieldValue;
use crate::Ordinal;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Visible rows.
    pub h: usize,
    pub capacity: usize,
    /// Steps larger than this are handled as thumb jumps.
    pub page_size: usize,
    pub warmup_enabled: bool,
    /// Warmup stops once the widest gap is at most this fraction of λ_max.
    pub warmup_threshold: f64,
    pub warmup_max_iter: usize,
    /// Row range assumed until the total count arrives.
    pub default_lambda_max: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::with_height(40)
    }
}

impl EngineConfig {
    pub fn with_height(h: usize) -> Self {
        let h = h.max(1);
        Self {
            h,
            capacity: DEFAULT_CAPACITY,
            page_size: 2 * h,
            warmup_enabled: true,
            warmup_threshold: 0.2,
            warmup_max_iter: 64,
            default_lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// What the user currently sees.
#[derive(Debug, Clone, Default)]
pub struct GridState {
    /// Key of the first visible row.
    pub anchor_keys: Option<Vec<FieldValue>>,
    pub anchor_ordinal: Option<Ordinal>,
    pub lambda_estimate: u64,
    /// Whether `lambda_estimate` is a known row number rather than a guess.
    pub exact: bool,
    pub h: usize,
    pub generation: u64,
    pub rows: Vec<Row>,
}

/// Result of a user-facing call.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub rows: Vec<Row>,
    pub lambda: u64,
    pub exact: bool,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent {
    WindowChanged { generation: u64, lambda: u64, rows: Vec<Row> },
    ThumbCorrected { generation: u64, lambda: u64 },
    LambdaMaxChanged { lambda_max: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefinementOutcome {
    pub lambda_exact: u64,
    pub for_generation: u64,
    pub point_added: bool,
    /// The thumb was corrected; false when the user had moved on.
    pub applied: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub refinements_started: u64,
    pub refinements_applied: u64,
    pub refinements_stale: u64,
    pub refinements_dropped: u64,
    pub warmup_iterations: u64,
    /// Fast seeks spent locating warmup rows.
    pub warmup_seeks: u64,
}

#[derive(Debug, Clone)]
struct RefineJob {
    generation: u64,
    keys: Vec<FieldValue>,
    ordinal: Ordinal,
}

#[derive(Debug, Default)]
struct Jobs {
    refine: Option<RefineJob>,
    warmup: Option<WarmupRun>,
    busy: bool,
    counted: bool,
    shutdown: bool,
    last_outcome: Option<RefinementOutcome>,
}

#[derive(Debug, Clone, Copy)]
struct WarmupRun {
    threshold: f64,
    max_iter: usize,
    done_iter: usize,
}

struct Shared {
    table: Arc<IndexedTable>,
    schema: Arc<KeySchema>,
    config: EngineConfig,
    interp: RwLock<InterpolationTable>,
    state: Mutex<GridState>,
    jobs: Mutex<Jobs>,
    wake: Condvar,
    subscribers: Mutex<Vec<Sender<EngineEvent>>>,
    lambda_known: AtomicBool,
    stats: StatCounters,
}

#[derive(Default)]
struct StatCounters {
    started: AtomicU64,
    applied: AtomicU64,
    stale: AtomicU64,
    dropped: AtomicU64,
    warmup_iterations: AtomicU64,
    warmup_seeks: AtomicU64,
}

pub struct ScrollEngine {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl ScrollEngine {
    /// Initializes the interpolation table from the first and last rows,
    /// shows the first `h` rows, and starts counting in the background.
    pub fn start(table: Arc<IndexedTable>, config: EngineConfig) -> Self {
        let schema = table.schema().clone();
        let interp = initial_table(&table, &config);
        let shared = Arc::new(Shared {
            table,
            schema,
            interp: RwLock::new(interp),
            state: Mutex::new(GridState {
                h: config.h,
                ..GridState::default()
            }),
            config,
            jobs: Mutex::new(Jobs::default()),
            wake: Condvar::new(),
            subscribers: Mutex::new(Vec::new()),
            lambda_known: AtomicBool::new(false),
            stats: StatCounters::default(),
        });
        {
            let mut state = shared.state.lock();
            let rows = shared.table.seek_ge_ordinal(&Ordinal::default(), shared.config.h);
            set_anchor(&mut state, &shared.schema, rows, 0, true);
        }
        let worker = {
            let shared = shared.clone();
            thread::Builder::new()
                .name("keyscroll-refine".into())
                .spawn(move || worker_loop(&shared))
                .expect("spawn refinement worker")
        };
        Self {
            shared,
            worker: Some(worker),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    pub fn table(&self) -> &Arc<IndexedTable> {
        &self.shared.table
    }

    pub fn schema(&self) -> &Arc<KeySchema> {
        &self.shared.schema
    }

    pub fn lambda_max(&self) -> u64 {
        self.shared.interp.read().lambda_max()
    }

    /// Whether λ_max comes from an actual count.
    pub fn lambda_max_known(&self) -> bool {
        self.shared.lambda_known.load(Ordering::Acquire)
    }

    pub fn state(&self) -> GridState {
        self.shared.state.lock().clone()
    }

    pub fn interpolation(&self) -> InterpolationTable {
        self.shared.interp.read().clone()
    }

    pub fn stats(&self) -> EngineStats {
        let s = &self.shared.stats;
        EngineStats {
            refinements_started: s.started.load(Ordering::Relaxed),
            refinements_applied: s.applied.load(Ordering::Relaxed),
            refinements_stale: s.stale.load(Ordering::Relaxed),
            refinements_dropped: s.dropped.load(Ordering::Relaxed),
            warmup_iterations: s.warmup_iterations.load(Ordering::Relaxed),
            warmup_seeks: s.warmup_seeks.load(Ordering::Relaxed),
        }
    }

    pub fn last_refinement(&self) -> Option<RefinementOutcome> {
        self.shared.jobs.lock().last_outcome
    }

    /// New receiver for all subsequent events.
    pub fn subscribe(&self) -> Receiver<EngineEvent> {
        let (tx, rx) = mpsc::channel();
        self.shared.subscribers.lock().push(tx);
        rx
    }

    /// Blocks until the worker has nothing left to do. Returns false on
    /// timeout.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut jobs = self.shared.jobs.lock();
        loop {
            let idle = jobs.counted && !jobs.busy && jobs.refine.is_none() && jobs.warmup.is_none();
            if idle || jobs.shutdown {
                return true;
            }
            if self.shared.wake.wait_until(&mut jobs, deadline).timed_out() {
                return false;
            }
        }
    }

    /// Shows the rows around scroll position `lambda`.
    pub fn on_scroll(&self, lambda: u64) -> Window {
        let shared = &*self.shared;
        let mut state = shared.state.lock();
        let (lambda, kappa) = {
            let interp = shared.interp.read();
            let lambda = lambda.min(interp.lambda_max());
            (lambda, interp.kappa_for(lambda))
        };
        let rows = match shared.schema.codec().decode_floor(&kappa) {
            Ok(keys) => shared.table.seek_ge(&keys, shared.config.h),
            Err(e) => {
                debug!(%kappa, error = %e, "estimate does not decode, seeking by ordinal");
                Ok(shared.table.seek_ge_ordinal(&kappa, shared.config.h))
            }
        }
        .unwrap_or_default();
        shared.show(&mut state, rows, lambda, false)
    }

    /// Requests the exact row number of the current anchor.
    pub fn on_scroll_release(&self) -> bool {
        let state = self.shared.state.lock();
        let (Some(keys), Some(ordinal)) = (&state.anchor_keys, &state.anchor_ordinal) else {
            return false;
        };
        self.shared.schedule(RefineJob {
            generation: state.generation,
            keys: keys.clone(),
            ordinal: ordinal.clone(),
        });
        true
    }

    /// Shows the rows starting at `keys` and estimates their position.
    pub fn position_to(&self, keys: &[FieldValue]) -> Result<Window, EngineError> {
        let shared = &*self.shared;
        let kappa = shared.schema.encode(keys)?;
        let mut state = shared.state.lock();
        let rows = shared.table.seek_ge(keys, shared.config.h)?;
        let lambda = shared.interp.read().lambda_for(&kappa);
        let window = shared.show(&mut state, rows, lambda, false);
        if let (Some(keys), Some(ordinal)) = (&state.anchor_keys, &state.anchor_ordinal) {
            if !window.exact {
                shared.schedule(RefineJob {
                    generation: state.generation,
                    keys: keys.clone(),
                    ordinal: ordinal.clone(),
                });
            }
        }
        Ok(window)
    }

    /// Moves the window by `n` rows using only seeks relative to the
    /// visible rows. Steps longer than the page size become thumb jumps.
    pub fn small_step(&self, n: i64) -> Window {
        let shared = &*self.shared;
        if n.unsigned_abs() > shared.config.page_size as u64 {
            let lambda = self.state().lambda_estimate.saturating_add_signed(n);
            return self.on_scroll(lambda);
        }
        let mut state = shared.state.lock();
        if n == 0 || state.rows.is_empty() {
            return window_of(&state);
        }
        let count = n.unsigned_abs() as usize;
        let width = state.rows.len();
        let (rows, shift) = if n > 0 {
            let last = &state.rows[width - 1].key;
            let fresh = shared.table.seek_gt(last, count).unwrap_or_default();
            let shift = fresh.len();
            let mut rows = state.rows.clone();
            rows.extend(fresh);
            (rows.split_off(shift), shift as i64)
        } else {
            let first = &state.rows[0].key;
            let fresh = shared.table.seek_lt_desc(first, count).unwrap_or_default();
            let shift = fresh.len();
            let mut rows: Vec<Row> = fresh.into_iter().rev().collect();
            rows.extend(state.rows.iter().cloned());
            rows.truncate(width);
            (rows, -(shift as i64))
        };
        if shift == 0 {
            return window_of(&state);
        }
        let lambda = state.lambda_estimate.saturating_add_signed(shift);
        let exact = state.exact;
        let window = shared.show(&mut state, rows, lambda, exact);
        if exact {
            if let Some(kappa) = &state.anchor_ordinal {
                let mut interp = shared.interp.write();
                if window.lambda > 0 && window.lambda < interp.lambda_max() {
                    if let Err(e) = interp.insert_point(window.lambda, kappa.clone()) {
                        debug!(error = %e, "step point rejected");
                    }
                }
            }
        }
        window
    }

    /// Re-runs warmup with the given parameters.
    pub fn warmup(&self, threshold: f64, max_iter: usize) {
        let mut jobs = self.shared.jobs.lock();
        jobs.warmup = Some(WarmupRun {
            threshold,
            max_iter,
            done_iter: 0,
        });
        self.shared.wake.notify_all();
    }

    fn shutdown(&mut self) {
        self.shared.jobs.lock().shutdown = true;
        self.shared.wake.notify_all();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for ScrollEngine {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn initial_table(table: &IndexedTable, config: &EngineConfig) -> InterpolationTable {
    let codec = table.schema().codec();
    let first = table.first_last(Direction::Asc);
    let last = table.first_last(Direction::Desc);
    let (kappa_min, kappa_max) = match (first, last) {
        (Some(f), Some(l)) => {
            let lo = codec.encode(&f.key).expect("stored keys conform");
            let hi = codec.encode(&l.key).expect("stored keys conform");
            if hi > lo {
                (lo, hi)
            } else {
                let next = &lo + 1u32;
                (lo, next)
            }
        }
        _ => (Ordinal::from(0u32), Ordinal::from(1u32)),
    };
    InterpolationTable::with_capacity(kappa_min, kappa_max, config.default_lambda_max, config.capacity)
        .expect("κ_min < κ_max by construction")
}

fn window_of(state: &GridState) -> Window {
    Window {
        rows: state.rows.clone(),
        lambda: state.lambda_estimate,
        exact: state.exact,
        generation: state.generation,
    }
}

fn set_anchor(state: &mut GridState, schema: &KeySchema, rows: Vec<Row>, lambda: u64, exact: bool) {
    let anchor = rows.first().map(|r| r.key.clone());
    state.anchor_ordinal = anchor.as_ref().map(|k| schema.encode(k).expect("stored keys conform"));
    state.anchor_keys = anchor;
    state.lambda_estimate = lambda;
    state.exact = exact;
    state.rows = rows;
}

impl Shared {
    fn emit(&self, event: EngineEvent) {
        self.subscribers.lock().retain(|tx| tx.send(event.clone()).is_ok());
    }

    /// Applies a fetched window: clamps at the end of the table, pins λ when
    /// the anchor's row number is known, bumps the generation, and notifies.
    fn show(&self, state: &mut GridState, mut rows: Vec<Row>, mut lambda: u64, mut exact: bool) -> Window {
        if self.table.is_empty() {
            return window_of(state);
        }
        let h = self.config.h;
        let known = self.lambda_known.load(Ordering::Acquire);
        if rows.len() < h {
            let past_end = self.schema.codec().cardinality();
            rows = self.table.seek_lt_desc_ordinal(past_end, h);
            rows.reverse();
            if known {
                lambda = (self.table.len() - rows.len()) as u64;
                exact = true;
            }
        }
        let interp = self.interp.read();
        let anchor = rows
            .first()
            .map(|r| self.schema.encode(&r.key).expect("stored keys conform"));
        if let Some(kappa) = &anchor {
            if kappa == interp.kappa_min() {
                lambda = 0;
                exact = true;
            } else if known {
                if let Some(l) = interp.stored_lambda(kappa) {
                    lambda = l;
                    exact = true;
                }
            }
        }
        let lambda = lambda.min(interp.lambda_max());
        drop(interp);
        set_anchor(state, &self.schema, rows, lambda, exact);
        state.generation += 1;
        self.emit(EngineEvent::WindowChanged {
            generation: state.generation,
            lambda,
            rows: state.rows.clone(),
        });
        window_of(state)
    }

    fn schedule(&self, job: RefineJob) {
        let mut jobs = self.jobs.lock();
        if jobs.refine.replace(job).is_some() {
            self.stats.dropped.fetch_add(1, Ordering::Relaxed);
        }
        self.wake.notify_all();
    }

    fn set_busy(&self, busy: bool) {
        self.jobs.lock().busy = busy;
        self.wake.notify_all();
    }

    fn count_total(&self) {
        if !self.table.is_empty() {
            let n = self.table.count_all();
            let lambda_max = n.saturating_sub(1).max(1);
            self.interp.write().set_lambda_max(lambda_max);
            self.lambda_known.store(true, Ordering::Release);
            let mut state = self.state.lock();
            if !state.exact {
                if let Some(kappa) = &state.anchor_ordinal {
                    state.lambda_estimate = self.interp.read().lambda_for(kappa);
                }
            }
            self.emit(EngineEvent::LambdaMaxChanged { lambda_max });
            debug!(rows = n, "total count known");
        }
        let mut jobs = self.jobs.lock();
        jobs.counted = true;
        if self.config.warmup_enabled && self.table.len() > self.config.h {
            jobs.warmup = Some(WarmupRun {
                threshold: self.config.warmup_threshold,
                max_iter: self.config.warmup_max_iter,
                done_iter: 0,
            });
        }
        self.wake.notify_all();
    }

    fn refine(&self, job: RefineJob) {
        self.stats.started.fetch_add(1, Ordering::Relaxed);
        let lambda_exact = self.table.count_less_ordinal(&job.ordinal);
        let point_added = {
            let mut interp = self.interp.write();
            lambda_exact > 0
                && lambda_exact < interp.lambda_max()
                && match interp.insert_point(lambda_exact, job.ordinal.clone()) {
                    Ok(_) => true,
                    Err(e) => {
                        warn!(error = %e, "refinement point rejected");
                        false
                    }
                }
        };
        let applied = {
            let mut state = self.state.lock();
            let current = state.generation == job.generation;
            if current {
                state.lambda_estimate = lambda_exact;
                state.exact = true;
                self.emit(EngineEvent::ThumbCorrected {
                    generation: job.generation,
                    lambda: lambda_exact,
                });
            }
            current
        };
        let counter = if applied { &self.stats.applied } else { &self.stats.stale };
        counter.fetch_add(1, Ordering::Relaxed);
        debug!(lambda_exact, generation = job.generation, applied, keys = ?job.keys, "refined");
        self.jobs.lock().last_outcome = Some(RefinementOutcome {
            lambda_exact,
            for_generation: job.generation,
            point_added,
            applied,
        });
    }

    /// One warmup iteration. Returns false when warmup should stop.
    fn warmup_step(&self, run: WarmupRun) -> bool {
        if run.done_iter >= run.max_iter {
            return false;
        }
        let (lo, hi, mut kappa_lo, mut kappa_hi, probe) = {
            let interp = self.interp.read();
            let (lo, hi) = interp.largest_gap();
            if hi - lo < 2 || (hi - lo) as f64 <= run.threshold * interp.lambda_max() as f64 {
                return false;
            }
            let points = interp.points();
            let i = points.partition_point(|(l, _)| *l < lo);
            let mid = lo + (hi - lo) / 2;
            (lo, hi, points[i].1.clone(), points[i + 1].1.clone(), interp.kappa_for(mid))
        };
        let (edge_lo, edge_hi) = (kappa_lo.clone(), kappa_hi.clone());
        let mut probe = probe;
        let mut found = None;
        // Bisect with fast seeks until a row strictly inside the gap turns up.
        while kappa_lo < kappa_hi {
            self.stats.warmup_seeks.fetch_add(1, Ordering::Relaxed);
            let start = self
                .schema
                .codec()
                .decode_floor(&probe)
                .ok()
                .and_then(|keys| self.schema.encode(&keys).ok())
                .unwrap_or_else(|| probe.clone());
            let row = self.table.seek_ge_ordinal(&start, 1).pop();
            let kappa = row.as_ref().map(|r| self.schema.encode(&r.key).expect("stored keys conform"));
            match kappa {
                Some(k) if k > edge_lo && k < edge_hi => {
                    found = Some(k);
                    break;
                }
                Some(k) if k <= edge_lo => kappa_lo = &probe + 1u32,
                _ => kappa_hi = probe.clone(),
            }
            probe = (&kappa_lo + &kappa_hi) >> 1u32;
        }
        let Some(kappa) = found else {
            debug!(lo, hi, "no row inside the widest gap");
            return false;
        };
        let lambda = self.table.count_less_ordinal(&kappa);
        self.stats.warmup_iterations.fetch_add(1, Ordering::Relaxed);
        let mut interp = self.interp.write();
        match interp.insert_point(lambda, kappa) {
            Ok(_) => true,
            Err(e) => {
                debug!(error = %e, "warmup point rejected");
                false
            }
        }
    }
}

enum Task {
    Refine(RefineJob),
    Warmup(WarmupRun),
}

fn worker_loop(shared: &Shared) {
    shared.set_busy(true);
    shared.count_total();
    loop {
        let task = {
            let mut jobs = shared.jobs.lock();
            loop {
                if jobs.shutdown {
                    jobs.busy = false;
                    shared.wake.notify_all();
                    return;
                }
                if let Some(job) = jobs.refine.take() {
                    jobs.busy = true;
                    break Task::Refine(job);
                }
                if let Some(run) = jobs.warmup {
                    jobs.busy = true;
                    break Task::Warmup(run);
                }
                jobs.busy = false;
                shared.wake.notify_all();
                shared.wake.wait(&mut jobs);
            }
        };
        match task {
            Task::Refine(job) => shared.refine(job),
            Task::Warmup(run) => {
                let more = shared.warmup_step(run);
                let mut jobs = shared.jobs.lock();
                jobs.warmup = match jobs.warmup {
                    Some(w) if more => Some(WarmupRun {
                        done_iter: w.done_iter + 1,
                        ..w
                    }),
                    _ => None,
                };
            }
        }
    }
}
