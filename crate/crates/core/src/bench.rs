//! Overhead benchmarks: the same workloads run without any checking code
//! (`Base`) and against a session in each [`Mode`].
//!
//! Three workloads are provided. `pingpong` bounces one object between two
//! threads through two binary semaphores. `quicksort` sorts an array of
//! objects on one thread, checking every element access. `taskgraph` has a
//! number of workers pull tasks from a queue and update pairs of nodes of a
//! shared graph under per-node locks.
//!
//! Timings include building the workload's objects, since that is where the
//! ownership graph is constructed.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{Mode, Session};
use crate::graph::{ProcessId, ResourceId};
use crate::sync::{Lock, LockKind, Queue, RawSemaphore};

pub const MIN_RUNS: usize = 30;
pub const WARMUP_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchMode {
    Full,
    Partial,
    None,
    /// The workload with no checking code at all.
    Base,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [BenchMode::Full, BenchMode::Partial, BenchMode::None, BenchMode::Base];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Full => "full",
            BenchMode::Partial => "partial",
            BenchMode::None => "none",
            BenchMode::Base => "base",
        }
    }

    /// The session mode, or `None` for `Base`.
    pub fn session_mode(self) -> Option<Mode> {
        match self {
            BenchMode::Full => Some(Mode::Full),
            BenchMode::Partial => Some(Mode::Partial),
            BenchMode::None => Some(Mode::None),
            BenchMode::Base => None,
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown benchmark mode `{0}` (expected full, partial, none or base)")]
pub struct ParseBenchModeError(pub String);

impl FromStr for BenchMode {
    type Err = ParseBenchModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseBenchModeError(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    PingPong,
    Quicksort,
    TaskGraph,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::PingPong, Suite::Quicksort, Suite::TaskGraph];

    pub fn name(self) -> &'static str {
        match self {
            Suite::PingPong => "pingpong",
            Suite::Quicksort => "quicksort",
            Suite::TaskGraph => "taskgraph",
        }
    }

    /// Default parameter points: lock/unlock pairs, array sizes, workers.
    pub fn parameters(self) -> Vec<u64> {
        match self {
            Suite::PingPong => vec![1_000, 2_000, 4_000],
            Suite::Quicksort => vec![5_000, 10_000, 20_000, 40_000],
            Suite::TaskGraph => vec![1, 2, 4],
        }
    }

    pub fn run(self, mode: BenchMode, parameter: u64) -> Outcome {
        match self {
            Suite::PingPong => pingpong(mode, parameter),
            Suite::Quicksort => quicksort(mode, parameter as usize, 0x5eed),
            Suite::TaskGraph => taskgraph(mode, parameter as usize, 256, 2_000),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown benchmark suite `{0}` (expected pingpong, quicksort or taskgraph)")]
pub struct ParseSuiteError(pub String);

impl FromStr for Suite {
    type Err = ParseSuiteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseSuiteError(s.to_string()))
    }
}

/// One timed execution of a workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub elapsed: Duration,
    /// Checked element accesses (quicksort) or operations performed.
    pub operations: u64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub benchmark: String,
    pub mode: BenchMode,
    pub parameter: u64,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub runs: usize,
    /// Violations summed over all runs.
    pub violations: usize,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least {MIN_RUNS} runs are required, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Runs `suite` at `parameter` after [`WARMUP_RUNS`] discarded runs.
pub fn measure(suite: Suite, mode: BenchMode, parameter: u64, runs: usize) -> Result<BenchResult, BenchError> {
    if runs < MIN_RUNS {
        return Err(BenchError::TooFewRuns(runs));
    }
    for _ in 0..WARMUP_RUNS {
        suite.run(mode, parameter);
    }
    let mut times = Vec::with_capacity(runs);
    let mut violations = 0;
    for _ in 0..runs {
        let o = suite.run(mode, parameter);
        times.push(o.elapsed.as_secs_f64() * 1e3);
        violations += o.violations;
    }
    let (mean_ms, stddev_ms) = mean_stddev(&times);
    Ok(BenchResult { benchmark: suite.name().to_string(), mode, parameter, mean_ms, stddev_ms, runs, violations })
}

/// Mean and sample standard deviation.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    parameter: u64,
    time: f64,
    error: f64,
}

/// Writes one series as `parameter,time,error` rows, in milliseconds.
pub fn write_csv(out: impl io::Write, results: &[BenchResult]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(CsvRow { parameter: r.parameter, time: r.mean_ms, error: r.stddev_ms })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a series written by [`write_csv`]. The file does not record the
/// benchmark, mode or run count, so the caller supplies them.
pub fn read_csv(input: impl io::Read, benchmark: &str, mode: BenchMode, runs: usize) -> Result<Vec<BenchResult>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(BenchResult {
                benchmark: benchmark.to_string(),
                mode,
                parameter: row.parameter,
                mean_ms: row.time,
                stddev_ms: row.error,
                runs,
                violations: 0,
            })
        })
        .collect()
}

/// The conventional file name of a series, such as `quicksort.full.csv`.
pub fn csv_file_name(suite: Suite, mode: BenchMode) -> String {
    format!("{}.{}.csv", suite.name(), mode.name())
}

// ---------------------------------------------------------------------------
// Ping-pong

fn pingpong(mode: BenchMode, pairs: u64) -> Outcome {
    match mode.session_mode() {
        None => pingpong_base(pairs),
        Some(m) => pingpong_checked(m, pairs),
    }
}

fn pingpong_base(pairs: u64) -> Outcome {
    let start = Instant::now();
    let ball = Arc::new(AtomicU64::new(0));
    let ping = Arc::new(RawSemaphore::new(true));
    let pong = Arc::new(RawSemaphore::new(false));
    let player = |mine: Arc<RawSemaphore>, theirs: Arc<RawSemaphore>, ball: Arc<AtomicU64>| {
        thread::spawn(move || {
            for _ in 0..pairs {
                mine.lock();
                ball.fetch_add(1, Ordering::Relaxed);
                theirs.unlock();
            }
        })
    };
    let a = player(ping.clone(), pong.clone(), ball.clone());
    let b = player(pong, ping, ball.clone());
    a.join().expect("player panicked");
    b.join().expect("player panicked");
    Outcome { elapsed: start.elapsed(), operations: ball.load(Ordering::Relaxed), violations: 0 }
}

fn pingpong_checked(mode: Mode, pairs: u64) -> Outcome {
    let start = Instant::now();
    let s = Arc::new(Session::new(mode));
    let main = s.root();
    let ball = s.on_allocate(main);
    let bounces = Arc::new(AtomicU64::new(0));
    let ping = Arc::new(Lock::new(&s, main, ball, LockKind::BinarySemaphore).expect("ball is fresh"));
    ping.lock(&s, main);
    let pong = Arc::new(Lock::new(&s, main, ball, LockKind::BinarySemaphore).expect("main owns the ball"));
    let player = |mine: Arc<Lock>, theirs: Arc<Lock>| {
        let (s, bounces) = (s.clone(), bounces.clone());
        let me = s.spawn(main).expect("spawn");
        thread::spawn(move || {
            for _ in 0..pairs {
                mine.lock(&s, me);
                let _ = s.on_field_read(me, ball);
                let _ = s.on_field_write(me, ball);
                bounces.fetch_add(1, Ordering::Relaxed);
                let _ = theirs.unlock(&s, me);
            }
        })
    };
    let a = player(ping.clone(), pong.clone());
    let b = player(pong, ping);
    a.join().expect("player panicked");
    b.join().expect("player panicked");
    Outcome { elapsed: start.elapsed(), operations: bounces.load(Ordering::Relaxed), violations: s.violation_count() }
}

// ---------------------------------------------------------------------------
// Quicksort

trait Element {
    fn key(&self) -> i64;
    fn id(&self) -> ResourceId;
}

struct Plain {
    key: i64,
}

impl Element for Plain {
    #[inline(always)]
    fn key(&self) -> i64 {
        self.key
    }

    #[inline(always)]
    fn id(&self) -> ResourceId {
        ResourceId(0)
    }
}

struct Tracked {
    id: ResourceId,
    key: i64,
}

impl Element for Tracked {
    #[inline(always)]
    fn key(&self) -> i64 {
        self.key
    }

    #[inline(always)]
    fn id(&self) -> ResourceId {
        self.id
    }
}

trait Hooks {
    fn read(&self, r: ResourceId);
    fn write(&self, r: ResourceId);
}

struct NoHooks;

impl Hooks for NoHooks {
    #[inline(always)]
    fn read(&self, _: ResourceId) {}

    #[inline(always)]
    fn write(&self, _: ResourceId) {}
}

struct Checked<'a> {
    session: &'a Session,
    actor: ProcessId,
}

impl Hooks for Checked<'_> {
    #[inline(always)]
    fn read(&self, r: ResourceId) {
        let _ = self.session.on_field_read(self.actor, r);
    }

    #[inline(always)]
    fn write(&self, r: ResourceId) {
        let _ = self.session.on_field_write(self.actor, r);
    }
}

/// Counts hook calls, to size the workload.
struct Counting(std::cell::Cell<u64>);

impl Hooks for Counting {
    fn read(&self, _: ResourceId) {
        self.0.set(self.0.get() + 1);
    }

    fn write(&self, _: ResourceId) {
        self.0.set(self.0.get() + 1);
    }
}

fn keys(n: usize, seed: u64) -> Vec<i64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..1_000_000_000)).collect()
}

#[inline(always)]
fn key_at<E: Element, H: Hooks>(a: &[Box<E>], array: ResourceId, i: usize, h: &H) -> i64 {
    h.read(array);
    let e = &a[i];
    h.read(e.id());
    e.key()
}

#[inline(always)]
fn swap<E: Element, H: Hooks>(a: &mut [Box<E>], array: ResourceId, i: usize, j: usize, h: &H) {
    h.write(array);
    a.swap(i, j);
}

fn sort<E: Element, H: Hooks>(a: &mut [Box<E>], array: ResourceId, h: &H) {
    let mut stack = vec![(0usize, a.len())];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        swap(a, array, lo + (hi - lo) / 2, hi - 1, h);
        let pivot = key_at(a, array, hi - 1, h);
        let mut store = lo;
        for i in lo..hi - 1 {
            if key_at(a, array, i, h) < pivot {
                swap(a, array, i, store, h);
                store += 1;
            }
        }
        swap(a, array, store, hi - 1, h);
        stack.push((lo, store));
        stack.push((store + 1, hi));
    }
}

/// Number of checked accesses quicksort performs on `n` keys.
pub fn quicksort_accesses(n: usize, seed: u64) -> u64 {
    let mut a: Vec<Box<Plain>> = keys(n, seed).into_iter().map(|key| Box::new(Plain { key })).collect();
    let h = Counting(std::cell::Cell::new(0));
    sort(&mut a, ResourceId(0), &h);
    h.0.get()
}

fn quicksort(mode: BenchMode, n: usize, seed: u64) -> Outcome {
    let keys = keys(n, seed);
    match mode.session_mode() {
        None => {
            let start = Instant::now();
            let mut a: Vec<Box<Plain>> = keys.iter().map(|&key| Box::new(Plain { key })).collect();
            sort(&mut a, ResourceId(0), &NoHooks);
            let elapsed = start.elapsed();
            debug_assert!(a.windows(2).all(|w| w[0].key <= w[1].key));
            Outcome { elapsed, operations: n as u64, violations: 0 }
        }
        Some(m) => {
            let start = Instant::now();
            let s = Session::new(m);
            let main = s.root();
            let array = s.on_allocate(main);
            let mut a: Vec<Box<Tracked>> = Vec::with_capacity(n);
            for &key in &keys {
                let id = s.on_allocate(main);
                // Storing the new element in the array makes the array its owner.
                let _ = s.on_field_assign(main, array, id);
                a.push(Box::new(Tracked { id, key }));
            }
            // The mode is fixed for the run, so the access hooks are only
            // compiled in where they do something.
            if m == Mode::Full {
                sort(&mut a, array, &Checked { session: &s, actor: main });
            } else {
                sort(&mut a, array, &NoHooks);
            }
            let elapsed = start.elapsed();
            debug_assert!(a.windows(2).all(|w| w[0].key <= w[1].key));
            Outcome { elapsed, operations: n as u64, violations: s.violation_count() }
        }
    }
}

// ---------------------------------------------------------------------------
// Task graph

fn taskgraph(mode: BenchMode, workers: usize, nodes: usize, tasks: usize) -> Outcome {
    match mode.session_mode() {
        None => taskgraph_base(workers, nodes, tasks),
        Some(m) => taskgraph_checked(m, workers, nodes, tasks),
    }
}

fn endpoints(task: usize, nodes: usize) -> (usize, usize) {
    let a = (task * 7) % nodes;
    let b = (a + 1 + task % (nodes - 1)) % nodes;
    (a.min(b), a.max(b))
}

fn taskgraph_base(workers: usize, nodes: usize, tasks: usize) -> Outcome {
    let start = Instant::now();
    let graph: Arc<Vec<Mutex<u64>>> = Arc::new((0..nodes).map(|_| Mutex::new(0)).collect());
    let queue: Arc<Mutex<Vec<usize>>> = Arc::new(Mutex::new((0..tasks).rev().collect()));
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let (graph, queue) = (graph.clone(), queue.clone());
            thread::spawn(move || {
                let mut done = 0u64;
                while let Some(t) = queue.lock().pop() {
                    let (a, b) = endpoints(t, nodes);
                    let mut x = graph[a].lock();
                    let mut y = graph[b].lock();
                    *x += 1;
                    *y += *x;
                    done += 1;
                }
                done
            })
        })
        .collect();
    let operations = handles.into_iter().map(|h| h.join().expect("worker panicked")).sum();
    Outcome { elapsed: start.elapsed(), operations, violations: 0 }
}

fn taskgraph_checked(mode: Mode, workers: usize, nodes: usize, tasks: usize) -> Outcome {
    let start = Instant::now();
    let s = Arc::new(Session::new(mode));
    let main = s.root();
    let node_ids: Arc<Vec<ResourceId>> = Arc::new((0..nodes).map(|_| s.on_allocate(main)).collect());
    let values: Arc<Vec<Mutex<u64>>> = Arc::new((0..nodes).map(|_| Mutex::new(0)).collect());
    let locks: Arc<Vec<Lock>> = Arc::new(
        node_ids
            .iter()
            .map(|&n| Lock::new(&s, main, n, LockKind::Monitor).expect("main owns the node"))
            .collect(),
    );
    let queue = Arc::new(Queue::new(&s, main).expect("spawn"));
    let task_index: Arc<Mutex<rustc_hash::FxHashMap<ResourceId, usize>>> = Arc::default();
    for t in 0..tasks {
        let id = s.on_allocate(main);
        task_index.lock().insert(id, t);
        let _ = queue.add(&s, main, id);
    }
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let (s, locks, values, queue, task_index, node_ids) =
                (s.clone(), locks.clone(), values.clone(), queue.clone(), task_index.clone(), node_ids.clone());
            let me = s.spawn(main).expect("spawn");
            thread::spawn(move || {
                let mut done = 0u64;
                while let Ok(task) = queue.try_remove(&s, me) {
                    let _ = s.on_field_read(me, task);
                    let t = task_index.lock()[&task];
                    let (a, b) = endpoints(t, node_ids.len());
                    locks[a].lock(&s, me);
                    locks[b].lock(&s, me);
                    let _ = s.on_field_write(me, node_ids[a]);
                    let _ = s.on_field_write(me, node_ids[b]);
                    let x = {
                        let mut x = values[a].lock();
                        *x += 1;
                        *x
                    };
                    *values[b].lock() += x;
                    let _ = locks[b].unlock(&s, me);
                    let _ = locks[a].unlock(&s, me);
                    done += 1;
                }
                done
            })
        })
        .collect();
    let operations = handles.into_iter().map(|h| h.join().expect("worker panicked")).sum();
    Outcome { elapsed: start.elapsed(), operations, violations: s.violation_count() }
}
