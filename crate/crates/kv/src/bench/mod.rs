//! Contention benchmarks: hotkey, assert and TPC-C-lite.
//!
//! One thread per client. Each client draws its operations from its own
//! seeded stream, so the seed fixes what every client does, not when.
//! An operation that aborts for any reason other than the application's
//! own request is retried with the original wound-wait stamp until it
//! commits.

pub mod assert;
pub mod hotkey;
pub mod tpcc;

pub use assert::AssertWorkload;
pub use hotkey::Hotkey;
pub use tpcc::TpccLite;

use crate::dist::Cluster;
use crate::error::{AbortReason, TxnError};
use crate::txn::{Protocol, Txn};
use lazykv_core::routing::{fnv1a, PartitionMap};
use lazykv_core::serial::State;
use lazykv_core::ResolvedValues;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadKind {
    Hotkey,
    Assert,
    TpccLite,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Hotkey => "hotkey",
            WorkloadKind::Assert => "assert",
            WorkloadKind::TpccLite => "tpcc-lite",
        }
    }
}

impl FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hotkey" => Ok(WorkloadKind::Hotkey),
            "assert" => Ok(WorkloadKind::Assert),
            "tpcc-lite" => Ok(WorkloadKind::TpccLite),
            _ => Err(format!("unknown workload {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Hash,
    /// Warehouse `w` lives on partition `(w - 1) % partitions`.
    Directory,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Hash => "hash",
            Policy::Directory => "directory",
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hash" => Ok(Policy::Hash),
            "directory" => Ok(Policy::Directory),
            _ => Err(format!("unknown policy {s:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub workload: WorkloadKind,
    pub clients: usize,
    /// Percentage of operations that go to the shared hot key.
    pub p: u32,
    /// Assert counter initial value, the inverse of the invalidation ratio.
    pub init: i64,
    pub warehouses: u32,
    pub partitions: usize,
    pub policy: Policy,
    pub seed: u64,
    pub duration: Duration,
    /// Per-client operation budget; when set it replaces `duration`.
    pub ops: Option<u64>,
    pub latency: Duration,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Occ,
            workload: WorkloadKind::Hotkey,
            clients: 16,
            p: 100,
            init: 10,
            warehouses: 1,
            partitions: 1,
            policy: Policy::Directory,
            seed: 1,
            duration: Duration::from_secs(1),
            ops: None,
            latency: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.into()));
        if self.clients == 0 {
            return bad("clients must be positive");
        }
        if self.p > 100 {
            return bad("p is a percentage");
        }
        if self.init < 1 {
            return bad("init must be at least 1");
        }
        if self.warehouses == 0 {
            return bad("warehouses must be positive");
        }
        if self.partitions == 0 {
            return bad("partitions must be positive");
        }
        if self.ops == Some(0) || (self.ops.is_none() && self.duration.is_zero()) {
            return bad("nothing to run");
        }
        Ok(())
    }

    pub fn partition_map(&self) -> PartitionMap {
        match self.policy {
            Policy::Hash => PartitionMap::Hash { partitions: self.partitions },
            Policy::Directory => {
                let mut prefixes: Vec<(String, usize)> =
                    (1..=self.warehouses).map(|w| (format!("w{w}/"), (w as usize - 1) % self.partitions)).collect();
                // Microbenchmark keys have no warehouse; keep them on partition 0.
                prefixes.push((String::new(), 0));
                PartitionMap::Directory { partitions: self.partitions, prefixes }
            }
        }
    }

    pub fn params(&self) -> String {
        let budget = match self.ops {
            Some(n) => format!("ops={n}"),
            None => format!("duration_ms={}", self.duration.as_millis()),
        };
        format!(
            "clients={};p={};init={};warehouses={};partitions={};policy={};seed={};{budget};latency_us={}",
            self.clients,
            self.p,
            self.init,
            self.warehouses,
            self.partitions,
            self.policy.name(),
            self.seed,
            self.latency.as_micros()
        )
    }
}

/// A benchmark workload: data set, operation generator, transaction logic
/// and the post-run integrity checks.
pub trait Workload: Sync {
    type Op: Send;
    /// Per-client record of committed effects, for the integrity checks.
    type Tally: Default + Send;

    fn setup(&self, cluster: &Cluster) -> Result<(), TxnError>;
    fn next_op(&self, client: usize, rng: &mut ChaCha8Rng) -> Self::Op;
    /// Runs the operation's reads and writes; the caller commits. `prior`
    /// holds the futures the previous attempt's failed commit resolved
    /// (empty on the first try); a retry may use them to guess outcomes.
    fn execute(&self, txn: &mut Txn<'_>, op: &Self::Op, prior: &ResolvedValues) -> Result<(), TxnError>;
    fn record(&self, tally: &mut Self::Tally, op: &Self::Op);
    /// Returns every violated invariant.
    fn check(&self, before: &State, after: &State, tallies: &[Self::Tally]) -> Vec<String>;
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub protocol: Protocol,
    pub workload: WorkloadKind,
    pub params: String,
    /// Committed logical transactions.
    pub commits: u64,
    /// Operations the application aborted itself (not retried).
    pub user_aborts: u64,
    pub attempts: u64,
    pub aborts_by_reason: BTreeMap<AbortReason, u64>,
    pub elapsed: Duration,
    pub messages_total: u64,
    pub is_true_round_trips: u64,
    pub commit_calls: u64,
    pub prepare_rounds_total: u64,
    latency_total: Duration,
    pub digest: u64,
    pub violations: Vec<String>,
}

impl RunReport {
    pub fn aborts(&self) -> u64 {
        self.aborts_by_reason.values().sum()
    }

    pub fn throughput(&self) -> f64 {
        self.commits as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }

    pub fn abort_fraction(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.aborts() as f64 / self.attempts as f64
        }
    }

    /// Mean over finished operations, retries included.
    pub fn mean_latency_us(&self) -> f64 {
        let done = self.commits + self.user_aborts;
        if done == 0 {
            0.0
        } else {
            self.latency_total.as_secs_f64() * 1e6 / done as f64
        }
    }

    pub fn prepare_rounds_mean(&self) -> f64 {
        if self.commit_calls == 0 {
            0.0
        } else {
            self.prepare_rounds_total as f64 / self.commit_calls as f64
        }
    }

    pub fn integrity_ok(&self) -> bool {
        self.violations.is_empty() && self.commits + self.user_aborts + self.retried() == self.attempts
    }

    fn retried(&self) -> u64 {
        self.aborts() - self.aborts_by_reason.get(&AbortReason::User).copied().unwrap_or(0)
    }

    pub fn aborts_by_reason_text(&self) -> String {
        let parts: Vec<String> = self.aborts_by_reason.iter().map(|(r, n)| format!("{r}={n}")).collect();
        parts.join(";")
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.protocol, self.workload.name(), self.params)?;
        writeln!(f, "  commits/s        {:.1}", self.throughput())?;
        writeln!(f, "  commits          {} of {} attempts", self.commits, self.attempts)?;
        writeln!(f, "  abort fraction   {:.4} ({})", self.abort_fraction(), self.aborts_by_reason_text())?;
        writeln!(f, "  mean latency     {:.1} us", self.mean_latency_us())?;
        writeln!(f, "  messages         {}", self.messages_total)?;
        writeln!(f, "  is-true trips    {}", self.is_true_round_trips)?;
        writeln!(f, "  prepare rounds   {:.3} mean", self.prepare_rounds_mean())?;
        writeln!(f, "  digest           {:016x}", self.digest)?;
        if self.violations.is_empty() {
            write!(f, "  integrity        ok")
        } else {
            write!(f, "  integrity        FAILED: {}", self.violations.join("; "))
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "protocol",
    "workload",
    "params",
    "commits/s",
    "mean_latency_us",
    "abort_frac",
    "aborts_by_reason",
    "prepare_rounds_mean",
    "messages_total",
];

/// Writes the header (when asked) and one row per report.
pub fn write_csv<W: io::Write>(out: W, reports: &[RunReport], header: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for r in reports {
        w.write_record([
            r.protocol.name().to_string(),
            r.workload.name().to_string(),
            r.params.clone(),
            format!("{:.2}", r.throughput()),
            format!("{:.2}", r.mean_latency_us()),
            format!("{:.6}", r.abort_fraction()),
            r.aborts_by_reason_text(),
            format!("{:.4}", r.prepare_rounds_mean()),
            r.messages_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Order-independent fingerprint of a state.
pub fn digest(state: &State) -> u64 {
    let mut text = String::new();
    for (k, v) in state {
        text.push_str(k);
        text.push('=');
        text.push_str(&v.to_string());
        text.push('\n');
    }
    fnv1a(text.as_bytes())
}

pub fn client_rng(seed: u64, client: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(client as u64);
    rng
}

struct ClientResult<T> {
    commits: u64,
    user_aborts: u64,
    attempts: u64,
    aborts: BTreeMap<AbortReason, u64>,
    is_true_round_trips: u64,
    commit_calls: u64,
    prepare_rounds: u64,
    latency: Duration,
    tally: T,
}

fn client_loop<W: Workload>(cluster: &Cluster, w: &W, cfg: &RunConfig, client: usize, start: Instant) -> ClientResult<W::Tally> {
    let mut rng = client_rng(cfg.seed, client);
    let mut res = ClientResult {
        commits: 0,
        user_aborts: 0,
        attempts: 0,
        aborts: BTreeMap::new(),
        is_true_round_trips: 0,
        commit_calls: 0,
        prepare_rounds: 0,
        latency: Duration::ZERO,
        tally: W::Tally::default(),
    };
    let deadline = start + cfg.duration;
    let mut done = 0u64;
    loop {
        match cfg.ops {
            Some(n) if done >= n => break,
            None if Instant::now() >= deadline => break,
            _ => {}
        }
        done += 1;
        let op = w.next_op(client, &mut rng);
        let began = Instant::now();
        let mut stamp = None;
        let mut prior = ResolvedValues::new();
        loop {
            let mut t = match stamp {
                None => cluster.begin(),
                Some(s) => cluster.begin_with_stamp(s),
            };
            stamp = Some(t.context().stamp());
            res.attempts += 1;
            let outcome = match w.execute(&mut t, &op, &prior) {
                Ok(()) => {
                    res.commit_calls += 1;
                    let r = t.commit();
                    res.prepare_rounds += u64::from(t.context().stats().prepare_rounds);
                    prior = t.advisory_rvalues().clone();
                    r.map(|_| ())
                }
                Err(e) => Err(e),
            };
            res.is_true_round_trips += t.context().stats().is_true_round_trips;
            drop(t);
            match outcome {
                Ok(()) => {
                    res.commits += 1;
                    w.record(&mut res.tally, &op);
                    break;
                }
                Err(TxnError::Aborted(AbortReason::User)) => {
                    res.user_aborts += 1;
                    *res.aborts.entry(AbortReason::User).or_default() += 1;
                    break;
                }
                Err(TxnError::Aborted(reason)) => {
                    *res.aborts.entry(reason).or_default() += 1;
                }
                Err(e) => panic!("workload bug: {e}"),
            }
        }
        res.latency += began.elapsed();
    }
    res
}

/// Drives `w` against an already configured cluster.
pub fn drive<W: Workload>(cluster: &Cluster, w: &W, cfg: &RunConfig) -> RunReport {
    let before = cluster.state();
    let messages_before = cluster.messages_total();
    let start = Instant::now();
    let results: Vec<ClientResult<W::Tally>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            (0..cfg.clients).map(|c| s.spawn(move || client_loop(cluster, w, cfg, c, start))).collect();
        handles.into_iter().map(|h| h.join().expect("client thread panicked")).collect()
    });
    let elapsed = start.elapsed();
    let after = cluster.state();

    let mut report = RunReport {
        protocol: cluster.protocol(),
        workload: cfg.workload,
        params: cfg.params(),
        commits: 0,
        user_aborts: 0,
        attempts: 0,
        aborts_by_reason: BTreeMap::new(),
        elapsed,
        messages_total: cluster.messages_total() - messages_before,
        is_true_round_trips: 0,
        commit_calls: 0,
        prepare_rounds_total: 0,
        latency_total: Duration::ZERO,
        digest: digest(&after),
        violations: Vec::new(),
    };
    let mut tallies = Vec::with_capacity(results.len());
    for r in results {
        report.commits += r.commits;
        report.user_aborts += r.user_aborts;
        report.attempts += r.attempts;
        for (k, v) in r.aborts {
            *report.aborts_by_reason.entry(k).or_default() += v;
        }
        report.is_true_round_trips += r.is_true_round_trips;
        report.commit_calls += r.commit_calls;
        report.prepare_rounds_total += r.prepare_rounds;
        report.latency_total += r.latency;
        tallies.push(r.tally);
    }
    report.violations = w.check(&before, &after, &tallies);
    if report.commits + report.user_aborts + report.retried() != report.attempts {
        report.violations.push("commits + aborts != attempts".into());
    }
    report
}

pub fn build_cluster(cfg: &RunConfig) -> Cluster {
    Cluster::with_latency(cfg.protocol, cfg.partition_map(), cfg.latency)
}

/// Builds the cluster, loads the workload's data and runs it.
pub fn run(cfg: &RunConfig) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let cluster = build_cluster(cfg);
    run_on(&cluster, cfg, true)
}

/// Runs on `cluster`, loading the initial data set first if `setup` is set.
pub fn run_on(cluster: &Cluster, cfg: &RunConfig, setup: bool) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let err = |e: TxnError| ConfigError(e.to_string());
    Ok(match cfg.workload {
        WorkloadKind::Hotkey => {
            let w = Hotkey::new(cfg.clients, cfg.p);
            if setup {
                w.setup(cluster).map_err(err)?;
            }
            drive(cluster, &w, cfg)
        }
        WorkloadKind::Assert => {
            let w = AssertWorkload::new(cfg.clients, cfg.p, cfg.init);
            if setup {
                w.setup(cluster).map_err(err)?;
            }
            drive(cluster, &w, cfg)
        }
        WorkloadKind::TpccLite => {
            let w = TpccLite::new(cfg.warehouses);
            if setup {
                w.setup(cluster).map_err(err)?;
            }
            drive(cluster, &w, cfg)
        }
    })
}
