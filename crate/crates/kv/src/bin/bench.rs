use clap::Parser;
use lazykv::bench::{self, Policy, RunConfig, WorkloadKind};
use lazykv::Protocol;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

/// Run a contention benchmark against an in-process cluster.
#[derive(Parser, Debug)]
#[command(name = "bench", version)]
struct Args {
    /// occ, 2pl, occ-lsd, 2pl-lsd or occ-lsd+
    #[arg(long, default_value = "occ-lsd")]
    protocol: Protocol,
    /// hotkey, assert or tpcc-lite
    #[arg(long, default_value = "hotkey")]
    workload: WorkloadKind,
    #[arg(long, default_value_t = 16)]
    clients: usize,
    /// Percentage of operations on the hot key (hotkey, assert).
    #[arg(long, default_value_t = 100)]
    p: u32,
    /// Assert counter initial value (invalidation ratio 1/init).
    #[arg(long, default_value_t = 10)]
    init: i64,
    #[arg(long, default_value_t = 1)]
    warehouses: u32,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    /// hash or directory
    #[arg(long, default_value = "directory")]
    policy: Policy,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Run length in seconds.
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    /// Operations per client; overrides --duration.
    #[arg(long)]
    ops: Option<u64>,
    /// Append a result row here (header written if the file is new).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// One-way latency added to every message, in microseconds.
    #[arg(long, default_value_t = 0)]
    inject_latency_us: u64,
    /// Start from this snapshot instead of the workload's initial data.
    #[arg(long)]
    load_snapshot: Option<PathBuf>,
    /// Write the final state here.
    #[arg(long)]
    save_snapshot: Option<PathBuf>,
    /// Print the lock state of KEY after the run.
    #[arg(long, value_name = "KEY")]
    dump_lock: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if !(args.duration.is_finite() && args.duration >= 0.0) {
        eprintln!("error: --duration must be a non-negative number of seconds");
        return ExitCode::from(2);
    }
    let cfg = RunConfig {
        protocol: args.protocol,
        workload: args.workload,
        clients: args.clients,
        p: args.p,
        init: args.init,
        warehouses: args.warehouses,
        partitions: args.partitions,
        policy: args.policy,
        seed: args.seed,
        duration: Duration::from_secs_f64(args.duration),
        ops: args.ops,
        latency: Duration::from_micros(args.inject_latency_us),
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    let cluster = bench::build_cluster(&cfg);
    if let Some(path) = &args.load_snapshot {
        match cluster.load_snapshot(path) {
            Ok(n) => eprintln!("loaded {n} records from {}", path.display()),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
    }
    let report = match bench::run_on(&cluster, &cfg, args.load_snapshot.is_none()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    println!("{report}");

    for key in &args.dump_lock {
        match cluster.dump_lock(key) {
            Ok(text) => println!("{text}"),
            Err(e) => eprintln!("error: {key}: {e}"),
        }
    }
    if let Some(path) = &args.save_snapshot {
        if let Err(e) = cluster.save_snapshot(path) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    if let Some(path) = &args.csv {
        let fresh = !path.exists();
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path);
        match file.map_err(csv::Error::from).and_then(|f| bench::write_csv(f, std::slice::from_ref(&report), fresh)) {
            Ok(()) => {}
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
    }
    if report.integrity_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
