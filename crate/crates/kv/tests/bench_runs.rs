use lazykv::bench::{self, client_rng, Policy, RunConfig, Workload, WorkloadKind, CSV_HEADER};
use lazykv::bench::{AssertWorkload, TpccLite};
use lazykv::Protocol;
use std::time::Duration;

fn fixed(protocol: Protocol, workload: WorkloadKind) -> RunConfig {
    RunConfig { protocol, workload, clients: 4, ops: Some(50), duration: Duration::ZERO, ..RunConfig::default() }
}

#[test]
fn same_seed_same_operations() {
    let w = TpccLite::new(3);
    let ops = |seed| {
        let mut rng = client_rng(seed, 2);
        (0..50).map(|_| w.next_op(2, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(ops(9), ops(9));
    assert_ne!(ops(9), ops(10));
}

#[test]
fn single_client_runs_are_reproducible() {
    for kind in [WorkloadKind::Hotkey, WorkloadKind::Assert, WorkloadKind::TpccLite] {
        let cfg = RunConfig { clients: 1, ..fixed(Protocol::OccLsd, kind) };
        let a = bench::run(&cfg).unwrap();
        let b = bench::run(&cfg).unwrap();
        assert_eq!(a.digest, b.digest, "{}", kind.name());
        assert_eq!(a.commits, 50);
    }
}

#[test]
fn every_protocol_passes_the_cross_checks() {
    for p in Protocol::ALL {
        for kind in [WorkloadKind::Hotkey, WorkloadKind::Assert, WorkloadKind::TpccLite] {
            let r = bench::run(&fixed(p, kind)).unwrap();
            assert!(r.integrity_ok(), "{r}");
            assert_eq!(r.commits + r.user_aborts, 200, "{r}");
        }
    }
}

#[test]
fn partitioned_tpcc_keeps_integrity() {
    for p in [Protocol::Occ, Protocol::TwoPl, Protocol::OccLsd, Protocol::TwoPlLsd] {
        for policy in [Policy::Directory, Policy::Hash] {
            let cfg = RunConfig { warehouses: 2, partitions: 2, policy, ..fixed(p, WorkloadKind::TpccLite) };
            let r = bench::run(&cfg).unwrap();
            assert!(r.integrity_ok(), "{r}");
        }
    }
}

#[test]
fn assert_counters_stay_in_range() {
    let w = AssertWorkload::new(4, 100, 3);
    let cfg = RunConfig { init: 3, ..fixed(Protocol::TwoPlLsd, WorkloadKind::Assert) };
    let db = bench::build_cluster(&cfg);
    w.setup(&db).unwrap();
    let r = bench::drive(&db, &w, &cfg);
    assert!(r.integrity_ok(), "{r}");
    let hot = db.get("counter/hot").unwrap().value.as_int().unwrap();
    assert!((0..=3).contains(&hot));
}

#[test]
fn invalid_configurations() {
    let bad = [
        RunConfig { clients: 0, ..RunConfig::default() },
        RunConfig { p: 101, ..RunConfig::default() },
        RunConfig { workload: WorkloadKind::Assert, init: 0, ..RunConfig::default() },
        RunConfig { partitions: 0, ..RunConfig::default() },
        RunConfig { workload: WorkloadKind::TpccLite, warehouses: 0, ..RunConfig::default() },
    ];
    for cfg in bad {
        assert!(bench::run(&cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn csv_rows() {
    let r = bench::run(&fixed(Protocol::Occ, WorkloadKind::Hotkey)).unwrap();
    let mut out = Vec::new();
    bench::write_csv(&mut out, &[r.clone(), r], true).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert!(lines[1].starts_with("occ,hotkey,"));
    assert_eq!(lines[1].split(',').count(), CSV_HEADER.len());
}
