mod common;

use common::{check, check_broken, Schedule};
use lazykv::Protocol;

const SCHEDULES: u64 = 500;

fn all_serializable(protocol: Protocol) {
    for seed in 0..SCHEDULES {
        let s = Schedule::generate(seed);
        assert!(check(protocol, &s), "{protocol} schedule {seed} is not serializable: {s:?}");
    }
}

#[test]
fn occ_schedules_are_serializable() {
    all_serializable(Protocol::Occ);
}

#[test]
fn occ_lsd_schedules_are_serializable() {
    all_serializable(Protocol::OccLsd);
}

#[test]
fn twopl_schedules_are_serializable() {
    all_serializable(Protocol::TwoPl);
}

#[test]
fn twopl_lsd_schedules_are_serializable() {
    all_serializable(Protocol::TwoPlLsd);
}

#[test]
fn occ_lsd_plus_without_speculation_is_occ_lsd() {
    for seed in 0..100 {
        assert!(check(Protocol::OccLsdPlus, &Schedule::generate(seed)), "schedule {seed}");
    }
}

#[test]
fn skipping_condition_validation_is_caught() {
    let failures = (0..SCHEDULES).filter(|&seed| !check_broken(&Schedule::generate(seed))).count();
    assert!(failures >= 1, "the oracle accepted every schedule of a protocol that skips validation");
}
