//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Criteria 1, 2, and 7 read off a single desk-scale run matrix (block
//! meshes (6,6,6) and (8,8,8), all three scenarios, both operators, all
//! policies, 10 seeds, 8 frames, parity shadow on). Wall-clock-sensitive
//! checks serialize on a mutex so they do not contend with each other.

use std::sync::{Mutex, OnceLock};

use stafem::bench::verify::{
    check_connectivity_oracle, check_dynamics, check_element_stiffness, check_locality_sweep,
    check_memory_accounting, check_temporal_locality, check_update_time_ordering,
    run_parity_suite, CheckResult, ParitySuiteOutcome,
};

static TIMING_LOCK: Mutex<()> = Mutex::new(());

fn suite() -> &'static ParitySuiteOutcome {
    static SUITE: OnceLock<ParitySuiteOutcome> = OnceLock::new();
    SUITE.get_or_init(|| {
        let _guard = TIMING_LOCK.lock().unwrap();
        run_parity_suite(None).expect("parity suite runs")
    })
}

fn report(check: &CheckResult) {
    println!("{check}");
    assert!(check.passed, "{check}");
}

#[test]
fn criterion_1_exactness_parity() {
    report(&suite().parity);
}

#[test]
fn criterion_2_complexity_counters() {
    report(&suite().counters);
}

#[test]
fn criterion_3_update_time_ordering() {
    suite();
    let _guard = TIMING_LOCK.lock().unwrap();
    report(&check_update_time_ordering(None).expect("comparison runs"));
}

#[test]
fn criterion_4_temporal_locality_gap() {
    suite();
    let _guard = TIMING_LOCK.lock().unwrap();
    report(&check_temporal_locality(None).expect("temporal run"));
}

#[test]
fn criterion_5_locality_sweep() {
    suite();
    let _guard = TIMING_LOCK.lock().unwrap();
    report(&check_locality_sweep(None).expect("sweep runs"));
}

#[test]
fn criterion_6_element_stiffness() {
    report(&check_element_stiffness(42));
}

#[test]
fn criterion_7_solver_parity_witness() {
    report(&suite().solver_witness);
}

#[test]
fn criterion_8_connectivity_oracle() {
    report(&check_connectivity_oracle(None).expect("connectivity runs"));
}

#[test]
fn criterion_9_dynamics_sanity() {
    report(&check_dynamics(None).expect("dynamics runs"));
}

#[test]
fn criterion_10_memory_accounting() {
    report(&check_memory_accounting().expect("estimates run"));
}
