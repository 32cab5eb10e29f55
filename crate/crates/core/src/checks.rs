//! Counters for structural self-checks performed at query time.
//!
//! Queries run a handful of invariant checks (marked-point agreement,
//! recursion guard, catalog alignment, duplicate-slot bound, one witness per
//! color). A failed check bumps its counter and, in debug builds, panics.
//! The test suites read the counters to assert that no check ever failed.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    MarkedPoint,
    RecursionGuard,
    CatalogAlignment,
    GatherSlots,
    OneWitness,
}

const ALL: [Check; 5] = [
    Check::MarkedPoint,
    Check::RecursionGuard,
    Check::CatalogAlignment,
    Check::GatherSlots,
    Check::OneWitness,
];

static COUNTERS: [AtomicU64; 5] = [const { AtomicU64::new(0) }; 5];
static PERFORMED: AtomicU64 = AtomicU64::new(0);

fn slot(c: Check) -> usize {
    ALL.iter().position(|&x| x == c).expect("listed")
}

/// Records the outcome of one check.
pub fn check(c: Check, ok: bool, what: impl FnOnce() -> String) {
    PERFORMED.fetch_add(1, Ordering::Relaxed);
    if !ok {
        COUNTERS[slot(c)].fetch_add(1, Ordering::Relaxed);
        debug_assert!(false, "{c:?} check failed: {}", what());
    }
}

pub fn failures(c: Check) -> u64 {
    COUNTERS[slot(c)].load(Ordering::Relaxed)
}

pub fn total_failures() -> u64 {
    ALL.iter().map(|&c| failures(c)).sum()
}

/// Number of checks evaluated so far, passed or failed.
pub fn performed() -> u64 {
    PERFORMED.load(Ordering::Relaxed)
}
