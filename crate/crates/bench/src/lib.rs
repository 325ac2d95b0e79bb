//! Benchmark inputs shared by the criterion targets.

use clinch_core::instances::{fixture, generate, Family, GenParams};
use clinch_core::AuctionInstance;

/// The worst-case ratio market at a range of supplies.
pub fn worst_case_markets(ks: &[i64]) -> Vec<(i64, AuctionInstance)> {
    ks.iter().map(|&k| (k, fixture("prop54", k).expect("valid k"))).collect()
}

/// One generated market per family with `n` buyers and supply up to `supply`.
pub fn generated_markets(n: usize, supply: i64, seed: u64) -> Vec<(&'static str, AuctionInstance)> {
    Family::ALL
        .into_iter()
        .map(|f| (f.name(), generate(f, GenParams::new(n, supply), seed).expect("generation succeeds")))
        .collect()
}
