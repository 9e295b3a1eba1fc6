//! Offline evaluation of conversational recommenders with simulated users
//! who may settle for an alternative to the item they originally wanted.
//!
//! The crate is organised bottom-up:
//!
//! - [`catalog`]: items, embeddings, similarity, nearest neighbours.
//! - [`simulator`]: relative critiques and the alternatives-aware meta simulator.
//! - [`ranker`]: the per-turn ranking contract and deterministic baselines.
//! - [`metrics`]: SR@1, nDCG@k, MRR@k, saturation, aggregation, Cohen's kappa.
//! - [`pooling`]: judging pools and difficulty-stratified target sampling.
//! - [`harness`]: conversations, experiments, sweeps, reports and config.

pub mod catalog;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod pooling;
pub mod ranker;
pub mod simulator;

pub use catalog::{Catalog, Item, ItemId};
pub use error::{Error, Result};

/// 64-bit FNV-1a. Used to derive per-target seeds that do not depend on the
/// order in which targets are processed.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Combines two seeds into one with a SplitMix64 finalizer.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
