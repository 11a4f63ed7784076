//! Host-side pieces of wasmlite: the allocator script file format, a
//! parallel fuzz driver, and the command-line front end.

pub mod cli;
pub mod script;

use rayon::prelude::*;
use wasmlite_core::harness::{fuzz_seeds, FuzzReport, GenConfig};
use wasmlite_core::validator::Mutation;

/// Seeds handed to one rayon task.
const FUZZ_CHUNK: u64 = 256;

/// Runs seeds `cfg.seed .. cfg.seed + n` across the rayon pool.
///
/// Merging is order-independent, so the report equals the sequential
/// [`fuzz_seeds`] result byte for byte.
pub fn fuzz_parallel(n: u64, cfg: &GenConfig, mutation: Option<Mutation>) -> FuzzReport {
    let start = cfg.seed;
    let chunks = n.div_ceil(FUZZ_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = start.wrapping_add(c * FUZZ_CHUNK);
            let len = FUZZ_CHUNK.min(n - c * FUZZ_CHUNK);
            fuzz_seeds(lo..lo.wrapping_add(len), cfg, mutation)
        })
        .reduce(FuzzReport::default, FuzzReport::merge)
}
