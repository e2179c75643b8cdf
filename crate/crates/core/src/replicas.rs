//! Deterministic replica seeding and the parallel replica pool.

use rayon::prelude::*;

use crate::genealogy::splitmix;

/// Seed of replica `r` under root seed `root`.
pub fn replica_seed(root: u64, r: u64) -> u64 {
    splitmix(root ^ splitmix(r.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(1)))
}

/// Runs `f(r, seed_r)` for r in 0..n and returns results in replica order, so output does
/// not depend on the worker count.
pub fn run_replicas<T, F>(n: usize, root: u64, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    let work = || (0..n).into_par_iter().map(|r| f(r, replica_seed(root, r as u64))).collect();
    match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    }
}
