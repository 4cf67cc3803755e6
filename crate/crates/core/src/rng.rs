//! Reproducible random streams and the replicate engine.
//!
//! Replicate `i` of an experiment draws from ChaCha8 keyed by
//! `derive_seed(master, label)` on stream `i`. The draws therefore depend
//! only on `(master, label, i)`, never on how replicates are spread over
//! worker threads, and results are gathered back in index order.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub type SimRng = ChaCha8Rng;

const CHUNK: u64 = 512;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `(master, label)` into the key of a stream family.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(master ^ mix64(h.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// One replicate's random stream: a pure function of `(seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        RngStream { seed, index }
    }

    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Runs replicate closures in parallel with deterministic, index-ordered output.
#[derive(Clone)]
pub struct McEngine {
    master_seed: u64,
    workers: usize,
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for McEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("McEngine")
            .field("master_seed", &self.master_seed)
            .field("workers", &self.workers)
            .finish()
    }
}

impl McEngine {
    /// `workers == 0` means one worker per available core.
    pub fn new(master_seed: u64, workers: usize) -> Self {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool");
        McEngine {
            master_seed,
            workers,
            pool: Arc::new(pool),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Key of the stream family used for `label`; doubles as the seed
    /// fingerprint reported next to estimates.
    pub fn family_seed(&self, label: &str) -> u64 {
        derive_seed(self.master_seed, label)
    }

    pub fn stream(&self, label: &str, index: u64) -> RngStream {
        RngStream::new(self.family_seed(label), index)
    }

    /// Evaluates `f(i, rng_i)` for every `i < n`, returning results in index order.
    pub fn run<T, F>(&self, label: &str, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut SimRng) -> T + Sync,
    {
        self.run_filter(label, 0, n, |i, rng| Some(f(i, rng)))
    }

    /// Like [`run`](Self::run) over `start..start + n`, keeping only `Some` results.
    pub fn run_filter<T, F>(&self, label: &str, start: u64, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut SimRng) -> Option<T> + Sync,
    {
        let seed = self.family_seed(label);
        let end = start + n;
        let chunks: Vec<u64> = (start..end).step_by(CHUNK as usize).collect();
        let parts: Vec<Vec<T>> = self.pool.install(|| {
            chunks
                .par_iter()
                .map(|&lo| {
                    let hi = (lo + CHUNK).min(end);
                    (lo..hi)
                        .filter_map(|i| {
                            let mut rng = RngStream::new(seed, i).rng();
                            f(i, &mut rng)
                        })
                        .collect()
                })
                .collect()
        });
        parts.into_iter().flatten().collect()
    }
}
