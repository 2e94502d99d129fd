//! Deterministic parallel sample engine.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// Samples per chunk. Chunks are the unit of parallel work and of summation,
/// so the chunk size (not the worker count) fixes the rounding pattern.
pub const CHUNK: u64 = 1024;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Compensated) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Runs per-sample closures on a fixed worker pool. Sample `j` always reads
/// from stream `(seed, j)`; results are bit-identical for any worker count.
#[derive(Clone)]
pub struct Engine {
    pool: Arc<ThreadPool>,
    workers: usize,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("workers", &self.workers)
            .finish()
    }
}

impl Engine {
    /// `workers = 0` uses one worker per available core.
    pub fn new(workers: usize) -> Result<Self> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let workers = pool.current_num_threads();
        Ok(Self {
            pool: Arc::new(pool),
            workers,
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    fn chunks(n_samples: u64) -> Vec<(u64, u64)> {
        (0..n_samples.div_ceil(CHUNK))
            .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n_samples)))
            .collect()
    }

    /// Compensated sums of `K` per-sample statistics.
    pub fn sum<const K: usize, F>(&self, n_samples: u64, seed: u64, f: F) -> [f64; K]
    where
        F: Fn(&mut StreamRng, u64) -> [f64; K] + Sync,
    {
        let parts: Vec<[Compensated; K]> = self.pool.install(|| {
            Self::chunks(n_samples)
                .into_par_iter()
                .map(|(lo, hi)| {
                    let mut acc = [Compensated::default(); K];
                    for j in lo..hi {
                        let mut rng = stream(seed, j);
                        let v = f(&mut rng, j);
                        for (a, x) in acc.iter_mut().zip(v) {
                            a.add(x);
                        }
                    }
                    acc
                })
                .collect()
        });
        let mut total = [Compensated::default(); K];
        for part in &parts {
            for (t, p) in total.iter_mut().zip(part) {
                t.merge(p);
            }
        }
        total.map(|c| c.value())
    }

    /// Per-sample values in sample order.
    pub fn collect<T, F>(&self, n_samples: u64, seed: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut StreamRng, u64) -> T + Sync,
    {
        let parts: Vec<Vec<T>> = self.pool.install(|| {
            Self::chunks(n_samples)
                .into_par_iter()
                .map(|(lo, hi)| (lo..hi).map(|j| f(&mut stream(seed, j), j)).collect())
                .collect()
        });
        parts.into_iter().flatten().collect()
    }
}
