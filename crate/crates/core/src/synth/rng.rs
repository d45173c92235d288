use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal;

/// Independent random streams used by the simulation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Generate = 0,
    Calibrate = 1,
    Evaluate = 2,
}

/// Counter-based generator for one replication.
///
/// Every `(seed, stream, replication)` triple maps to its own ChaCha8 stream,
/// so replications can run in any order or thread and still draw the same
/// numbers. Normal variates use the inverse CDF.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64, stream: Stream, replication: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(((stream as u64) << 48) | (replication & ((1 << 48) - 1)));
        Self { inner }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        normal::quantile(self.uniform())
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo + 1) as u64;
        // rejection sampling keeps the draw exactly uniform
        let zone = u64::MAX - (u64::MAX - span + 1) % span;
        loop {
            let x = self.inner.next_u64();
            if x <= zone {
                return lo + (x % span) as usize;
            }
        }
    }
}
