//! Execution strategy for embarrassingly parallel loops and the seeded RNG
//! streams that keep results independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon work-stealing pool. Falls back to sequential without the
    /// `parallel` feature.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// `(0..len).map(f)` with results in index order.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Independent generator for `(cell, replication)` under a root seed.
pub fn stream_rng(root: u64, cell: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream((cell << 32) | (replication & 0xffff_ffff));
    rng
}
