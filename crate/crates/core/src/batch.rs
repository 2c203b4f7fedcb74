//! Parallel batches over path indices.
//!
//! Each path draws only from its own streams, and results come back in index
//! order, so the output of a batch does not depend on the worker count.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::{Error, Result};

pub struct BatchRunner {
    pool: ThreadPool,
    workers: usize,
}

impl std::fmt::Debug for BatchRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchRunner").field("workers", &self.workers).finish()
    }
}

impl BatchRunner {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Argument("worker count must be positive".into()));
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool, workers })
    }

    /// A runner sized to the available parallelism.
    pub fn available() -> Self {
        let n = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self::new(n).expect("nonzero worker count")
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `[f(0), …, f(n−1)]`.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n as u64).into_par_iter().map(&f).collect())
    }

    /// Like [`BatchRunner::map`]; the error of the lowest failing index wins
    /// and is tagged with that index.
    pub fn try_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.map(n, |i| f(i).map_err(|e| e.in_path(i))).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_index_ordered() {
        let r = BatchRunner::new(3).unwrap();
        assert_eq!(r.map(10, |i| i * i), (0..10u64).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn first_error_by_index() {
        let r = BatchRunner::new(4).unwrap();
        let out = r.try_map(100, |i| if i % 7 == 3 { Err(Error::Domain(format!("{i}"))) } else { Ok(i) });
        assert_eq!(out, Err(Error::Domain("3".into()).in_path(3)));
        assert!(BatchRunner::new(0).is_err());
    }
}
