//! Data-parallel execution over independent items.
//!
//! With the `parallel` feature (default) work fans out over rayon's global
//! pool; without it every call runs sequentially. Results always come back
//! in input order, so downstream reductions see a fixed order no matter how
//! the work was scheduled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Parallel when the `parallel` feature is on, sequential otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// Ordered map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> U + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items
                .par_iter()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect(),
        }
    }

    /// Ordered fold: items are mapped (possibly concurrently) in chunks of
    /// `chunk` and folded into `acc` strictly left to right.
    pub fn map_fold<T, U, A, F, G>(self, items: &[T], chunk: usize, mut acc: A, f: F, mut fold: G) -> A
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> U + Sync + Send,
        G: FnMut(A, U) -> A,
    {
        let chunk = chunk.max(1);
        for (ci, block) in items.chunks(chunk).enumerate() {
            let base = ci * chunk;
            for u in self.map(block, |i, t| f(base + i, t)) {
                acc = fold(acc, u);
            }
        }
        acc
    }
}
