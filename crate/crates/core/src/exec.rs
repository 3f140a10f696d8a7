//! Parallel/sequential dispatch.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every helper runs the plain sequential loop. Results are
//! always returned in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum slice length before inner loops are split across threads.
pub const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Use a pool of `workers` threads, or the global pool when `None`.
    #[default]
    Parallel,
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Execution::Sequential,
            Some(n) => Execution::Workers(n),
            None => Execution::Parallel,
        }
    }

    /// Order-preserving map over `items`.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Workers(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                Err(_) => items.iter().map(f).collect(),
            },
            #[cfg(not(feature = "parallel"))]
            _ => items.iter().map(f).collect(),
        }
    }
}

/// Sizes the global pool used by [`Execution::Parallel`] and the inner loops.
/// Fails if the pool was already initialised.
pub fn init_global_pool(workers: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(())
    }
}

/// Applies `f(row_index, row)` to each `row_len`-sized chunk of `data`.
pub fn for_each_row<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if data.len() >= PARALLEL_THRESHOLD {
        data.par_chunks_mut(row_len).enumerate().for_each(|(i, r)| f(i, r));
        return;
    }
    data.chunks_mut(row_len).enumerate().for_each(|(i, r)| f(i, r));
}

/// Elementwise update `out[i] = f(i, out[i])` in fixed-size blocks.
pub fn for_each_block<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    const BLOCK: usize = 4096;
    #[cfg(feature = "parallel")]
    if data.len() >= PARALLEL_THRESHOLD {
        data.par_chunks_mut(BLOCK).enumerate().for_each(|(i, b)| f(i * BLOCK, b));
        return;
    }
    data.chunks_mut(BLOCK).enumerate().for_each(|(i, b)| f(i * BLOCK, b));
}
