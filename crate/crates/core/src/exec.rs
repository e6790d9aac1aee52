//! Ordered map over independent work items, sequential or on a rayon pool.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads = None` uses the global pool. Without the `parallel` feature
    /// this runs sequentially.
    Parallel {
        threads: Option<usize>,
    },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { threads: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `f(index, item)` for every item; the output keeps the input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
            Execution::Parallel { threads } => parallel_map(items, f, threads),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], f: F, threads: Option<usize>) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    let run = || items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a pool of {n} threads ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], f: F, _threads: Option<usize>) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}
