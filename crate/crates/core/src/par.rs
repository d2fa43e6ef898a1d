//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! a rayon pool; without it everything runs on the calling thread. Results
//! are always returned in input order so merges stay deterministic.

/// How to run an embarrassingly parallel loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads = None` uses rayon's global pool.
    Parallel { threads: Option<usize> },
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
    /// `0` means "let the runtime decide".
    pub fn with_threads(threads: usize) -> Self {
        if threads == 1 || !cfg!(feature = "parallel") {
            Execution::Sequential
        } else {
            Execution::Parallel {
                threads: (threads > 0).then_some(threads),
            }
        }
    }

    /// Applies `f` to every item, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel { threads } => parallel_map(items, f, threads),
        }
    }

    /// `map` over `0..n`.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |&i| f(i))
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, U, F>(items: &[T], f: F, threads: Option<usize>) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match threads {
        None => items.par_iter().map(f).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(err) => {
                log::warn!("thread pool unavailable ({err}); running sequentially");
                items.iter().map(f).collect()
            }
        },
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, U, F>(items: &[T], f: F, _threads: Option<usize>) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}
