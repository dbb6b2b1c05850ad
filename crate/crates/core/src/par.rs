//! Order-preserving parallel maps on a shared thread pool.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

/// Worker count: `STRH2_THREADS` if set, else the available parallelism.
pub fn thread_count() -> usize {
    static COUNT: OnceLock<usize> = OnceLock::new();
    *COUNT.get_or_init(|| {
        let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        match std::env::var("STRH2_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            Some(n) if n >= 1 => n,
            _ => avail,
        }
    })
}

fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .thread_name(|i| format!("strh2-{i}"))
            .build()
            .expect("thread pool")
    })
}

/// `(0..n).map(f)` in parallel; results come back in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_chunked(n, 64, f)
}

/// Like [`map_indexed`] with a minimum number of items per task.
pub fn map_chunked<T, F>(n: usize, min_chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n <= min_chunk || thread_count() == 1 {
        return (0..n).map(f).collect();
    }
    pool().install(|| (0..n).into_par_iter().with_min_len(min_chunk.max(1)).map(f).collect())
}
