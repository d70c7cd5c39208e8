//! Per-item fan-out used for per-video work.
//!
//! With the `parallel` feature (default) work runs on a rayon pool sized by
//! `threads` (`0` = rayon's default). `threads == 1`, or a build without the
//! feature, runs a plain sequential loop. Output order always follows input
//! order, so results do not depend on scheduling.

/// Resolves a thread count, falling back to `STROC_BENCH_THREADS` when
/// `threads` is `None`.
pub fn resolve_threads(threads: Option<usize>) -> usize {
    threads
        .or_else(|| {
            std::env::var("STROC_BENCH_THREADS")
                .ok()
                .and_then(|v| v.trim().parse().ok())
        })
        .unwrap_or(0)
}

pub fn map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threads != 1 {
        use rayon::prelude::*;
        let run = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect::<Vec<R>>();
        return match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        };
    }
    let _ = threads;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Like [`map`] but stops at the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    if threads == 1 || !cfg!(feature = "parallel") {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    map(items, threads, f).into_iter().collect()
}
