//! Data-parallel helpers with a sequential fallback.
//!
//! The `parallel` feature (default) runs independent per-state backups on a
//! rayon pool; without it everything degrades to plain loops. The pool size
//! is capped by the `DRMG_THREADS` environment variable, and
//! `DRMG_THREADS=1` forces the sequential path even in parallel builds so
//! the two can be compared at runtime.

#[cfg(feature = "parallel")]
mod imp {
    use std::sync::OnceLock;

    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();

    fn pool() -> &'static Option<rayon::ThreadPool> {
        POOL.get_or_init(|| {
            let threads = std::env::var("DRMG_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok());
            match threads {
                Some(1) => None, // sequential
                Some(n) => Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .expect("failed to build thread pool"),
                ),
                None => Some(
                    rayon::ThreadPoolBuilder::new()
                        .build()
                        .expect("failed to build thread pool"),
                ),
            }
        })
    }

    pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        use rayon::prelude::*;
        match pool() {
            Some(p) => p.install(|| (0..n).into_par_iter().map(f).collect()),
            None => (0..n).map(f).collect(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_indexed<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
        (0..n).map(f).collect()
    }
}

pub use imp::map_indexed;

/// Always-sequential variant, kept for benchmark comparison.
pub fn map_indexed_seq<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}
