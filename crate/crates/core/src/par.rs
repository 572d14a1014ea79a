//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool.
//! Setting `PFISTA_NO_PARALLEL=1`, calling [`force_serial`], or building
//! without the feature runs everything on the calling thread. Every helper
//! here only parallelises independent items; reductions are left to callers,
//! who sum in a fixed order, so results are bit-identical either way.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static FORCE_SERIAL: AtomicBool = AtomicBool::new(false);

fn env_serial() -> bool {
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| {
        std::env::var("PFISTA_NO_PARALLEL")
            .map(|v| v == "1" || v.eq_ignore_ascii_case("true"))
            .unwrap_or(false)
    })
}

/// Overrides the runtime choice between parallel and serial execution.
pub fn force_serial(serial: bool) {
    FORCE_SERIAL.store(serial, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SERIAL.load(Ordering::SeqCst) && !env_serial()
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && items.len() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Applies `f` to each item of a mutable slice.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && items.len() > 1 {
            items.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
            return;
        }
    }
    items.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

/// Applies `f` to consecutive chunks of `chunk` elements.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && data.len() > chunk {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Runs `f` inside a pool limited to `jobs` worker threads.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && jobs > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                return pool.install(f);
            }
        }
    }
    let _ = jobs;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn chunks_cover_everything() {
        let mut data = vec![0usize; 37];
        for_each_chunk_mut(&mut data, 5, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(data[0], 0);
        assert_eq!(data[36], 7);
    }
}

/// Worker threads in the current pool (1 when serial).
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            return rayon::current_num_threads();
        }
    }
    1
}
