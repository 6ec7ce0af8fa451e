//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the maps below run on the rayon pool;
//! without it they run on the calling thread. Reductions always happen on
//! the calling thread in index order over fixed-size chunks, so results are
//! bit-identical between the two builds and across thread counts.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for per-example accumulation.
pub const CHUNK: usize = 16;

/// `f(0), f(1), ..., f(n-1)`, in order.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Splits `0..n` into consecutive chunks of `chunk` indices, accumulates each
/// chunk into its own `(scalar, vector)` pair via `f`, and sums the chunk
/// results in chunk order.
pub fn sum_chunks<F>(n: usize, chunk: usize, dim: usize, f: F) -> (f64, Vec<f64>)
where
    F: Fn(Range<usize>, &mut [f64]) -> f64 + Sync + Send,
{
    let chunk = chunk.max(1);
    let parts = map_indices(n.div_ceil(chunk), |c| {
        let mut acc = vec![0.0; dim];
        let s = f(c * chunk..((c + 1) * chunk).min(n), &mut acc);
        (s, acc)
    });
    let mut total = 0.0;
    let mut vec = vec![0.0; dim];
    for (s, acc) in parts {
        total += s;
        for (v, a) in vec.iter_mut().zip(&acc) {
            *v += a;
        }
    }
    (total, vec)
}

/// Runs `f` with data-parallel helpers restricted to one thread.
pub fn single_threaded<R, F>(f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}
