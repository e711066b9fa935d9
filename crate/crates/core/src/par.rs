//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_indexed`] or
//! [`map_chunks`]. Results are collected in index order and any floating
//! point reduction is done afterwards on the caller's thread, so output is
//! identical for every worker count. Randomness is drawn from
//! [`stream_rng`], which keys a ChaCha stream by `(seed, stream)` rather
//! than by thread.
//!
//! With the `parallel` feature disabled (or inside [`sequential`]) the same
//! functions run as plain loops.

use std::cell::Cell;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` with all crate-level parallel loops on the current thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

fn forced_sequential() -> bool {
    FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Run `f` on a pool of `workers` threads. Without the `parallel` feature
/// this is a plain call.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> crate::Result<R> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| crate::Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

/// `true` when loops dispatch to rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !forced_sequential()
}

/// Map `f` over `0..n`, results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !forced_sequential() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Split `0..n` into fixed chunks of `chunk` items and map `f(chunk_index, range)`.
///
/// Chunk boundaries depend only on `n` and `chunk`, never on the pool size.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_indexed(count, |c| {
        let start = c * chunk;
        f(c, start..(start + chunk).min(n))
    })
}

/// Deterministic RNG for one logical stream of work.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix a purpose tag into a seed so unrelated consumers of one seed get
/// unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
