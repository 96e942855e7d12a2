//! Data-parallel kernels with a sequential fallback.
//!
//! With the `parallel` feature (on by default) loops run on the rayon pool.
//! Reductions always split the index range into fixed-size chunks and add
//! the chunk partials in chunk order, so the parallel and sequential builds
//! produce bit-identical sums independent of the thread count.

/// Chunk length used by every reduction.
pub const CHUNK: usize = 1024;

/// Fills `out[i] = f(i)`.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, v) in chunk.iter_mut().enumerate() {
                *v = f(base + k);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, v) in out.iter_mut().enumerate() {
            *v = f(i);
        }
    }
}

/// Deterministic `sum_{i < n} f(i)`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(partial).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..chunks).map(partial).collect();
    partials.iter().sum()
}

/// Deterministic `max_{i < n} f(i)`, or `0.0` for an empty range.
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).reduce(|| 0.0, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(0.0, f64::max)
    }
}

/// Order-preserving map over a slice of independent jobs.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Deterministic `min_{i < n} f(i)`, or `+inf` for an empty range.
pub fn min<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    -max_signed(n, |i| -f(i))
}

/// Like [`max`] but starting from `-inf`, so negative maxima survive.
pub fn max_signed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(f)
            .reduce(|| f64::NEG_INFINITY, nan_max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(f64::NEG_INFINITY, nan_max)
    }
}

// NaN wins so that a bad sample cannot hide behind a good one.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_sequential_chunking() {
        let n = 10 * CHUNK + 17;
        let f = |i: usize| ((i * 7919) % 1000) as f64 * 1e-3 + 1e-9 * i as f64;
        let mut expect = 0.0;
        for c in 0..n.div_ceil(CHUNK) {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            expect += (lo..hi).map(f).sum::<f64>();
        }
        assert_eq!(sum(n, f).to_bits(), expect.to_bits());
    }

    #[test]
    fn extrema() {
        assert_eq!(max(5, |i| i as f64), 4.0);
        assert_eq!(min(5, |i| 3.0 - i as f64), -1.0);
        assert_eq!(max_signed(3, |_| -2.0), -2.0);
        assert!(min(3, |i| if i == 1 { f64::NAN } else { 1.0 }).is_nan());
    }
}
