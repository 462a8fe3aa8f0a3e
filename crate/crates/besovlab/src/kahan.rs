//! Compensated summation and the deterministic chunked reduction used by every
//! parallel sweep. Results are bitwise independent of the worker-thread count:
//! the index range is cut into fixed-size chunks, each chunk is summed serially,
//! and the per-chunk partials are combined in chunk order.

use rayon::prelude::*;

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Serial compensated sum of an iterator.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Chunk size for deterministic parallel reductions. Fixed, never derived from
/// the thread count, so the chunk decomposition (and hence the float result)
/// is identical for every `--threads` setting.
pub(crate) const REDUCTION_CHUNK: usize = 4096;

/// Deterministic parallel sum over `0..n`: `per_item(i)` values are summed
/// serially (Kahan) inside fixed chunks; chunk partials combine in chunk order.
pub(crate) fn par_chunk_sum<F>(n: usize, per_item: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks: Vec<f64> = (0..n.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(n);
            kahan_sum((lo..hi).map(&per_item))
        })
        .collect();
    kahan_sum(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms_lost_by_naive_sum() {
        // 1.0 followed by 1e16 copies of 1e-16: naive sum stays at 1.0.
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        let err = (acc.value() - (1.0 + 1e-12)).abs();
        assert!(err < 1e-15, "compensated sum should keep the tail, err {err}");
    }

    #[test]
    fn par_chunk_sum_matches_serial_kahan_bitwise() {
        let n = 3 * REDUCTION_CHUNK + 17;
        let f = |i: usize| ((i as f64) * 1e-3).sin() / (1.0 + i as f64);
        let serial = {
            let mut parts = Vec::new();
            let mut lo = 0;
            while lo < n {
                let hi = (lo + REDUCTION_CHUNK).min(n);
                parts.push(kahan_sum((lo..hi).map(f)));
                lo = hi;
            }
            kahan_sum(parts)
        };
        let parallel = par_chunk_sum(n, f);
        assert_eq!(serial.to_bits(), parallel.to_bits(), "chunked reduction must be order-fixed");
    }
}
