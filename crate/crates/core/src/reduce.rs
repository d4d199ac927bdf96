//! Fixed-order summation.
//!
//! Every reduction in the loss kernels goes through [`pairwise_sum_by`]. The
//! tree shape depends only on the input length, so the result is the same
//! bit pattern whether the halves run on one thread or many.

const BLOCK: usize = 64;
const PARALLEL_MIN: usize = 1 << 15;

/// Pairwise (cascade) sum of `f(i)` for `i` in `0..n`.
pub fn pairwise_sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    sum_range(0, n, &f)
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i])
}

fn sum_range<F>(start: usize, end: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = end - start;
    if len <= BLOCK {
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        return acc;
    }
    let mid = start + len / 2;
    if len >= PARALLEL_MIN {
        let (a, b) = rayon::join(|| sum_range(start, mid, f), || sum_range(mid, end, f));
        a + b
    } else {
        sum_range(start, mid, f) + sum_range(mid, end, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sums_are_exact() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.5]), 6.5);
        let ones = vec![1.0; 10_000];
        assert_eq!(pairwise_sum(&ones), 10_000.0);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let values: Vec<f64> = (0..200_000).map(|i| ((i as f64) * 0.731).sin() * 1e-3).collect();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| pairwise_sum(&values));
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| pairwise_sum(&values));
        assert_eq!(serial.to_bits(), parallel.to_bits());
    }
}
