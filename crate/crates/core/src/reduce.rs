//! Deterministic floating-point reductions.

/// Pairwise (tree) summation in the given order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Order-independent sum: terms are put in a canonical (total) order and
/// then summed pairwise, so any permutation of `values` gives the same bits.
pub fn canonical_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    pairwise_sum(&sorted)
}

/// Order-independent mean. Returns 0 for an empty slice.
pub fn canonical_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        canonical_sum(values) / values.len() as f64
    }
}

/// Elementwise sum of equally sized vectors, accumulated in slice order.
pub fn sum_vectors(vectors: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for v in vectors {
        debug_assert_eq!(v.len(), len);
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sum_ignores_order() {
        let a = [1e16, 1.0, -1e16, 3.5, 1e-3, 7.25];
        let mut b = a;
        b.reverse();
        b.swap(0, 3);
        assert_eq!(canonical_sum(&a).to_bits(), canonical_sum(&b).to_bits());
    }

    #[test]
    fn pairwise_small_cases() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[2.0]), 2.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }
}
