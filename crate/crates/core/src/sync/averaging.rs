//! Integer averaging operators and the local divergence condition.

use crate::error::{Error, Result};
use crate::intmodel::DataSummary;

/// Element-wise `floor(sum / count)` over equal-length vectors.
pub fn floored_mean(vectors: &[Vec<u32>]) -> Result<Vec<u32>> {
    let refs: Vec<&[u32]> = vectors.iter().map(Vec::as_slice).collect();
    floored_mean_of(&refs)
}

pub fn floored_mean_of(vectors: &[&[u32]]) -> Result<Vec<u32>> {
    let first = vectors.first().ok_or(Error::Empty("vector list"))?;
    let d = first.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    let count = vectors.len() as u64;
    Ok((0..d)
        .map(|j| {
            let sum: u64 = vectors.iter().map(|v| v[j] as u64).sum();
            (sum / count) as u32
        })
        .collect())
}

/// `floor((a + b) / 2)` using only and, xor and shift.
#[inline]
pub fn pair_average_bittrick(a: u64, b: u64) -> u64 {
    (a & b) + ((a ^ b) >> 1)
}

/// `true` when `||theta - r||^2 > delta`. The boundary itself is compliant.
pub fn local_condition(theta: &[u32], r: &[u32], delta: u64) -> bool {
    squared_distance(theta, r) > delta
}

pub fn squared_distance(a: &[u32], b: &[u32]) -> u64 {
    assert_eq!(a.len(), b.len(), "squared distance of vectors with different lengths");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum()
}

/// Floored average of all learners' parameters, to be broadcast to everyone.
pub fn periodic_sync(thetas: &[Vec<u32>]) -> Result<Vec<u32>> {
    floored_mean(thetas)
}

/// Sums counts and sample sizes. Dividing by the merged `n` gives the
/// `n_l / n` weighted average of the per-learner frequencies.
pub fn merge_summaries(summaries: &[DataSummary]) -> Result<DataSummary> {
    let first = summaries.first().ok_or(Error::Empty("summary list"))?;
    let mut merged = DataSummary::zeros(first.dim());
    for s in summaries {
        merged.merge(s)?;
    }
    Ok(merged)
}

/// Euclidean distance between the floored mean and the real mean.
pub fn rounding_error(vectors: &[Vec<u32>], floored: &[u32]) -> f64 {
    let count = vectors.len() as f64;
    floored
        .iter()
        .enumerate()
        .map(|(j, &f)| {
            let mean = vectors.iter().map(|v| v[j] as f64).sum::<f64>() / count;
            (mean - f as f64).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intmodel::tests::layout;
    use crate::rational::Rational;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    #[test]
    fn floored_mean_examples() {
        assert_eq!(floored_mean(&[vec![3, 1, 4], vec![3, 1, 4]]).unwrap(), vec![3, 1, 4]);
        assert_eq!(floored_mean(&[vec![2], vec![3]]).unwrap(), vec![2]);
        assert_eq!(floored_mean(&[vec![1, 7], vec![2, 0], vec![4, 5]]).unwrap(), vec![2, 4]);
        assert_eq!(floored_mean(&[]), Err(Error::Empty("vector list")));
        assert!(floored_mean(&[vec![1], vec![1, 2]]).is_err());
    }

    #[test]
    fn bittrick_examples() {
        assert_eq!(pair_average_bittrick(5, 3), 4);
        assert_eq!(pair_average_bittrick(9, 9), 9);
        assert_eq!(pair_average_bittrick(u64::MAX, u64::MAX - 1), u64::MAX - 1);
    }

    #[test]
    fn bittrick_matches_division_on_16_bit_grid() {
        for a in (0u64..1 << 16).step_by(97) {
            for b in (0u64..1 << 16).step_by(89) {
                assert_eq!(pair_average_bittrick(a, b), (a + b) / 2);
                assert_eq!(
                    pair_average_bittrick(a, b),
                    floored_mean(&[vec![a as u32], vec![b as u32]]).unwrap()[0] as u64
                );
            }
        }
    }

    #[test]
    fn local_condition_examples() {
        assert!(!local_condition(&[3, 4], &[3, 4], 0));
        assert!(local_condition(&[1, 2], &[0, 0], 4));
        assert!(!local_condition(&[1, 2], &[0, 0], 5));
        assert!(!local_condition(&[0, 0], &[1, 2], 5));
    }

    #[test]
    fn periodic_sync_examples() {
        assert_eq!(periodic_sync(&[vec![1], vec![2]]).unwrap(), vec![1]);
        assert_eq!(periodic_sync(&[vec![5, 6], vec![5, 6]]).unwrap(), vec![5, 6]);
    }

    #[test]
    fn merge_summaries_examples() {
        let l = layout(&[2, 2], &[(0, 1)]);
        let mut a = DataSummary::zeros(4);
        a.accumulate(&l, &[vec![0, 1], vec![1, 1], vec![1, 1]]).unwrap();
        let mut b = DataSummary::zeros(4);
        b.accumulate(&l, &[vec![0, 0]]).unwrap();

        assert_eq!(merge_summaries(std::slice::from_ref(&a)).unwrap(), a);

        let mut union = DataSummary::zeros(4);
        union
            .accumulate(&l, &[vec![0, 1], vec![1, 1], vec![1, 1], vec![0, 0]])
            .unwrap();
        let merged = merge_summaries(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(merged, union);

        // counts/n equals sum_l (n_l/n) (counts_l/n_l)
        for j in 0..4 {
            let lhs = Rational::new(merged.counts[j].clone(), merged.n.clone());
            let q = |x: &BigUint, y: &BigUint| Rational::new(x.clone(), y.clone());
            let wa = &q(&a.n, &merged.n) * &q(&a.counts[j], &a.n);
            let wb = &q(&b.n, &merged.n) * &q(&b.counts[j], &b.n);
            let rhs = &wa + &wb;
            assert_eq!(lhs, rhs);
        }
        assert_eq!(merged.n, BigUint::from(4u32));
    }

    proptest! {
        #[test]
        fn floored_mean_within_bounds_and_sqrt_d(
            vectors in (1usize..16, 1usize..10).prop_flat_map(|(d, m)| {
                proptest::collection::vec(proptest::collection::vec(0u32..1000, d), m)
            })
        ) {
            let mean = floored_mean(&vectors).unwrap();
            let d = mean.len();
            for j in 0..d {
                let lo = vectors.iter().map(|v| v[j]).min().unwrap();
                let hi = vectors.iter().map(|v| v[j]).max().unwrap();
                prop_assert!(lo <= mean[j] && mean[j] <= hi);
            }
            prop_assert!(rounding_error(&vectors, &mean) < (d as f64).sqrt());
        }
    }
}
