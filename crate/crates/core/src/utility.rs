//! Ranking utility metrics over binary relevance.

use crate::error::{Error, Result};
use crate::fairness::discount;
use crate::ranking::Ranking;
use crate::scalar::Scalar;

/// Relevance flags aligned to ranking positions, plus the number of true
/// edges in the whole candidate pool (ranked or not).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceVector {
    flags: Vec<bool>,
    total_positives: usize,
}

impl RelevanceVector {
    pub fn new(flags: Vec<bool>, total_positives: usize) -> Result<Self> {
        let flagged = flags.iter().filter(|&&f| f).count();
        if flagged > total_positives {
            return Err(Error::InconsistentRelevance {
                flagged,
                total: total_positives,
            });
        }
        Ok(RelevanceVector {
            flags,
            total_positives,
        })
    }

    pub fn from_ranking<F: Scalar>(ranking: &Ranking<F>, total_positives: usize) -> Result<Self> {
        Self::new(ranking.flags(), total_positives)
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn total_positives(&self) -> usize {
        self.total_positives
    }

    fn hits(&self, k: usize) -> usize {
        self.flags[..k].iter().filter(|&&f| f).count()
    }
}

pub fn precision_at_k<F: Scalar>(rel: &RelevanceVector, k: usize) -> Result<F> {
    if k == 0 || k > rel.len() {
        return Err(Error::KOutOfRange { k, len: rel.len() });
    }
    Ok(F::from_count(rel.hits(k)) / F::from_count(k))
}

/// Share of the pool's positives found in the top `k` (recall at `k`).
pub fn hits_at_k<F: Scalar>(rel: &RelevanceVector, k: usize) -> Result<F> {
    if rel.total_positives == 0 {
        return Err(Error::NoPositives);
    }
    if k > rel.len() {
        return Err(Error::KOutOfRange { k, len: rel.len() });
    }
    let found = F::from_count(rel.hits(k)) / F::from_count(rel.total_positives);
    Ok(found.min(F::one()))
}

/// Binary-gain NDCG; the ideal ordering puts `min(k, total_positives)`
/// relevant items first.
pub fn ndcg_at_k<F: Scalar>(rel: &RelevanceVector, k: usize) -> Result<F> {
    if rel.total_positives == 0 {
        return Err(Error::NoPositives);
    }
    if k == 0 || k > rel.len() {
        return Err(Error::KOutOfRange { k, len: rel.len() });
    }
    let dcg: F = rel.flags[..k]
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| discount::<F>(i + 1))
        .sum();
    let idcg: F = (1..=k.min(rel.total_positives)).map(discount::<F>).sum();
    Ok(dcg / idcg)
}

/// Sum of precision at each relevant position, over the pool's positives.
pub fn average_precision<F: Scalar>(rel: &RelevanceVector) -> Result<F> {
    if rel.total_positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut hits = 0usize;
    let mut total = F::zero();
    for (i, &f) in rel.flags.iter().enumerate() {
        if f {
            hits += 1;
            total = total + F::from_count(hits) / F::from_count(i + 1);
        }
    }
    Ok(total / F::from_count(rel.total_positives))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rv(bits: &[u8], total: usize) -> RelevanceVector {
        RelevanceVector::new(bits.iter().map(|&b| b == 1).collect(), total).unwrap()
    }

    #[test]
    fn precision_cases() {
        assert_eq!(precision_at_k::<f64>(&rv(&[1, 1, 1], 3), 3).unwrap(), 1.0);
        assert_eq!(
            precision_at_k::<f64>(&rv(&[1, 0, 1, 0], 2), 4).unwrap(),
            0.5
        );
        assert_eq!(precision_at_k::<f64>(&rv(&[0, 0], 4), 2).unwrap(), 0.0);
        assert!(matches!(
            precision_at_k::<f64>(&rv(&[0, 0], 4), 3),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(matches!(
            precision_at_k::<f64>(&rv(&[0, 0], 4), 0),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn hits_cases() {
        assert_eq!(hits_at_k::<f64>(&rv(&[1, 1, 0], 2), 3).unwrap(), 1.0);
        assert_eq!(hits_at_k::<f64>(&rv(&[1, 0, 1, 0], 4), 4).unwrap(), 0.5);
        assert_eq!(hits_at_k::<f64>(&rv(&[1, 0], 4), 0).unwrap(), 0.0);
        assert!(matches!(
            hits_at_k::<f64>(&rv(&[0], 0), 1),
            Err(Error::NoPositives)
        ));
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg_at_k::<f64>(&rv(&[1, 1, 0], 2), 3).unwrap(), 1.0);
        let v = ndcg_at_k::<f64>(&rv(&[1, 0, 1], 2), 3).unwrap();
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert_relative_eq!(v, expected, epsilon = 1e-12);
        assert_relative_eq!(v, 0.9198, epsilon = 1e-4);
        assert_eq!(ndcg_at_k::<f64>(&rv(&[0, 0, 1], 1), 2).unwrap(), 0.0);
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision::<f64>(&rv(&[1, 0], 1)).unwrap(), 1.0);
        let v = average_precision::<f64>(&rv(&[1, 0, 1], 2)).unwrap();
        assert_relative_eq!(v, (1.0 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(v, 0.8333, epsilon = 1e-4);
        for r in 1..8usize {
            let mut bits = vec![0u8; 8];
            bits[r - 1] = 1;
            assert_relative_eq!(
                average_precision::<f64>(&rv(&bits, 1)).unwrap(),
                1.0 / r as f64,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn inconsistent_relevance_rejected() {
        assert!(RelevanceVector::new(vec![true, true], 1).is_err());
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(bits in prop::collection::vec(any::<bool>(), 1..50), extra in 0usize..10) {
            let flagged = bits.iter().filter(|&&b| b).count();
            let total = flagged + extra;
            prop_assume!(total > 0);
            let rel = RelevanceVector::new(bits.clone(), total).unwrap();
            let mut prev = 0.0f64;
            for k in 1..=bits.len() {
                let p: f64 = precision_at_k(&rel, k).unwrap();
                let h: f64 = hits_at_k(&rel, k).unwrap();
                let n: f64 = ndcg_at_k(&rel, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!((0.0..=1.0).contains(&h));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
                prop_assert!(h >= prev);
                prev = h;
                let count = p * k as f64;
                prop_assert!((count - count.round()).abs() < 1e-9);
                let ideal = bits[..k].iter().skip_while(|&&b| b).all(|&b| !b)
                    && bits[..k].iter().filter(|&&b| b).count() == k.min(total);
                prop_assert_eq!((n - 1.0).abs() < 1e-12, ideal);
            }
            let ap: f64 = average_precision(&rel).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }
}
