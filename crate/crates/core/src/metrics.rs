//! Top-N ranking metrics with binary relevance.

use crate::{Error, Result};

fn check_cutoff(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "N", reason: "cutoff must be positive".into() });
    }
    Ok(())
}

fn hits(recs: &[usize], relevant: &[usize], n: usize) -> usize {
    recs.iter().take(n).filter(|l| relevant.contains(l)).count()
}

/// Hits in the first `n` recommendations divided by `n`.
pub fn precision_at(recs: &[usize], relevant: &[usize], n: usize) -> Result<f64> {
    check_cutoff(n)?;
    Ok(hits(recs, relevant, n) as f64 / n as f64)
}

/// Hits in the first `n` recommendations divided by the number of relevant items.
pub fn recall_at(recs: &[usize], relevant: &[usize], n: usize) -> Result<f64> {
    check_cutoff(n)?;
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    Ok(hits(recs, relevant, n) as f64 / relevant.len() as f64)
}

/// DCG of the first `n` ranks over the ideal DCG of `min(n, |relevant|)` hits,
/// with gain 1 / log2(rank + 1).
pub fn ndcg_at(recs: &[usize], relevant: &[usize], n: usize) -> Result<f64> {
    check_cutoff(n)?;
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    let gain = |rank: usize| 1.0 / libm::log2(rank as f64 + 1.0);
    let dcg: f64 = recs
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, l)| relevant.contains(l))
        .map(|(i, _)| gain(i + 1))
        .sum();
    let idcg: f64 = (1..=n.min(relevant.len())).map(gain).sum();
    Ok(dcg / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hit_at_top() {
        let recs = [7, 1, 2, 3, 4, 5, 6, 8, 9, 10];
        assert_eq!(precision_at(&recs, &[7], 10).unwrap(), 0.1);
        assert_eq!(recall_at(&recs, &[7], 10).unwrap(), 1.0);
        assert_eq!(ndcg_at(&recs, &[7], 10).unwrap(), 1.0);
    }

    #[test]
    fn single_hit_at_rank_two() {
        let recs = [0, 7, 1, 2, 3, 4, 5, 6, 8, 9];
        let v = ndcg_at(&recs, &[7], 10).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn no_hits() {
        let recs = [0, 1, 2];
        assert_eq!(precision_at(&recs, &[9], 10).unwrap(), 0.0);
        assert_eq!(recall_at(&recs, &[9], 10).unwrap(), 0.0);
        assert_eq!(ndcg_at(&recs, &[9], 10).unwrap(), 0.0);
    }

    #[test]
    fn zero_cutoff_is_an_error() {
        assert!(precision_at(&[1], &[1], 0).is_err());
        assert!(recall_at(&[1], &[1], 0).is_err());
        assert!(ndcg_at(&[1], &[1], 0).is_err());
        assert!(recall_at(&[1], &[], 5).is_err());
    }

    #[test]
    fn perfect_list_scores_one_even_when_test_is_larger_than_n() {
        let recs = [1, 2, 3];
        assert!((ndcg_at(&recs, &[1, 2, 3, 4, 5], 3).unwrap() - 1.0).abs() < 1e-15);
        assert!(ndcg_at(&recs, &[1, 2, 4], 3).unwrap() < 1.0);
    }
}
