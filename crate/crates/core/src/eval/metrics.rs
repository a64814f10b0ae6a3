//! Ranking metrics.

use std::collections::BTreeSet;

use super::EvalError;

/// Averaged normalized rank as a percentage: `100 * mean(rank / N)`.
/// Smaller is better; the floor for N-item rankings is `100 / N`.
pub fn anr(per_query_rank: &[usize], database_size: usize) -> Result<f64, EvalError> {
    if per_query_rank.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = database_size;
    let mut sum = 0.0f64;
    for &rank in per_query_rank {
        if rank < 1 || rank > n {
            return Err(EvalError::RankOutOfBounds { rank, n });
        }
        sum += rank as f64 / n as f64;
    }
    Ok(100.0 * sum / per_query_rank.len() as f64)
}

/// 1-based position of the best ground-truth image in a ranked id list.
///
/// Every relevant id must appear in the ranking; with several relevant ids
/// the minimum position wins.
pub fn rank_of_ground_truth<'a, I>(ranked_ids: I, relevant: &BTreeSet<String>) -> Result<usize, EvalError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut found: Option<usize> = None;
    let mut seen = 0usize;
    for (pos, id) in ranked_ids.into_iter().enumerate() {
        if relevant.contains(id) {
            seen += 1;
            if found.is_none() {
                found = Some(pos + 1);
            }
            if seen == relevant.len() {
                break;
            }
        }
    }
    if seen != relevant.len() {
        let missing = relevant
            .iter()
            .next()
            .cloned()
            .unwrap_or_else(|| "<empty>".into());
        return Err(EvalError::RelevantNotInDatabase(missing));
    }
    found.ok_or(EvalError::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn anr_examples() {
        assert_eq!(anr(&[5], 100).unwrap(), 5.0);
        assert_eq!(anr(&[1, 3], 10).unwrap(), 20.0);
        // All rank 1: the best achievable value is 100/N.
        assert!((anr(&[1; 7], 50).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn anr_bounds_and_errors() {
        assert!(matches!(anr(&[], 10), Err(EvalError::EmptyInput)));
        assert!(matches!(
            anr(&[0], 10),
            Err(EvalError::RankOutOfBounds { rank: 0, n: 10 })
        ));
        assert!(matches!(
            anr(&[11], 10),
            Err(EvalError::RankOutOfBounds { rank: 11, n: 10 })
        ));
        assert_eq!(anr(&[10; 4], 10).unwrap(), 100.0);
    }

    #[test]
    fn ground_truth_rank_lookup() {
        let ranked = ["a", "b", "c", "d", "e"];
        assert_eq!(
            rank_of_ground_truth(ranked.iter().copied(), &set(&["d"])).unwrap(),
            4
        );
        // Two relevant ids at positions 2 and 4: minimum wins.
        assert_eq!(
            rank_of_ground_truth(ranked.iter().copied(), &set(&["d", "b"])).unwrap(),
            2
        );
        assert!(matches!(
            rank_of_ground_truth(ranked.iter().copied(), &set(&["zz"])),
            Err(EvalError::RelevantNotInDatabase(_))
        ));
    }
}
