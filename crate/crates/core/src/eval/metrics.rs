use crate::error::{LtcsError, Result};

/// NDCG over the full list with binary gains and a `log2(position + 1)`
/// discount (positions 1-based).
pub fn ndcg(ranking: &[usize], labels: &[u8]) -> Result<f64> {
    if ranking.len() != labels.len() {
        return Err(LtcsError::InvalidArgument(format!(
            "ranking has {} entries for {} labels",
            ranking.len(),
            labels.len()
        )));
    }
    let mut seen = vec![false; labels.len()];
    for &i in ranking {
        if i >= labels.len() || std::mem::replace(&mut seen[i], true) {
            return Err(LtcsError::InvalidArgument("ranking is not a permutation".into()));
        }
    }
    let positives = labels.iter().filter(|&&y| y > 0).count();
    if positives == 0 {
        return Err(LtcsError::InvalidArgument("ndcg is undefined without a positive label".into()));
    }
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .enumerate()
        .filter(|(_, &i)| labels[i] > 0)
        .map(|(p, &i)| labels[i] as f64 * discount(p))
        .sum();
    let mut gains: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    let ideal: f64 = gains.iter().enumerate().map(|(p, g)| g * discount(p)).sum();
    Ok(dcg / ideal)
}
