use super::ScoreTriple;

/// Longest common subsequence length, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L with β = 1. Precision is over the candidate, recall over the
/// reference; an empty side contributes 0.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> ScoreTriple {
    let lcs = lcs_length(candidate, reference) as f64;
    let ratio = |n: usize| if n == 0 { 0.0 } else { lcs / n as f64 };
    ScoreTriple::new(ratio(candidate.len()), ratio(reference.len()))
}
