use std::collections::HashSet;

/// Contiguous `n`-grams of `seq`, in order.
pub fn ngrams<T>(seq: &[T], n: usize) -> impl Iterator<Item = &[T]> {
    assert!(n >= 1, "n-gram size must be at least 1");
    seq.windows(n)
}

/// `1 - distinct / total` over the n-gram multiset; 0 when `gen` has fewer
/// than `n` tokens.
pub fn repetition_rate<T: Eq + std::hash::Hash>(gen: &[T], n: usize) -> f64 {
    let grams: Vec<&[T]> = ngrams(gen, n).collect();
    if grams.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&[T]> = grams.iter().copied().collect();
    1.0 - distinct.len() as f64 / grams.len() as f64
}

/// Fraction of `gen`'s n-grams (with multiplicity) that never occur
/// contiguously in `article`.
pub fn diversity_rate<T: Eq + std::hash::Hash>(gen: &[T], article: &[T], n: usize) -> f64 {
    let grams: Vec<&[T]> = ngrams(gen, n).collect();
    if grams.is_empty() {
        return 0.0;
    }
    let source: HashSet<&[T]> = ngrams(article, n).collect();
    let novel = grams.iter().filter(|g| !source.contains(*g)).count();
    novel as f64 / grams.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn repetition_examples() {
        assert_eq!(repetition_rate(&tokenize("a b c"), 1), 0.0);
        assert_eq!(repetition_rate(&tokenize("euro euro"), 1), 0.5);
        assert_eq!(repetition_rate(&tokenize("a b"), 5), 0.0);
        assert_eq!(repetition_rate::<u8>(&[], 1), 0.0);
    }

    #[test]
    fn diversity_examples() {
        let article = tokenize("eu finance ministers meet in brussels");
        assert_eq!(
            diversity_rate(&tokenize("finance ministers meet"), &article, 1),
            0.0
        );
        assert_eq!(
            diversity_rate(&tokenize("finance ministers meet"), &article, 3),
            0.0
        );
        assert_eq!(
            diversity_rate(&tokenize("sino-german links"), &article, 1),
            1.0
        );
        assert_eq!(
            diversity_rate(&tokenize("a b x"), &tokenize("a b c"), 1),
            1.0 / 3.0
        );
        assert_eq!(diversity_rate(&tokenize("a b"), &tokenize("a b c"), 5), 0.0);
    }

    #[test]
    #[should_panic]
    fn zero_gram_rejected() {
        repetition_rate(&[1, 2], 0);
    }
}
