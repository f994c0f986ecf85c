//! Text normalization and string-similarity primitives shared by the
//! grounder and the fusion step.
//!
//! All comparisons in this crate go through [`normalize`] first so that
//! `Cost_of-Goods  Sold` and `cost of goods sold` are the same string. The
//! similarity functions are deliberately simple and deterministic: token-set
//! Jaccard, character-bigram Dice, normalized edit similarity, and a
//! `composite` combination used as the default column-matching score.

use std::collections::BTreeSet;

/// Lowercase, map `_`, `-` and `.` to spaces, collapse runs of whitespace,
/// trim. The result is the canonical comparison form of a phrase.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for ch in s.chars() {
        let ch = match ch {
            '_' | '-' | '.' => ' ',
            c => c,
        };
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        for lc in ch.to_lowercase() {
            out.push(lc);
        }
    }
    out
}

/// Normalized whitespace-separated tokens of a phrase.
pub fn tokens(s: &str) -> Vec<String> {
    normalize(s)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Distinct normalized tokens of a phrase.
pub fn token_set(s: &str) -> BTreeSet<String> {
    tokens(s).into_iter().collect()
}

/// Jaccard coefficient of two token sets; 0.0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Distinct character bigrams of the normalized phrase with spaces removed.
/// Phrases shorter than two characters have no bigrams.
pub fn char_bigrams(s: &str) -> BTreeSet<String> {
    let compact: Vec<char> = normalize(s).chars().filter(|c| *c != ' ').collect();
    compact.windows(2).map(|w| w.iter().collect()).collect()
}

/// Dice coefficient `2|A∩B| / (|A|+|B|)` over two bigram sets; 0.0 when
/// either set is empty (single characters carry no bigram evidence).
pub fn dice(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    2.0 * inter as f64 / (a.len() + b.len()) as f64
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit similarity `1 - lev(a, b) / max(|a|, |b|)`; 1.0 for two
/// empty strings. Operates on the strings as given — normalize first.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max_len as f64
}

/// Default matching score between two phrases: the maximum of an exact
/// normalized match (1.0), token-set Jaccard weighted 0.6, and
/// character-bigram Dice weighted 0.4, clamped to `[0, 1]`.
pub fn composite_similarity(a: &str, b: &str) -> f64 {
    let na = normalize(a);
    let nb = normalize(b);
    let exact: f64 = if !na.is_empty() && na == nb { 1.0 } else { 0.0 };
    let jac = 0.6 * jaccard(&token_set(a), &token_set(b));
    let dic = 0.4 * dice(&char_bigrams(a), &char_bigrams(b));
    exact.max(jac).max(dic).clamp(0.0, 1.0)
}

/// Fuzzy n-gram score between a concept phrase and a column name: enumerate
/// contiguous token n-grams of the concept (n ≤ 5, plus the whole phrase)
/// and take the best normalized edit similarity against the column name.
pub fn fuzzy_ngram_similarity(concept: &str, column: &str) -> f64 {
    let col = normalize(column);
    let toks = tokens(concept);
    if toks.is_empty() {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for start in 0..toks.len() {
        for len in 1..=5usize.min(toks.len() - start) {
            let gram = toks[start..start + len].join(" ");
            best = best.max(edit_similarity(&gram, &col));
        }
    }
    // The whole phrase is always a candidate, even past five tokens, so an
    // exact concept-to-column match can never lose to a shorter fragment.
    best.max(edit_similarity(&toks.join(" "), &col))
}
