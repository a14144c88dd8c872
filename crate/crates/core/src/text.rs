//! Character-level string utilities: edit distance and its normalized form.
//!
//! Distances operate on Unicode scalar values, so offsets and lengths agree
//! with the character-offset convention used by spans and length filters.

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Levenshtein distance (unit-cost insert/delete/substitute) over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

/// Levenshtein distance over pre-split character slices.
pub fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // Two-row dynamic program; rows indexed by positions in `b`.
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length; `0.0` when both are empty.
/// Always in `[0, 1]`, and `0.0` iff the strings are equal.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    normalized_levenshtein_chars(&a, &b)
}

/// Normalized distance over pre-split character slices.
pub fn normalized_levenshtein_chars(a: &[char], b: &[char]) -> f64 {
    let max = a.len().max(b.len());
    if max == 0 {
        return 0.0;
    }
    levenshtein_chars(a, b) as f64 / max as f64
}

/// Largest absolute distance `d` such that `d / max_len <= threshold`,
/// computed without floating-point boundary surprises.
pub fn distance_budget(max_len: usize, threshold: f64) -> usize {
    if max_len == 0 || threshold <= 0.0 {
        return 0;
    }
    let mut k = (threshold * max_len as f64).floor() as usize;
    while k + 1 <= max_len && (k + 1) as f64 / max_len as f64 <= threshold {
        k += 1;
    }
    while k > 0 && k as f64 / max_len as f64 > threshold {
        k -= 1;
    }
    k.min(max_len)
}

/// Whether `normalized_levenshtein(a, b) <= threshold`, with a cheap length
/// pre-check and an early exit once every cell of a DP row exceeds the
/// distance budget. Equivalent to computing the full distance and comparing.
pub fn within_normalized_distance(a: &[char], b: &[char], threshold: f64) -> bool {
    let max = a.len().max(b.len());
    if max == 0 {
        return true;
    }
    let budget = distance_budget(max, threshold);
    // The distance is at least the length difference.
    if a.len().abs_diff(b.len()) > budget {
        return false;
    }
    if a.is_empty() || b.is_empty() {
        return a.len().max(b.len()) <= budget;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > budget {
            return false;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] <= budget
}
