//! Levenshtein edit distance over Unicode scalar values.

/// Edit distance with unit-cost insertion, deletion and substitution.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (a, b) = trim_common(&a, &b);
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // keep the row over the shorter string
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if lc == sc { diag } else { 1 + diag.min(above).min(row[j]) };
            diag = above;
        }
    }
    row[short.len()]
}

/// `Some(d)` if the distance `d` is at most `max`, otherwise `None`.
///
/// Cheaper than [`levenshtein`] for small bounds: rejects on length
/// difference and stops once a whole row exceeds the bound.
pub fn levenshtein_within(a: &str, b: &str, max: usize) -> Option<usize> {
    if a == b {
        return Some(0);
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len().abs_diff(b.len()) > max {
        return None;
    }
    let (a, b) = trim_common(&a, &b);
    if a.is_empty() || b.is_empty() {
        let d = a.len().max(b.len());
        return (d <= max).then_some(d);
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ac) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        let mut row_min = row[0];
        for (j, bc) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ac == bc { diag } else { 1 + diag.min(above).min(row[j]) };
            diag = above;
            row_min = row_min.min(row[j + 1]);
        }
        if row_min > max {
            return None;
        }
    }
    let d = row[b.len()];
    (d <= max).then_some(d)
}

fn trim_common<'a>(a: &'a [char], b: &'a [char]) -> (&'a [char], &'a [char]) {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    (&a[..a.len() - suffix], &b[..b.len() - suffix])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        assert_eq!(levenshtein("player", "player"), 0);
        assert_eq!(levenshtein("player", "playe"), 1);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("microsoft", "microsof"), 1);
        assert_eq!(levenshtein("flash_playe_for_linux", "flash_player_for_linux"), 1);
        assert_eq!(levenshtein("ünïcode", "unicode"), 2);
    }

    #[test]
    fn bounded_agrees_with_unbounded() {
        let words = ["", "a", "player", "playe", "joomla", "jserver", "server", "mysql", "mysq1", "seamonkey"];
        for a in words {
            for b in words {
                let d = levenshtein(a, b);
                for max in 0..8 {
                    assert_eq!(levenshtein_within(a, b, max), (d <= max).then_some(d), "{a} {b} {max}");
                }
            }
        }
    }
}
