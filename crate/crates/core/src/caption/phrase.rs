use std::collections::BTreeMap;

const COUNT_WORDS: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];

pub fn count_word(n: usize) -> String {
    COUNT_WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

/// Appends `s` unless the label already ends in `s`.
pub fn pluralize(label: &str) -> String {
    if label.ends_with('s') {
        label.to_string()
    } else {
        format!("{label}s")
    }
}

/// "two ships and one bridge": per-class counts ordered by descending count,
/// then label. Counts below ten are spelled out.
pub fn summarize_objects<'a>(labels: impl IntoIterator<Item = &'a str>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        *counts.entry(label).or_default() += 1;
    }
    let mut ordered: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic; a stable sort keeps it within equal counts
    ordered.sort_by(|a, b| b.1.cmp(&a.1));

    let parts: Vec<String> = ordered
        .into_iter()
        .map(|(label, n)| {
            let noun = if n == 1 { label.to_string() } else { pluralize(label) };
            format!("{} {noun}", count_word(n))
        })
        .collect();
    match parts.as_slice() {
        [] => String::new(),
        [only] => only.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}
