use crate::labels::LabelSpace;

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

const NEGATIONS: &[&str] = &["not", "non", "no", "isn", "never"];

/// Map a free-text answer onto one label of `space`.
///
/// Labels are matched as whole-word phrases, case-insensitively and ignoring
/// punctuation. Longer labels claim their words first, so "not hateful" is never also read
/// as "hateful". A label directly preceded by a negation is not counted. Exactly one
/// distinct label must remain.
pub fn parse_label(raw: &str, space: &LabelSpace) -> Option<String> {
    let tokens = words(raw);
    let mut labels: Vec<(&String, Vec<String>)> = space.labels.iter().map(|l| (l, words(l))).collect();
    labels.sort_by_key(|(_, w)| std::cmp::Reverse(w.len()));

    let mut claimed = vec![false; tokens.len()];
    let mut found: Vec<&String> = Vec::new();
    for (label, lw) in &labels {
        if lw.is_empty() || lw.len() > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - lw.len() {
            let span = start..start + lw.len();
            if claimed[span.clone()].iter().any(|&c| c) || tokens[span.clone()] != lw[..] {
                continue;
            }
            claimed[span].iter_mut().for_each(|c| *c = true);
            let negated = start > 0 && NEGATIONS.contains(&tokens[start - 1].as_str());
            if !negated && !found.contains(label) {
                found.push(label);
            }
        }
    }
    match found.as_slice() {
        [one] => Some((*one).clone()),
        _ => None,
    }
}
