//! Rule-based caption checks. The [`CaptionVerifier`] trait lets a caller
//! swap in a different verifier (for example a language-model based one).

use super::Caption;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(String),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

pub trait CaptionVerifier: Sync {
    fn verify(&self, text: &str) -> Verdict;
}

/// The default verifier, see [`verify_text`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleVerifier;

impl CaptionVerifier for RuleVerifier {
    fn verify(&self, text: &str) -> Verdict {
        verify_text(text)
    }
}

fn has_slot_marker(text: &str) -> bool {
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find(']') {
            let inner = &after[..close];
            if !inner.is_empty()
                && inner.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return true;
            }
        }
        rest = after;
    }
    false
}

fn balanced(text: &str) -> bool {
    let mut stack = Vec::new();
    for c in text.chars() {
        match c {
            '(' | '[' | '{' => stack.push(c),
            ')' | ']' | '}' => {
                let want = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                if stack.pop() != Some(want) {
                    return false;
                }
            }
            _ => {}
        }
    }
    stack.is_empty() && text.matches('"').count() % 2 == 0
}

/// Accepts text that is non-empty, starts with an uppercase letter, has no
/// unfilled `[slot]`, balanced brackets and quotes, and ends with a letter,
/// digit or period.
pub fn verify_text(text: &str) -> Verdict {
    let trimmed = text.trim();
    let Some(first) = trimmed.chars().next() else {
        return Verdict::Reject("empty caption".into());
    };
    if !first.is_uppercase() {
        return Verdict::Reject("does not start with an uppercase letter".into());
    }
    if has_slot_marker(trimmed) {
        return Verdict::Reject("unfilled slot marker".into());
    }
    if !balanced(trimmed) {
        return Verdict::Reject("unbalanced punctuation".into());
    }
    let last = trimmed.chars().next_back().unwrap_or(' ');
    if !(last.is_alphanumeric() || last == '.') {
        return Verdict::Reject(format!("ends with `{last}`"));
    }
    Verdict::Accept
}

pub fn verify_caption(caption: &Caption) -> Verdict {
    verify_text(&caption.text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(verify_text("A SAR image of the tank"), Verdict::Accept);
        assert!(!verify_text("A SAR image of the [class]").is_accept());
        assert!(!verify_text("").is_accept());
        assert!(!verify_text("   ").is_accept());
    }

    #[test]
    fn other_rules() {
        assert!(!verify_text("a lowercase start.").is_accept());
        assert!(!verify_text("Unbalanced (paren.").is_accept());
        assert!(!verify_text("Trailing comma,").is_accept());
        assert!(verify_text("Ships (two) near the T-72.").is_accept());
        assert!(verify_text("Ends with a digit 7").is_accept());
    }
}
