//! Correction-block mechanics for prompt evolution.
//!
//! A rejected clip's diagnosis is folded into the action prompt as a single
//! delimited correction block appended to the base instruction. Folding is
//! idempotent for identical suggestions and keeps only the latest diagnosis:
//! re-folding strips any existing block before appending the new one.

pub const CORRECTION_OPEN: &str = "[correction]";
pub const CORRECTION_CLOSE: &str = "[/correction]";

/// The prompt without its correction block, trailing whitespace trimmed.
pub fn base_of(prompt: &str) -> &str {
    match prompt.find(CORRECTION_OPEN) {
        Some(idx) => prompt[..idx].trim_end(),
        None => prompt.trim_end(),
    }
}

/// The content of the correction block, if present.
pub fn correction_of(prompt: &str) -> Option<&str> {
    let start = prompt.find(CORRECTION_OPEN)? + CORRECTION_OPEN.len();
    let rest = &prompt[start..];
    let end = rest.find(CORRECTION_CLOSE).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Fold a suggestion (and optional reason) onto the base instruction,
/// replacing any previous correction block.
pub fn fold_correction(prompt: &str, suggestion: &str, reason: &str) -> String {
    let base = base_of(prompt);
    let annotation = if reason.is_empty() {
        suggestion.to_string()
    } else {
        format!("{suggestion} (reason: {reason})")
    };
    format!("{base}\n{CORRECTION_OPEN} {annotation} {CORRECTION_CLOSE}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_keeps_base_and_latest_suggestion() {
        let p1 = fold_correction("circle the square", "circle the red square, not the yellow", "");
        assert!(p1.starts_with("circle the square"));
        assert_eq!(correction_of(&p1), Some("circle the red square, not the yellow"));

        let p2 = fold_correction(&p1, "second suggestion", "drifted");
        assert_eq!(base_of(&p2), "circle the square");
        assert_eq!(correction_of(&p2), Some("second suggestion (reason: drifted)"));
        assert!(!p2.contains("red square"), "first suggestion must be replaced");
    }

    #[test]
    fn fold_is_idempotent_for_identical_suggestions() {
        let once = fold_correction("move right 3", "keep heading right", "veered up");
        let twice = fold_correction(&once, "keep heading right", "veered up");
        assert_eq!(once, twice);
    }

    #[test]
    fn base_of_plain_prompt_is_identity() {
        assert_eq!(base_of("just do it"), "just do it");
        assert_eq!(correction_of("just do it"), None);
    }
}
