//! Text normalization shared by every metric: the punctuation set, the
//! whitespace convention, and the WMT-style tokenizer used by the
//! translation metric.

use std::sync::OnceLock;

use regex::Regex;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// The single place declaring what counts as punctuation: every character
/// in the Unicode punctuation categories, plus the ASCII apostrophe (which
/// already is one, listed here for emphasis since contractions like "it's"
/// lose it).
pub fn is_punctuation(c: char) -> bool {
    c == '\'' || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes punctuation characters outright (so "it's" becomes "its"), then
/// collapses whitespace. Applied to hypotheses and references alike before
/// scoring.
pub fn strip_punctuation(text: &str) -> String {
    let cleaned: String = text.chars().filter(|&c| !is_punctuation(c)).collect();
    collapse_whitespace(&cleaned)
}

/// Whitespace word split after normalization.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn rule(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

/// WMT mteval-style tokenization ("13a"): splits out ASCII symbol
/// characters, splits period and comma except between digits, and splits a
/// dash after a digit. Apostrophes stay attached.
pub fn tokenize_13a(text: &str) -> Vec<String> {
    static SYMBOLS: OnceLock<Regex> = OnceLock::new();
    static DOT_BEFORE: OnceLock<Regex> = OnceLock::new();
    static DOT_AFTER: OnceLock<Regex> = OnceLock::new();
    static DIGIT_DASH: OnceLock<Regex> = OnceLock::new();
    let t = text.replace(['\n', '\t'], " ");
    let t = format!(" {t} ");
    // ASCII punctuation and symbols except apostrophe, period, comma, dash.
    let t = rule(&SYMBOLS, "([\\x20-\\x26\\x28-\\x2B\\x2F\\x3A-\\x40\\x5B-\\x60\\x7B-\\x7E])")
        .replace_all(&t, " $1 ");
    let t = rule(&DOT_BEFORE, "([^0-9])([.,])").replace_all(&t, "$1 $2 ");
    let t = rule(&DOT_AFTER, "([.,])([^0-9])").replace_all(&t, " $1 $2");
    let t = rule(&DIGIT_DASH, "([0-9])(-)").replace_all(&t, "$1 $2 ");
    t.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_is_dropped_and_whitespace_collapsed() {
        assert_eq!(strip_punctuation("un show, aqui!"), "un show aqui");
        assert_eq!(strip_punctuation("  plain   text "), "plain text");
        assert_eq!(strip_punctuation("¿donde esta — el «parque»?"), "donde esta el parque");
    }

    #[test]
    fn apostrophe_is_removed_inside_words() {
        // Frozen golden for the declared punctuation set.
        assert_eq!(strip_punctuation("it's"), "its");
        assert_eq!(strip_punctuation("don't stop"), "dont stop");
    }

    #[test]
    fn unpunctuated_text_is_unchanged() {
        assert_eq!(strip_punctuation("ya know fall break"), "ya know fall break");
    }

    #[test]
    fn tokenizer_splits_symbols_but_keeps_digit_groups() {
        assert_eq!(
            tokenize_13a("wait, really?!"),
            vec!["wait", ",", "really", "?", "!"]
        );
        assert_eq!(tokenize_13a("3.14 times"), vec!["3.14", "times"]);
        assert_eq!(tokenize_13a("end."), vec!["end", "."]);
        assert_eq!(tokenize_13a("4-fold"), vec!["4", "-", "fold"]);
        assert_eq!(tokenize_13a("well-known"), vec!["well-known"]);
        assert_eq!(tokenize_13a("it's"), vec!["it's"]);
    }
}
