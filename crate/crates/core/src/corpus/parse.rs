//! Parsers that turn annotated transcription formats into tagged transcripts.
//!
//! Two source conventions are supported:
//!
//! * inline spans: `un <foreign lang="English"> show </foreign>, a mi ...`
//! * word-suffix codes: `hay una [/] una que dice (.) it's@s:eng five@s:eng`
//!
//! Both produce the same [`TaggedTranscript`] representation. Everything the
//! parsers do not recognise is an error, not a silent skip: stray markup,
//! unknown language names and unknown word codes all fail loudly. Punctuation
//! is kept attached to the preceding word (metrics strip it later), so the
//! clean text of a parse reproduces the transcript as a reader would see it.

use super::{CorpusError, LanguagePair, LanguageTag, TaggedToken, TaggedTranscript};

/// Matches an ASCII literal at a char position.
fn matches_at(chars: &[char], at: usize, literal: &str) -> bool {
    let lit: Vec<char> = literal.chars().collect();
    chars.len() >= at + lit.len() && chars[at..at + lit.len()] == lit[..]
}

/// Merges tokens that are nothing but punctuation into the word before them,
/// keeping that word's language tag. A leading punctuation token has nothing
/// to attach to and stays on its own.
fn attach_punctuation(tokens: Vec<TaggedToken>) -> Vec<TaggedToken> {
    let mut out: Vec<TaggedToken> = Vec::with_capacity(tokens.len());
    for t in tokens {
        let pure_punct = !t.surface.is_empty() && t.surface.chars().all(|c| c.is_ascii_punctuation());
        if pure_punct {
            if let Some(prev) = out.last_mut() {
                prev.surface.push_str(&t.surface);
                continue;
            }
        }
        out.push(t);
    }
    out
}

/// Parses a transcript annotated with inline foreign spans:
/// `<foreign lang="English"> ... </foreign>` (the closing tag is also
/// accepted in its `<\foreign>` spelling, which appears in some renderings).
/// Text outside spans is tagged `matrix_default`; text inside is tagged with
/// the language named by the `lang` attribute, resolved against `pair`.
///
/// Errors carry character offsets: unclosed and nested spans, stray `<`/`>`,
/// malformed attributes, and language names not in the pair are all rejected.
pub fn parse_fisher_annotation(
    raw: &str,
    matrix_default: LanguageTag,
    pair: &LanguagePair,
) -> Result<TaggedTranscript, CorpusError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut i = 0usize;
    let mut segments: Vec<(String, LanguageTag)> = Vec::new();
    let mut current = String::new();
    // (offset of the '<' that opened the span, language of the span)
    let mut open: Option<(usize, LanguageTag)> = None;

    while i < chars.len() {
        let c = chars[i];
        if c == '<' {
            if matches_at(&chars, i, "</foreign>") || matches_at(&chars, i, "<\\foreign>") {
                match open.take() {
                    Some((_, lang)) => {
                        segments.push((std::mem::take(&mut current), lang));
                        i += "</foreign>".len();
                    }
                    None => {
                        return Err(CorpusError::Markup {
                            offset: i,
                            message: "closing tag without a matching open tag".to_string(),
                        })
                    }
                }
            } else if matches_at(&chars, i, "<foreign") {
                if let Some((offset, _)) = open {
                    // Report the inner tag, not the outer one: that is where
                    // the nesting became illegal.
                    let _ = offset;
                    return Err(CorpusError::NestedTag { offset: i });
                }
                let tag_start = i;
                let mut j = i + "<foreign".len();
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if !matches_at(&chars, j, "lang=\"") {
                    return Err(CorpusError::Markup {
                        offset: tag_start,
                        message: "expected lang=\"...\" attribute".to_string(),
                    });
                }
                j += "lang=\"".len();
                let name_start = j;
                while j < chars.len() && chars[j] != '"' && chars[j] != '>' {
                    j += 1;
                }
                if j >= chars.len() || chars[j] != '"' {
                    return Err(CorpusError::Markup {
                        offset: tag_start,
                        message: "unterminated lang attribute".to_string(),
                    });
                }
                let name: String = chars[name_start..j].iter().collect();
                j += 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if j >= chars.len() || chars[j] != '>' {
                    return Err(CorpusError::Markup {
                        offset: tag_start,
                        message: "unterminated foreign tag".to_string(),
                    });
                }
                let lang = pair
                    .tag_for_name(&name)
                    .ok_or_else(|| CorpusError::UnknownLanguage(name.clone()))?;
                segments.push((std::mem::take(&mut current), matrix_default));
                open = Some((tag_start, lang));
                i = j + 1;
            } else {
                return Err(CorpusError::Markup {
                    offset: i,
                    message: "unexpected '<'".to_string(),
                });
            }
        } else if c == '>' {
            return Err(CorpusError::Markup { offset: i, message: "unexpected '>'".to_string() });
        } else {
            current.push(c);
            i += 1;
        }
    }
    if let Some((offset, _)) = open {
        return Err(CorpusError::UnclosedTag { offset });
    }
    segments.push((current, matrix_default));

    let mut tokens = Vec::new();
    for (text, lang) in segments {
        for word in text.split_whitespace() {
            tokens.push(TaggedToken { surface: word.to_string(), lang });
        }
    }
    Ok(TaggedTranscript::new(attach_punctuation(tokens)))
}

/// Parses a transcript in the word-suffix convention: `word@s:eng` marks a
/// switched word, `[/]` (retracing) and `(.)` (pause) are dropped. Exactly
/// these constructs are understood; any other `@` suffix, bracket or
/// parenthesis code is rejected by name.
pub fn parse_chat_annotation(
    raw: &str,
    matrix_default: LanguageTag,
    pair: &LanguagePair,
) -> Result<TaggedTranscript, CorpusError> {
    let mut tokens = Vec::new();
    for item in raw.split_whitespace() {
        if item.starts_with('[') {
            if item == "[/]" {
                continue;
            }
            return Err(CorpusError::UnknownChatCode(item.to_string()));
        }
        if item.starts_with('(') && item.ends_with(')') {
            if item == "(.)" {
                continue;
            }
            return Err(CorpusError::UnknownChatCode(item.to_string()));
        }
        if let Some(at) = item.find('@') {
            let (word, suffix) = item.split_at(at);
            let suffix = &suffix[1..];
            let lang = suffix
                .strip_prefix("s:")
                .and_then(|code| pair.tag_for_code(code))
                .ok_or_else(|| CorpusError::UnknownChatCode(format!("@{suffix}")))?;
            if word.is_empty() {
                return Err(CorpusError::UnknownChatCode(item.to_string()));
            }
            tokens.push(TaggedToken { surface: word.to_string(), lang });
        } else {
            tokens.push(TaggedToken { surface: item.to_string(), lang: matrix_default });
        }
    }
    Ok(TaggedTranscript::new(attach_punctuation(tokens)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LanguageTag::{L1, L2};

    fn pair() -> LanguagePair {
        LanguagePair::new("spanish", "english")
    }

    #[test]
    fn inline_span_golden_row() {
        let raw = "un <foreign lang=\"English\"> show </foreign>, a mi me gusta ver mucho \
                   estos <foreign lang=\"English\"> shows </foreign> de la medicina forense";
        let t = parse_fisher_annotation(raw, L1, &pair()).unwrap();
        assert_eq!(
            t.clean_text(),
            "un show, a mi me gusta ver mucho estos shows de la medicina forense"
        );
        let tags: Vec<LanguageTag> = t.tokens.iter().map(|tok| tok.lang).collect();
        assert_eq!(
            tags,
            vec![L1, L2, L1, L1, L1, L1, L1, L1, L1, L2, L1, L1, L1, L1]
        );
        // The attached comma rides on the English word it follows.
        assert_eq!(t.tokens[1].surface, "show,");
        assert_eq!(t.tokens[9].surface, "shows");
        assert!(!t.clean_text().contains('<') && !t.clean_text().contains('>'));
    }

    #[test]
    fn inline_span_accepts_backslash_closer() {
        let raw = "un <foreign lang=\"English\"> show <\\foreign> bueno";
        let t = parse_fisher_annotation(raw, L1, &pair()).unwrap();
        assert_eq!(t.clean_text(), "un show bueno");
        assert_eq!(t.tokens[1].lang, L2);
    }

    #[test]
    fn inline_span_unclosed_reports_offset() {
        let raw = "uno dos <foreign lang=\"English\"> three four";
        match parse_fisher_annotation(raw, L1, &pair()) {
            Err(CorpusError::UnclosedTag { offset }) => assert_eq!(offset, 8),
            other => panic!("expected unclosed tag error, got {other:?}"),
        }
    }

    #[test]
    fn inline_span_nested_reports_offset() {
        let raw = "a <foreign lang=\"English\"> b <foreign lang=\"English\"> c </foreign></foreign>";
        match parse_fisher_annotation(raw, L1, &pair()) {
            Err(CorpusError::NestedTag { offset }) => assert_eq!(offset, 29),
            other => panic!("expected nested tag error, got {other:?}"),
        }
    }

    #[test]
    fn inline_span_unknown_language_is_named() {
        let raw = "a <foreign lang=\"French\"> b </foreign>";
        match parse_fisher_annotation(raw, L1, &pair()) {
            Err(CorpusError::UnknownLanguage(name)) => assert_eq!(name, "French"),
            other => panic!("expected unknown language error, got {other:?}"),
        }
    }

    #[test]
    fn inline_span_stray_markup_rejected() {
        assert!(matches!(
            parse_fisher_annotation("a < b", L1, &pair()),
            Err(CorpusError::Markup { offset: 2, .. })
        ));
        assert!(matches!(
            parse_fisher_annotation("a > b", L1, &pair()),
            Err(CorpusError::Markup { offset: 2, .. })
        ));
        assert!(matches!(
            parse_fisher_annotation("a </foreign> b", L1, &pair()),
            Err(CorpusError::Markup { offset: 2, .. })
        ));
    }

    #[test]
    fn inline_span_malformed_attribute() {
        assert!(matches!(
            parse_fisher_annotation("<foreign> b </foreign>", L1, &pair()),
            Err(CorpusError::Markup { .. })
        ));
        assert!(matches!(
            parse_fisher_annotation("<foreign lang=\"English > b", L1, &pair()),
            Err(CorpusError::Markup { .. })
        ));
    }

    #[test]
    fn word_suffix_golden_row() {
        let raw = "hay una [/] una que dice (.) it's@s:eng five@s:eng o'clock@s:eng somewhere@s:eng";
        let t = parse_chat_annotation(raw, L1, &pair()).unwrap();
        assert_eq!(t.clean_text(), "hay una una que dice it's five o'clock somewhere");
        let tags: Vec<LanguageTag> = t.tokens.iter().map(|tok| tok.lang).collect();
        assert_eq!(tags, vec![L1, L1, L1, L1, L1, L2, L2, L2, L2]);
        // Apostrophes survive parsing; only metrics strip them.
        assert_eq!(t.tokens[5].surface, "it's");
        assert_eq!(t.tokens[7].surface, "o'clock");
    }

    #[test]
    fn word_suffix_unknown_code_is_named() {
        match parse_chat_annotation("hola word@s:fra", L1, &pair()) {
            Err(CorpusError::UnknownChatCode(code)) => assert_eq!(code, "@s:fra"),
            other => panic!("expected unknown code error, got {other:?}"),
        }
        match parse_chat_annotation("hola word@g", L1, &pair()) {
            Err(CorpusError::UnknownChatCode(code)) => assert_eq!(code, "@g"),
            other => panic!("expected unknown code error, got {other:?}"),
        }
    }

    #[test]
    fn word_suffix_unknown_brackets_and_pauses_rejected() {
        assert!(matches!(
            parse_chat_annotation("a [//] b", L1, &pair()),
            Err(CorpusError::UnknownChatCode(_))
        ));
        assert!(matches!(
            parse_chat_annotation("a (..) b", L1, &pair()),
            Err(CorpusError::UnknownChatCode(_))
        ));
    }

    #[test]
    fn word_suffix_code_alone_is_rejected() {
        assert!(matches!(
            parse_chat_annotation("a @s:eng b", L1, &pair()),
            Err(CorpusError::UnknownChatCode(_))
        ));
    }

    #[test]
    fn empty_inputs_yield_empty_transcripts() {
        assert!(parse_fisher_annotation("", L1, &pair()).unwrap().is_empty());
        assert!(parse_chat_annotation("[/] (.)", L1, &pair()).unwrap().is_empty());
    }

    #[test]
    fn matrix_default_l2_tags_plain_words() {
        let t = parse_chat_annotation("one two tres@s:spa", L2, &pair()).unwrap();
        assert_eq!(t.tokens[0].lang, L2);
        assert_eq!(t.tokens[2].lang, L1);
    }
}
