//! End-to-end execution of a built system on one utterance: language
//! routing (classifier-predicted or gold), transcript decoding, then
//! translation conditioned on the realized transcript. Cascades hand the
//! decoded transcript text to their translation component; two-pass models
//! re-attend the first decoder's hidden states over their own output.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::LanguageTag;
use crate::model::vocab::{lang_for_token, Task};
use crate::model::{Dropout, LidModel, PreparedExample, System};
use crate::nn::tape::Tape;

use super::decode::{decode_sequence, DecodeConfig, DecodedSequence};
use super::InferenceError;

/// Where the routing language comes from for classifier-gated systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LidMode {
    /// Route by the standalone classifier's prediction.
    Predicted,
    /// Route by the gold matrix-language label.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceScores {
    pub transcript: f64,
    pub translation: f64,
}

/// What one system produced for one utterance. Token ids keep the
/// language token the decoder emitted first; the text fields render only
/// lexical words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub transcript: String,
    pub translation: String,
    /// For gated systems, the language that chose the sub-system; for
    /// bidirectional systems, the language token the transcript decoder
    /// emitted (falling back to the first language when it produced none).
    pub lid_used: LanguageTag,
    pub scores: SequenceScores,
    pub transcript_ids: Vec<usize>,
    pub translation_ids: Vec<usize>,
}

fn resolve_route(
    system: &System,
    lid: Option<&LidModel>,
    ex: &PreparedExample,
    lid_mode: LidMode,
) -> Result<LanguageTag, InferenceError> {
    if !system.kind.uses_lid() {
        // Bidirectional layouts alias both routes to the same parameters;
        // either label reaches identical weights.
        return Ok(LanguageTag::L1);
    }
    match lid_mode {
        LidMode::Oracle => Ok(ex.matrix_lang),
        LidMode::Predicted => {
            let model = lid.ok_or(InferenceError::MissingLidModel(system.kind))?;
            Ok(model.predict(&ex.features).0)
        }
    }
}

/// Decodes the transcript pass from speech features. The prompt is the
/// task token only; the model's first emission is its language decision.
pub fn decode_transcript_sequence(
    system: &System,
    route: LanguageTag,
    features: &Array2<f64>,
    cfg: &DecodeConfig,
) -> DecodedSequence {
    let mut logits_fn = |seq: &[usize]| {
        let mut tape = Tape::eval();
        let mut drop = Dropout::disabled();
        let enc = system.encode(&mut tape, route, features, &mut drop);
        let dec = system.transcript_decoder(route);
        let (_, logits) = dec.forward(&mut tape, &system.store, seq, enc, None, &mut drop);
        tape.value(logits).row(seq.len() - 1).to_vec()
    };
    decode_sequence(&mut logits_fn, &[Task::Transcribe.token()], cfg)
}

/// Decodes the translation pass of a two-pass model, attending both the
/// encoder states and the first decoder's states over the realized
/// transcript tokens.
pub fn e2e_translate(
    system: &System,
    route: LanguageTag,
    features: &Array2<f64>,
    transcript_tokens: &[usize],
    cfg: &DecodeConfig,
) -> Result<DecodedSequence, InferenceError> {
    cfg.validate()?;
    if system.kind.is_cascade() {
        return Err(crate::model::ModelError::RequiresEndToEnd(system.kind).into());
    }
    let mut first_prefix = vec![Task::Transcribe.token()];
    first_prefix.extend_from_slice(transcript_tokens);
    let mut logits_fn = |seq: &[usize]| {
        let mut tape = Tape::eval();
        let mut drop = Dropout::disabled();
        let enc = system.encode(&mut tape, route, features, &mut drop);
        let tdec = system.transcript_decoder(route);
        let states = tdec.states(&mut tape, &system.store, &first_prefix, enc, None, &mut drop);
        let xdec = system
            .translation_decoder(route)
            .expect("two-pass layouts have a translation decoder");
        let (_, logits) =
            xdec.forward(&mut tape, &system.store, seq, enc, Some(states), &mut drop);
        tape.value(logits).row(seq.len() - 1).to_vec()
    };
    Ok(decode_sequence(&mut logits_fn, &[Task::Translate.token()], cfg))
}

/// Text-to-text translation through a cascade's translation component.
/// This is the error-propagation path: whatever the recognizer wrote,
/// including its mistakes, is all the translator sees. An empty
/// transcript short-circuits to an empty translation.
pub fn cascade_translate(
    system: &System,
    route: LanguageTag,
    transcript_text: &str,
    cfg: &DecodeConfig,
) -> Result<DecodedSequence, InferenceError> {
    cfg.validate()?;
    let mt = system
        .mt_stack(route)
        .ok_or(crate::model::ModelError::RequiresCascade(system.kind))?;
    let words = system.vocab.encode_text(transcript_text)?;
    if words.is_empty() {
        log::warn!("empty transcript handed to the translation stage; emitting nothing");
        return Ok(DecodedSequence { tokens: Vec::new(), log_prob: 0.0, truncated: false });
    }
    let mut logits_fn = |seq: &[usize]| {
        let mut tape = Tape::eval();
        let mut drop = Dropout::disabled();
        let enc = mt.encoder.forward(&mut tape, &system.store, &words, &mut drop);
        let (_, logits) = mt.decoder.forward(&mut tape, &system.store, seq, enc, None, &mut drop);
        tape.value(logits).row(seq.len() - 1).to_vec()
    };
    Ok(decode_sequence(&mut logits_fn, &[Task::Translate.token()], cfg))
}

/// Runs one system on one prepared utterance: resolves the route, decodes
/// the transcript, then produces the translation along the architecture's
/// own path.
pub fn run_system(
    system: &System,
    lid: Option<&LidModel>,
    ex: &PreparedExample,
    lid_mode: LidMode,
    cfg: &DecodeConfig,
) -> Result<SystemOutput, InferenceError> {
    cfg.validate()?;
    let route = resolve_route(system, lid, ex, lid_mode)?;
    let transcript = decode_transcript_sequence(system, route, &ex.features, cfg);
    let translation = if system.kind.is_cascade() {
        let text = system.vocab.words_to_text(&transcript.tokens);
        cascade_translate(system, route, &text, cfg)?
    } else {
        e2e_translate(system, route, &ex.features, &transcript.tokens, cfg)?
    };
    let lid_used = if system.kind.uses_lid() {
        route
    } else {
        transcript.tokens.first().and_then(|&t| lang_for_token(t)).unwrap_or(LanguageTag::L1)
    };
    Ok(SystemOutput {
        transcript: system.vocab.words_to_text(&transcript.tokens),
        translation: system.vocab.words_to_text(&translation.tokens),
        lid_used,
        scores: SequenceScores {
            transcript: transcript.log_prob,
            translation: translation.log_prob,
        },
        transcript_ids: transcript.tokens,
        translation_ids: translation.tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{generate_toy_corpus, SplitSizes, ToyCorpusConfig, SPLIT_TEST_CS};
    use crate::model::{prepare_examples, ModelDims, Vocab};
    use crate::model::dims::ArchitectureKind;

    fn fixture(kind: ArchitectureKind) -> (System, Vec<PreparedExample>) {
        let cfg = ToyCorpusConfig {
            vocab_size_per_lang: 6,
            phoneme_dim: 5,
            sentence_len_range: (2, 3),
            stretch_range: (1, 1),
            sizes: SplitSizes {
                train_mono: 6,
                train_cs: 4,
                dev_cs: 2,
                test_cs: 4,
                test_mono: 2,
            },
            seed: 9,
            ..ToyCorpusConfig::default()
        };
        let corpus = generate_toy_corpus(&cfg).unwrap();
        let vocab = Vocab::from_lexicon(&corpus.lexicon).unwrap();
        let dims = ModelDims {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ffn_dim: 16,
            vocab: vocab.len(),
            feature_dim: 5,
            bridge_strides: vec![2],
            dropout: 0.0,
        };
        let examples = prepare_examples(&corpus, SPLIT_TEST_CS, &vocab).unwrap();
        let system = System::build(kind, dims, vocab, 5).unwrap();
        (system, examples)
    }

    fn lid_for(system: &System, forced: Option<LanguageTag>) -> LidModel {
        let mut lid = LidModel::build(system.dims.clone(), 3).unwrap();
        if let Some(lang) = forced {
            let id = lid.registry.resolve("lid.head.b").unwrap();
            let bias = lid.store.value_mut(id);
            bias.fill(0.0);
            let col = crate::model::lang_index(lang);
            bias[[0, col]] = 50.0;
        }
        lid
    }

    fn short() -> DecodeConfig {
        DecodeConfig { max_len: 6, ..DecodeConfig::default() }
    }

    #[test]
    fn predicted_mode_needs_a_classifier_only_for_gated_kinds() {
        let (gated, exs) = fixture(ArchitectureKind::CascadeUnidirect);
        let err = run_system(&gated, None, &exs[0], LidMode::Predicted, &short());
        assert!(matches!(err, Err(InferenceError::MissingLidModel(_))), "{err:?}");

        let (ungated, exs) = fixture(ArchitectureKind::E2EBidirectShared);
        run_system(&ungated, None, &exs[0], LidMode::Predicted, &short()).unwrap();
    }

    #[test]
    fn bidirectional_outputs_ignore_the_lid_mode() {
        let (system, exs) = fixture(ArchitectureKind::E2EBidirectByTask);
        let lid = lid_for(&system, Some(LanguageTag::L2));
        for ex in &exs[..2] {
            let predicted =
                run_system(&system, Some(&lid), ex, LidMode::Predicted, &short()).unwrap();
            let oracle = run_system(&system, None, ex, LidMode::Oracle, &short()).unwrap();
            assert_eq!(predicted, oracle);
        }
    }

    #[test]
    fn oracle_mode_routes_by_the_gold_label() {
        let (system, exs) = fixture(ArchitectureKind::CascadeUnidirect);
        let ex = &exs[0];
        // A classifier rigged to always say the gold label makes predicted
        // routing coincide with oracle routing.
        let rigged = lid_for(&system, Some(ex.matrix_lang));
        let predicted =
            run_system(&system, Some(&rigged), ex, LidMode::Predicted, &short()).unwrap();
        let oracle = run_system(&system, None, ex, LidMode::Oracle, &short()).unwrap();
        assert_eq!(predicted, oracle);
        assert_eq!(oracle.lid_used, ex.matrix_lang);
    }

    #[test]
    fn flipping_the_classifier_flips_the_route() {
        let (system, exs) = fixture(ArchitectureKind::CascadeUnidirect);
        let ex = &exs[0];
        let to_l1 = lid_for(&system, Some(LanguageTag::L1));
        let to_l2 = lid_for(&system, Some(LanguageTag::L2));
        let out_l1 = run_system(&system, Some(&to_l1), ex, LidMode::Predicted, &short()).unwrap();
        let out_l2 = run_system(&system, Some(&to_l2), ex, LidMode::Predicted, &short()).unwrap();
        assert_eq!(out_l1.lid_used, LanguageTag::L1);
        assert_eq!(out_l2.lid_used, LanguageTag::L2);
        // The two routes run disjoint parameters, so the decoded
        // distributions cannot coincide bitwise.
        assert!(
            out_l1.transcript_ids != out_l2.transcript_ids
                || out_l1.scores.transcript.to_bits() != out_l2.scores.transcript.to_bits()
        );
        let oracle = run_system(&system, None, ex, LidMode::Oracle, &short()).unwrap();
        let matching =
            if ex.matrix_lang == LanguageTag::L1 { &out_l1 } else { &out_l2 };
        assert_eq!(&oracle, matching);
    }

    #[test]
    fn translation_replays_from_the_returned_transcript() {
        for kind in [ArchitectureKind::E2EBidirectShared, ArchitectureKind::E2EUnidirect] {
            let (system, exs) = fixture(kind);
            let ex = &exs[0];
            let out = run_system(&system, None, ex, LidMode::Oracle, &short()).unwrap();
            let route =
                if system.kind.uses_lid() { ex.matrix_lang } else { LanguageTag::L1 };
            let replay =
                e2e_translate(&system, route, &ex.features, &out.transcript_ids, &short())
                    .unwrap();
            assert_eq!(replay.tokens, out.translation_ids);
            assert_eq!(replay.log_prob.to_bits(), out.scores.translation.to_bits());
        }
    }

    #[test]
    fn cascade_translation_consumes_the_decoded_transcript_text() {
        let (system, exs) = fixture(ArchitectureKind::CascadeBidirect);
        let ex = &exs[0];
        let gold = system.vocab.words_to_text(&ex.transcript_ids);
        let clean = cascade_translate(&system, LanguageTag::L1, &gold, &short()).unwrap();
        // Corrupt the first word: swap it for a different word of the
        // same language, as a recognizer substitution would.
        let first = ex.transcript_ids[0];
        let lang = system.vocab.lang_of_word(first).unwrap();
        let substitute = (0..system.vocab.len())
            .find(|&id| id != first && system.vocab.lang_of_word(id) == Some(lang))
            .unwrap();
        let mut corrupted_ids = ex.transcript_ids.clone();
        corrupted_ids[0] = substitute;
        let corrupted_text = system.vocab.words_to_text(&corrupted_ids);
        let corrupted =
            cascade_translate(&system, LanguageTag::L1, &corrupted_text, &short()).unwrap();
        assert!(
            clean.tokens != corrupted.tokens
                || clean.log_prob.to_bits() != corrupted.log_prob.to_bits(),
            "a changed transcript must reach the translator"
        );
    }

    #[test]
    fn an_empty_transcript_translates_to_nothing() {
        let (system, _) = fixture(ArchitectureKind::CascadeUnidirect);
        let out = cascade_translate(&system, LanguageTag::L2, "", &short()).unwrap();
        assert!(out.tokens.is_empty());
        assert_eq!(out.log_prob, 0.0);
        assert!(!out.truncated);
    }

    #[test]
    fn unknown_transcript_words_are_an_error() {
        let (system, _) = fixture(ArchitectureKind::CascadeUnidirect);
        let err = cascade_translate(&system, LanguageTag::L1, "zzzzzz", &short());
        assert!(matches!(err, Err(InferenceError::Model(_))), "{err:?}");
    }

    #[test]
    fn translation_through_a_cascade_rejects_two_pass_decoding() {
        let (system, exs) = fixture(ArchitectureKind::CascadeUnidirect);
        let ex = &exs[0];
        let err = e2e_translate(&system, LanguageTag::L1, &ex.features, &[], &short());
        assert!(matches!(err, Err(InferenceError::Model(_))), "{err:?}");
    }

    #[test]
    fn greedy_runs_are_pure_functions_of_their_inputs() {
        let (system, exs) = fixture(ArchitectureKind::E2EBidirectByLang);
        let lid = lid_for(&system, None);
        let ex = &exs[0];
        let a = run_system(&system, Some(&lid), ex, LidMode::Predicted, &short()).unwrap();
        let b = run_system(&system, Some(&lid), ex, LidMode::Predicted, &short()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scores.transcript.to_bits(), b.scores.transcript.to_bits());
        assert_eq!(a.scores.translation.to_bits(), b.scores.translation.to_bits());
    }

    #[test]
    fn rejected_configurations_never_reach_the_model() {
        let (system, exs) = fixture(ArchitectureKind::E2EBidirectShared);
        let bad = DecodeConfig { beam_size: 0, ..DecodeConfig::default() };
        let err = run_system(&system, None, &exs[0], LidMode::Oracle, &bad);
        assert!(matches!(err, Err(InferenceError::InvalidConfig(_))));
    }
}
