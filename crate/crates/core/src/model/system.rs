//! The seven system layouts and their forward passes.
//!
//! A [`System`] owns one flat parameter store plus component structs that
//! index into it. Sharing between components is storage aliasing, recorded
//! in a [`ParameterRegistry`] so tests can verify each layout's plan by
//! inspection. All seven layouts expose the same view API (front, transcript
//! decoder, translation decoder or text-translation stack, per routed
//! language), so training and inference code is layout-agnostic.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::toy::ToyCorpus;
use crate::corpus::{cs_proportion, LanguageTag, Utterance};
use crate::nn::{ParamId, ParameterRegistry, ParameterStore, Tape, Var};

use super::components::{Decoder, LidClassifier, SpeechFront, TextEncoder};
use super::dims::{ArchitectureKind, ModelDims};
use super::layers::Dropout;
use super::vocab::{decoder_input, decoder_target, Task, Vocab, EOS, TASK_TRANSCRIBE};
use super::ModelError;

/// Index of a language in two-way classifier outputs and label arrays.
pub fn lang_index(lang: LanguageTag) -> usize {
    match lang {
        LanguageTag::L1 => 0,
        LanguageTag::L2 => 1,
    }
}

pub fn index_lang(index: usize) -> LanguageTag {
    match index {
        0 => LanguageTag::L1,
        1 => LanguageTag::L2,
        _ => panic!("language index {index} out of range"),
    }
}

/// A value per language.
#[derive(Debug, Clone)]
pub struct PerLang<T> {
    pub l1: T,
    pub l2: T,
}

impl<T> PerLang<T> {
    pub fn init(mut f: impl FnMut(LanguageTag) -> T) -> PerLang<T> {
        PerLang { l1: f(LanguageTag::L1), l2: f(LanguageTag::L2) }
    }

    pub fn get(&self, lang: LanguageTag) -> &T {
        match lang {
            LanguageTag::L1 => &self.l1,
            LanguageTag::L2 => &self.l2,
        }
    }

    pub fn both(&self) -> [(LanguageTag, &T); 2] {
        [(LanguageTag::L1, &self.l1), (LanguageTag::L2, &self.l2)]
    }
}

/// Recognition stack of a cascade: speech front plus transcript decoder.
#[derive(Debug, Clone)]
pub struct AsrStack {
    pub front: SpeechFront,
    pub decoder: Decoder,
}

impl AsrStack {
    fn init(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut ChaCha8Rng,
    ) -> AsrStack {
        AsrStack {
            front: SpeechFront::init(store, prefix, dims, rng),
            decoder: Decoder::init(store, &format!("{prefix}.dec"), dims, false, rng),
        }
    }

    fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.front.record(reg, prefix);
        self.decoder.record(reg, &format!("{prefix}.dec"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.front.ids();
        ids.extend(self.decoder.ids());
        ids
    }
}

/// Translation stack of a cascade: text encoder plus decoder.
#[derive(Debug, Clone)]
pub struct MtStack {
    pub encoder: TextEncoder,
    pub decoder: Decoder,
}

impl MtStack {
    fn init_stack(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut ChaCha8Rng,
    ) -> MtStack {
        MtStack {
            encoder: TextEncoder::init(store, &format!("{prefix}.enc"), dims, rng),
            decoder: Decoder::init(store, &format!("{prefix}.dec"), dims, false, rng),
        }
    }

    fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.encoder.record(reg, &format!("{prefix}.enc"));
        self.decoder.record(reg, &format!("{prefix}.dec"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.encoder.ids();
        ids.extend(self.decoder.ids());
        ids
    }
}

/// Two-pass stack: front, transcript decoder, translation decoder with the
/// extra cross-attention.
#[derive(Debug, Clone)]
pub struct TriangleStack {
    pub front: SpeechFront,
    pub transcript_dec: Decoder,
    pub translation_dec: Decoder,
}

impl TriangleStack {
    fn init(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut ChaCha8Rng,
    ) -> TriangleStack {
        TriangleStack {
            front: SpeechFront::init(store, prefix, dims, rng),
            transcript_dec: Decoder::init(store, &format!("{prefix}.tdec"), dims, false, rng),
            translation_dec: Decoder::init(store, &format!("{prefix}.xdec"), dims, true, rng),
        }
    }

    fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.front.record(reg, prefix);
        self.transcript_dec.record(reg, &format!("{prefix}.tdec"));
        self.translation_dec.record(reg, &format!("{prefix}.xdec"));
    }
}

#[derive(Debug, Clone)]
struct CascadeStack {
    asr: AsrStack,
    mt: MtStack,
}

impl CascadeStack {
    fn init(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut ChaCha8Rng,
    ) -> CascadeStack {
        CascadeStack {
            asr: AsrStack::init(store, &format!("{prefix}.asr"), dims, rng),
            mt: MtStack::init_stack(store, &format!("{prefix}.mt"), dims, rng),
        }
    }

    fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.asr.record(reg, &format!("{prefix}.asr"));
        self.mt.record(reg, &format!("{prefix}.mt"));
    }
}

#[derive(Debug, Clone)]
enum Arch {
    CascadeUnidirect(PerLang<CascadeStack>),
    CascadeUniSharedEnc {
        front: SpeechFront,
        asr_dec: PerLang<Decoder>,
        mt: PerLang<MtStack>,
    },
    CascadeBidirect(CascadeStack),
    E2EUnidirect(PerLang<TriangleStack>),
    E2EBidirectByLang {
        front: SpeechFront,
        decs: PerLang<(Decoder, Decoder)>,
    },
    E2EBidirectByTask {
        front: SpeechFront,
        transcript_dec: Decoder,
        translation_dec: Decoder,
    },
    E2EBidirectShared {
        front: SpeechFront,
        decoder: Decoder,
    },
}

/// Loss mixing weights for joint two-pass training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JointWeights {
    pub w_asr: f64,
    pub w_st: f64,
}

impl Default for JointWeights {
    fn default() -> JointWeights {
        JointWeights { w_asr: 1.0, w_st: 1.0 }
    }
}

/// Everything returned by a teacher-forced joint forward.
pub struct JointForward {
    pub transcript_logits: Var,
    pub translation_logits: Var,
    pub loss_transcript: Var,
    pub loss_translation: Var,
    pub total_loss: Var,
}

/// An utterance readied for forwarding: features plus token ids and the
/// output-language tokens of both passes.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub id: String,
    pub features: Array2<f64>,
    pub transcript_ids: Vec<usize>,
    /// Output language of the transcript pass: the labeled matrix language.
    pub transcript_lang: LanguageTag,
    pub translation_ids: Vec<usize>,
    /// Output language of the translation pass, read off the translation
    /// tokens themselves (they are monolingual by construction).
    pub translation_lang: LanguageTag,
    pub matrix_lang: LanguageTag,
    pub cs_proportion: f64,
}

impl PreparedExample {
    pub fn new(
        utt: &Utterance,
        vocab: &Vocab,
        features: Array2<f64>,
    ) -> Result<PreparedExample, ModelError> {
        if utt.transcript.tokens.is_empty() {
            return Err(ModelError::EmptySequence(utt.id.clone(), "transcript"));
        }
        let transcript_ids = vocab.encode_transcript(&utt.transcript)?;
        let translation_ids = vocab.encode_text(&utt.translation)?;
        if translation_ids.is_empty() {
            return Err(ModelError::EmptySequence(utt.id.clone(), "translation"));
        }
        let translation_lang = {
            let first = vocab.lang_of_word(translation_ids[0]).expect("word id");
            for &id in &translation_ids[1..] {
                if vocab.lang_of_word(id) != Some(first) {
                    return Err(ModelError::MixedTranslation(utt.id.clone()));
                }
            }
            first
        };
        Ok(PreparedExample {
            id: utt.id.clone(),
            features,
            transcript_ids,
            transcript_lang: utt.matrix_lang,
            translation_ids,
            translation_lang,
            matrix_lang: utt.matrix_lang,
            cs_proportion: cs_proportion(&utt.transcript)
                .map_err(|_| ModelError::EmptySequence(utt.id.clone(), "transcript"))?,
        })
    }
}

/// Prepares every utterance of a named toy-corpus split, regenerating its
/// feature frames from the recorded seeds.
pub fn prepare_examples(
    corpus: &ToyCorpus,
    split: &str,
    vocab: &Vocab,
) -> Result<Vec<PreparedExample>, ModelError> {
    corpus
        .split(split)
        .iter()
        .map(|utt| {
            let features = corpus
                .features_for(utt)
                .map_err(|e| ModelError::Features(utt.id.clone(), e.to_string()))?;
            PreparedExample::new(utt, vocab, features)
        })
        .collect()
}

/// A built system: layout, dimensions, vocabulary, parameters, and the
/// alias table describing the sharing plan.
pub struct System {
    pub kind: ArchitectureKind,
    pub dims: ModelDims,
    pub vocab: Vocab,
    pub store: ParameterStore,
    pub registry: ParameterRegistry,
    arch: Arch,
}

impl System {
    /// Realizes a layout's sharing plan with seeded initialization.
    pub fn build(
        kind: ArchitectureKind,
        dims: ModelDims,
        vocab: Vocab,
        seed: u64,
    ) -> Result<System, ModelError> {
        dims.validate()?;
        if dims.vocab != vocab.len() {
            return Err(ModelError::InvalidDims(format!(
                "dims.vocab {} does not match vocabulary size {}",
                dims.vocab,
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let mut reg = ParameterRegistry::new();
        let arch = match kind {
            ArchitectureKind::CascadeUnidirect => {
                let stacks = PerLang::init(|lang| {
                    CascadeStack::init(&mut store, lang.as_str(), &dims, &mut rng)
                });
                for (lang, stack) in stacks.both() {
                    stack.record(&mut reg, lang.as_str());
                }
                Arch::CascadeUnidirect(stacks)
            }
            ArchitectureKind::CascadeUniSharedEnc => {
                let front = SpeechFront::init(&mut store, "shared.asr", &dims, &mut rng);
                let asr_dec = PerLang::init(|lang| {
                    Decoder::init(&mut store, &format!("{}.asr.dec", lang.as_str()), &dims, false, &mut rng)
                });
                let mt = PerLang::init(|lang| {
                    MtStack::init_stack(&mut store, &format!("{}.mt", lang.as_str()), &dims, &mut rng)
                });
                for lang in [LanguageTag::L1, LanguageTag::L2] {
                    front.record(&mut reg, &format!("{}.asr", lang.as_str()));
                    asr_dec.get(lang).record(&mut reg, &format!("{}.asr.dec", lang.as_str()));
                    mt.get(lang).record(&mut reg, &format!("{}.mt", lang.as_str()));
                }
                Arch::CascadeUniSharedEnc { front, asr_dec, mt }
            }
            ArchitectureKind::CascadeBidirect => {
                let stack = CascadeStack::init(&mut store, "shared", &dims, &mut rng);
                stack.record(&mut reg, "l1");
                stack.record(&mut reg, "l2");
                Arch::CascadeBidirect(stack)
            }
            ArchitectureKind::E2EUnidirect => {
                let stacks = PerLang::init(|lang| {
                    TriangleStack::init(&mut store, &format!("{}.e2e", lang.as_str()), &dims, &mut rng)
                });
                for (lang, stack) in stacks.both() {
                    stack.record(&mut reg, &format!("{}.e2e", lang.as_str()));
                }
                Arch::E2EUnidirect(stacks)
            }
            ArchitectureKind::E2EBidirectByLang => {
                let front = SpeechFront::init(&mut store, "shared.e2e", &dims, &mut rng);
                let decs = PerLang::init(|lang| {
                    let t = Decoder::init(
                        &mut store,
                        &format!("{}.e2e.tdec", lang.as_str()),
                        &dims,
                        false,
                        &mut rng,
                    );
                    let x = Decoder::init(
                        &mut store,
                        &format!("{}.e2e.xdec", lang.as_str()),
                        &dims,
                        true,
                        &mut rng,
                    );
                    (t, x)
                });
                for lang in [LanguageTag::L1, LanguageTag::L2] {
                    front.record(&mut reg, &format!("{}.e2e", lang.as_str()));
                    let (t, x) = decs.get(lang);
                    t.record(&mut reg, &format!("{}.e2e.tdec", lang.as_str()));
                    x.record(&mut reg, &format!("{}.e2e.xdec", lang.as_str()));
                }
                Arch::E2EBidirectByLang { front, decs }
            }
            ArchitectureKind::E2EBidirectByTask => {
                let front = SpeechFront::init(&mut store, "shared.e2e", &dims, &mut rng);
                let transcript_dec =
                    Decoder::init(&mut store, "shared.e2e.tdec", &dims, false, &mut rng);
                let translation_dec =
                    Decoder::init(&mut store, "shared.e2e.xdec", &dims, true, &mut rng);
                for lang in [LanguageTag::L1, LanguageTag::L2] {
                    front.record(&mut reg, &format!("{}.e2e", lang.as_str()));
                    transcript_dec.record(&mut reg, &format!("{}.e2e.tdec", lang.as_str()));
                    translation_dec.record(&mut reg, &format!("{}.e2e.xdec", lang.as_str()));
                }
                Arch::E2EBidirectByTask { front, transcript_dec, translation_dec }
            }
            ArchitectureKind::E2EBidirectShared => {
                let front = SpeechFront::init(&mut store, "shared.e2e", &dims, &mut rng);
                let decoder = Decoder::init(&mut store, "shared.e2e.dec", &dims, true, &mut rng);
                for lang in [LanguageTag::L1, LanguageTag::L2] {
                    front.record(&mut reg, &format!("{}.e2e", lang.as_str()));
                    // The transcript-pass view exercises everything except
                    // the first-pass sublayers; the translation-pass view is
                    // the full decoder. Same storage either way.
                    decoder.record_view(&mut reg, &format!("{}.e2e.tdec", lang.as_str()), false);
                    decoder.record_view(&mut reg, &format!("{}.e2e.xdec", lang.as_str()), true);
                }
                Arch::E2EBidirectShared { front, decoder }
            }
        };
        Ok(System { kind, dims, vocab, store, registry: reg, arch })
    }

    // ----- component views ------------------------------------------------

    pub fn speech_front(&self, route: LanguageTag) -> &SpeechFront {
        match &self.arch {
            Arch::CascadeUnidirect(stacks) => &stacks.get(route).asr.front,
            Arch::CascadeUniSharedEnc { front, .. } => front,
            Arch::CascadeBidirect(stack) => &stack.asr.front,
            Arch::E2EUnidirect(stacks) => &stacks.get(route).front,
            Arch::E2EBidirectByLang { front, .. } => front,
            Arch::E2EBidirectByTask { front, .. } => front,
            Arch::E2EBidirectShared { front, .. } => front,
        }
    }

    /// Decoder of the transcript pass (the recognition decoder of cascades).
    pub fn transcript_decoder(&self, route: LanguageTag) -> &Decoder {
        match &self.arch {
            Arch::CascadeUnidirect(stacks) => &stacks.get(route).asr.decoder,
            Arch::CascadeUniSharedEnc { asr_dec, .. } => asr_dec.get(route),
            Arch::CascadeBidirect(stack) => &stack.asr.decoder,
            Arch::E2EUnidirect(stacks) => &stacks.get(route).transcript_dec,
            Arch::E2EBidirectByLang { decs, .. } => &decs.get(route).0,
            Arch::E2EBidirectByTask { transcript_dec, .. } => transcript_dec,
            Arch::E2EBidirectShared { decoder, .. } => decoder,
        }
    }

    /// Decoder of the speech-conditioned translation pass; `None` for
    /// cascade layouts, which translate from text instead.
    pub fn translation_decoder(&self, route: LanguageTag) -> Option<&Decoder> {
        match &self.arch {
            Arch::CascadeUnidirect(_)
            | Arch::CascadeUniSharedEnc { .. }
            | Arch::CascadeBidirect(_) => None,
            Arch::E2EUnidirect(stacks) => Some(&stacks.get(route).translation_dec),
            Arch::E2EBidirectByLang { decs, .. } => Some(&decs.get(route).1),
            Arch::E2EBidirectByTask { translation_dec, .. } => Some(translation_dec),
            Arch::E2EBidirectShared { decoder, .. } => Some(decoder),
        }
    }

    /// Text-to-text translation stack; `None` for end-to-end layouts.
    pub fn mt_stack(&self, route: LanguageTag) -> Option<&MtStack> {
        match &self.arch {
            Arch::CascadeUnidirect(stacks) => Some(&stacks.get(route).mt),
            Arch::CascadeUniSharedEnc { mt, .. } => Some(mt.get(route)),
            Arch::CascadeBidirect(stack) => Some(&stack.mt),
            _ => None,
        }
    }

    pub fn all_ids(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    /// Parameters of the recognition component(s); `None` for end-to-end
    /// layouts, which train jointly.
    pub fn asr_component_ids(&self) -> Option<Vec<ParamId>> {
        match &self.arch {
            Arch::CascadeUnidirect(stacks) => {
                let mut ids = stacks.l1.asr.ids();
                ids.extend(stacks.l2.asr.ids());
                Some(ids)
            }
            Arch::CascadeUniSharedEnc { front, asr_dec, .. } => {
                let mut ids = front.ids();
                ids.extend(asr_dec.l1.ids());
                ids.extend(asr_dec.l2.ids());
                Some(ids)
            }
            Arch::CascadeBidirect(stack) => Some(stack.asr.ids()),
            _ => None,
        }
    }

    /// Parameters of the translation component(s); `None` for end-to-end
    /// layouts.
    pub fn mt_component_ids(&self) -> Option<Vec<ParamId>> {
        match &self.arch {
            Arch::CascadeUnidirect(stacks) => {
                let mut ids = stacks.l1.mt.ids();
                ids.extend(stacks.l2.mt.ids());
                Some(ids)
            }
            Arch::CascadeUniSharedEnc { mt, .. } => {
                let mut ids = mt.l1.ids();
                ids.extend(mt.l2.ids());
                Some(ids)
            }
            Arch::CascadeBidirect(stack) => Some(stack.mt.ids()),
            _ => None,
        }
    }

    // ----- forward passes -------------------------------------------------

    fn check_tokens(&self, tokens: &[usize]) -> Result<(), ModelError> {
        for &t in tokens {
            if t >= self.vocab.len() {
                return Err(ModelError::UnknownTokenId(t));
            }
        }
        Ok(())
    }

    fn check_state_width(&self, tape: &Tape, states: Var) -> Result<(), ModelError> {
        let got = tape.value(states).ncols();
        if got != self.dims.d_model {
            return Err(ModelError::StateDimMismatch { expected: self.dims.d_model, got });
        }
        Ok(())
    }

    /// Feature frames to bridged encoder states, routed for per-language
    /// layouts.
    pub fn encode(
        &self,
        tape: &mut Tape,
        route: LanguageTag,
        features: &Array2<f64>,
        drop: &mut Dropout,
    ) -> Var {
        self.speech_front(route).forward(tape, &self.store, features, drop)
    }

    /// Teacher-forced transcript-pass states and logits over a prefix.
    pub fn decode_transcript(
        &self,
        tape: &mut Tape,
        route: LanguageTag,
        enc_states: Var,
        prefix: &[usize],
        drop: &mut Dropout,
    ) -> Result<(Var, Var), ModelError> {
        self.check_tokens(prefix)?;
        self.check_state_width(tape, enc_states)?;
        let dec = self.transcript_decoder(route);
        Ok(dec.forward(tape, &self.store, prefix, enc_states, None, drop))
    }

    /// Teacher-forced translation-pass logits, attending over encoder states
    /// and first-pass decoder states.
    pub fn decode_translation(
        &self,
        tape: &mut Tape,
        route: LanguageTag,
        enc_states: Var,
        first_pass_states: Var,
        prefix: &[usize],
        drop: &mut Dropout,
    ) -> Result<(Var, Var), ModelError> {
        self.check_tokens(prefix)?;
        self.check_state_width(tape, enc_states)?;
        self.check_state_width(tape, first_pass_states)?;
        let dec = self
            .translation_decoder(route)
            .ok_or(ModelError::RequiresEndToEnd(self.kind))?;
        Ok(dec.forward(tape, &self.store, prefix, enc_states, Some(first_pass_states), drop))
    }

    /// Greedy transcript realization: feeds the model its own predictions
    /// until end-of-sequence or `max_len` generated tokens. Returns the
    /// generated tokens (language token first, end-of-sequence stripped).
    pub fn greedy_transcript(
        &self,
        route: LanguageTag,
        features: &Array2<f64>,
        max_len: usize,
    ) -> Vec<usize> {
        let mut generated: Vec<usize> = Vec::new();
        while generated.len() < max_len {
            let mut tape = Tape::eval();
            let mut drop = Dropout::disabled();
            let enc = self.encode(&mut tape, route, features, &mut drop);
            let mut prefix = vec![TASK_TRANSCRIBE];
            prefix.extend_from_slice(&generated);
            let dec = self.transcript_decoder(route);
            let (_, logits) = dec.forward(&mut tape, &self.store, &prefix, enc, None, &mut drop);
            let row = tape.value(logits).row(prefix.len() - 1);
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            if best == EOS {
                break;
            }
            generated.push(best);
        }
        generated
    }

    /// Joint two-pass forward with both losses. With `teacher_forcing` the
    /// translation pass attends to gold-transcript decoder states; without
    /// it, to states recomputed over the model's own greedy transcript (the
    /// test-time conditioning), while the transcript loss itself is still
    /// scored against the gold sequence.
    pub fn forward_joint(
        &self,
        tape: &mut Tape,
        ex: &PreparedExample,
        route: LanguageTag,
        weights: JointWeights,
        teacher_forcing: bool,
        max_len: usize,
        drop: &mut Dropout,
    ) -> Result<JointForward, ModelError> {
        if self.kind.is_cascade() {
            return Err(ModelError::RequiresEndToEnd(self.kind));
        }
        let enc = self.encode(tape, route, &ex.features, drop);
        let t_input = decoder_input(Task::Transcribe, ex.transcript_lang, &ex.transcript_ids);
        let t_target = decoder_target(ex.transcript_lang, &ex.transcript_ids);
        self.check_tokens(&t_input)?;
        let tdec = self.transcript_decoder(route);
        let (t_states, t_logits) = tdec.forward(tape, &self.store, &t_input, enc, None, drop);
        let loss_t = tape.cross_entropy_mean(t_logits, &t_target);
        let first_states = if teacher_forcing {
            t_states
        } else {
            let realized = self.greedy_transcript(route, &ex.features, max_len);
            let mut prefix = vec![TASK_TRANSCRIBE];
            prefix.extend_from_slice(&realized);
            tdec.states(tape, &self.store, &prefix, enc, None, drop)
        };
        let x_input = decoder_input(Task::Translate, ex.translation_lang, &ex.translation_ids);
        let x_target = decoder_target(ex.translation_lang, &ex.translation_ids);
        self.check_tokens(&x_input)?;
        let xdec = self
            .translation_decoder(route)
            .expect("end-to-end layouts have a translation decoder");
        let (_, x_logits) =
            xdec.forward(tape, &self.store, &x_input, enc, Some(first_states), drop);
        let loss_x = tape.cross_entropy_mean(x_logits, &x_target);
        let wt = tape.scale(loss_t, weights.w_asr);
        let wx = tape.scale(loss_x, weights.w_st);
        let total = tape.add(wt, wx);
        Ok(JointForward {
            transcript_logits: t_logits,
            translation_logits: x_logits,
            loss_transcript: loss_t,
            loss_translation: loss_x,
            total_loss: total,
        })
    }

    /// Recognition loss of a cascade component: transcript cross entropy
    /// from speech.
    pub fn asr_loss(
        &self,
        tape: &mut Tape,
        ex: &PreparedExample,
        route: LanguageTag,
        drop: &mut Dropout,
    ) -> Result<Var, ModelError> {
        if !self.kind.is_cascade() {
            return Err(ModelError::RequiresCascade(self.kind));
        }
        let enc = self.encode(tape, route, &ex.features, drop);
        let input = decoder_input(Task::Transcribe, ex.transcript_lang, &ex.transcript_ids);
        let target = decoder_target(ex.transcript_lang, &ex.transcript_ids);
        let (_, logits) = self.decode_transcript(tape, route, enc, &input, drop)?;
        Ok(tape.cross_entropy_mean(logits, &target))
    }

    /// Translation loss of a cascade component: translation cross entropy
    /// from the gold transcript text.
    pub fn mt_loss(
        &self,
        tape: &mut Tape,
        ex: &PreparedExample,
        route: LanguageTag,
        drop: &mut Dropout,
    ) -> Result<Var, ModelError> {
        let mt = self.mt_stack(route).ok_or(ModelError::RequiresCascade(self.kind))?;
        self.check_tokens(&ex.transcript_ids)?;
        let enc = mt.encoder.forward(tape, &self.store, &ex.transcript_ids, drop);
        let input = decoder_input(Task::Translate, ex.translation_lang, &ex.translation_ids);
        let target = decoder_target(ex.translation_lang, &ex.translation_ids);
        self.check_tokens(&input)?;
        let (_, logits) = mt.decoder.forward(tape, &self.store, &input, enc, None, drop);
        Ok(tape.cross_entropy_mean(logits, &target))
    }
}

/// Standalone language-identification model with its own parameter store;
/// trained separately and checkpointed under its own tag.
pub struct LidModel {
    pub dims: ModelDims,
    pub store: ParameterStore,
    pub registry: ParameterRegistry,
    pub classifier: LidClassifier,
}

impl LidModel {
    pub fn build(dims: ModelDims, seed: u64) -> Result<LidModel, ModelError> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let mut reg = ParameterRegistry::new();
        let classifier = LidClassifier::init(&mut store, "lid", &dims, &mut rng);
        classifier.record(&mut reg, "lid");
        Ok(LidModel { dims, store, registry: reg, classifier })
    }

    /// Cross entropy of the two-way logits against the gold matrix language.
    pub fn loss(
        &self,
        tape: &mut Tape,
        features: &Array2<f64>,
        gold: LanguageTag,
        drop: &mut Dropout,
    ) -> Var {
        let logits = self.classifier.forward(tape, &self.store, features, drop);
        tape.cross_entropy_mean(logits, &[lang_index(gold)])
    }

    /// Argmax language (ties to L1) plus the probability pair.
    pub fn predict(&self, features: &Array2<f64>) -> (LanguageTag, f64, f64) {
        let mut tape = Tape::eval();
        let (p1, p2) = self.classifier.probabilities(&mut tape, &self.store, features);
        let lang = if p2 > p1 { LanguageTag::L2 } else { LanguageTag::L1 };
        (lang, p1, p2)
    }
}
