//! Component stacks: speech encoder, convolutional bridge, text encoder,
//! decoder (single- or two-pass) and the language-identification classifier.

use ndarray::Array2;
use rand::Rng;

use crate::nn::store::uniform_init;
use crate::nn::{ParamId, ParameterRegistry, ParameterStore, Tape, Var};

use super::dims::ModelDims;
use super::layers::{
    causal_mask, sinusoidal_positions, Dropout, EncoderLayerParams, DecoderLayerParams,
    LayerNormParams,
};

/// Self-attention encoder over feature frames: input projection, position
/// table, pre-norm layers, final normalization.
#[derive(Debug, Clone)]
pub struct SpeechEncoder {
    pub input_w: ParamId,
    pub input_b: ParamId,
    pub layers: Vec<EncoderLayerParams>,
    pub final_ln: LayerNormParams,
}

impl SpeechEncoder {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut R,
    ) -> SpeechEncoder {
        let d = dims.d_model;
        let input_w = store.add(
            &format!("{prefix}.input_proj.w"),
            uniform_init(rng, dims.feature_dim, d, dims.feature_dim),
        );
        let input_b = store.add(&format!("{prefix}.input_proj.b"), Array2::zeros((1, d)));
        let layers = (0..dims.n_enc_layers)
            .map(|i| {
                EncoderLayerParams::init(
                    store,
                    &format!("{prefix}.l{i}"),
                    d,
                    dims.n_heads,
                    dims.ffn_dim,
                    rng,
                )
            })
            .collect();
        let final_ln = LayerNormParams::init(store, &format!("{prefix}.final_ln"), d);
        SpeechEncoder { input_w, input_b, layers, final_ln }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        reg.record(&format!("{prefix}.input_proj.w"), self.input_w);
        reg.record(&format!("{prefix}.input_proj.b"), self.input_b);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.record(reg, &format!("{prefix}.l{i}"));
        }
        self.final_ln.record(reg, &format!("{prefix}.final_ln"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.input_w, self.input_b];
        for layer in &self.layers {
            ids.extend(layer.ids());
        }
        ids.extend(self.final_ln.ids());
        ids
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        features: &Array2<f64>,
        drop: &mut Dropout,
    ) -> Var {
        assert!(features.nrows() >= 1, "need at least one feature frame");
        let d = store.value(self.input_w).ncols();
        let x = tape.leaf(features.clone());
        let w = tape.param(store, self.input_w);
        let b = tape.param(store, self.input_b);
        let x = tape.matmul(x, w);
        let mut x = tape.add_bias(x, b);
        x = tape.add_const(x, &sinusoidal_positions(features.nrows(), d));
        for layer in &self.layers {
            x = layer.forward(tape, store, x, None, drop);
        }
        self.final_ln.forward(tape, store, x)
    }
}

/// Strided 1-d convolutions shortening the frame sequence before decoding;
/// each layer maps length T to ceil(T/stride). Implemented as unfold
/// followed by a dense projection.
#[derive(Debug, Clone)]
pub struct Bridge {
    pub layers: Vec<BridgeLayer>,
}

#[derive(Debug, Clone)]
pub struct BridgeLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub stride: usize,
}

impl Bridge {
    pub const KERNEL: usize = 3;

    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut R,
    ) -> Bridge {
        let d = dims.d_model;
        let layers = dims
            .bridge_strides
            .iter()
            .enumerate()
            .map(|(i, &stride)| BridgeLayer {
                w: store.add(
                    &format!("{prefix}.c{i}.w"),
                    uniform_init(rng, Self::KERNEL * d, d, Self::KERNEL * d),
                ),
                b: store.add(&format!("{prefix}.c{i}.b"), Array2::zeros((1, d))),
                kernel: Self::KERNEL,
                stride,
            })
            .collect();
        Bridge { layers }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        for (i, layer) in self.layers.iter().enumerate() {
            reg.record(&format!("{prefix}.c{i}.w"), layer.w);
            reg.record(&format!("{prefix}.c{i}.b"), layer.b);
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| vec![l.w, l.b]).collect()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, mut x: Var) -> Var {
        for layer in &self.layers {
            let u = tape.unfold_rows(x, layer.kernel, layer.stride, 1, 1);
            let w = tape.param(store, layer.w);
            let b = tape.param(store, layer.b);
            let y = tape.matmul(u, w);
            let y = tape.add_bias(y, b);
            x = tape.gelu(y);
        }
        x
    }
}

/// Speech encoder plus bridge: the shared front of every speech system.
#[derive(Debug, Clone)]
pub struct SpeechFront {
    pub encoder: SpeechEncoder,
    pub bridge: Bridge,
}

impl SpeechFront {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut R,
    ) -> SpeechFront {
        SpeechFront {
            encoder: SpeechEncoder::init(store, &format!("{prefix}.enc"), dims, rng),
            bridge: Bridge::init(store, &format!("{prefix}.bridge"), dims, rng),
        }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.encoder.record(reg, &format!("{prefix}.enc"));
        self.bridge.record(reg, &format!("{prefix}.bridge"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.encoder.ids();
        ids.extend(self.bridge.ids());
        ids
    }

    /// Features (T, feature_dim) to encoder states (T', d_model).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        features: &Array2<f64>,
        drop: &mut Dropout,
    ) -> Var {
        let x = self.encoder.forward(tape, store, features, drop);
        self.bridge.forward(tape, store, x)
    }
}

/// Token encoder for the translation components of cascade systems.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embedding: ParamId,
    pub layers: Vec<EncoderLayerParams>,
    pub final_ln: LayerNormParams,
}

impl TextEncoder {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut R,
    ) -> TextEncoder {
        let d = dims.d_model;
        let embedding = store.add(
            &format!("{prefix}.embed"),
            uniform_init(rng, dims.vocab, d, d),
        );
        let layers = (0..dims.n_enc_layers)
            .map(|i| {
                EncoderLayerParams::init(
                    store,
                    &format!("{prefix}.l{i}"),
                    d,
                    dims.n_heads,
                    dims.ffn_dim,
                    rng,
                )
            })
            .collect();
        let final_ln = LayerNormParams::init(store, &format!("{prefix}.final_ln"), d);
        TextEncoder { embedding, layers, final_ln }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        reg.record(&format!("{prefix}.embed"), self.embedding);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.record(reg, &format!("{prefix}.l{i}"));
        }
        self.final_ln.record(reg, &format!("{prefix}.final_ln"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding];
        for layer in &self.layers {
            ids.extend(layer.ids());
        }
        ids.extend(self.final_ln.ids());
        ids
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        tokens: &[usize],
        drop: &mut Dropout,
    ) -> Var {
        assert!(!tokens.is_empty(), "text encoder input must be non-empty");
        let d = store.value(self.embedding).ncols();
        let emb = tape.param(store, self.embedding);
        let x = tape.gather_rows(emb, tokens);
        let x = tape.scale(x, (d as f64).sqrt());
        let mut x = tape.add_const(x, &sinusoidal_positions(tokens.len(), d));
        for layer in &self.layers {
            x = layer.forward(tape, store, x, None, drop);
        }
        self.final_ln.forward(tape, store, x)
    }
}

/// Autoregressive decoder over the shared vocabulary; with
/// `with_first_pass` its layers carry the extra cross-attention over
/// first-pass decoder states.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub embedding: ParamId,
    pub layers: Vec<DecoderLayerParams>,
    pub final_ln: LayerNormParams,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl Decoder {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        with_first_pass: bool,
        rng: &mut R,
    ) -> Decoder {
        let d = dims.d_model;
        let embedding = store.add(
            &format!("{prefix}.embed"),
            uniform_init(rng, dims.vocab, d, d),
        );
        let layers = (0..dims.n_dec_layers)
            .map(|i| {
                DecoderLayerParams::init(
                    store,
                    &format!("{prefix}.l{i}"),
                    d,
                    dims.n_heads,
                    dims.ffn_dim,
                    with_first_pass,
                    rng,
                )
            })
            .collect();
        let final_ln = LayerNormParams::init(store, &format!("{prefix}.final_ln"), d);
        let out_w = store.add(&format!("{prefix}.out.w"), uniform_init(rng, d, dims.vocab, d));
        let out_b = store.add(&format!("{prefix}.out.b"), Array2::zeros((1, dims.vocab)));
        Decoder { embedding, layers, final_ln, out_w, out_b }
    }

    pub fn has_first_pass(&self) -> bool {
        self.layers.iter().any(|l| l.first_pass.is_some())
    }

    /// Records logical paths. `include_first_pass` false records only the
    /// sublayers exercised by a transcript pass; used for the transcript-pass
    /// view of a single shared decoder.
    pub fn record_view(&self, reg: &mut ParameterRegistry, prefix: &str, include_first_pass: bool) {
        reg.record(&format!("{prefix}.embed"), self.embedding);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.record(reg, &format!("{prefix}.l{i}"), include_first_pass);
        }
        self.final_ln.record(reg, &format!("{prefix}.final_ln"));
        reg.record(&format!("{prefix}.out.w"), self.out_w);
        reg.record(&format!("{prefix}.out.b"), self.out_b);
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.record_view(reg, prefix, true);
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding];
        for layer in &self.layers {
            ids.extend(layer.ids());
        }
        ids.extend(self.final_ln.ids());
        ids.push(self.out_w);
        ids.push(self.out_b);
        ids
    }

    /// Hidden states (after final normalization) for a teacher-forced prefix.
    /// These states are what a second pass attends to.
    pub fn states(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        tokens: &[usize],
        enc_states: Var,
        first_pass_states: Option<Var>,
        drop: &mut Dropout,
    ) -> Var {
        assert!(!tokens.is_empty(), "decoder prefix must be non-empty");
        let d = store.value(self.embedding).ncols();
        let emb = tape.param(store, self.embedding);
        let x = tape.gather_rows(emb, tokens);
        let x = tape.scale(x, (d as f64).sqrt());
        let mut x = tape.add_const(x, &sinusoidal_positions(tokens.len(), d));
        let mask = causal_mask(tokens.len());
        for layer in &self.layers {
            x = layer.forward(tape, store, x, enc_states, first_pass_states, &mask, drop);
        }
        self.final_ln.forward(tape, store, x)
    }

    pub fn logits_from_states(&self, tape: &mut Tape, store: &ParameterStore, states: Var) -> Var {
        let w = tape.param(store, self.out_w);
        let b = tape.param(store, self.out_b);
        let logits = tape.matmul(states, w);
        tape.add_bias(logits, b)
    }

    /// States and logits in one call.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        tokens: &[usize],
        enc_states: Var,
        first_pass_states: Option<Var>,
        drop: &mut Dropout,
    ) -> (Var, Var) {
        let states = self.states(tape, store, tokens, enc_states, first_pass_states, drop);
        let logits = self.logits_from_states(tape, store, states);
        (states, logits)
    }
}

/// Utterance-level language classifier: encoder body, mean pooling, linear
/// head over the two languages (index 0 = L1, index 1 = L2).
#[derive(Debug, Clone)]
pub struct LidClassifier {
    pub body: SpeechEncoder,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

impl LidClassifier {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut R,
    ) -> LidClassifier {
        let body = SpeechEncoder::init(store, &format!("{prefix}.enc"), dims, rng);
        let head_w = store.add(
            &format!("{prefix}.head.w"),
            uniform_init(rng, dims.d_model, 2, dims.d_model),
        );
        let head_b = store.add(&format!("{prefix}.head.b"), Array2::zeros((1, 2)));
        LidClassifier { body, head_w, head_b }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.body.record(reg, &format!("{prefix}.enc"));
        reg.record(&format!("{prefix}.head.w"), self.head_w);
        reg.record(&format!("{prefix}.head.b"), self.head_b);
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.body.ids();
        ids.push(self.head_w);
        ids.push(self.head_b);
        ids
    }

    /// Logits of shape (1, 2).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        features: &Array2<f64>,
        drop: &mut Dropout,
    ) -> Var {
        let states = self.body.forward(tape, store, features, drop);
        let pooled = tape.mean_rows(states);
        let w = tape.param(store, self.head_w);
        let b = tape.param(store, self.head_b);
        let logits = tape.matmul(pooled, w);
        tape.add_bias(logits, b)
    }

    /// Probability pair (L1, L2) for a feature matrix.
    pub fn probabilities(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        features: &Array2<f64>,
    ) -> (f64, f64) {
        let mut drop = Dropout::disabled();
        let logits = self.forward(tape, store, features, &mut drop);
        let probs = tape.softmax_rows(logits);
        let val = tape.value(probs);
        (val[[0, 0]], val[[0, 1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_dims() -> ModelDims {
        ModelDims {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_dim: 16,
            vocab: 12,
            feature_dim: 5,
            bridge_strides: vec![2, 2],
            dropout: 0.0,
        }
    }

    #[test]
    fn front_output_length_is_ceil_t_over_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        let dims = toy_dims();
        let front = SpeechFront::init(&mut store, "enc", &dims, &mut rng);
        let mut drop = Dropout::disabled();
        for (t, expect) in [(1usize, 1usize), (4, 1), (5, 2), (11, 3), (16, 4)] {
            let feats = uniform_init(&mut rng, t, dims.feature_dim, dims.feature_dim);
            let mut tape = Tape::eval();
            let states = front.forward(&mut tape, &store, &feats, &mut drop);
            assert_eq!(tape.value(states).dim(), (expect, dims.d_model), "T={t}");
        }
    }

    #[test]
    fn identity_stride_bridge_preserves_single_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        let mut dims = toy_dims();
        dims.bridge_strides = vec![1, 1];
        let front = SpeechFront::init(&mut store, "enc", &dims, &mut rng);
        let mut drop = Dropout::disabled();
        let feats = uniform_init(&mut rng, 1, dims.feature_dim, dims.feature_dim);
        let mut tape = Tape::eval();
        let states = front.forward(&mut tape, &store, &feats, &mut drop);
        assert_eq!(tape.value(states).dim(), (1, dims.d_model));
    }

    #[test]
    fn encoding_is_deterministic_and_independent_per_utterance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::new();
        let dims = toy_dims();
        let front = SpeechFront::init(&mut store, "enc", &dims, &mut rng);
        let mut drop = Dropout::disabled();
        let a = uniform_init(&mut rng, 6, dims.feature_dim, dims.feature_dim);
        let b = uniform_init(&mut rng, 9, dims.feature_dim, dims.feature_dim);
        let run = |feats: &Array2<f64>, store: &ParameterStore| {
            let mut tape = Tape::eval();
            let mut drop = Dropout::disabled();
            let s = front.forward(&mut tape, store, feats, &mut drop);
            tape.value(s).clone()
        };
        // Processing order cannot matter: each utterance is its own forward.
        let a_first = run(&a, &store);
        let _ = run(&b, &store);
        let a_second = run(&a, &store);
        assert_eq!(a_first, a_second);
        let mut tape = Tape::eval();
        let again = front.forward(&mut tape, &store, &a, &mut drop);
        assert_eq!(tape.value(again), &a_first);
    }

    #[test]
    fn decoder_causality_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParameterStore::new();
        let dims = toy_dims();
        let dec = Decoder::init(&mut store, "dec", &dims, false, &mut rng);
        let enc_val = uniform_init(&mut rng, 3, dims.d_model, dims.d_model);
        let mut drop = Dropout::disabled();
        let mut run = |tokens: &[usize]| {
            let mut tape = Tape::eval();
            let enc = tape.leaf(enc_val.clone());
            let (_, logits) = dec.forward(&mut tape, &store, tokens, enc, None, &mut drop);
            tape.value(logits).clone()
        };
        let base = run(&[3, 5, 7, 8]);
        // Changing the token at position 3 must leave logits at positions
        // 0..=2 bitwise unchanged.
        let changed = run(&[3, 5, 7, 11]);
        for pos in 0..3 {
            assert_eq!(base.row(pos), changed.row(pos), "position {pos}");
        }
        assert_ne!(base.row(3), changed.row(3));
    }

    #[test]
    fn lid_probabilities_sum_to_one_and_zero_head_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParameterStore::new();
        let dims = toy_dims();
        let lid = LidClassifier::init(&mut store, "lid", &dims, &mut rng);
        let feats = uniform_init(&mut rng, 7, dims.feature_dim, dims.feature_dim);
        let mut tape = Tape::eval();
        let (p1, p2) = lid.probabilities(&mut tape, &store, &feats);
        assert!((p1 + p2 - 1.0).abs() < 1e-6);
        // A zeroed head treats both languages identically.
        store.value_mut(lid.head_w).fill(0.0);
        let mut tape = Tape::eval();
        let (p1, p2) = lid.probabilities(&mut tape, &store, &feats);
        assert_eq!(p1, 0.5);
        assert_eq!(p2, 0.5);
    }

    #[test]
    fn text_encoder_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut store = ParameterStore::new();
        let dims = toy_dims();
        let enc = TextEncoder::init(&mut store, "mt.enc", &dims, &mut rng);
        let mut drop = Dropout::disabled();
        let mut tape = Tape::eval();
        let states = enc.forward(&mut tape, &store, &[7, 8, 9], &mut drop);
        assert_eq!(tape.value(states).dim(), (3, dims.d_model));
    }
}
