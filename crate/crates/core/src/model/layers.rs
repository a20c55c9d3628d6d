//! Layer library: pre-norm attention blocks shared by every component.
//!
//! Structs here hold parameter ids, never values; forwards fetch values from
//! the store through a tape so gradients flow back into canonical storage.
//! Sharing a layer between two components is therefore just holding two
//! copies of the same id-struct.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::nn::store::uniform_init;
use crate::nn::{ParamId, ParameterRegistry, ParameterStore, Tape, Var};

pub const LN_EPS: f64 = 1e-5;
/// Additive mask value. Large enough that exp underflows to exactly zero
/// after max subtraction, making causality exact rather than approximate.
pub const MASK_NEG: f64 = -1e9;

/// Strictly-upper-triangular causal mask for self-attention over n positions.
pub fn causal_mask(n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            m[[i, j]] = MASK_NEG;
        }
    }
    m
}

/// Fixed sinusoidal position table, (len, d).
pub fn sinusoidal_positions(len: usize, d: usize) -> Array2<f64> {
    let mut table = Array2::zeros((len, d));
    for pos in 0..len {
        for i in 0..d {
            let exponent = 2.0 * (i / 2) as f64 / d as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            table[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    table
}

/// Residual dropout context threaded through forwards. Disabled (rate 0)
/// outside training; with rate 0 `apply` is the identity and touches no
/// randomness.
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn disabled() -> Dropout {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, seed: u64) -> Dropout {
        assert!((0.0..1.0).contains(&rate));
        if rate == 0.0 {
            Dropout::disabled()
        } else {
            Dropout { rate, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
        }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        match &mut self.rng {
            None => x,
            Some(rng) => tape.dropout(x, self.rate, rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn init(store: &mut ParameterStore, prefix: &str, d: usize) -> LayerNormParams {
        LayerNormParams {
            gamma: store.add(&format!("{prefix}.gamma"), Array2::from_elem((1, d), 1.0)),
            beta: store.add(&format!("{prefix}.beta"), Array2::zeros((1, d))),
        }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        reg.record(&format!("{prefix}.gamma"), self.gamma);
        reg.record(&format!("{prefix}.beta"), self.beta);
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Var {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        tape.layer_norm(x, gamma, beta, LN_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub n_heads: usize,
}

impl AttentionParams {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        d: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> AttentionParams {
        let mut proj = |store: &mut ParameterStore, name: &str| {
            store.add(&format!("{prefix}.{name}"), uniform_init(rng, d, d, d))
        };
        let wq = proj(store, "wq");
        let wk = proj(store, "wk");
        let wv = proj(store, "wv");
        let wo = proj(store, "wo");
        let bias = |store: &mut ParameterStore, name: &str| {
            store.add(&format!("{prefix}.{name}"), Array2::zeros((1, d)))
        };
        let bq = bias(store, "bq");
        let bk = bias(store, "bk");
        let bv = bias(store, "bv");
        let bo = bias(store, "bo");
        AttentionParams { wq, bq, wk, bk, wv, bv, wo, bo, n_heads }
    }

    /// New tensors initialized as byte-exact copies of another attention
    /// block's current values. Storage is separate: the copies diverge from
    /// the source as soon as training updates either.
    pub fn init_copy_of(
        store: &mut ParameterStore,
        prefix: &str,
        source: &AttentionParams,
    ) -> AttentionParams {
        let copy = |store: &mut ParameterStore, name: &str, from: ParamId| {
            let value = store.value(from).clone();
            store.add(&format!("{prefix}.{name}"), value)
        };
        AttentionParams {
            wq: copy(store, "wq", source.wq),
            bq: copy(store, "bq", source.bq),
            wk: copy(store, "wk", source.wk),
            bk: copy(store, "bk", source.bk),
            wv: copy(store, "wv", source.wv),
            bv: copy(store, "bv", source.bv),
            wo: copy(store, "wo", source.wo),
            bo: copy(store, "bo", source.bo),
            n_heads: source.n_heads,
        }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        for (name, id) in self.named_ids() {
            reg.record(&format!("{prefix}.{name}"), id);
        }
    }

    pub fn named_ids(&self) -> Vec<(&'static str, ParamId)> {
        vec![
            ("wq", self.wq),
            ("bq", self.bq),
            ("wk", self.wk),
            ("bk", self.bk),
            ("wv", self.wv),
            ("bv", self.bv),
            ("wo", self.wo),
            ("bo", self.bo),
        ]
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.named_ids().into_iter().map(|(_, id)| id).collect()
    }

    /// Multi-head attention of `query_input` over `kv_input`, optional
    /// additive mask on the score matrix.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        query_input: Var,
        kv_input: Var,
        mask: Option<&Array2<f64>>,
    ) -> Var {
        let d = store.value(self.wq).nrows();
        let head_dim = d / self.n_heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let wq = tape.param(store, self.wq);
        let wk = tape.param(store, self.wk);
        let wv = tape.param(store, self.wv);
        let bq = tape.param(store, self.bq);
        let bk = tape.param(store, self.bk);
        let bv = tape.param(store, self.bv);
        let q = tape.matmul(query_input, wq);
        let q = tape.add_bias(q, bq);
        let k = tape.matmul(kv_input, wk);
        let k = tape.add_bias(k, bk);
        let v = tape.matmul(kv_input, wv);
        let v = tape.add_bias(v, bv);
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = tape.slice_cols(q, h * head_dim, head_dim);
            let kh = tape.slice_cols(k, h * head_dim, head_dim);
            let vh = tape.slice_cols(v, h * head_dim, head_dim);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, scale);
            let scores = match mask {
                Some(m) => tape.add_const(scores, m),
                None => scores,
            };
            let probs = tape.softmax_rows(scores);
            heads.push(tape.matmul(probs, vh));
        }
        let merged = tape.concat_cols(&heads);
        let wo = tape.param(store, self.wo);
        let bo = tape.param(store, self.bo);
        let out = tape.matmul(merged, wo);
        tape.add_bias(out, bo)
    }
}

#[derive(Debug, Clone)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FfnParams {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        d: usize,
        ffn_dim: usize,
        rng: &mut R,
    ) -> FfnParams {
        FfnParams {
            w1: store.add(&format!("{prefix}.w1"), uniform_init(rng, d, ffn_dim, d)),
            b1: store.add(&format!("{prefix}.b1"), Array2::zeros((1, ffn_dim))),
            w2: store.add(&format!("{prefix}.w2"), uniform_init(rng, ffn_dim, d, ffn_dim)),
            b2: store.add(&format!("{prefix}.b2"), Array2::zeros((1, d))),
        }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        reg.record(&format!("{prefix}.w1"), self.w1);
        reg.record(&format!("{prefix}.b1"), self.b1);
        reg.record(&format!("{prefix}.w2"), self.w2);
        reg.record(&format!("{prefix}.b2"), self.b2);
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Var {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(x, w1);
        let h = tape.add_bias(h, b1);
        let h = tape.gelu(h);
        let out = tape.matmul(h, w2);
        tape.add_bias(out, b2)
    }
}

/// Pre-norm encoder layer: self-attention then feed-forward, each behind a
/// residual connection.
#[derive(Debug, Clone)]
pub struct EncoderLayerParams {
    pub ln_self: LayerNormParams,
    pub self_attn: AttentionParams,
    pub ln_ffn: LayerNormParams,
    pub ffn: FfnParams,
}

impl EncoderLayerParams {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        d: usize,
        n_heads: usize,
        ffn_dim: usize,
        rng: &mut R,
    ) -> EncoderLayerParams {
        EncoderLayerParams {
            ln_self: LayerNormParams::init(store, &format!("{prefix}.self_attn.ln"), d),
            self_attn: AttentionParams::init(store, &format!("{prefix}.self_attn"), d, n_heads, rng),
            ln_ffn: LayerNormParams::init(store, &format!("{prefix}.ffn.ln"), d),
            ffn: FfnParams::init(store, &format!("{prefix}.ffn"), d, ffn_dim, rng),
        }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str) {
        self.ln_self.record(reg, &format!("{prefix}.self_attn.ln"));
        self.self_attn.record(reg, &format!("{prefix}.self_attn"));
        self.ln_ffn.record(reg, &format!("{prefix}.ffn.ln"));
        self.ffn.record(reg, &format!("{prefix}.ffn"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.ln_self.ids();
        ids.extend(self.self_attn.ids());
        ids.extend(self.ln_ffn.ids());
        ids.extend(self.ffn.ids());
        ids
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        mask: Option<&Array2<f64>>,
        drop: &mut Dropout,
    ) -> Var {
        let normed = self.ln_self.forward(tape, store, x);
        let attn = self.self_attn.forward(tape, store, normed, normed, mask);
        let attn = drop.apply(tape, attn);
        let x = tape.add(x, attn);
        let normed = self.ln_ffn.forward(tape, store, x);
        let ffn = self.ffn.forward(tape, store, normed);
        let ffn = drop.apply(tape, ffn);
        tape.add(x, ffn)
    }
}

/// The added cross-attention sublayer of the two-pass decoder, attending
/// over first-pass decoder states.
#[derive(Debug, Clone)]
pub struct FirstPassAttention {
    pub ln: LayerNormParams,
    pub attn: AttentionParams,
}

/// Pre-norm decoder layer. Sublayer order: causal self-attention, attention
/// over encoder states, optionally attention over first-pass decoder states,
/// feed-forward. When the layer has the first-pass sublayer but no first-pass
/// states are supplied, that sublayer is bypassed (identity residual), which
/// is how a single shared decoder runs its transcript pass.
#[derive(Debug, Clone)]
pub struct DecoderLayerParams {
    pub ln_self: LayerNormParams,
    pub self_attn: AttentionParams,
    pub ln_enc: LayerNormParams,
    pub enc_attn: AttentionParams,
    pub first_pass: Option<FirstPassAttention>,
    pub ln_ffn: LayerNormParams,
    pub ffn: FfnParams,
}

impl DecoderLayerParams {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        d: usize,
        n_heads: usize,
        ffn_dim: usize,
        with_first_pass: bool,
        rng: &mut R,
    ) -> DecoderLayerParams {
        let ln_self = LayerNormParams::init(store, &format!("{prefix}.self_attn.ln"), d);
        let self_attn = AttentionParams::init(store, &format!("{prefix}.self_attn"), d, n_heads, rng);
        let ln_enc = LayerNormParams::init(store, &format!("{prefix}.enc_attn.ln"), d);
        let enc_attn = AttentionParams::init(store, &format!("{prefix}.enc_attn"), d, n_heads, rng);
        let first_pass = with_first_pass.then(|| FirstPassAttention {
            ln: LayerNormParams::init(store, &format!("{prefix}.first_dec_attn.ln"), d),
            attn: AttentionParams::init_copy_of(
                store,
                &format!("{prefix}.first_dec_attn"),
                &enc_attn,
            ),
        });
        DecoderLayerParams {
            ln_self,
            self_attn,
            ln_enc,
            enc_attn,
            first_pass,
            ln_ffn: LayerNormParams::init(store, &format!("{prefix}.ffn.ln"), d),
            ffn: FfnParams::init(store, &format!("{prefix}.ffn"), d, ffn_dim, rng),
        }
    }

    pub fn record(&self, reg: &mut ParameterRegistry, prefix: &str, include_first_pass: bool) {
        self.ln_self.record(reg, &format!("{prefix}.self_attn.ln"));
        self.self_attn.record(reg, &format!("{prefix}.self_attn"));
        self.ln_enc.record(reg, &format!("{prefix}.enc_attn.ln"));
        self.enc_attn.record(reg, &format!("{prefix}.enc_attn"));
        if include_first_pass {
            if let Some(fp) = &self.first_pass {
                fp.ln.record(reg, &format!("{prefix}.first_dec_attn.ln"));
                fp.attn.record(reg, &format!("{prefix}.first_dec_attn"));
            }
        }
        self.ln_ffn.record(reg, &format!("{prefix}.ffn.ln"));
        self.ffn.record(reg, &format!("{prefix}.ffn"));
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.ln_self.ids();
        ids.extend(self.self_attn.ids());
        ids.extend(self.ln_enc.ids());
        ids.extend(self.enc_attn.ids());
        if let Some(fp) = &self.first_pass {
            ids.extend(fp.ln.ids());
            ids.extend(fp.attn.ids());
        }
        ids.extend(self.ln_ffn.ids());
        ids.extend(self.ffn.ids());
        ids
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        enc_states: Var,
        first_pass_states: Option<Var>,
        causal: &Array2<f64>,
        drop: &mut Dropout,
    ) -> Var {
        let normed = self.ln_self.forward(tape, store, x);
        let attn = self.self_attn.forward(tape, store, normed, normed, Some(causal));
        let attn = drop.apply(tape, attn);
        let x = tape.add(x, attn);
        let normed = self.ln_enc.forward(tape, store, x);
        let attn = self.enc_attn.forward(tape, store, normed, enc_states, None);
        let attn = drop.apply(tape, attn);
        let mut x = tape.add(x, attn);
        if let Some(states) = first_pass_states {
            let fp = self
                .first_pass
                .as_ref()
                .expect("first-pass states supplied to a decoder layer without that sublayer");
            let normed = fp.ln.forward(tape, store, x);
            let attn = fp.attn.forward(tape, store, normed, states, None);
            let attn = drop.apply(tape, attn);
            x = tape.add(x, attn);
        }
        let normed = self.ln_ffn.forward(tape, store, x);
        let ffn = self.ffn.forward(tape, store, normed);
        let ffn = drop.apply(tape, ffn);
        tape.add(x, ffn)
    }
}
