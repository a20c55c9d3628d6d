//! Model hyperparameters and the seven architecture variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::vocab::NUM_CONTROL_TOKENS;
use super::ModelError;

/// Layer dimensions shared by every component of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_dim: usize,
    /// Vocabulary size including control tokens.
    pub vocab: usize,
    /// Width of the input feature frames.
    pub feature_dim: usize,
    /// Strides of the convolutional bridge layers; `[2, 2]` subsamples by 4,
    /// `[1]` keeps the input length.
    pub bridge_strides: Vec<usize>,
    pub dropout: f64,
}

impl ModelDims {
    /// Smallest useful configuration, for gradient checks and fast tests.
    pub fn toy(vocab: usize, feature_dim: usize) -> ModelDims {
        ModelDims {
            d_model: 32,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_dim: 64,
            vocab,
            feature_dim,
            bridge_strides: vec![2, 2],
            dropout: 0.0,
        }
    }

    /// Configuration for the desk-scale experiment runs.
    pub fn desk(vocab: usize, feature_dim: usize) -> ModelDims {
        ModelDims {
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_dim: 128,
            vocab,
            feature_dim,
            bridge_strides: vec![2, 2],
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 {
            return Err(ModelError::InvalidDims("d_model and n_heads must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::InvalidDims(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_enc_layers == 0 || self.n_dec_layers == 0 {
            return Err(ModelError::InvalidDims("need at least one layer per stack".into()));
        }
        if self.ffn_dim == 0 || self.feature_dim == 0 {
            return Err(ModelError::InvalidDims("ffn_dim and feature_dim must be positive".into()));
        }
        if self.vocab <= NUM_CONTROL_TOKENS {
            return Err(ModelError::InvalidDims(format!(
                "vocab {} leaves no room for words beyond the {} control tokens",
                self.vocab, NUM_CONTROL_TOKENS
            )));
        }
        if self.bridge_strides.is_empty() || self.bridge_strides.iter().any(|&s| s == 0) {
            return Err(ModelError::InvalidDims("bridge strides must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidDims(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Encoder state count after bridge subsampling of a T-frame input.
    pub fn bridged_len(&self, t: usize) -> usize {
        self.bridge_strides.iter().fold(t, |len, &s| len.div_ceil(s))
    }
}

/// The seven system layouts, ordered within each family from least to most
/// parameter sharing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArchitectureKind {
    /// Two disjoint single-language cascades behind a language classifier.
    #[serde(rename = "cascade-unidirect")]
    CascadeUnidirect,
    /// One shared speech encoder; per-language recognition decoders and
    /// translation stacks, behind a language classifier.
    #[serde(rename = "cascade-uni-shared-enc")]
    CascadeUniSharedEnc,
    /// One bilingual recognizer feeding one bilingual translator.
    #[serde(rename = "cascade-bidirect")]
    CascadeBidirect,
    /// Two disjoint single-language two-pass models behind a classifier.
    #[serde(rename = "e2e-unidirect")]
    E2EUnidirect,
    /// Shared speech encoder; per-language decoder pairs, behind a
    /// classifier.
    #[serde(rename = "e2e-bidirect-by-lang")]
    E2EBidirectByLang,
    /// One encoder, one bilingual transcript decoder, one bilingual
    /// translation decoder.
    #[serde(rename = "e2e-bidirect-by-task")]
    E2EBidirectByTask,
    /// One encoder and a single decoder whose parameters serve both passes.
    #[serde(rename = "e2e-bidirect-shared")]
    E2EBidirectShared,
}

pub use ArchitectureKind::*;

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 7] = [
        CascadeUnidirect,
        CascadeUniSharedEnc,
        CascadeBidirect,
        E2EUnidirect,
        E2EBidirectByLang,
        E2EBidirectByTask,
        E2EBidirectShared,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CascadeUnidirect => "cascade-unidirect",
            CascadeUniSharedEnc => "cascade-uni-shared-enc",
            CascadeBidirect => "cascade-bidirect",
            E2EUnidirect => "e2e-unidirect",
            E2EBidirectByLang => "e2e-bidirect-by-lang",
            E2EBidirectByTask => "e2e-bidirect-by-task",
            E2EBidirectShared => "e2e-bidirect-shared",
        }
    }

    pub fn is_cascade(self) -> bool {
        matches!(self, CascadeUnidirect | CascadeUniSharedEnc | CascadeBidirect)
    }

    /// Whether inference routes by a language-identification decision. The
    /// bidirectional single-stack kinds pick the language themselves via the
    /// predicted language token.
    pub fn uses_lid(self) -> bool {
        matches!(
            self,
            CascadeUnidirect | CascadeUniSharedEnc | E2EUnidirect | E2EBidirectByLang
        )
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchitectureKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, ModelError> {
        ArchitectureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::UnknownArchitecture(s.to_string()))
    }
}
