//! A small fingerprint-conditioned autoregressive token decoder.
//!
//! The model is deliberately tiny: `h_t = tanh(A·fp + B·emb(y_{t-1}) +
//! C·emb(y_{t-2}) + b)`, `logits_t = U·h_t + c`. It has exact reverse-mode
//! gradients (checked against finite differences), trains with Adam, and
//! decodes with beam search. Federation treats it opaquely as a
//! [`ParamVector`], so a heavier model can be swapped in behind the same
//! interface.

mod adam;
mod beam;
mod model;
mod params;
mod train;

pub use adam::{adam_step, OptimizerState};
pub use beam::{beam_decode, beam_decode_features, Prediction};
pub use model::{loss_and_grad, TrainExample};
pub use params::{init_params, ParamVector, Segment};
pub use train::{train_local, TrainSpec, TrainStats};

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::smiles::{TokenSeq, BOS, EOS, PAD, SEP, UNK};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LearnerError {
    #[error("parameter vectors have different layouts")]
    LayoutMismatch,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad checkpoint bytes: {0}")]
    BadCheckpoint(String),
}

/// Token id type; the vocabulary easily fits in 16 bits but ids are carried
/// as u32 for indexing convenience.
pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const UNK_ID: TokenId = 3;

/// Fixed global token vocabulary, enumerated from the SMILES grammar rather
/// than from any dataset: clients must share one layout without pooling data.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocab {
    /// The standard vocabulary: specials, the organic subset, bond and
    /// structure symbols, ring-closure digits, and a grammar-enumerated set
    /// of common bracket-atom forms. Anything else encodes as `<unk>`.
    pub fn standard() -> Vocab {
        let mut tokens: Vec<String> =
            vec![PAD.into(), BOS.into(), EOS.into(), UNK.into(), SEP.into()];
        for t in ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"] {
            tokens.push(t.into());
        }
        for t in ["b", "c", "n", "o", "p", "s"] {
            tokens.push(t.into());
        }
        for t in ["-", "=", "#", ":", "/", "\\", "(", ")"] {
            tokens.push(t.into());
        }
        for d in 1..=9 {
            tokens.push(d.to_string());
        }
        for d in 10..=19 {
            tokens.push(format!("%{d}"));
        }
        let symbols = [
            "B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "b", "c", "n", "o", "p", "s",
        ];
        for sym in symbols {
            for form in [
                format!("[{sym}]"),
                format!("[{sym}H]"),
                format!("[{sym}H2]"),
                format!("[{sym}H3]"),
                format!("[{sym}+]"),
                format!("[{sym}-]"),
                format!("[{sym}H+]"),
                format!("[{sym}H-]"),
                format!("[{sym}@H]"),
                format!("[{sym}@@H]"),
                format!("[{sym}@]"),
                format!("[{sym}@@]"),
            ] {
                tokens.push(form);
            }
        }
        for t in ["[H]", "[H+]", "[H-]"] {
            tokens.push(t.into());
        }
        Vocab::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let prev = index.insert(t.clone(), i as TokenId);
            assert!(prev.is_none(), "duplicate vocabulary token {t}");
        }
        Vocab { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    /// Encode a token sequence for the learner: unknown tokens map to
    /// `<unk>`, and the sequence is clipped so that it plus its EOS fits in
    /// `max_len` prediction steps.
    pub fn encode_clipped(&self, seq: &TokenSeq, max_len: usize) -> Vec<TokenId> {
        let keep = max_len.saturating_sub(1);
        seq.tokens().iter().take(keep).map(|t| self.id(t)).collect()
    }

    /// Decode content ids back to a string; specials are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id != PAD_ID && id != BOS_ID && id != EOS_ID)
            .map(|&id| self.token(id))
            .collect()
    }
}

/// Model shape; must be identical across all clients of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab: Arc<Vocab>,
    pub fp_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab: Arc::new(Vocab::standard()),
            fp_dim: 256,
            embed_dim: 32,
            hidden_dim: 64,
            max_len: 160,
        }
    }
}

impl ModelConfig {
    pub fn vocab_size(&self) -> usize {
        self.vocab.size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::tokenize;

    #[test]
    fn standard_vocab_has_reserved_ids() {
        let v = Vocab::standard();
        assert_eq!(v.id(PAD), PAD_ID);
        assert_eq!(v.id(BOS), BOS_ID);
        assert_eq!(v.id(EOS), EOS_ID);
        assert_eq!(v.id(UNK), UNK_ID);
        assert_eq!(v.token(v.id(".")), ".");
        assert!(v.size() > 200);
    }

    #[test]
    fn common_tokens_are_known() {
        let v = Vocab::standard();
        for t in ["C", "Cl", "Br", "c", "(", ")", "=", "1", "%12", "[nH]", "[O-]", "[C@@H]"] {
            assert_ne!(v.id(t), UNK_ID, "token {t}");
        }
        assert_eq!(v.id("[Fe]"), UNK_ID);
    }

    #[test]
    fn encode_round_trip() {
        let v = Vocab::standard();
        let seq = tokenize("CC(=O)OCC").unwrap();
        let ids = v.encode_clipped(&seq, 160);
        assert_eq!(v.decode(&ids), "CC(=O)OCC");
    }

    #[test]
    fn encode_clips_to_max_len() {
        let v = Vocab::standard();
        let seq = tokenize(&"C".repeat(500)).unwrap();
        let ids = v.encode_clipped(&seq, 160);
        assert_eq!(ids.len(), 159);
    }

    #[test]
    fn unknown_tokens_become_unk() {
        let v = Vocab::standard();
        let seq = tokenize("C[13CH3]C").unwrap();
        let ids = v.encode_clipped(&seq, 160);
        assert_eq!(ids[1], UNK_ID);
        assert_eq!(v.decode(&ids), format!("C{UNK}C"));
    }
}
