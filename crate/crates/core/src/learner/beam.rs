//! Length-unnormalized beam search over the decoder, with canonicalization
//! and duplicate merging of the final candidates.

use std::collections::BTreeMap;

use crate::fingerprint::{ecfp, fold, FingerprintConfig};
use crate::smiles::{canonicalize, MolGraph};

use super::model::Decoder;
use super::{ModelConfig, ParamVector, TokenId, BOS_ID, EOS_ID, PAD_ID};

/// One ranked reactant-set hypothesis. `smiles` is canonical whenever
/// `parseable` is true; otherwise it is the raw decoded string.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub smiles: String,
    pub log_prob: f64,
    pub rank: u32,
    pub parseable: bool,
}

#[derive(Clone)]
struct Beam {
    tokens: Vec<TokenId>,
    log_prob: f64,
    done: bool,
}

/// Beam-decode reactants for a product molecule. Fingerprinting uses
/// `fp_cfg`; the folded dimension comes from `cfg.fp_dim`.
pub fn beam_decode(
    params: &ParamVector,
    product: &MolGraph,
    beam_width: usize,
    topn: usize,
    cfg: &ModelConfig,
    fp_cfg: &FingerprintConfig,
) -> Vec<Prediction> {
    let fp = ecfp(product, fp_cfg.radius, fp_cfg.nbits).expect("validated fingerprint config");
    let features = fold(&fp, cfg.fp_dim).expect("fp_dim divides nbits").values;
    beam_decode_features(params, &features, beam_width, topn, cfg)
}

/// Beam-decode from precomputed folded features.
pub fn beam_decode_features(
    params: &ParamVector,
    features: &[f64],
    beam_width: usize,
    topn: usize,
    cfg: &ModelConfig,
) -> Vec<Prediction> {
    assert!(beam_width >= topn && topn >= 1, "need beam_width >= topn >= 1");
    let decoder = Decoder::new(params, features, cfg);
    let v = decoder.vocab_size();

    let mut beams = vec![Beam { tokens: Vec::new(), log_prob: 0.0, done: false }];
    let mut log_probs = Vec::with_capacity(v);
    // Candidate pool reused per step: (beam index, appended token or None).
    for _ in 0..cfg.max_len {
        if beams.iter().all(|b| b.done) {
            break;
        }
        let mut candidates: Vec<(f64, usize, Option<TokenId>)> = Vec::new();
        for (bi, beam) in beams.iter().enumerate() {
            if beam.done {
                candidates.push((beam.log_prob, bi, None));
                continue;
            }
            let last = beam.tokens.len();
            let prev1 = if last == 0 { BOS_ID } else { beam.tokens[last - 1] };
            let prev2 = match last {
                0 => PAD_ID,
                1 => BOS_ID,
                _ => beam.tokens[last - 2],
            };
            decoder.log_probs(prev1, prev2, &mut log_probs);
            for t in 0..v as TokenId {
                // PAD and BOS are structural markers, never generated.
                if t == PAD_ID || t == BOS_ID {
                    continue;
                }
                candidates.push((beam.log_prob + log_probs[t as usize], bi, Some(t)));
            }
        }
        // Deterministic order: score descending, then beam index and token id.
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(beam_width);

        beams = candidates
            .into_iter()
            .map(|(score, bi, tok)| match tok {
                None => beams[bi].clone(),
                Some(t) => {
                    let mut tokens = beams[bi].tokens.clone();
                    let done = t == EOS_ID;
                    if !done {
                        tokens.push(t);
                    }
                    Beam { tokens, log_prob: score, done }
                }
            })
            .collect();
    }

    // Canonicalize, merge duplicates keeping the best score.
    let mut merged: BTreeMap<String, (f64, bool)> = BTreeMap::new();
    for beam in &beams {
        let raw = cfg.vocab.decode(&beam.tokens);
        let (text, parseable) = match canonicalize(&raw) {
            Ok(c) => (c, true),
            Err(_) => (raw, false),
        };
        merged
            .entry(text)
            .and_modify(|e| {
                if beam.log_prob > e.0 {
                    *e = (beam.log_prob, parseable);
                }
            })
            .or_insert((beam.log_prob, parseable));
    }
    let mut ranked: Vec<(String, f64, bool)> =
        merged.into_iter().map(|(s, (lp, ok))| (s, lp, ok)).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(topn);
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (smiles, log_prob, parseable))| Prediction {
            smiles,
            log_prob,
            rank: i as u32 + 1,
            parseable,
        })
        .collect()
}
