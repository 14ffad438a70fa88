//! Retrosynthesis evaluation metrics: exact-match top-K, MaxFrag top-K,
//! RoundTrip top-1, and per-class breakdowns.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::fingerprint::{ecfp, fold, FingerprintConfig};
use crate::learner::{beam_decode_features, ModelConfig, ParamVector, Prediction};
use crate::smiles::{canonicalize, canonical_string, largest_fragment, parse_smiles};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("K must be >= 1")]
    BadK,
    #[error("predictions and truths have different lengths")]
    LengthMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEval {
    pub n: usize,
    pub topk: BTreeMap<u32, f64>,
}

/// Per-client evaluation summary. Accuracies are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub n_evaluated: usize,
    pub topk: BTreeMap<u32, f64>,
    pub maxfrag_topk: BTreeMap<u32, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roundtrip_top1: Option<f64>,
    pub per_class: BTreeMap<String, ClassEval>,
}

/// Exact-match top-K: a record is a hit when any of the first K predictions
/// canonicalizes to the ground-truth canonical string. Unparseable
/// predictions never hit.
pub fn topk_accuracy(
    predictions: &[Vec<Prediction>],
    truths: &[String],
    k: u32,
) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::BadK);
    }
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch);
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(preds, truth)| hit_exact(preds, truth, k))
        .count();
    Ok(ratio(hits, truths.len()))
}

fn hit_exact(preds: &[Prediction], truth: &str, k: u32) -> bool {
    preds
        .iter()
        .take(k as usize)
        .any(|p| canonicalize(&p.smiles).is_ok_and(|c| c == truth))
}

/// MaxFrag top-K: compares only the largest fragment of prediction and truth.
pub fn maxfrag_accuracy(
    predictions: &[Vec<Prediction>],
    truths: &[String],
    k: u32,
) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::BadK);
    }
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch);
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(preds, truth)| match max_fragment_of(truth) {
            Some(truth_frag) => preds
                .iter()
                .take(k as usize)
                .any(|p| max_fragment_of(&p.smiles).is_some_and(|f| f == truth_frag)),
            None => false,
        })
        .count();
    Ok(ratio(hits, truths.len()))
}

fn max_fragment_of(smiles: &str) -> Option<String> {
    let mol = parse_smiles(smiles).ok()?;
    let frag = largest_fragment(&mol).ok()?;
    Some(canonical_string(&frag))
}

/// RoundTrip top-1: the forward oracle's top beam decode of the rank-1
/// predicted reactants must reproduce the original product.
pub fn roundtrip_accuracy(
    predictions: &[Vec<Prediction>],
    products: &[String],
    forward_model: &ParamVector,
    model_cfg: &ModelConfig,
    fp_cfg: &FingerprintConfig,
) -> Result<f64, MetricsError> {
    if predictions.len() != products.len() {
        return Err(MetricsError::LengthMismatch);
    }
    let hits = predictions
        .iter()
        .zip(products)
        .filter(|(preds, product)| {
            let Some(rank1) = preds.first() else {
                return false;
            };
            let Ok(reactants) = parse_smiles(&rank1.smiles) else {
                return false;
            };
            let fp = ecfp(&reactants, fp_cfg.radius, fp_cfg.nbits).expect("validated config");
            let features = fold(&fp, model_cfg.fp_dim).expect("fp_dim divides nbits").values;
            let forward = beam_decode_features(forward_model, &features, 1, 1, model_cfg);
            forward.first().is_some_and(|p| p.parseable && p.smiles == **product)
        })
        .count();
    Ok(ratio(hits, products.len()))
}

/// Top-K accuracy restricted to each class; classes with no test records are
/// absent from the map. Records without a class label are skipped.
pub fn per_class_breakdown(
    predictions: &[Vec<Prediction>],
    truths: &[String],
    classes: &[Option<String>],
    k: u32,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::BadK);
    }
    if predictions.len() != truths.len() || truths.len() != classes.len() {
        return Err(MetricsError::LengthMismatch);
    }
    let mut hit_count: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((preds, truth), class) in predictions.iter().zip(truths).zip(classes) {
        let Some(class) = class else { continue };
        let entry = hit_count.entry(class).or_insert((0, 0));
        entry.1 += 1;
        if hit_exact(preds, truth, k) {
            entry.0 += 1;
        }
    }
    Ok(hit_count
        .into_iter()
        .map(|(class, (hits, n))| (class.to_string(), ratio(hits, n)))
        .collect())
}

fn ratio(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Assemble the full evaluation summary for one client's test split.
pub fn evaluate(
    predictions: &[Vec<Prediction>],
    truths: &[String],
    classes: &[Option<String>],
    products: &[String],
    ks: &[u32],
    forward: Option<(&ParamVector, &ModelConfig, &FingerprintConfig)>,
) -> EvalResult {
    let mut topk = BTreeMap::new();
    let mut maxfrag_topk = BTreeMap::new();
    for &k in ks {
        topk.insert(k, topk_accuracy(predictions, truths, k).expect("validated ks"));
        maxfrag_topk.insert(k, maxfrag_accuracy(predictions, truths, k).expect("validated ks"));
    }
    let mut per_class: BTreeMap<String, ClassEval> = BTreeMap::new();
    for &k in ks {
        let by_class = per_class_breakdown(predictions, truths, classes, k).expect("validated ks");
        for (class, acc) in by_class {
            let n = classes.iter().filter(|c| c.as_deref() == Some(class.as_str())).count();
            per_class
                .entry(class)
                .or_insert_with(|| ClassEval { n, topk: BTreeMap::new() })
                .topk
                .insert(k, acc);
        }
    }
    let roundtrip_top1 = forward.map(|(params, model_cfg, fp_cfg)| {
        roundtrip_accuracy(predictions, products, params, model_cfg, fp_cfg)
            .expect("lengths checked")
    });
    EvalResult {
        n_evaluated: truths.len(),
        topk,
        maxfrag_topk,
        roundtrip_top1,
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(smiles: &str, rank: u32) -> Prediction {
        Prediction {
            smiles: smiles.to_string(),
            log_prob: -(rank as f64),
            rank,
            parseable: parse_smiles(smiles).is_ok(),
        }
    }

    fn ranked(list: &[&str]) -> Vec<Prediction> {
        list.iter().enumerate().map(|(i, s)| pred(s, i as u32 + 1)).collect()
    }

    #[test]
    fn rank_three_hit() {
        let truth = vec![canonicalize("CCO").unwrap()];
        let preds = vec![ranked(&["CCN", "CCC", "OCC"])];
        assert_eq!(topk_accuracy(&preds, &truth, 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&preds, &truth, 3).unwrap(), 1.0);
    }

    #[test]
    fn empty_prediction_list_misses() {
        let truth = vec![canonicalize("CCO").unwrap()];
        assert_eq!(topk_accuracy(&[vec![]], &truth, 5).unwrap(), 0.0);
    }

    #[test]
    fn non_canonical_prediction_still_hits() {
        let truth = vec![canonicalize("CCO").unwrap()];
        let preds = vec![ranked(&["OCC"])];
        assert_eq!(topk_accuracy(&preds, &truth, 1).unwrap(), 1.0);
    }

    #[test]
    fn unparseable_prediction_never_hits() {
        let truth = vec![canonicalize("CCO").unwrap()];
        let preds = vec![ranked(&["(("])];
        assert_eq!(topk_accuracy(&preds, &truth, 1).unwrap(), 0.0);
        assert_eq!(maxfrag_accuracy(&preds, &truth, 1).unwrap(), 0.0);
    }

    #[test]
    fn bad_k_rejected() {
        assert!(matches!(topk_accuracy(&[], &[], 0), Err(MetricsError::BadK)));
        assert!(matches!(maxfrag_accuracy(&[], &[], 0), Err(MetricsError::BadK)));
    }

    #[test]
    fn maxfrag_worked_example() {
        // exact miss but MaxFrag hit: largest fragments are both CC(=O)O
        let truth = vec![canonicalize("CC(=O)O.CCO").unwrap()];
        let preds = vec![ranked(&["CC(=O)O.CCN"])];
        assert_eq!(topk_accuracy(&preds, &truth, 1).unwrap(), 0.0);
        assert_eq!(maxfrag_accuracy(&preds, &truth, 1).unwrap(), 1.0);
    }

    #[test]
    fn exact_match_implies_maxfrag() {
        let truth = vec![canonicalize("CC(=O)O.CCO").unwrap()];
        let preds = vec![ranked(&["OCC.CC(=O)O"])];
        assert_eq!(topk_accuracy(&preds, &truth, 1).unwrap(), 1.0);
        assert_eq!(maxfrag_accuracy(&preds, &truth, 1).unwrap(), 1.0);
    }

    #[test]
    fn single_fragment_maxfrag_equals_exact() {
        let truths = vec![canonicalize("CCO").unwrap(), canonicalize("CCN").unwrap()];
        let preds = vec![ranked(&["CCO"]), ranked(&["CCC"])];
        for k in [1, 3] {
            assert_eq!(
                topk_accuracy(&preds, &truths, k).unwrap(),
                maxfrag_accuracy(&preds, &truths, k).unwrap()
            );
        }
    }

    #[test]
    fn monotone_in_k_and_maxfrag_dominates() {
        let truths = vec![
            canonicalize("CC(=O)O.CCO").unwrap(),
            canonicalize("CCN").unwrap(),
            canonicalize("CCCC").unwrap(),
        ];
        let preds = vec![
            ranked(&["CC(=O)O.CCN", "CC(=O)O.CCO", "C"]),
            ranked(&["CCC", "CCN", "N"]),
            ranked(&["C", "N", "O"]),
        ];
        let mut last_exact = 0.0;
        let mut last_maxfrag = 0.0;
        for k in [1u32, 2, 3] {
            let e = topk_accuracy(&preds, &truths, k).unwrap();
            let m = maxfrag_accuracy(&preds, &truths, k).unwrap();
            assert!(e >= last_exact && m >= last_maxfrag);
            assert!(m >= e, "maxfrag must dominate at k={k}");
            last_exact = e;
            last_maxfrag = m;
        }
    }

    #[test]
    fn per_class_partitions_global() {
        let truths: Vec<String> = ["CCO", "CCN", "CCC", "CCCC"]
            .iter()
            .map(|s| canonicalize(s).unwrap())
            .collect();
        let preds = vec![
            ranked(&["CCO"]),
            ranked(&["X"]),
            ranked(&["CCC"]),
            ranked(&["CCCC"]),
        ];
        let classes: Vec<Option<String>> =
            ["a", "a", "b", "b"].iter().map(|s| Some(s.to_string())).collect();
        let by_class = per_class_breakdown(&preds, &truths, &classes, 1).unwrap();
        assert_eq!(by_class["a"], 0.5);
        assert_eq!(by_class["b"], 1.0);
        // class-weighted mean reassembles the global metric
        let n_a = 2.0;
        let n_b = 2.0;
        let global = topk_accuracy(&preds, &truths, 1).unwrap();
        let hits = (by_class["a"] * n_a).round() + (by_class["b"] * n_b).round();
        assert_eq!(hits / 4.0, global);
    }

    #[test]
    fn empty_class_omitted() {
        let truths = vec![canonicalize("CCO").unwrap()];
        let preds = vec![ranked(&["CCO"])];
        let classes = vec![Some("x".to_string())];
        let by_class = per_class_breakdown(&preds, &truths, &classes, 1).unwrap();
        assert_eq!(by_class.len(), 1);
        assert!(by_class.contains_key("x"));
    }

    #[test]
    fn naive_oracle_equivalence() {
        // brute-force string comparison over a small synthetic set
        let pool = ["CCO", "CCN", "CC(=O)O.CCO", "C", "CCCC.N"];
        let truths: Vec<String> =
            pool.iter().cycle().take(25).map(|s| canonicalize(s).unwrap()).collect();
        let preds: Vec<Vec<Prediction>> = (0..25)
            .map(|i| {
                let options = [pool[i % 5], pool[(i + 1) % 5], pool[(i + 2) % 5]];
                ranked(&options[..(i % 3) + 1])
            })
            .collect();
        for k in [1u32, 2, 3] {
            let naive = truths
                .iter()
                .zip(&preds)
                .filter(|(t, ps)| {
                    ps.iter().take(k as usize).any(|p| {
                        canonicalize(&p.smiles).map(|c| c == **t).unwrap_or(false)
                    })
                })
                .count() as f64
                / 25.0;
            assert_eq!(topk_accuracy(&preds, &truths, k).unwrap(), naive);
        }
    }
}
