//! A simulated chemical entity. Reaction data stays inside the node; the
//! public surface exchanges parameter vectors and aggregate metrics only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{ReactionDataset, ReactionRecord, Split};
use crate::fingerprint::{ecfp, fold, tanimoto, BitFingerprint, FingerprintConfig};
use crate::hash::derive_seed;
use crate::learner::{
    beam_decode_features, train_local, ModelConfig, ParamVector, Prediction, TrainExample,
    TrainSpec,
};
use crate::metrics::{evaluate, EvalResult};
use crate::smiles::{canonicalize, parse_smiles, tokenize};

use super::{FedConfig, FedError};

/// Folded product fingerprint; unparseable products (contaminated data) get
/// all-zero features rather than aborting.
fn product_features(product: &str, model_cfg: &ModelConfig, fp_cfg: &FingerprintConfig) -> Vec<f64> {
    match parse_smiles(product) {
        Ok(mol) => {
            let fp = ecfp(&mol, fp_cfg.radius, fp_cfg.nbits).expect("validated config");
            fold(&fp, model_cfg.fp_dim).expect("fp_dim divides nbits").values
        }
        Err(_) => vec![0.0; model_cfg.fp_dim],
    }
}

/// Turn reaction records into learner examples (product features → reactant
/// token ids). Shared by clients and the pooled central baseline.
pub fn prepare_train_examples(
    records: &[&ReactionRecord],
    model_cfg: &ModelConfig,
    fp_cfg: &FingerprintConfig,
) -> Vec<TrainExample> {
    records
        .iter()
        .map(|r| {
            let features = product_features(&r.product, model_cfg, fp_cfg);
            let tokens = tokenize(&r.reactants).expect("dataset strings tokenize");
            let targets = model_cfg.vocab.encode_clipped(&tokens, model_cfg.max_len);
            TrainExample { features, targets }
        })
        .collect()
}

struct ProxyPair {
    features: Vec<f64>,
    /// Canonical truth string for exact-match proxy metrics.
    truth: String,
    /// Cached fingerprint of the truth; None when the (contaminated) truth
    /// does not parse, in which case the pair scores 0 similarity.
    truth_fp: Option<BitFingerprint>,
}

struct TestPair {
    features: Vec<f64>,
    truth: String,
    product: String,
    class: Option<String>,
}

pub struct ClientNode {
    id: usize,
    params: ParamVector,
    train_examples: Vec<TrainExample>,
    proxy: Vec<ProxyPair>,
    tests: Vec<TestPair>,
    n_train: usize,
}

impl ClientNode {
    /// Build a client from its private dataset. `initial` is the shared
    /// round-zero model; data never leaves the node afterwards.
    pub fn new(
        id: usize,
        dataset: &ReactionDataset,
        initial: ParamVector,
        cfg: &FedConfig,
        model_cfg: &ModelConfig,
        fp_cfg: &FingerprintConfig,
    ) -> ClientNode {
        let train_records: Vec<&ReactionRecord> = dataset.of_split(Split::Train).collect();
        let train_examples = prepare_train_examples(&train_records, model_cfg, fp_cfg);

        let mut proxy: Vec<ProxyPair> = dataset
            .of_split(Split::Val)
            .map(|r| {
                let truth_fp = canonicalize(&r.reactants).ok().map(|c| {
                    let mol = parse_smiles(&c).expect("canonical output parses");
                    ecfp(&mol, fp_cfg.radius, fp_cfg.nbits).expect("validated config")
                });
                ProxyPair {
                    features: product_features(&r.product, model_cfg, fp_cfg),
                    truth: r.reactants.clone(),
                    truth_fp,
                }
            })
            .collect();
        if let Some(cap) = cfg.proxy_cap {
            let mut order: Vec<usize> = (0..proxy.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                "proxy-cap",
                &[id as u64],
            ));
            order.shuffle(&mut rng);
            order.truncate(cap);
            let mut keep = vec![false; proxy.len()];
            for i in order {
                keep[i] = true;
            }
            proxy = proxy
                .into_iter()
                .zip(keep)
                .filter_map(|(p, k)| k.then_some(p))
                .collect();
        }

        let tests: Vec<TestPair> = dataset
            .of_split(Split::Test)
            .map(|r| TestPair {
                features: product_features(&r.product, model_cfg, fp_cfg),
                truth: r.reactants.clone(),
                product: r.product.clone(),
                class: r.class.clone(),
            })
            .collect();

        let n_train = train_examples.len();
        ClientNode { id, params: initial, train_examples, proxy, tests, n_train }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Training-set size N_i (the FedAvg weight numerator).
    pub fn train_len(&self) -> usize {
        self.n_train
    }

    pub fn proxy_len(&self) -> usize {
        self.proxy.len()
    }

    pub fn test_len(&self) -> usize {
        self.tests.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) {
        self.params = params;
    }

    /// One local-learning phase: `epochs` passes over the private training
    /// set starting from the current personalized parameters. Fresh optimizer
    /// state every phase; only the resulting parameters leave the node.
    pub fn local_train(
        &mut self,
        epochs: usize,
        round: usize,
        cfg: &FedConfig,
        model_cfg: &ModelConfig,
    ) -> Result<f64, FedError> {
        let spec = TrainSpec {
            epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: derive_seed(cfg.seed, "train", &[self.id as u64, round as u64]),
        };
        let (params, stats) = train_local(&self.params, &self.train_examples, &spec, model_cfg)?;
        self.params = params;
        Ok(stats.mean_loss)
    }

    /// Evaluate another client's model on this node's proxy reactions:
    /// mean Tanimoto similarity between the top-1 decoded reactants and the
    /// local ground truth. Runs entirely inside this node.
    pub fn score_external(
        &self,
        external: &ParamVector,
        cfg: &FedConfig,
        model_cfg: &ModelConfig,
        fp_cfg: &FingerprintConfig,
    ) -> f64 {
        assert!(!self.proxy.is_empty(), "caller checks for empty proxy sets");
        let total: f64 = self
            .proxy
            .iter()
            .map(|pair| {
                let preds = beam_decode_features(
                    external,
                    &pair.features,
                    cfg.eval_beam_width,
                    1,
                    model_cfg,
                );
                pair_similarity(pair, preds.first(), fp_cfg)
            })
            .sum();
        total / self.proxy.len() as f64
    }

    /// Exact-match top-1 accuracy of the node's own model on its proxy set.
    pub fn proxy_top1(&self, cfg: &FedConfig, model_cfg: &ModelConfig) -> f64 {
        if self.proxy.is_empty() {
            return 0.0;
        }
        let hits: usize = self
            .proxy
            .par_iter()
            .map(|pair| {
                let preds = beam_decode_features(
                    &self.params,
                    &pair.features,
                    cfg.eval_beam_width,
                    1,
                    model_cfg,
                );
                match preds.first() {
                    Some(p) if p.parseable && p.smiles == pair.truth => 1usize,
                    _ => 0,
                }
            })
            .sum();
        hits as f64 / self.proxy.len() as f64
    }

    /// Beam predictions for every test record under `params` (defaults to
    /// the node's own model). Used by the metrics pipeline.
    fn test_predictions(
        &self,
        params: &ParamVector,
        beam_width: usize,
        topn: usize,
        model_cfg: &ModelConfig,
    ) -> Vec<Vec<Prediction>> {
        self.tests
            .par_iter()
            .map(|pair| {
                beam_decode_features(params, &pair.features, beam_width, topn, model_cfg)
            })
            .collect()
    }

    /// Full metric evaluation on the private test split. When a forward
    /// oracle is supplied, RoundTrip top-1 is included.
    pub fn evaluate_on_test(
        &self,
        params: Option<&ParamVector>,
        beam_width: usize,
        ks: &[u32],
        model_cfg: &ModelConfig,
        fp_cfg: &FingerprintConfig,
        forward_oracle: Option<&ParamVector>,
    ) -> EvalResult {
        let params = params.unwrap_or(&self.params);
        let topn = ks.iter().copied().max().unwrap_or(1) as usize;
        let width = beam_width.max(topn);
        let predictions = self.test_predictions(params, width, topn, model_cfg);
        let truths: Vec<String> = self.tests.iter().map(|t| t.truth.clone()).collect();
        let classes: Vec<Option<String>> =
            self.tests.iter().map(|t| t.class.clone()).collect();
        let products: Vec<String> = self.tests.iter().map(|t| t.product.clone()).collect();
        evaluate(
            &predictions,
            &truths,
            &classes,
            &products,
            ks,
            forward_oracle.map(|f| (f, model_cfg, fp_cfg)),
        )
    }
}

fn pair_similarity(pair: &ProxyPair, pred: Option<&Prediction>, fp_cfg: &FingerprintConfig) -> f64 {
    let Some(truth_fp) = &pair.truth_fp else {
        return 0.0;
    };
    let Some(pred) = pred else {
        return 0.0;
    };
    if !pred.parseable {
        return 0.0;
    }
    let Ok(mol) = parse_smiles(&pred.smiles) else {
        return 0.0;
    };
    let pred_fp = ecfp(&mol, fp_cfg.radius, fp_cfg.nbits).expect("validated config");
    tanimoto(&pred_fp, truth_fp).expect("same nbits")
}

#[cfg(test)]
mod tests {
    use super::super::Mode;
    use super::*;
    use crate::data::{split_dataset, ReactionDataset, ReactionRecord};
    use crate::learner::init_params;

    fn toy_dataset() -> ReactionDataset {
        let pool = [
            ("CCO", "CC"),
            ("CCN", "CC"),
            ("CCC", "CC"),
            ("CCCC", "CC"),
            ("OCC", "CC"),
            ("NCC", "CC"),
            ("CC(C)C", "CC"),
            ("C", "C"),
            ("CO", "C"),
            ("CN", "C"),
        ];
        let records = (0..30)
            .map(|i| {
                let (r, p) = pool[i % pool.len()];
                ReactionRecord {
                    id: format!("r{i}"),
                    class: Some((i % 2).to_string()),
                    reactants: canonicalize(r).unwrap(),
                    product: canonicalize(p).unwrap(),
                }
            })
            .collect();
        split_dataset(ReactionDataset::new(records).unwrap(), (0.6, 0.2, 0.2), 3).unwrap()
    }

    fn small_model() -> ModelConfig {
        ModelConfig { fp_dim: 32, embed_dim: 8, hidden_dim: 16, max_len: 24, ..Default::default() }
    }

    #[test]
    fn construction_splits_data() {
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let cfg = FedConfig::new(1, Mode::Local, 0);
        let ds = toy_dataset();
        let client =
            ClientNode::new(0, &ds, init_params(&model_cfg, 0), &cfg, &model_cfg, &fp_cfg);
        assert_eq!(client.train_len(), 18);
        assert_eq!(client.proxy_len(), 6);
        assert_eq!(client.test_len(), 6);
    }

    #[test]
    fn proxy_cap_subsamples_deterministically() {
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let mut cfg = FedConfig::new(1, Mode::Ckif, 5);
        cfg.proxy_cap = Some(3);
        let ds = toy_dataset();
        let a = ClientNode::new(0, &ds, init_params(&model_cfg, 0), &cfg, &model_cfg, &fp_cfg);
        let b = ClientNode::new(0, &ds, init_params(&model_cfg, 0), &cfg, &model_cfg, &fp_cfg);
        assert_eq!(a.proxy_len(), 3);
        let ta: Vec<&str> = a.proxy.iter().map(|p| p.truth.as_str()).collect();
        let tb: Vec<&str> = b.proxy.iter().map(|p| p.truth.as_str()).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn perfect_model_scores_one() {
        // memorize a single proxy pair, then score that model externally
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let cfg = FedConfig::new(2, Mode::Ckif, 1);

        let records = vec![
            ReactionRecord {
                id: "train".into(),
                class: None,
                reactants: canonicalize("OCC.N").unwrap(),
                product: canonicalize("CCON").unwrap(),
            },
            ReactionRecord {
                id: "val".into(),
                class: None,
                reactants: canonicalize("OCC.N").unwrap(),
                product: canonicalize("CCON").unwrap(),
            },
        ];
        let splits = vec![Split::Train, Split::Val];
        let ds = ReactionDataset::with_splits(records, splits);
        let mut node =
            ClientNode::new(0, &ds, init_params(&model_cfg, 7), &cfg, &model_cfg, &fp_cfg);
        let mut train_cfg = cfg.clone();
        train_cfg.lr = 0.01;
        train_cfg.batch_size = 1;
        node.local_train(500, 1, &train_cfg, &model_cfg).unwrap();
        let score = node.score_external(&node.params().clone(), &cfg, &model_cfg, &fp_cfg);
        assert!((score - 1.0).abs() < 1e-12, "score {score}");
    }

    #[test]
    fn unparseable_outputs_score_zero() {
        // an untrained uniform-ish model rarely emits the exact truth; build
        // a pair whose truth is unparseable garbage instead (contamination)
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let cfg = FedConfig::new(2, Mode::Ckif, 1);
        let records = vec![
            ReactionRecord {
                id: "t".into(),
                class: None,
                reactants: "C".into(),
                product: "C".into(),
            },
            ReactionRecord {
                id: "v".into(),
                class: None,
                reactants: "((((".into(),
                product: ")))(".into(),
            },
        ];
        let ds = ReactionDataset::with_splits(records, vec![Split::Train, Split::Val]);
        let node =
            ClientNode::new(0, &ds, init_params(&model_cfg, 3), &cfg, &model_cfg, &fp_cfg);
        let score = node.score_external(&init_params(&model_cfg, 4), &cfg, &model_cfg, &fp_cfg);
        assert_eq!(score, 0.0);
    }
}
