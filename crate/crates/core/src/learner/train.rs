//! Seeded epoch-based local training. Each call starts from fresh optimizer
//! state: moments are never communicated between clients or rounds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hash::derive_seed;

use super::adam::adam_step_in_place;
use super::model::loss_and_grad_refs;
use super::{LearnerError, ModelConfig, OptimizerState, ParamVector, TrainExample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec { epochs: 5, batch_size: 64, lr: 0.0002, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    /// Mean per-example loss over every batch of the call.
    pub mean_loss: f64,
    pub batches: usize,
}

/// Train for `spec.epochs` full passes with seeded shuffling and return the
/// final parameters. Internally sequential over batches, so the result is
/// independent of thread count.
pub fn train_local(
    params: &ParamVector,
    data: &[TrainExample],
    spec: &TrainSpec,
    cfg: &ModelConfig,
) -> Result<(ParamVector, TrainStats), LearnerError> {
    if data.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let mut params = params.clone();
    let mut opt = OptimizerState::with_lr(params.len(), spec.lr);
    let mut loss_sum = 0.0;
    let mut example_count = 0usize;
    let mut batches = 0usize;
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..spec.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "shuffle", &[epoch as u64]));
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(spec.batch_size.max(1)) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grad) = loss_and_grad_refs(&params, &batch, cfg)?;
            adam_step_in_place(&mut params, &grad, &mut opt)?;
            loss_sum += loss * batch.len() as f64;
            example_count += batch.len();
            batches += 1;
        }
    }
    let mean_loss = if example_count > 0 { loss_sum / example_count as f64 } else { 0.0 };
    Ok((params, TrainStats { mean_loss, batches }))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::{init_params, loss_and_grad, Vocab};
    use super::*;
    use crate::fingerprint::{ecfp, fold, FingerprintConfig};
    use crate::smiles::{parse_smiles, tokenize};

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab: Arc::new(Vocab::standard()),
            fp_dim: 32,
            embed_dim: 8,
            hidden_dim: 16,
            max_len: 40,
        }
    }

    fn toy_examples(cfg: &ModelConfig, n: usize) -> Vec<TrainExample> {
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let pool = ["CCO", "CCN", "CC(C)O", "CCCC", "OCC(C)C", "NCCO", "CC(=O)O", "ClCC"];
        (0..n)
            .map(|i| {
                let product = pool[i % pool.len()];
                let mol = parse_smiles(product).unwrap();
                let fp = ecfp(&mol, fp_cfg.radius, fp_cfg.nbits).unwrap();
                let features = fold(&fp, cfg.fp_dim).unwrap().values;
                let targets =
                    cfg.vocab.encode_clipped(&tokenize(product).unwrap(), cfg.max_len);
                TrainExample { features, targets }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let cfg = cfg();
        let params = init_params(&cfg, 1);
        let data = toy_examples(&cfg, 10);
        let spec = TrainSpec { epochs: 0, ..Default::default() };
        let (out, stats) = train_local(&params, &data, &spec, &cfg).unwrap();
        assert_eq!(out.values(), params.values());
        assert_eq!(stats.batches, 0);
    }

    #[test]
    fn loss_decreases_on_toy_set() {
        let cfg = cfg();
        let params = init_params(&cfg, 2);
        let data = toy_examples(&cfg, 100);
        let (before, _) = loss_and_grad(&params, &data, &cfg).unwrap();
        let spec = TrainSpec { epochs: 5, batch_size: 16, lr: 0.01, seed: 3 };
        let (trained, _) = train_local(&params, &data, &spec, &cfg).unwrap();
        let (after, _) = loss_and_grad(&trained, &data, &cfg).unwrap();
        assert!(after < before, "loss did not improve: {before} -> {after}");
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = cfg();
        let params = init_params(&cfg, 4);
        let data = toy_examples(&cfg, 30);
        let spec = TrainSpec { epochs: 2, batch_size: 8, lr: 0.005, seed: 17 };
        let (a, _) = train_local(&params, &data, &spec, &cfg).unwrap();
        let (b, _) = train_local(&params, &data, &spec, &cfg).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = cfg();
        let params = init_params(&cfg, 5);
        assert!(matches!(
            train_local(&params, &[], &TrainSpec::default(), &cfg),
            Err(LearnerError::EmptyDataset)
        ));
    }
}
