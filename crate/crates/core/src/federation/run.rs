//! The communication-round loop and the centralized baseline.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{ReactionDataset, ReactionRecord, Split};
use crate::fingerprint::FingerprintConfig;
use crate::hash::derive_seed;
use crate::learner::{train_local, ModelConfig, ParamVector, TrainSpec, TrainStats};

use super::weights::{aggregate_all, run_mode_uses_aggregation};
use super::{
    ckiw_weights, fedavg_weights, prepare_train_examples, similarity_matrix, ClientNode,
    FedConfig, FedError, Mode, SimilarityMatrix, WeightMatrix,
};

/// What happened in one communication round.
#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub round: usize,
    /// True for rounds past R_T - R_F (local fine-tuning only).
    pub finetune: bool,
    pub train_loss: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarities: Option<SimilarityMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proxy_top1: Option<Vec<f64>>,
    /// Wall-clock seconds; excluded from serialized reports so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub wall_secs: f64,
}

/// Writes per-round, per-client parameter files under
/// `<dir>/round_NNN/client_MM.params`.
pub struct CheckpointWriter {
    dir: PathBuf,
}

impl CheckpointWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Result<CheckpointWriter, FedError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| FedError::Checkpoint(e.to_string()))?;
        Ok(CheckpointWriter { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_round(&self, round: usize, params: &[&ParamVector]) -> Result<(), FedError> {
        let round_dir = self.dir.join(format!("round_{round:03}"));
        std::fs::create_dir_all(&round_dir).map_err(|e| FedError::Checkpoint(e.to_string()))?;
        for (client, p) in params.iter().enumerate() {
            let path = round_dir.join(format!("client_{client:02}.params"));
            std::fs::write(&path, p.to_bytes())
                .map_err(|e| FedError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }
}

/// Run the federated protocol for `cfg.rounds_total` rounds.
///
/// Rounds 1..=R_T-R_F: every client trains R_L local epochs, then (ckif)
/// similarity scoring, personalized weighting, and per-client aggregation,
/// or (fedavg) a single size-weighted global model. The final R_F rounds
/// are local fine-tuning with no aggregation. `local` mode never aggregates.
pub fn run_federated(
    clients: &mut [ClientNode],
    cfg: &FedConfig,
    model_cfg: &ModelConfig,
    fp_cfg: &FingerprintConfig,
    checkpoints: Option<&CheckpointWriter>,
) -> Result<(Vec<ParamVector>, Vec<RoundReport>), FedError> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(FedError::BadConfig("no clients".into()));
    }
    if clients.len() != cfg.clients {
        return Err(FedError::BadConfig(format!(
            "config says {} clients but {} were provided",
            cfg.clients,
            clients.len()
        )));
    }
    if cfg.mode == Mode::Central {
        return Err(FedError::BadConfig(
            "central mode pools raw data; use run_central".into(),
        ));
    }

    let mut reports = Vec::with_capacity(cfg.rounds_total);
    let mut cached_weights: Option<(SimilarityMatrix, WeightMatrix)> = None;

    for round in 1..=cfg.rounds_total {
        let started = Instant::now();
        let aggregating = run_mode_uses_aggregation(cfg.mode)
            && round <= cfg.rounds_total - cfg.finetune_rounds;

        let train_loss: Vec<f64> = clients
            .par_iter_mut()
            .map(|client| client.local_train(cfg.local_epochs, round, cfg, model_cfg))
            .collect::<Result<Vec<_>, _>>()?;

        let mut similarities = None;
        let mut weights = None;
        if aggregating {
            match cfg.mode {
                Mode::Ckif => {
                    let (sim, w) = match (&cached_weights, cfg.cache_similarity) {
                        (Some(cached), true) => cached.clone(),
                        _ => {
                            let sim = similarity_matrix(clients, cfg, model_cfg, fp_cfg)?;
                            let w = ckiw_weights(&sim, cfg.mu, cfg.tau);
                            (sim, w)
                        }
                    };
                    w.validate_row_stochastic()?;
                    let snapshot: Vec<ParamVector> =
                        clients.iter().map(|c| c.params().clone()).collect();
                    let personalized = aggregate_all(&snapshot, &w)?;
                    for (client, params) in clients.iter_mut().zip(personalized) {
                        client.set_params(params);
                    }
                    if cfg.cache_similarity {
                        cached_weights = Some((sim.clone(), w.clone()));
                    }
                    similarities = Some(sim);
                    weights = Some(w);
                }
                Mode::Fedavg => {
                    let sizes: Vec<usize> = clients.iter().map(ClientNode::train_len).collect();
                    let w = fedavg_weights(&sizes)?;
                    w.validate_row_stochastic()?;
                    let snapshot: Vec<ParamVector> =
                        clients.iter().map(|c| c.params().clone()).collect();
                    let global = super::aggregate(&snapshot, w.row(0))?;
                    for client in clients.iter_mut() {
                        client.set_params(global.clone());
                    }
                    weights = Some(w);
                }
                Mode::Local | Mode::Central => unreachable!("checked above"),
            }
        }

        let proxy_top1 = if cfg.track_proxy_top1 {
            Some(clients.iter().map(|c| c.proxy_top1(cfg, model_cfg)).collect())
        } else {
            None
        };

        if let Some(writer) = checkpoints {
            let params: Vec<&ParamVector> = clients.iter().map(ClientNode::params).collect();
            writer.write_round(round, &params)?;
        }

        reports.push(RoundReport {
            round,
            finetune: !aggregating && run_mode_uses_aggregation(cfg.mode),
            train_loss,
            similarities,
            weights,
            proxy_top1,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }

    let finals = clients.iter().map(|c| c.params().clone()).collect();
    Ok((finals, reports))
}

/// Centrally-trained baseline: pools every client's training split (a
/// deliberate privacy violation, kept outside the client boundary) and
/// trains one model for R_T * R_L epochs.
pub fn run_central(
    client_datasets: &[ReactionDataset],
    initial: &ParamVector,
    cfg: &FedConfig,
    model_cfg: &ModelConfig,
    fp_cfg: &FingerprintConfig,
) -> Result<(ParamVector, TrainStats, usize), FedError> {
    cfg.validate()?;
    if client_datasets.is_empty() {
        return Err(FedError::BadConfig("no client datasets".into()));
    }
    let pooled: Vec<&ReactionRecord> = client_datasets
        .iter()
        .flat_map(|ds| ds.of_split(Split::Train))
        .collect();
    if pooled.is_empty() {
        return Err(FedError::Learner(crate::learner::LearnerError::EmptyDataset));
    }
    let examples = prepare_train_examples(&pooled, model_cfg, fp_cfg);
    let spec = TrainSpec {
        epochs: cfg.rounds_total * cfg.local_epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: derive_seed(cfg.seed, "central", &[]),
    };
    let (params, stats) = train_local(initial, &examples, &spec, model_cfg)?;
    Ok((params, stats, pooled.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, partition_clients, split_dataset, PartitionSpec, ReactionFamily};
    use crate::learner::init_params;

    fn fixture(k: usize, per_family: usize, seed: u64) -> Vec<ReactionDataset> {
        let families = &ReactionFamily::ALL[..k];
        let ds = generate_synthetic(&vec![per_family; k], families, seed).unwrap();
        let clients = partition_clients(&ds, &PartitionSpec::ByClass, k, seed).unwrap();
        clients
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                split_dataset(c, (0.6, 0.2, 0.2), derive_seed(seed, "client-split", &[i as u64]))
                    .unwrap()
            })
            .collect()
    }

    fn small_model() -> ModelConfig {
        ModelConfig { fp_dim: 32, embed_dim: 8, hidden_dim: 16, max_len: 48, ..Default::default() }
    }

    fn build_clients(
        datasets: &[ReactionDataset],
        cfg: &FedConfig,
        model_cfg: &ModelConfig,
        fp_cfg: &FingerprintConfig,
    ) -> Vec<ClientNode> {
        let initial = init_params(model_cfg, derive_seed(cfg.seed, "model-init", &[]));
        datasets
            .iter()
            .enumerate()
            .map(|(i, ds)| ClientNode::new(i, ds, initial.clone(), cfg, model_cfg, fp_cfg))
            .collect()
    }

    fn toy_cfg(k: usize, mode: Mode, seed: u64) -> FedConfig {
        let mut cfg = FedConfig::new(k, mode, seed);
        cfg.rounds_total = 3;
        cfg.local_epochs = 1;
        cfg.finetune_rounds = 1;
        cfg.eval_beam_width = 2;
        cfg.batch_size = 8;
        cfg.lr = 0.002;
        cfg
    }

    #[test]
    fn ckif_with_mu_one_matches_local_bitwise() {
        let datasets = fixture(3, 30, 5);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };

        let mut ckif_cfg = toy_cfg(3, Mode::Ckif, 11);
        ckif_cfg.mu = 1.0;
        let mut ckif_clients = build_clients(&datasets, &ckif_cfg, &model_cfg, &fp_cfg);
        let (ckif_final, reports) =
            run_federated(&mut ckif_clients, &ckif_cfg, &model_cfg, &fp_cfg, None).unwrap();

        let local_cfg = toy_cfg(3, Mode::Local, 11);
        let mut local_clients = build_clients(&datasets, &local_cfg, &model_cfg, &fp_cfg);
        let (local_final, _) =
            run_federated(&mut local_clients, &local_cfg, &model_cfg, &fp_cfg, None).unwrap();

        for (a, b) in ckif_final.iter().zip(&local_final) {
            assert_eq!(a.values(), b.values());
        }
        // weights were identity rows
        let w = reports[0].weights.as_ref().unwrap();
        for i in 0..3 {
            assert_eq!(w.get(i, i), 1.0);
        }
    }

    #[test]
    fn fedavg_single_client_matches_local() {
        let datasets = fixture(1, 40, 6);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };

        let fed_cfg = toy_cfg(1, Mode::Fedavg, 21);
        let mut fed_clients = build_clients(&datasets, &fed_cfg, &model_cfg, &fp_cfg);
        let (fed_final, _) =
            run_federated(&mut fed_clients, &fed_cfg, &model_cfg, &fp_cfg, None).unwrap();

        let local_cfg = toy_cfg(1, Mode::Local, 21);
        let mut local_clients = build_clients(&datasets, &local_cfg, &model_cfg, &fp_cfg);
        let (local_final, _) =
            run_federated(&mut local_clients, &local_cfg, &model_cfg, &fp_cfg, None).unwrap();

        assert_eq!(fed_final[0].values(), local_final[0].values());
    }

    #[test]
    fn single_phase_schedule_is_pure_local() {
        let datasets = fixture(2, 20, 7);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let mut cfg = toy_cfg(2, Mode::Ckif, 31);
        cfg.rounds_total = 1;
        cfg.finetune_rounds = 1;
        let mut clients = build_clients(&datasets, &cfg, &model_cfg, &fp_cfg);
        let (_, reports) =
            run_federated(&mut clients, &cfg, &model_cfg, &fp_cfg, None).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].weights.is_none());
        assert!(reports[0].finetune);
    }

    #[test]
    fn reports_follow_schedule() {
        let datasets = fixture(2, 20, 8);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let cfg = toy_cfg(2, Mode::Ckif, 41);
        let mut clients = build_clients(&datasets, &cfg, &model_cfg, &fp_cfg);
        let (_, reports) =
            run_federated(&mut clients, &cfg, &model_cfg, &fp_cfg, None).unwrap();
        assert_eq!(reports.len(), 3);
        // R_T=3, R_F=1: rounds 1-2 aggregate, round 3 fine-tunes
        assert!(reports[0].weights.is_some() && reports[0].similarities.is_some());
        assert!(reports[1].weights.is_some());
        assert!(reports[2].weights.is_none() && reports[2].finetune);
        for r in &reports {
            assert_eq!(r.train_loss.len(), 2);
        }
        if let Some(w) = &reports[0].weights {
            w.validate_row_stochastic().unwrap();
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let datasets = fixture(3, 24, 9);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let cfg = toy_cfg(3, Mode::Ckif, 51);

        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut clients = build_clients(&datasets, &cfg, &model_cfg, &fp_cfg);
                run_federated(&mut clients, &cfg, &model_cfg, &fp_cfg, None).unwrap()
            })
        };
        let (finals_1, reports_1) = run_with(1);
        let (finals_4, reports_4) = run_with(4);
        for (a, b) in finals_1.iter().zip(&finals_4) {
            assert_eq!(a.values(), b.values());
        }
        for (ra, rb) in reports_1.iter().zip(&reports_4) {
            assert_eq!(ra.train_loss, rb.train_loss);
            assert_eq!(
                ra.weights.as_ref().map(WeightMatrix::to_rows),
                rb.weights.as_ref().map(WeightMatrix::to_rows)
            );
        }
    }

    #[test]
    fn central_pools_all_training_data() {
        let datasets = fixture(2, 20, 10);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let mut cfg = toy_cfg(2, Mode::Central, 61);
        cfg.rounds_total = 2;
        cfg.local_epochs = 1;
        let initial = init_params(&model_cfg, derive_seed(cfg.seed, "model-init", &[]));
        let (params, _, pooled) =
            run_central(&datasets, &initial, &cfg, &model_cfg, &fp_cfg).unwrap();
        let expected: usize = datasets.iter().map(|d| d.count_split(Split::Train)).sum();
        assert_eq!(pooled, expected);
        let (params2, _, _) =
            run_central(&datasets, &initial, &cfg, &model_cfg, &fp_cfg).unwrap();
        assert_eq!(params.values(), params2.values());
    }

    #[test]
    fn checkpoints_written_per_round_per_client() {
        let datasets = fixture(2, 20, 12);
        let model_cfg = small_model();
        let fp_cfg = FingerprintConfig { radius: 2, nbits: 256 };
        let cfg = toy_cfg(2, Mode::Local, 71);
        let dir = tempfile::tempdir().unwrap();
        let writer = CheckpointWriter::new(dir.path().join("ckpt")).unwrap();
        let mut clients = build_clients(&datasets, &cfg, &model_cfg, &fp_cfg);
        let (finals, _) =
            run_federated(&mut clients, &cfg, &model_cfg, &fp_cfg, Some(&writer)).unwrap();
        for round in 1..=3 {
            for client in 0..2 {
                let p = dir
                    .path()
                    .join("ckpt")
                    .join(format!("round_{round:03}"))
                    .join(format!("client_{client:02}.params"));
                assert!(p.exists(), "{p:?}");
            }
        }
        let last = ParamVector::from_bytes(
            &std::fs::read(
                dir.path().join("ckpt").join("round_003").join("client_00.params"),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(last.values(), finals[0].values());
    }
}
