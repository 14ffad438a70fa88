//! Federated orchestration: communication rounds, similarity-informed
//! personalized weighting, FedAvg / local / central baselines.

mod client;
mod run;
mod weights;

pub use client::{prepare_train_examples, ClientNode};
pub use run::{run_central, run_federated, CheckpointWriter, RoundReport};
pub use weights::{aggregate, ckiw_weights, fedavg_weights, similarity_matrix};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::LearnerError;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("invalid federation config: {0}")]
    BadConfig(String),
    #[error("client training-set sizes must be positive")]
    ZeroSize,
    #[error("aggregation weights must be non-negative and sum to 1")]
    BadWeights,
    #[error("parameter layouts differ across clients")]
    LayoutMismatch,
    #[error("client {0} has an empty proxy set")]
    EmptyProxySet(usize),
    #[error("checkpoint i/o: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ckif,
    Fedavg,
    Local,
    Central,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ckif => "ckif",
            Mode::Fedavg => "fedavg",
            Mode::Local => "local",
            Mode::Central => "central",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "ckif" => Ok(Mode::Ckif),
            "fedavg" => Ok(Mode::Fedavg),
            "local" => Ok(Mode::Local),
            "central" => Ok(Mode::Central),
            other => Err(format!("unknown mode `{other}` (ckif|fedavg|local|central)")),
        }
    }
}

/// Federation hyperparameters. Defaults follow the experimental protocol:
/// 50 total rounds, 5 local epochs, 10 fine-tuning rounds, mu = 1/K,
/// tau = 1.5.
#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub clients: usize,
    pub rounds_total: usize,
    pub local_epochs: usize,
    pub finetune_rounds: usize,
    pub mu: f64,
    pub tau: f64,
    pub mode: Mode,
    pub proxy_cap: Option<usize>,
    pub eval_beam_width: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Record each client's own-proxy top-1 per round (costs one beam sweep
    /// per client per round).
    pub track_proxy_top1: bool,
    /// Reuse the first aggregating round's weights instead of re-deriving
    /// them every round.
    pub cache_similarity: bool,
}

impl FedConfig {
    pub fn new(clients: usize, mode: Mode, seed: u64) -> FedConfig {
        FedConfig {
            clients,
            rounds_total: 50,
            local_epochs: 5,
            finetune_rounds: 10,
            mu: 1.0 / clients.max(1) as f64,
            tau: 1.5,
            mode,
            proxy_cap: None,
            eval_beam_width: 5,
            batch_size: 64,
            lr: 0.0002,
            seed,
            track_proxy_top1: false,
            cache_similarity: false,
        }
    }

    pub fn validate(&self) -> Result<(), FedError> {
        if self.clients == 0 {
            return Err(FedError::BadConfig("need at least one client".into()));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(FedError::BadConfig(format!("mu {} outside [0, 1]", self.mu)));
        }
        if !(self.tau > 0.0) {
            return Err(FedError::BadConfig(format!("tau {} must be > 0", self.tau)));
        }
        if self.finetune_rounds > self.rounds_total {
            return Err(FedError::BadConfig(format!(
                "finetune rounds {} exceed total rounds {}",
                self.finetune_rounds, self.rounds_total
            )));
        }
        if self.eval_beam_width == 0 {
            return Err(FedError::BadConfig("eval beam width must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(FedError::BadConfig("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(FedError::BadConfig("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// K×K pairwise model-relevance scores in [0, 1]. The diagonal is undefined
/// (self-weight is pinned to mu) and serializes as null.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    k: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_off_diagonal(k: usize, mut entries: impl FnMut(usize, usize) -> f64) -> SimilarityMatrix {
        let mut values = vec![f64::NAN; k * k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let s = entries(i, j);
                    debug_assert!((0.0..=1.0).contains(&s), "similarity {s} outside [0,1]");
                    values[i * k + j] = s;
                }
            }
        }
        SimilarityMatrix { k, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Entry (i, j); None on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.k + j];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

impl Serialize for SimilarityMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

/// K×K row-stochastic aggregation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    k: usize,
    values: Vec<f64>,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl WeightMatrix {
    pub(crate) fn from_rows_unchecked(k: usize, values: Vec<f64>) -> WeightMatrix {
        debug_assert_eq!(values.len(), k * k);
        WeightMatrix { k, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|i| self.row(i).to_vec()).collect()
    }

    /// Every row sums to 1 within tolerance and all entries are >= 0.
    pub fn validate_row_stochastic(&self) -> Result<(), FedError> {
        for i in 0..self.k {
            let row = self.row(i);
            if row.iter().any(|&w| w < 0.0) {
                return Err(FedError::BadWeights);
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(FedError::BadWeights);
            }
        }
        Ok(())
    }
}

impl Serialize for WeightMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = FedConfig::new(4, Mode::Ckif, 0);
        cfg.validate().unwrap();
        assert!((cfg.mu - 0.25).abs() < 1e-15);
        cfg.mu = 1.5;
        assert!(cfg.validate().is_err());
        cfg.mu = 0.25;
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        cfg.tau = 1.5;
        cfg.finetune_rounds = cfg.rounds_total + 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mode_round_trips_strings() {
        for m in [Mode::Ckif, Mode::Fedavg, Mode::Local, Mode::Central] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("nope".parse::<Mode>().is_err());
    }

    #[test]
    fn similarity_diagonal_is_undefined() {
        let s = SimilarityMatrix::from_off_diagonal(3, |i, j| (i + j) as f64 / 10.0);
        assert_eq!(s.get(0, 0), None);
        assert_eq!(s.get(0, 1), Some(0.1));
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("null"));
    }
}
