//! Desk-scale simulator for privacy-aware federated retrosynthesis learning.
//!
//! Clients hold private reaction datasets, train small reactant-prediction
//! models locally, and exchange nothing but model parameters. Aggregation is
//! either sample-count weighted (FedAvg) or personalized per client via
//! fingerprint-similarity softmax weights computed on local proxy reactions.
//!
//! The crate is organized along the pipeline:
//!
//! * [`smiles`] — parsing, canonicalization, tokenization of a SMILES subset
//! * [`fingerprint`] — circular bit fingerprints and Tanimoto similarity
//! * [`learner`] — a tiny fingerprint-conditioned autoregressive decoder with
//!   exact gradients, Adam, and beam search
//! * [`data`] — reaction file ingestion, partitioning, synthetic corpora,
//!   contamination
//! * [`federation`] — communication rounds, weighting, aggregation, baselines
//! * [`metrics`] — top-K / MaxFrag / RoundTrip accuracy
//! * [`experiment`] — config-driven end-to-end runs and reports

pub mod data;
pub mod federation;
pub mod fingerprint;
pub mod hash;
pub mod learner;
pub mod metrics;
pub mod smiles;

pub const SCHEMA_VERSION: u32 = 1;
