//! Train/val/test splitting and heterogeneous client partitioning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::hash::derive_seed;

use super::{DataError, ReactionDataset, Split};

/// Seeded shuffle, then contiguous assignment of split tags. Record order in
/// the dataset itself is unchanged.
pub fn split_dataset(
    ds: ReactionDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<ReactionDataset, DataError> {
    let (ft, fv, fe) = fractions;
    let sum = ft + fv + fe;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions);
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split", &[]));
    order.shuffle(&mut rng);
    let n_train = ((n as f64 * ft) + 1e-9).floor() as usize;
    let n_val = ((n as f64 * fv) + 1e-9).floor() as usize;
    let mut splits = vec![Split::Test; n];
    for (k, &i) in order.iter().enumerate() {
        splits[i] = if k < n_train {
            Split::Train
        } else if k < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let records = ds.records;
    Ok(ReactionDataset::with_splits(records, splits))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    /// One client per distinct class, in sorted class order; requires labels
    /// on every record and exactly one class per client.
    ByClass,
    /// Explicit class → client map for grouped heterogeneity.
    ByClassGroups(BTreeMap<String, usize>),
    /// Per-class proportions over clients drawn from Dirichlet(alpha).
    RandomDirichlet { alpha: f64 },
}

/// Distribute every record to exactly one of `k` clients.
pub fn partition_clients(
    ds: &ReactionDataset,
    spec: &PartitionSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<ReactionDataset>, DataError> {
    if k == 0 {
        return Err(DataError::BadPartition("need at least one client".into()));
    }
    let assignment: Vec<usize> = match spec {
        PartitionSpec::ByClass => {
            let classes = labeled_classes(ds)?;
            if classes.len() != k {
                return Err(DataError::BadPartition(format!(
                    "by_class found {} classes but k = {k}",
                    classes.len()
                )));
            }
            let index: BTreeMap<&str, usize> =
                classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
            ds.records()
                .iter()
                .map(|r| index[r.class.as_deref().expect("checked labels")])
                .collect()
        }
        PartitionSpec::ByClassGroups(map) => {
            let classes = labeled_classes(ds)?;
            for c in &classes {
                match map.get(c) {
                    None => return Err(DataError::UnmappedClass(c.clone())),
                    Some(&client) if client >= k => {
                        return Err(DataError::BadPartition(format!(
                            "class `{c}` maps to client {client}, but k = {k}"
                        )));
                    }
                    Some(_) => {}
                }
            }
            ds.records()
                .iter()
                .map(|r| map[r.class.as_deref().expect("checked labels")])
                .collect()
        }
        PartitionSpec::RandomDirichlet { alpha } => {
            if !alpha.is_finite() || *alpha <= 0.0 {
                return Err(DataError::BadPartition("dirichlet alpha must be > 0".into()));
            }
            dirichlet_assignment(ds, k, *alpha, seed)
        }
    };

    let mut client_records = vec![Vec::new(); k];
    for (i, rec) in ds.records().iter().enumerate() {
        client_records[assignment[i]].push(rec.clone());
    }
    client_records
        .into_iter()
        .map(ReactionDataset::new)
        .collect::<Result<Vec<_>, _>>()
}

fn labeled_classes(ds: &ReactionDataset) -> Result<Vec<String>, DataError> {
    let mut classes = Vec::new();
    for r in ds.records() {
        match &r.class {
            None => return Err(DataError::MissingClassLabels),
            Some(c) => classes.push(c.clone()),
        }
    }
    classes.sort();
    classes.dedup();
    Ok(classes)
}

/// For each class bucket (unlabeled records form their own bucket), draw a
/// proportion vector over clients and deal the bucket's shuffled records by
/// largest-remainder counts.
fn dirichlet_assignment(ds: &ReactionDataset, k: usize, alpha: f64, seed: u64) -> Vec<usize> {
    let mut buckets: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records().iter().enumerate() {
        buckets.entry(r.class.as_deref()).or_default().push(i);
    }
    let mut assignment = vec![0usize; ds.len()];
    for (bucket_idx, (_, mut members)) in buckets.into_iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, "dirichlet", &[bucket_idx as u64]));
        // Dirichlet via normalized Gamma(alpha, 1) draws.
        let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
        let mut props: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
        let total: f64 = props.iter().sum();
        for p in props.iter_mut() {
            *p /= total;
        }
        members.shuffle(&mut rng);
        let counts = largest_remainder_counts(&props, members.len());
        let mut cursor = 0;
        for (client, &count) in counts.iter().enumerate() {
            for &record in &members[cursor..cursor + count] {
                assignment[record] = client;
            }
            cursor += count;
        }
    }
    assignment
}

fn largest_remainder_counts(props: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = props.iter().map(|p| (p * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(f64, usize)> = props
        .iter()
        .enumerate()
        .map(|(i, p)| (p * n as f64 - counts[i] as f64, i))
        .collect();
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    for (_, i) in remainders.iter().take(n - assigned) {
        counts[*i] += 1;
    }
    counts
}
