//! Contamination: swap reactants and product and shuffle each side's tokens
//! for a seeded fraction of train+val records. Chemically wrong by intent;
//! the test split is never touched.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hash::derive_seed;
use crate::smiles::tokenize;

use super::{ReactionDataset, Split};

pub fn contaminate(ds: ReactionDataset, fraction: f64, seed: u64) -> ReactionDataset {
    assert!((0.0..=1.0).contains(&fraction), "fraction must be in [0, 1]");
    let eligible: Vec<usize> =
        (0..ds.len()).filter(|&i| ds.split_of(i) != Split::Test).collect();
    let count = ((fraction * eligible.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order = eligible;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "contaminate", &[]));
    order.shuffle(&mut rng);
    order.truncate(count);

    let splits = ds.splits.clone();
    let mut records = ds.records;
    for &i in &order {
        let rec = &mut records[i];
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, "contaminate-record", &[i as u64]));
        let new_reactants = shuffle_tokens(&rec.product, &mut rng);
        let new_product = shuffle_tokens(&rec.reactants, &mut rng);
        rec.reactants = new_reactants;
        rec.product = new_product;
    }
    ReactionDataset::with_splits(records, splits)
}

fn shuffle_tokens(smiles: &str, rng: &mut ChaCha8Rng) -> String {
    let mut tokens = tokenize(smiles).expect("dataset strings tokenize").into_tokens();
    tokens.shuffle(rng);
    tokens.concat()
}

#[cfg(test)]
mod tests {
    use super::super::{split_dataset, ReactionDataset, ReactionRecord};
    use super::*;

    fn dataset(n: usize) -> ReactionDataset {
        let records = (0..n)
            .map(|i| ReactionRecord {
                id: format!("r{i}"),
                class: None,
                reactants: "CCO.CC(=O)O".into(),
                product: "CCOC(C)=O".into(),
            })
            .collect();
        split_dataset(ReactionDataset::new(records).unwrap(), (0.8, 0.1, 0.1), 5).unwrap()
    }

    #[test]
    fn zero_fraction_is_identity() {
        let ds = dataset(50);
        let out = contaminate(ds.clone(), 0.0, 3);
        assert_eq!(ds, out);
    }

    #[test]
    fn full_fraction_touches_all_non_test() {
        let ds = dataset(50);
        let out = contaminate(ds.clone(), 1.0, 3);
        for i in 0..ds.len() {
            let (before, after) = (&ds.records()[i], &out.records()[i]);
            if ds.split_of(i) == Split::Test {
                assert_eq!(before, after);
            } else {
                assert_ne!(before.product, after.product);
            }
        }
    }

    #[test]
    fn touched_count_is_exact_ceiling() {
        let ds = dataset(50); // 45 train+val records
        for (fraction, expected) in [(0.2, 9), (0.5, 23), (0.01, 1)] {
            let out = contaminate(ds.clone(), fraction, 7);
            let touched = (0..ds.len())
                .filter(|&i| ds.records()[i] != out.records()[i])
                .count();
            assert_eq!(touched, expected, "fraction {fraction}");
        }
    }

    #[test]
    fn token_multiset_preserved_per_side() {
        let ds = dataset(20);
        let out = contaminate(ds.clone(), 1.0, 11);
        for i in 0..ds.len() {
            if ds.split_of(i) == Split::Test {
                continue;
            }
            let mut orig: Vec<String> =
                tokenize(&ds.records()[i].product).unwrap().into_tokens();
            let mut got: Vec<String> =
                tokenize(&out.records()[i].reactants).unwrap().into_tokens();
            orig.sort();
            got.sort();
            assert_eq!(orig, got);
        }
    }

    #[test]
    fn deterministic() {
        let ds = dataset(30);
        let a = contaminate(ds.clone(), 0.4, 13);
        let b = contaminate(ds, 0.4, 13);
        assert_eq!(a, b);
    }
}
