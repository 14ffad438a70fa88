//! Synthetic reaction corpus from exact forward templates over random acyclic
//! alkyl scaffolds. Ground truth is recoverable by re-applying the template,
//! so the acceptance suite needs no external data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::derive_seed;
use crate::smiles::canonicalize;

use super::{DataError, ReactionDataset, ReactionRecord};

pub const MAX_SCAFFOLD_HEAVY_ATOMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionFamily {
    /// acid + alcohol → ester: `O=C(R1)O` + `OR2` → `O=C(R1)OR2`
    Esterification,
    /// acid + amine → amide: `O=C(R1)O` + `NR2` → `O=C(R1)NR2`
    AmideFormation,
    /// alcohol + chloride → ether: `OR1` + `ClR2` → `O(R1)R2`
    EtherFormation,
    /// alcohol + bromide → alkyl bromide: `OR1` + `Br` → `BrR1`
    Bromination,
}

impl ReactionFamily {
    pub const ALL: [ReactionFamily; 4] = [
        ReactionFamily::Esterification,
        ReactionFamily::AmideFormation,
        ReactionFamily::EtherFormation,
        ReactionFamily::Bromination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReactionFamily::Esterification => "esterification",
            ReactionFamily::AmideFormation => "amide_formation",
            ReactionFamily::EtherFormation => "ether_formation",
            ReactionFamily::Bromination => "bromination",
        }
    }

    /// Class label: the family's index in [`ReactionFamily::ALL`].
    pub fn class_label(self) -> String {
        Self::ALL.iter().position(|&f| f == self).unwrap().to_string()
    }

    pub fn from_name(name: &str) -> Option<ReactionFamily> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Raw reactant strings and the product string for two rooted scaffolds.
    fn apply(self, r1: &str, r2: &str) -> (String, String) {
        match self {
            ReactionFamily::Esterification => {
                (format!("O=C({r1})O.O{r2}"), format!("O=C({r1})O{r2}"))
            }
            ReactionFamily::AmideFormation => {
                (format!("O=C({r1})O.N{r2}"), format!("O=C({r1})N{r2}"))
            }
            ReactionFamily::EtherFormation => (format!("O{r1}.Cl{r2}"), format!("O({r1}){r2}")),
            ReactionFamily::Bromination => (format!("O{r1}.Br"), format!("Br{r1}")),
        }
    }
}

/// Generate `n_per_family[i]` reactions of `families[i]`. Class labels are
/// family indices; ids are unique per (family, index).
pub fn generate_synthetic(
    n_per_family: &[usize],
    families: &[ReactionFamily],
    seed: u64,
) -> Result<ReactionDataset, DataError> {
    assert_eq!(
        n_per_family.len(),
        families.len(),
        "need one count per family"
    );
    let mut records = Vec::new();
    for (fi, (&family, &n)) in families.iter().zip(n_per_family).enumerate() {
        for j in 0..n {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth", &[fi as u64, j as u64]));
            let r1 = random_scaffold(&mut rng);
            let r2 = random_scaffold(&mut rng);
            let (reactants_raw, product_raw) = family.apply(&r1, &r2);
            let reactants =
                canonicalize(&reactants_raw).expect("template output is valid SMILES");
            let product = canonicalize(&product_raw).expect("template output is valid SMILES");
            records.push(ReactionRecord {
                id: format!("f{fi}r{j}"),
                class: Some(family.class_label()),
                reactants,
                product,
            });
        }
    }
    ReactionDataset::new(records)
}

/// Random acyclic alkyl tree with 1..=8 carbons, written rooted: the first
/// atom of the string is the attachment point.
fn random_scaffold(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=MAX_SCAFFOLD_HEAVY_ATOMS);
    // children[i] lists the subtrees of node i; node 0 is the root.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for node in 1..n {
        // keep the root light so the functional attachment stays plausible
        let candidates: Vec<usize> = (0..node)
            .filter(|&p| children[p].len() < if p == 0 { 2 } else { 3 })
            .collect();
        let parent = candidates[rng.gen_range(0..candidates.len())];
        children[parent].push(node);
    }
    rooted_smiles(0, &children)
}

fn rooted_smiles(node: usize, children: &[Vec<usize>]) -> String {
    let mut s = String::from("C");
    let kids = &children[node];
    for (i, &kid) in kids.iter().enumerate() {
        let sub = rooted_smiles(kid, children);
        if i + 1 < kids.len() {
            s.push('(');
            s.push_str(&sub);
            s.push(')');
        } else {
            s.push_str(&sub);
        }
    }
    s
}
