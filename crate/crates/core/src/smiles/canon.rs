//! Canonical SMILES by iterative neighborhood-invariant refinement.
//!
//! Atom ranks start from (element, charge, degree, aromaticity, H-count,
//! isotope) and are refined with sorted neighbor ranks until the partition
//! stabilizes. Remaining ties are broken by exploring candidate strings and
//! keeping the lexicographically smallest; exploration is capped, with an
//! input-order fallback for pathologically symmetric inputs.

use crate::hash::hash_words;

use super::write::write_smiles_with_order;
use super::{parse_smiles, MolGraph, SmilesError};

/// Candidate strings explored per fragment before giving up on symmetry.
const TIE_BREAK_BUDGET: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonOutcome {
    pub smiles: String,
    /// True when some fragment exceeded the tie-break budget and fell back to
    /// input-order ranking; such molecules should be logged by callers that
    /// care about strict representation invariance.
    pub used_fallback: bool,
}

/// Canonical form of a SMILES string. Output depends only on the labeled
/// graph, not on the input's atom order or serialization choices.
pub fn canonicalize(text: &str) -> Result<String, SmilesError> {
    Ok(canonicalize_diag(text)?.smiles)
}

/// As [`canonicalize`], also reporting whether the symmetry fallback fired.
pub fn canonicalize_diag(text: &str) -> Result<CanonOutcome, SmilesError> {
    let mol = parse_smiles(text)?;
    Ok(canonical_outcome(&mol))
}

/// Canonical string of an already-parsed graph.
pub fn canonical_string(mol: &MolGraph) -> String {
    canonical_outcome(mol).smiles
}

fn canonical_outcome(mol: &MolGraph) -> CanonOutcome {
    let nfrag = mol.fragment_count();
    let mut parts = Vec::with_capacity(nfrag);
    let mut used_fallback = false;
    for f in 0..nfrag {
        let (frag, _) = mol.extract_fragment(f);
        let (s, fb) = canonical_fragment(&frag);
        used_fallback |= fb;
        parts.push(s);
    }
    parts.sort();
    CanonOutcome { smiles: parts.join("."), used_fallback }
}

fn canonical_fragment(frag: &MolGraph) -> (String, bool) {
    let ranks = refine_to_stable(frag, initial_invariants(frag));
    let mut explorer =
        Explorer { frag, budget: TIE_BREAK_BUDGET, truncated: false, best: None };
    explorer.explore(ranks.clone());
    match explorer.best.take() {
        Some(s) if !explorer.truncated => (s, false),
        // Exploration was cut short: the best string seen may depend on input
        // order, so fall back to deterministic input-order tie-breaking.
        _ => {
            let forced = break_all_ties_by_index(&ranks);
            (string_for_ranks(frag, &forced), true)
        }
    }
}

struct Explorer<'a> {
    frag: &'a MolGraph,
    budget: usize,
    truncated: bool,
    best: Option<String>,
}

impl Explorer<'_> {
    fn explore(&mut self, ranks: Vec<usize>) {
        if self.truncated {
            return;
        }
        match first_tied_class(&ranks) {
            None => {
                if self.budget == 0 {
                    self.truncated = true;
                    return;
                }
                self.budget -= 1;
                let s = string_for_ranks(self.frag, &ranks);
                if self.best.as_ref().is_none_or(|b| s < *b) {
                    self.best = Some(s);
                }
            }
            Some(class) => {
                for &atom in &class {
                    if self.truncated {
                        return;
                    }
                    // Promote one member ahead of its classmates without
                    // colliding into the next class, then re-refine.
                    let invariants: Vec<u64> = (0..ranks.len())
                        .map(|i| {
                            let mut v = 2 * ranks[i] as u64;
                            if i != atom && ranks[i] == ranks[atom] {
                                v += 1;
                            }
                            v
                        })
                        .collect();
                    let refined = refine_to_stable(self.frag, invariants);
                    self.explore(refined);
                }
            }
        }
    }
}

/// Members of the lowest tied rank, in atom-index order.
fn first_tied_class(ranks: &[usize]) -> Option<Vec<usize>> {
    let mut count = vec![0usize; ranks.len()];
    for &r in ranks {
        count[r] += 1;
    }
    let tied_rank = (0..ranks.len()).find(|&r| count[r] > 1)?;
    Some((0..ranks.len()).filter(|&i| ranks[i] == tied_rank).collect())
}

fn break_all_ties_by_index(ranks: &[usize]) -> Vec<usize> {
    let n = ranks.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (ranks[i], i));
    let mut out = vec![0; n];
    for (new_rank, &i) in idx.iter().enumerate() {
        out[i] = new_rank;
    }
    out
}

fn string_for_ranks(frag: &MolGraph, ranks: &[usize]) -> String {
    let n = frag.atom_count();
    debug_assert!(first_tied_class(ranks).is_none(), "ranks must be discrete");
    let mut priority = vec![0usize; n];
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| ranks[i]);
    for (p, &atom) in idx.iter().enumerate() {
        priority[p] = atom;
    }
    write_smiles_with_order(frag, &priority).0
}

/// Initial invariant: element, charge, degree, aromaticity, H-count, isotope.
/// Chirality and bond stereo are deliberately excluded from ranking; they
/// still appear in the output string, where tie-break exploration sees them.
fn initial_invariants(frag: &MolGraph) -> Vec<u64> {
    (0..frag.atom_count())
        .map(|i| {
            let a = &frag.atoms()[i];
            hash_words(&[
                a.element.ordinal(),
                (a.formal_charge as i64 + 8) as u64,
                frag.degree(i) as u64,
                a.aromatic as u64,
                a.explicit_h.map(|h| h as u64 + 1).unwrap_or(0),
                a.isotope.map(|x| x as u64 + 1).unwrap_or(0),
            ])
        })
        .collect()
}

/// Dense ranks of the invariant values (0-based, equal values share a rank).
fn dense_ranks(invariants: &[u64]) -> Vec<usize> {
    let mut sorted: Vec<u64> = invariants.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    invariants
        .iter()
        .map(|v| sorted.binary_search(v).expect("value present"))
        .collect()
}

fn refine_to_stable(frag: &MolGraph, invariants: Vec<u64>) -> Vec<usize> {
    let mut ranks = dense_ranks(&invariants);
    loop {
        let next_inv: Vec<u64> = (0..frag.atom_count())
            .map(|i| {
                let mut env: Vec<u64> = frag
                    .neighbors(i)
                    .iter()
                    .map(|&(j, bi)| frag.bonds()[bi].order.code() << 32 | ranks[j] as u64)
                    .collect();
                env.sort_unstable();
                let mut words = Vec::with_capacity(env.len() + 1);
                words.push(ranks[i] as u64);
                words.extend_from_slice(&env);
                hash_words(&words)
            })
            .collect();
        let next = dense_ranks(&next_inv);
        let classes_before = ranks.iter().copied().max().map_or(0, |m| m + 1);
        let classes_after = next.iter().copied().max().map_or(0, |m| m + 1);
        // Refinement only splits classes; equal class counts mean stable.
        if classes_after == classes_before {
            return ranks;
        }
        ranks = next;
    }
}
