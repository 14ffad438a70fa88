//! Circular (ECFP-style) bit fingerprints and Tanimoto similarity.
//!
//! Per atom, a neighborhood invariant is hashed for radii 0..=r; each hash
//! sets bit `hash % nbits`. Hashing is a fixed seeded 64-bit mix so the same
//! molecule yields the same bits on every platform.

use thiserror::Error;

use crate::hash::hash_words;
use crate::smiles::{canonicalize, parse_smiles, MolGraph, SmilesError};

pub const SUPPORTED_NBITS: [usize; 5] = [256, 512, 1024, 2048, 4096];
pub const MAX_RADIUS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("nbits {0} not one of {SUPPORTED_NBITS:?}")]
    BadNBits(usize),
    #[error("radius {0} exceeds {MAX_RADIUS}")]
    RadiusTooLarge(u32),
    #[error("fingerprint lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fold dimension {dim} does not divide nbits {nbits}")]
    BadDimension { dim: usize, nbits: usize },
}

/// Fingerprint settings shared across a whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FingerprintConfig {
    pub radius: u32,
    pub nbits: usize,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig { radius: 2, nbits: 2048 }
    }
}

/// Fixed-length bit set with a cached popcount.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFingerprint {
    nbits: usize,
    words: Vec<u64>,
    popcount: u32,
}

impl BitFingerprint {
    pub fn empty(nbits: usize) -> Result<BitFingerprint, FingerprintError> {
        if !SUPPORTED_NBITS.contains(&nbits) {
            return Err(FingerprintError::BadNBits(nbits));
        }
        Ok(BitFingerprint { nbits, words: vec![0; nbits / 64], popcount: 0 })
    }

    pub fn from_indices(
        nbits: usize,
        indices: &[usize],
    ) -> Result<BitFingerprint, FingerprintError> {
        let mut fp = BitFingerprint::empty(nbits)?;
        for &i in indices {
            fp.set(i % nbits);
        }
        Ok(fp)
    }

    fn set(&mut self, index: usize) {
        let word = index / 64;
        let mask = 1u64 << (index % 64);
        if self.words[word] & mask == 0 {
            self.words[word] |= mask;
            self.popcount += 1;
        }
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn get(&self, index: usize) -> bool {
        self.words[index / 64] & (1u64 << (index % 64)) != 0
    }

    /// Indices of the set bits, ascending.
    pub fn on_bits(&self) -> Vec<usize> {
        (0..self.nbits).filter(|&i| self.get(i)).collect()
    }

    /// Bitwise union; both operands must share `nbits`.
    pub fn union(&self, other: &BitFingerprint) -> Result<BitFingerprint, FingerprintError> {
        if self.nbits != other.nbits {
            return Err(FingerprintError::LengthMismatch(self.nbits, other.nbits));
        }
        let words: Vec<u64> =
            self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        let popcount = words.iter().map(|w| w.count_ones()).sum();
        Ok(BitFingerprint { nbits: self.nbits, words, popcount })
    }
}

/// OR-fold of a fingerprint down to `dim` real-valued slots in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedVector {
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Circular fingerprint of a (possibly multi-fragment) molecule. All
/// fragments contribute to one bit set.
pub fn ecfp(
    mol: &MolGraph,
    radius: u32,
    nbits: usize,
) -> Result<BitFingerprint, FingerprintError> {
    if radius > MAX_RADIUS {
        return Err(FingerprintError::RadiusTooLarge(radius));
    }
    let mut fp = BitFingerprint::empty(nbits)?;
    let n = mol.atom_count();
    // radius 0: the bare atom invariant
    let mut current: Vec<u64> = (0..n).map(|i| atom_invariant(mol, i)).collect();
    for &h in &current {
        fp.set((h % nbits as u64) as usize);
    }
    for _ in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, bi)| (mol.bonds()[bi].order.code(), current[j]))
                    .collect();
                env.sort_unstable();
                let mut words = Vec::with_capacity(env.len() * 2 + 1);
                words.push(current[i]);
                for (b, inv) in env {
                    words.push(b);
                    words.push(inv);
                }
                hash_words(&words)
            })
            .collect();
        for &h in &next {
            fp.set((h % nbits as u64) as usize);
        }
        current = next;
    }
    Ok(fp)
}

/// Initial atom invariant: element, charge, degree, aromaticity, H-count.
fn atom_invariant(mol: &MolGraph, i: usize) -> u64 {
    let a = &mol.atoms()[i];
    hash_words(&[
        a.element.ordinal(),
        (a.formal_charge as i64 + 8) as u64,
        mol.degree(i) as u64,
        a.aromatic as u64,
        a.explicit_h.map(|h| h as u64 + 1).unwrap_or(0),
    ])
}

/// |a ∧ b| / |a ∨ b|; two empty fingerprints count as identical (1.0).
pub fn tanimoto(a: &BitFingerprint, b: &BitFingerprint) -> Result<f64, FingerprintError> {
    if a.nbits != b.nbits {
        return Err(FingerprintError::LengthMismatch(a.nbits, b.nbits));
    }
    let mut inter = 0u32;
    let mut union = 0u32;
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// OR-fold: output slot `j` is the OR of bits `j, j+dim, j+2*dim, ...`.
pub fn fold(fp: &BitFingerprint, dim: usize) -> Result<FoldedVector, FingerprintError> {
    if dim == 0 || fp.nbits % dim != 0 {
        return Err(FingerprintError::BadDimension { dim, nbits: fp.nbits });
    }
    let mut values = vec![0.0; dim];
    for i in 0..fp.nbits {
        if fp.get(i) {
            values[i % dim] = 1.0;
        }
    }
    Ok(FoldedVector { dim, values })
}

/// Tanimoto similarity between a predicted and a ground-truth molecule, both
/// given as SMILES. The truth must parse; an unparseable prediction scores
/// 0.0 so broken generators are penalized rather than skipped.
pub fn molecule_similarity(
    pred: &str,
    truth: &str,
    cfg: &FingerprintConfig,
) -> Result<f64, SmilesError> {
    let truth_canonical = canonicalize(truth)?;
    let truth_mol = parse_smiles(&truth_canonical).expect("canonical output parses");
    let truth_fp = ecfp(&truth_mol, cfg.radius, cfg.nbits).expect("validated config");
    let Ok(pred_canonical) = canonicalize(pred) else {
        return Ok(0.0);
    };
    let pred_mol = parse_smiles(&pred_canonical).expect("canonical output parses");
    let pred_fp = ecfp(&pred_mol, cfg.radius, cfg.nbits).expect("validated config");
    Ok(tanimoto(&pred_fp, &truth_fp).expect("same nbits"))
}
