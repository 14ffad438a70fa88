//! Parsing, writing, canonicalization, and tokenization for a SMILES subset.
//!
//! Supported: the organic subset {B,C,N,O,P,S,F,Cl,Br,I}, aromatic lowercase
//! forms of {b,c,n,o,p,s}, bracket atoms with isotope / chirality / H-count /
//! charge (atom maps are accepted and stripped), bond symbols `- = # : / \`,
//! branches, ring closures including `%nn`, and dot-separated fragments.
//!
//! Stereo and chirality marks are carried as plain annotations and written
//! back out; they are never interpreted geometrically. There is no valence
//! model and no implicit-hydrogen inference.

mod canon;
mod parse;
mod token;
mod write;

pub use canon::{canonical_string, canonicalize, canonicalize_diag, CanonOutcome};
pub use parse::parse_smiles;
pub use token::{tokenize, TokenSeq, BOS, EOS, PAD, SEP, UNK};
pub use write::write_smiles;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("ring bond {digit} opened at byte {pos} is never closed")]
    UnclosedRing { digit: u16, pos: usize },
    #[error("unbalanced branch at byte {pos}")]
    UnbalancedBranch { pos: usize },
    #[error("unsupported element `{symbol}` at byte {pos}")]
    UnsupportedElement { symbol: String, pos: usize },
    #[error("token error at byte {pos}: {msg}")]
    Token { pos: usize, msg: String },
    #[error("empty molecule")]
    EmptyMolecule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
    H,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::H => "H",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            "H" => Element::H,
            _ => return None,
        })
    }

    /// Aromatic lowercase forms exist only for these.
    pub fn supports_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    pub fn is_heavy(self) -> bool {
        self != Element::H
    }

    /// Stable ordinal used by canonical ranking and fingerprint hashing.
    pub fn ordinal(self) -> u64 {
        match self {
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::P => 15,
            Element::S => 16,
            Element::F => 9,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
            Element::H => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Chirality {
    #[default]
    None,
    /// `@@`
    Clockwise,
    /// `@`
    Counterclockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BondStereo {
    #[default]
    None,
    /// `/`
    Up,
    /// `\`
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Bracket-specified hydrogen count; bare atoms leave this unset.
    pub explicit_h: Option<u8>,
    pub isotope: Option<u16>,
    pub chirality: Chirality,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            aromatic: false,
            formal_charge: 0,
            explicit_h: None,
            isotope: None,
            chirality: Chirality::None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.aromatic && !self.element.supports_aromatic() {
            return Err(format!("element {} cannot be aromatic", self.element.symbol()));
        }
        if !(-4..=4).contains(&self.formal_charge) {
            return Err(format!("formal charge {} out of [-4, 4]", self.formal_charge));
        }
        Ok(())
    }

    /// True when the atom cannot be written as a bare organic-subset symbol.
    pub fn needs_bracket(&self) -> bool {
        self.element == Element::H
            || self.formal_charge != 0
            || self.explicit_h.is_some()
            || self.isotope.is_some()
            || self.chirality != Chirality::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub stereo: BondStereo,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Bond {
        Bond { a, b, order, stereo: BondStereo::None }
    }

    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A molecular multi-fragment graph. Bond endpoints always index valid atoms,
/// bonds are unique per atom pair, and `fragment_ids` reflect connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    fragment_ids: Vec<usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<MolGraph, SmilesError> {
        let n = atoms.len();
        for atom in &atoms {
            atom.validate().map_err(|msg| SmilesError::Syntax { pos: 0, msg })?;
        }
        let mut seen = std::collections::HashSet::new();
        for bond in &bonds {
            if bond.a >= n || bond.b >= n {
                return Err(SmilesError::Syntax { pos: 0, msg: "bond endpoint out of range".into() });
            }
            if bond.a == bond.b {
                return Err(SmilesError::Syntax { pos: 0, msg: "bond endpoints must differ".into() });
            }
            if bond.stereo != BondStereo::None && bond.order != BondOrder::Single {
                return Err(SmilesError::Syntax {
                    pos: 0,
                    msg: "stereo marks only apply to single bonds".into(),
                });
            }
            let key = (bond.a.min(bond.b), bond.a.max(bond.b));
            if !seen.insert(key) {
                return Err(SmilesError::Syntax {
                    pos: 0,
                    msg: format!("duplicate bond between atoms {} and {}", key.0, key.1),
                });
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (bi, bond) in bonds.iter().enumerate() {
            adjacency[bond.a].push((bond.b, bi));
            adjacency[bond.b].push((bond.a, bi));
        }
        let fragment_ids = connected_components(n, &adjacency);
        Ok(MolGraph { atoms, bonds, fragment_ids, adjacency })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn fragment_ids(&self) -> &[usize] {
        &self.fragment_ids
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element.is_heavy()).count()
    }

    /// Neighbors of `atom` as `(neighbor index, bond index)` pairs.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn fragment_count(&self) -> usize {
        self.fragment_ids.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Extract one fragment as a standalone graph; second value maps the new
    /// atom indices back to indices in `self`.
    pub fn extract_fragment(&self, fragment: usize) -> (MolGraph, Vec<usize>) {
        let members: Vec<usize> =
            (0..self.atoms.len()).filter(|&i| self.fragment_ids[i] == fragment).collect();
        let mut local = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in members.iter().enumerate() {
            local[old] = new;
        }
        let atoms = members.iter().map(|&i| self.atoms[i].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| self.fragment_ids[b.a] == fragment)
            .map(|b| Bond { a: local[b.a], b: local[b.b], order: b.order, stereo: b.stereo })
            .collect();
        let graph = MolGraph::new(atoms, bonds).expect("fragment of a valid graph is valid");
        (graph, members)
    }
}

fn connected_components(n: usize, adjacency: &[Vec<(usize, usize)>]) -> Vec<usize> {
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if ids[start] != usize::MAX {
            continue;
        }
        ids[start] = next;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &(v, _) in &adjacency[u] {
                if ids[v] == usize::MAX {
                    ids[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    ids
}

/// The connected component with the most heavy atoms; ties go to the
/// lexicographically smallest canonical string.
pub fn largest_fragment(mol: &MolGraph) -> Result<MolGraph, SmilesError> {
    if mol.atom_count() == 0 {
        return Err(SmilesError::EmptyMolecule);
    }
    let nfrag = mol.fragment_count();
    if nfrag == 1 {
        return Ok(mol.clone());
    }
    let mut best: Option<(usize, String, MolGraph)> = None;
    for f in 0..nfrag {
        let (frag, _) = mol.extract_fragment(f);
        let heavy = frag.heavy_atom_count();
        if let Some((best_heavy, best_str, _)) = &best {
            if heavy < *best_heavy {
                continue;
            }
            if heavy == *best_heavy {
                let s = canonical_string(&frag);
                if s < *best_str {
                    best = Some((heavy, s, frag));
                }
                continue;
            }
        }
        let s = canonical_string(&frag);
        best = Some((heavy, s, frag));
    }
    Ok(best.expect("at least one fragment").2)
}
