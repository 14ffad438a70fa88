//! SMILES writer. Serializes a graph following a caller-supplied atom
//! priority; the canonicalizer feeds it canonical ranks.

use super::{Atom, BondOrder, BondStereo, Chirality, MolGraph};

/// Write a SMILES string for `mol`, traversing each fragment from its
/// highest-priority atom and visiting neighbors in priority order.
///
/// `priority` must be a permutation of `0..mol.atom_count()`; lower position
/// means higher priority. Fragments are emitted in priority order of their
/// best atom. Panics if `priority` is not a permutation (programmer error).
pub fn write_smiles(mol: &MolGraph, priority: &[usize]) -> String {
    write_smiles_with_order(mol, priority).0
}

/// Like [`write_smiles`] but also returns the atom emission order: entry `k`
/// is the index in `mol` of the `k`-th atom of the output string.
pub(crate) fn write_smiles_with_order(mol: &MolGraph, priority: &[usize]) -> (String, Vec<usize>) {
    let n = mol.atom_count();
    assert_eq!(priority.len(), n, "priority length must equal atom count");
    let mut pos = vec![usize::MAX; n];
    for (p, &atom) in priority.iter().enumerate() {
        assert!(atom < n && pos[atom] == usize::MAX, "priority must be a permutation");
        pos[atom] = p;
    }

    let nfrag = mol.fragment_count();
    let mut frag_best: Vec<(usize, usize)> = (0..nfrag).map(|f| (usize::MAX, f)).collect();
    for atom in 0..n {
        let f = mol.fragment_ids()[atom];
        if pos[atom] < frag_best[f].0 {
            frag_best[f] = (pos[atom], f);
        }
    }
    frag_best.sort_unstable();

    let mut out = String::new();
    let mut order = Vec::with_capacity(n);
    for (i, &(_, f)) in frag_best.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        let start = (0..n)
            .filter(|&a| mol.fragment_ids()[a] == f)
            .min_by_key(|&a| pos[a])
            .expect("fragment has atoms");
        write_fragment(mol, start, &pos, &mut out, &mut order);
    }
    (out, order)
}

struct Frame {
    atom: usize,
    /// Remaining tree children as (bond index, child atom), highest priority last.
    children: Vec<(usize, usize)>,
    /// Whether the next child opens a parenthesized branch.
    branch_open: bool,
}

fn write_fragment(
    mol: &MolGraph,
    start: usize,
    pos: &[usize],
    out: &mut String,
    order: &mut Vec<usize>,
) {
    let n = mol.atom_count();

    // Spanning DFS in the exact order emission will follow (highest-priority
    // neighbor first); bonds left out of the tree are ring closures.
    let mut is_tree = vec![false; mol.bonds().len()];
    let mut parent_of: Vec<Option<usize>> = vec![None; n];
    {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut stack: Vec<(usize, Vec<(usize, usize)>, usize)> =
            vec![(start, sorted_neighbors(mol, start, pos), 0)];
        while let Some((u, nbrs, idx)) = stack.last_mut() {
            if *idx >= nbrs.len() {
                stack.pop();
                continue;
            }
            let (v, bi) = nbrs[*idx];
            let u = *u;
            *idx += 1;
            if !seen[v] {
                seen[v] = true;
                is_tree[bi] = true;
                parent_of[v] = Some(u);
                let next = sorted_neighbors(mol, v, pos);
                stack.push((v, next, 0));
            }
        }
    }

    let mut emitter = Emitter {
        mol,
        pos,
        is_tree: &is_tree,
        ring_digit_of_bond: vec![None; mol.bonds().len()],
        open_digits: vec![false; 100],
    };

    let mut stack: Vec<Frame> = Vec::new();
    emitter.emit_atom(start, out, order);
    stack.push(Frame {
        atom: start,
        children: tree_children(mol, start, pos, &is_tree, &parent_of),
        branch_open: false,
    });

    while let Some(frame) = stack.last_mut() {
        match frame.children.pop() {
            None => {
                if frame.branch_open {
                    out.push(')');
                }
                stack.pop();
            }
            Some((bi, child)) => {
                let from = frame.atom;
                let more = !frame.children.is_empty();
                if more {
                    out.push('(');
                }
                out.push_str(&bond_text(mol, bi, from, child));
                emitter.emit_atom(child, out, order);
                stack.push(Frame {
                    atom: child,
                    children: tree_children(mol, child, pos, &is_tree, &parent_of),
                    branch_open: more,
                });
            }
        }
    }
}

fn sorted_neighbors(mol: &MolGraph, u: usize, pos: &[usize]) -> Vec<(usize, usize)> {
    let mut nbrs: Vec<(usize, usize)> = mol.neighbors(u).to_vec();
    nbrs.sort_by_key(|&(v, _)| pos[v]);
    nbrs
}

struct Emitter<'a> {
    mol: &'a MolGraph,
    pos: &'a [usize],
    is_tree: &'a [bool],
    ring_digit_of_bond: Vec<Option<u16>>,
    open_digits: Vec<bool>,
}

impl Emitter<'_> {
    fn emit_atom(&mut self, u: usize, out: &mut String, order: &mut Vec<usize>) {
        order.push(u);
        out.push_str(&atom_text(&self.mol.atoms()[u]));
        // Ring-closure digits come right after the atom, before any branch;
        // ordered by the other endpoint's priority for determinism.
        let mut ring_bonds: Vec<(usize, usize)> = self
            .mol
            .neighbors(u)
            .iter()
            .copied()
            .filter(|&(_, bi)| !self.is_tree[bi])
            .collect();
        ring_bonds.sort_by_key(|&(v, _)| self.pos[v]);
        for (v, bi) in ring_bonds {
            match self.ring_digit_of_bond[bi] {
                None => {
                    let d = self.alloc_digit();
                    self.ring_digit_of_bond[bi] = Some(d);
                    out.push_str(&bond_text(self.mol, bi, u, v));
                    push_digit(out, d);
                }
                Some(d) => {
                    self.open_digits[d as usize] = false;
                    push_digit(out, d);
                }
            }
        }
    }

    fn alloc_digit(&mut self) -> u16 {
        for d in 1..100u16 {
            if !self.open_digits[d as usize] {
                self.open_digits[d as usize] = true;
                return d;
            }
        }
        panic!("more than 99 simultaneously open ring bonds");
    }
}

/// Tree children of `u`, sorted so the highest-priority child is popped last
/// (i.e. emitted first).
fn tree_children(
    mol: &MolGraph,
    u: usize,
    pos: &[usize],
    is_tree: &[bool],
    parent_of: &[Option<usize>],
) -> Vec<(usize, usize)> {
    let mut kids: Vec<(usize, usize)> = mol
        .neighbors(u)
        .iter()
        .filter(|&&(v, bi)| is_tree[bi] && parent_of[v] == Some(u))
        .map(|&(v, bi)| (bi, v))
        .collect();
    kids.sort_by_key(|&(_, v)| std::cmp::Reverse(pos[v]));
    kids
}

fn push_digit(out: &mut String, d: u16) {
    if d < 10 {
        out.push((b'0' + d as u8) as char);
    } else {
        out.push('%');
        out.push((b'0' + (d / 10) as u8) as char);
        out.push((b'0' + (d % 10) as u8) as char);
    }
}

fn bond_text(mol: &MolGraph, bond_idx: usize, _from: usize, _to: usize) -> String {
    let bond = &mol.bonds()[bond_idx];
    let both_aromatic = mol.atoms()[bond.a].aromatic && mol.atoms()[bond.b].aromatic;
    match (bond.order, bond.stereo) {
        (BondOrder::Single, BondStereo::Up) => "/".into(),
        (BondOrder::Single, BondStereo::Down) => "\\".into(),
        (BondOrder::Single, BondStereo::None) => {
            if both_aromatic {
                "-".into()
            } else {
                String::new()
            }
        }
        (BondOrder::Double, _) => "=".into(),
        (BondOrder::Triple, _) => "#".into(),
        (BondOrder::Aromatic, _) => {
            if both_aromatic {
                String::new()
            } else {
                ":".into()
            }
        }
    }
}

fn atom_text(atom: &Atom) -> String {
    let mut symbol = atom.element.symbol().to_string();
    if atom.aromatic {
        symbol = symbol.to_ascii_lowercase();
    }
    if !atom.needs_bracket() {
        return symbol;
    }
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        s.push_str(&iso.to_string());
    }
    s.push_str(&symbol);
    match atom.chirality {
        Chirality::None => {}
        Chirality::Counterclockwise => s.push('@'),
        Chirality::Clockwise => s.push_str("@@"),
    }
    match atom.explicit_h {
        None | Some(0) => {}
        Some(1) => s.push('H'),
        Some(h) => {
            s.push('H');
            s.push_str(&h.to_string());
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}
