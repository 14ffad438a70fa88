//! SMILES parser. Byte-oriented cursor with position-annotated errors; never
//! panics on arbitrary input.

use std::collections::HashMap;

use super::{Atom, Bond, BondOrder, BondStereo, Chirality, Element, MolGraph, SmilesError};

/// Parse a SMILES string into a molecular graph.
///
/// Multi-fragment input (dot-separated) yields one graph with several
/// connected components. Atom-map numbers (`:n` inside brackets) are accepted
/// and discarded.
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    Parser::new(text)?.run()
}

struct RingOpen {
    atom: usize,
    bond: Option<PendingBond>,
    pos: usize,
}

#[derive(Clone, Copy)]
struct PendingBond {
    order: BondOrder,
    stereo: BondStereo,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    bond_keys: std::collections::HashSet<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<(PendingBond, usize)>,
    branch_stack: Vec<(Option<usize>, usize)>,
    rings: HashMap<u16, RingOpen>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Result<Parser<'a>, SmilesError> {
        if text.is_empty() {
            return Err(SmilesError::Syntax { pos: 0, msg: "empty input".into() });
        }
        if !text.is_ascii() {
            let pos = text.bytes().position(|b| !b.is_ascii()).unwrap_or(0);
            return Err(SmilesError::Syntax { pos, msg: "non-ASCII byte".into() });
        }
        Ok(Parser {
            bytes: text.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            bond_keys: std::collections::HashSet::new(),
            prev: None,
            pending: None,
            branch_stack: Vec::new(),
            rings: HashMap::new(),
        })
    }

    fn syntax(&self, pos: usize, msg: impl Into<String>) -> SmilesError {
        SmilesError::Syntax { pos, msg: msg.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn run(mut self) -> Result<MolGraph, SmilesError> {
        while let Some(b) = self.peek() {
            let at = self.pos;
            match b {
                b'(' => {
                    self.bump();
                    if self.pending.is_some() {
                        return Err(self.syntax(at, "bond symbol before branch open"));
                    }
                    if self.prev.is_none() {
                        return Err(self.syntax(at, "branch opened before any atom"));
                    }
                    self.branch_stack.push((self.prev, at));
                }
                b')' => {
                    self.bump();
                    if self.pending.is_some() {
                        return Err(self.syntax(at, "dangling bond before branch close"));
                    }
                    match self.branch_stack.pop() {
                        Some((parent, _)) => self.prev = parent,
                        None => return Err(SmilesError::UnbalancedBranch { pos: at }),
                    }
                }
                b'.' => {
                    self.bump();
                    if self.pending.is_some() {
                        return Err(self.syntax(at, "bond symbol before fragment separator"));
                    }
                    if !self.branch_stack.is_empty() {
                        return Err(self.syntax(at, "fragment separator inside branch"));
                    }
                    self.prev = None;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    self.bump();
                    if self.prev.is_none() {
                        return Err(self.syntax(at, "bond symbol with no preceding atom"));
                    }
                    if self.pending.is_some() {
                        return Err(self.syntax(at, "two consecutive bond symbols"));
                    }
                    let pending = match b {
                        b'-' => PendingBond { order: BondOrder::Single, stereo: BondStereo::None },
                        b'=' => PendingBond { order: BondOrder::Double, stereo: BondStereo::None },
                        b'#' => PendingBond { order: BondOrder::Triple, stereo: BondStereo::None },
                        b':' => PendingBond { order: BondOrder::Aromatic, stereo: BondStereo::None },
                        b'/' => PendingBond { order: BondOrder::Single, stereo: BondStereo::Up },
                        _ => PendingBond { order: BondOrder::Single, stereo: BondStereo::Down },
                    };
                    self.pending = Some((pending, at));
                }
                b'0'..=b'9' => {
                    self.bump();
                    self.ring_closure((b - b'0') as u16, at)?;
                }
                b'%' => {
                    self.bump();
                    let d1 = self.bump().filter(u8::is_ascii_digit);
                    let d2 = self.bump().filter(u8::is_ascii_digit);
                    match (d1, d2) {
                        (Some(a), Some(c)) => {
                            let digit = (a - b'0') as u16 * 10 + (c - b'0') as u16;
                            self.ring_closure(digit, at)?;
                        }
                        _ => {
                            return Err(self.syntax(at, "`%` requires two digits"));
                        }
                    }
                }
                b'[' => {
                    let atom = self.parse_bracket_atom()?;
                    self.push_atom(atom, at)?;
                }
                b' ' | b'\t' => {
                    return Err(self.syntax(at, "whitespace not allowed"));
                }
                _ if b.is_ascii_alphabetic() => {
                    let atom = self.parse_bare_atom()?;
                    self.push_atom(atom, at)?;
                }
                _ => {
                    return Err(self.syntax(at, format!("unexpected character `{}`", b as char)));
                }
            }
        }
        if let Some((_, pos)) = self.pending {
            return Err(self.syntax(pos, "dangling bond at end of input"));
        }
        if let Some(&(_, pos)) = self.branch_stack.last() {
            return Err(SmilesError::UnbalancedBranch { pos });
        }
        if let Some((&digit, open)) = self.rings.iter().min_by_key(|(_, o)| o.pos) {
            return Err(SmilesError::UnclosedRing { digit, pos: open.pos });
        }
        if self.atoms.is_empty() {
            return Err(self.syntax(0, "no atoms in input"));
        }
        MolGraph::new(self.atoms, self.bonds)
    }

    fn parse_bare_atom(&mut self) -> Result<Atom, SmilesError> {
        let at = self.pos;
        let b = self.bump().expect("caller checked");
        let two = if (b == b'C' && self.peek() == Some(b'l'))
            || (b == b'B' && self.peek() == Some(b'r'))
        {
            self.bump();
            true
        } else {
            false
        };
        let symbol = if two {
            std::str::from_utf8(&self.bytes[at..at + 2]).unwrap().to_string()
        } else {
            (b as char).to_string()
        };
        let aromatic = b.is_ascii_lowercase();
        let lookup = if aromatic { symbol.to_ascii_uppercase() } else { symbol.clone() };
        let element = match Element::from_symbol(&lookup) {
            // Bare hydrogen is not a thing; it must be bracketed.
            Some(Element::H) | None => {
                return Err(SmilesError::UnsupportedElement { symbol, pos: at });
            }
            Some(e) => e,
        };
        if aromatic && !element.supports_aromatic() {
            return Err(SmilesError::UnsupportedElement { symbol, pos: at });
        }
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn parse_bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.bump(); // consume '['

        // isotope
        let mut isotope: Option<u16> = None;
        while let Some(d) = self.peek().filter(u8::is_ascii_digit) {
            self.bump();
            let v = isotope.unwrap_or(0) as u32 * 10 + (d - b'0') as u32;
            if v > u16::MAX as u32 {
                return Err(self.syntax(open, "isotope out of range"));
            }
            isotope = Some(v as u16);
        }

        // element symbol
        let sym_at = self.pos;
        let first = match self.bump() {
            Some(c) if c.is_ascii_alphabetic() => c,
            Some(_) => return Err(self.syntax(sym_at, "expected element symbol in bracket")),
            None => return Err(self.syntax(open, "unterminated bracket atom")),
        };
        let mut symbol = (first as char).to_string();
        // Two-letter symbols are letter+lowercase; 'H' suffixes are counts.
        if let Some(c) = self.peek().filter(|c| c.is_ascii_lowercase()) {
            let candidate = format!("{}{}", first as char, c as char);
            if Element::from_symbol(&candidate).is_some() {
                self.bump();
                symbol = candidate;
            } else if Element::from_symbol(&(first as char).to_string().to_ascii_uppercase())
                .is_none()
            {
                // Neither the pair nor the single letter is supported; report
                // the pair, which is what the input most likely meant.
                return Err(SmilesError::UnsupportedElement { symbol: candidate, pos: sym_at });
            }
        }
        let aromatic = first.is_ascii_lowercase();
        let lookup = if aromatic { symbol.to_ascii_uppercase() } else { symbol.clone() };
        let element = Element::from_symbol(&lookup)
            .ok_or(SmilesError::UnsupportedElement { symbol: symbol.clone(), pos: sym_at })?;
        if aromatic && !element.supports_aromatic() {
            return Err(SmilesError::UnsupportedElement { symbol, pos: sym_at });
        }

        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.isotope = isotope;
        atom.explicit_h = Some(0);

        // chirality
        if self.peek() == Some(b'@') {
            self.bump();
            if self.peek() == Some(b'@') {
                self.bump();
                atom.chirality = Chirality::Clockwise;
            } else {
                atom.chirality = Chirality::Counterclockwise;
            }
        }

        // hydrogen count
        if self.peek() == Some(b'H') {
            self.bump();
            let mut count = 0u32;
            let mut saw_digit = false;
            while let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                self.bump();
                saw_digit = true;
                count = count * 10 + (d - b'0') as u32;
                if count > 99 {
                    return Err(self.syntax(open, "hydrogen count out of range"));
                }
            }
            atom.explicit_h = Some(if saw_digit { count as u8 } else { 1 });
        }

        // charge
        if let Some(sign) = self.peek().filter(|&c| c == b'+' || c == b'-') {
            self.bump();
            let unit: i32 = if sign == b'+' { 1 } else { -1 };
            let mut charge = unit;
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                let mut value = 0i32;
                while let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                    self.bump();
                    value = value * 10 + (d - b'0') as i32;
                    if value > 9 {
                        break;
                    }
                }
                charge = unit * value;
            } else {
                while self.peek() == Some(sign) {
                    self.bump();
                    charge += unit;
                }
            }
            if !(-4..=4).contains(&charge) {
                return Err(self.syntax(open, format!("charge {charge} out of [-4, 4]")));
            }
            atom.formal_charge = charge as i8;
        }

        // atom map: parsed, then stripped
        if self.peek() == Some(b':') {
            self.bump();
            let mut saw = false;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
                saw = true;
            }
            if !saw {
                return Err(self.syntax(open, "atom map `:` requires digits"));
            }
        }

        match self.bump() {
            Some(b']') => Ok(atom),
            Some(_) => Err(self.syntax(self.pos - 1, "unexpected character in bracket atom")),
            None => Err(self.syntax(open, "unterminated bracket atom")),
        }
    }

    fn push_atom(&mut self, atom: Atom, at: usize) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let pending = self.pending.take().map(|(p, _)| p);
            self.add_bond(prev, idx, pending, at)?;
        } else if let Some((_, pos)) = self.pending.take() {
            return Err(self.syntax(pos, "bond symbol with no preceding atom"));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, digit: u16, at: usize) -> Result<(), SmilesError> {
        let Some(prev) = self.prev else {
            return Err(self.syntax(at, "ring closure digit with no preceding atom"));
        };
        let pending = self.pending.take().map(|(p, _)| p);
        if let Some(open) = self.rings.remove(&digit) {
            if open.atom == prev {
                return Err(self.syntax(at, "ring bond closes on its opening atom"));
            }
            let bond = match (open.bond, pending) {
                (Some(a), Some(b)) => {
                    if a.order != b.order || a.stereo != b.stereo {
                        return Err(self.syntax(at, "conflicting bond symbols on ring closure"));
                    }
                    Some(a)
                }
                (a, b) => a.or(b),
            };
            self.add_bond(open.atom, prev, bond, at)?;
        } else {
            self.rings.insert(digit, RingOpen { atom: prev, bond: pending, pos: at });
        }
        Ok(())
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        pending: Option<PendingBond>,
        at: usize,
    ) -> Result<(), SmilesError> {
        let key = (a.min(b), a.max(b));
        if !self.bond_keys.insert(key) {
            return Err(self.syntax(at, "duplicate bond between the same atom pair"));
        }
        let bond = pending.unwrap_or_else(|| PendingBond {
            order: if self.atoms[a].aromatic && self.atoms[b].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            },
            stereo: BondStereo::None,
        });
        self.bonds.push(Bond { a, b, order: bond.order, stereo: bond.stereo });
        Ok(())
    }
}
