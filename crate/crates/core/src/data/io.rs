//! Wire format: UTF-8, one record per line, TAB-separated
//! `id<TAB>class<TAB>reaction_smiles` where the reaction is
//! `reactants>reagents>product`. `#`-prefixed lines are comments.
//!
//! On load, reagents are dropped, multi-product reactions are expanded to one
//! record per product, everything is canonicalized, and records whose SMILES
//! fail to parse are skipped and counted rather than aborting the load.

use std::path::Path;

use crate::smiles::canonicalize;

use super::{DataError, ReactionDataset, ReactionRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadSummary {
    /// Data lines that parsed structurally.
    pub lines: usize,
    /// Records emitted (after multi-product expansion).
    pub records: usize,
    /// Records dropped because a SMILES side failed to parse.
    pub skipped: usize,
    /// Extra records created by splitting multi-product reactions.
    pub split_products: usize,
}

pub fn load_reactions(path: impl AsRef<Path>) -> Result<(ReactionDataset, LoadSummary), DataError> {
    let text = std::fs::read_to_string(path)?;
    load_reactions_from_str(&text)
}

pub fn load_reactions_from_str(text: &str) -> Result<(ReactionDataset, LoadSummary), DataError> {
    let mut records = Vec::new();
    let mut summary = LoadSummary::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let n = lineno + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DataError::Format {
                line: n,
                msg: format!("expected 3 TAB-separated fields, found {}", fields.len()),
            });
        }
        let (id, class, reaction) = (fields[0], fields[1], fields[2]);
        if id.is_empty() {
            return Err(DataError::Format { line: n, msg: "empty record id".into() });
        }
        let parts: Vec<&str> = reaction.split('>').collect();
        if parts.len() != 3 {
            return Err(DataError::Format {
                line: n,
                msg: "reaction must be `reactants>reagents>product`".into(),
            });
        }
        summary.lines += 1;
        let (reactants_raw, _reagents, products_raw) = (parts[0], parts[1], parts[2]);
        let class = if class.is_empty() { None } else { Some(class.to_string()) };

        let reactants = match canonicalize(reactants_raw) {
            Ok(c) => c,
            Err(_) => {
                summary.skipped += 1;
                continue;
            }
        };
        let products: Vec<&str> =
            products_raw.split('.').filter(|p| !p.is_empty()).collect();
        if products.is_empty() {
            summary.skipped += 1;
            continue;
        }
        let multi = products.len() > 1;
        if multi {
            summary.split_products += products.len() - 1;
        }
        for (pi, product_raw) in products.iter().enumerate() {
            let product = match canonicalize(product_raw) {
                Ok(c) => c,
                Err(_) => {
                    summary.skipped += 1;
                    continue;
                }
            };
            let rec_id = if multi { format!("{id}.{pi}") } else { id.to_string() };
            records.push(ReactionRecord {
                id: rec_id,
                class: class.clone(),
                reactants: reactants.clone(),
                product,
            });
            summary.records += 1;
        }
    }
    Ok((ReactionDataset::new(records)?, summary))
}

/// Write a dataset back in the wire format (`reactants>>product`, reagents
/// always empty). Split tags are not part of the format; they are re-derived
/// from seeds.
pub fn save_reactions(path: impl AsRef<Path>, ds: &ReactionDataset) -> Result<(), DataError> {
    let mut out = String::new();
    for r in ds.records() {
        out.push_str(&r.id);
        out.push('\t');
        if let Some(c) = &r.class {
            out.push_str(c);
        }
        out.push('\t');
        out.push_str(&r.reactants);
        out.push_str(">>");
        out.push_str(&r.product);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
