use std::collections::HashMap;

use crate::error::{Error, Result};

use super::tokenize::{tokenize_smiles, Token};
use super::{Atom, Bond, BondOrder, MolGraph};

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Keep the largest component of a dot-separated SMILES instead of
    /// rejecting it.
    pub allow_salts: bool,
}

/// Parse a SMILES string into a [`MolGraph`] with rings perceived.
/// Multi-component inputs are rejected; see [`parse_smiles_full`] for the
/// salt-stripping variant and for collected warnings.
pub fn parse_smiles(input: &str) -> Result<MolGraph> {
    parse_smiles_full(input, &ParseOptions::default()).map(|(g, _)| g)
}

/// Parse with options, returning the graph together with any warnings
/// (discarded stereochemistry, isotopes, dropped salt components).
pub fn parse_smiles_full(
    input: &str,
    opts: &ParseOptions,
) -> Result<(MolGraph, Vec<String>)> {
    let tokens = tokenize_smiles(input)?;
    let mut warnings = Vec::new();

    let mut atoms: Vec<Atom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();

    // Parser state: previous atom per branch level, pending explicit bond,
    // open ring closures keyed by label.
    let mut prev: Option<usize> = None;
    let mut branch_stack: Vec<Option<usize>> = Vec::new();
    let mut pending_bond: Option<(char, usize)> = None;
    let mut open_rings: HashMap<u8, (usize, Option<char>, usize)> = HashMap::new();
    let mut component_break = false;

    for token in &tokens {
        match token {
            Token::Atom {
                element, aromatic, offset,
            } => {
                let idx = push_atom(&mut atoms, element, *aromatic, 0, None);
                connect(
                    &mut bonds,
                    &atoms,
                    prev,
                    idx,
                    pending_bond.take(),
                    *offset,
                    &mut warnings,
                    component_break,
                )?;
                component_break = false;
                prev = Some(idx);
            }
            Token::BracketAtom {
                element,
                aromatic,
                isotope,
                chirality,
                explicit_h,
                charge,
                offset,
            } => {
                if isotope.is_some() {
                    warnings.push(format!("isotope label at byte {offset} discarded"));
                }
                if *chirality {
                    warnings.push(format!("chirality marker at byte {offset} discarded"));
                }
                let idx = push_atom(&mut atoms, element, *aromatic, *charge, Some(*explicit_h));
                connect(
                    &mut bonds,
                    &atoms,
                    prev,
                    idx,
                    pending_bond.take(),
                    *offset,
                    &mut warnings,
                    component_break,
                )?;
                component_break = false;
                prev = Some(idx);
            }
            Token::Bond { symbol, offset } => {
                if pending_bond.is_some() {
                    return Err(Error::parse(*offset, "two bond symbols in a row"));
                }
                pending_bond = Some((*symbol, *offset));
            }
            Token::BranchOpen { offset } => {
                if prev.is_none() {
                    return Err(Error::parse(*offset, "branch with no preceding atom"));
                }
                branch_stack.push(prev);
            }
            Token::BranchClose { offset } => {
                prev = branch_stack
                    .pop()
                    .ok_or_else(|| Error::parse(*offset, "unbalanced ')'"))?;
            }
            Token::RingClosure { label, offset } => {
                let here = prev
                    .ok_or_else(|| Error::parse(*offset, "ring closure with no preceding atom"))?;
                let pend = pending_bond.take().map(|(s, _)| s);
                match open_rings.remove(label) {
                    None => {
                        open_rings.insert(*label, (here, pend, *offset));
                    }
                    Some((other, other_sym, _)) => {
                        if other == here {
                            return Err(Error::parse(*offset, "ring closure to the same atom"));
                        }
                        let sym = match (other_sym, pend) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(Error::parse(
                                    *offset,
                                    "conflicting bond symbols on ring closure",
                                ));
                            }
                            (a, b) => a.or(b),
                        };
                        let order = bond_order(sym, &atoms[other], &atoms[here], *offset, &mut warnings)?;
                        if bonds
                            .iter()
                            .any(|b| b.touches(other) && b.touches(here))
                        {
                            return Err(Error::parse(*offset, "duplicate bond via ring closure"));
                        }
                        bonds.push(Bond {
                            a: other,
                            b: here,
                            order,
                            in_ring: false,
                        });
                    }
                }
            }
            Token::Dot { offset } => {
                if !opts.allow_salts {
                    return Err(Error::parse(
                        *offset,
                        "multi-component SMILES rejected (pass --allow-salts to keep the largest component)",
                    ));
                }
                if pending_bond.is_some() {
                    return Err(Error::parse(*offset, "bond symbol before '.'"));
                }
                prev = None;
                component_break = true;
            }
        }
    }

    if let Some((label, (_, _, offset))) = open_rings.iter().next() {
        return Err(Error::parse(*offset, format!("ring bond {label} unclosed")));
    }
    if !branch_stack.is_empty() {
        return Err(Error::parse(input.len(), "unclosed '('"));
    }
    if let Some((_, offset)) = pending_bond {
        return Err(Error::parse(offset, "dangling bond symbol"));
    }

    let mut graph = MolGraph {
        atoms,
        bonds,
        rings: Vec::new(),
        source: input.to_string(),
    };

    let comps = graph.connected_components();
    if comps.len() > 1 {
        let largest = comps
            .iter()
            .max_by_key(|c| c.len())
            .cloned()
            .expect("at least one component");
        warnings.push(format!(
            "kept largest of {} components ({} atoms)",
            comps.len(),
            largest.len()
        ));
        graph = induced_subgraph(&graph, &largest, input);
    }

    graph.perceive_rings();
    Ok((graph, warnings))
}

fn push_atom(
    atoms: &mut Vec<Atom>,
    element: &str,
    aromatic: bool,
    charge: i32,
    explicit_h: Option<u8>,
) -> usize {
    let index = atoms.len();
    atoms.push(Atom {
        element: element.to_string(),
        aromatic,
        formal_charge: charge,
        explicit_h,
        index,
    });
    index
}

#[allow(clippy::too_many_arguments)]
fn connect(
    bonds: &mut Vec<Bond>,
    atoms: &[Atom],
    prev: Option<usize>,
    idx: usize,
    pending: Option<(char, usize)>,
    offset: usize,
    warnings: &mut Vec<String>,
    component_break: bool,
) -> Result<()> {
    if component_break {
        return Ok(());
    }
    let Some(p) = prev else {
        if let Some((sym, off)) = pending {
            return Err(Error::parse(off, format!("bond '{sym}' with no preceding atom")));
        }
        return Ok(());
    };
    let order = bond_order(pending.map(|(s, _)| s), &atoms[p], &atoms[idx], offset, warnings)?;
    bonds.push(Bond {
        a: p,
        b: idx,
        order,
        in_ring: false,
    });
    Ok(())
}

fn bond_order(
    symbol: Option<char>,
    a: &Atom,
    b: &Atom,
    offset: usize,
    warnings: &mut Vec<String>,
) -> Result<BondOrder> {
    match symbol {
        None => {
            if a.aromatic && b.aromatic {
                Ok(BondOrder::Aromatic)
            } else {
                Ok(BondOrder::Single)
            }
        }
        Some('-') => Ok(BondOrder::Single),
        Some('=') => Ok(BondOrder::Double),
        Some('#') => Ok(BondOrder::Triple),
        Some(':') => Ok(BondOrder::Aromatic),
        Some('/') | Some('\\') => {
            warnings.push(format!(
                "stereo bond marker at byte {offset} treated as single"
            ));
            Ok(BondOrder::Single)
        }
        Some(other) => Err(Error::parse(offset, format!("unknown bond '{other}'"))),
    }
}

/// Extract the subgraph induced by `keep` (sorted atom indices), re-indexing
/// atoms densely.
pub(crate) fn induced_subgraph(g: &MolGraph, keep: &[usize], source: &str) -> MolGraph {
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut atoms = Vec::with_capacity(keep.len());
    for (new_idx, &old) in keep.iter().enumerate() {
        remap.insert(old, new_idx);
        let mut a = g.atoms[old].clone();
        a.index = new_idx;
        atoms.push(a);
    }
    let bonds = g
        .bonds
        .iter()
        .filter_map(|b| {
            let (na, nb) = (remap.get(&b.a)?, remap.get(&b.b)?);
            Some(Bond {
                a: *na,
                b: *nb,
                order: b.order,
                in_ring: false,
            })
        })
        .collect();
    let mut out = MolGraph {
        atoms,
        bonds,
        rings: Vec::new(),
        source: source.to_string(),
    };
    out.perceive_rings();
    out
}
