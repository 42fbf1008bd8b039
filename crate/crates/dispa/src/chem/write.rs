use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{Atom, BondOrder, MolGraph};

/// Emit a SMILES string for the subgraph induced by `subset` (atom indices
/// of `g`). Deterministic: depth-first from the lowest index, neighbors in
/// index order. The subset must induce a connected subgraph.
pub fn write_smiles(g: &MolGraph, subset: &[usize]) -> Result<String> {
    write_smiles_with_order(g, subset).map(|(s, _)| s)
}

/// Like [`write_smiles`], also returning the order in which the subset's
/// atoms were emitted (as indices into `g`). Position `k` of the returned
/// order corresponds to atom `k` of a re-parse of the emitted string.
pub fn write_smiles_with_order(g: &MolGraph, subset: &[usize]) -> Result<(String, Vec<usize>)> {
    if subset.is_empty() {
        return Err(Error::data("empty atom subset"));
    }
    let mut keep = subset.to_vec();
    keep.sort_unstable();
    keep.dedup();

    // First pass: DFS tree + back edges, in the exact order emission will use.
    let mut dfs = Dfs {
        g,
        keep: &keep,
        visited: HashMap::new(),
        children: HashMap::new(),
        atom_labels: HashMap::new(),
        labeled_bonds: std::collections::HashSet::new(),
        next_label: 1,
        count: 0,
    };
    for &a in &keep {
        dfs.visited.insert(a, false);
    }
    dfs.walk(keep[0], None);
    if dfs.count != keep.len() {
        return Err(Error::data(format!(
            "atom subset is disconnected ({} of {} reachable)",
            dfs.count,
            keep.len()
        )));
    }

    // Second pass: emit following the recorded tree.
    let mut out = String::new();
    let mut order = Vec::new();
    emit(g, keep[0], None, &dfs.children, &dfs.atom_labels, &mut out, &mut order);
    Ok((out, order))
}

struct Dfs<'a> {
    g: &'a MolGraph,
    keep: &'a [usize],
    visited: HashMap<usize, bool>,
    children: HashMap<usize, Vec<(usize, usize)>>,
    /// Ring-closure digits per atom: (label, bond order), in label order.
    atom_labels: HashMap<usize, Vec<(u8, BondOrder)>>,
    labeled_bonds: std::collections::HashSet<usize>,
    next_label: u8,
    count: usize,
}

impl Dfs<'_> {
    fn walk(&mut self, atom: usize, via_bond: Option<usize>) {
        self.visited.insert(atom, true);
        self.count += 1;
        for (nb, bi) in self.g.neighbors(atom) {
            if self.keep.binary_search(&nb).is_err() || Some(bi) == via_bond {
                continue;
            }
            if self.visited[&nb] {
                // Back edge; both endpoints get the same closure digit. Each
                // back edge is seen from both ends, so label only once.
                if self.labeled_bonds.insert(bi) {
                    let label = self.next_label;
                    self.next_label += 1;
                    let ord = self.g.bonds[bi].order;
                    self.atom_labels.entry(nb).or_default().push((label, ord));
                    self.atom_labels.entry(atom).or_default().push((label, ord));
                }
            } else {
                self.children.entry(atom).or_default().push((nb, bi));
                self.walk(nb, Some(bi));
            }
        }
    }
}

fn emit(
    g: &MolGraph,
    atom: usize,
    incoming: Option<BondOrder>,
    children: &HashMap<usize, Vec<(usize, usize)>>,
    atom_labels: &HashMap<usize, Vec<(u8, BondOrder)>>,
    out: &mut String,
    order: &mut Vec<usize>,
) {
    if let Some(ord) = incoming {
        out.push_str(bond_symbol(ord, &g.atoms[atom]));
    }
    out.push_str(&atom_text(&g.atoms[atom]));
    order.push(atom);

    if let Some(labels) = atom_labels.get(&atom) {
        for (label, ord) in labels {
            out.push_str(closure_symbol(*ord, &g.atoms[atom]));
            if *label < 10 {
                out.push((b'0' + label) as char);
            } else {
                out.push('%');
                out.push((b'0' + label / 10) as char);
                out.push((b'0' + label % 10) as char);
            }
        }
    }

    let kids = children.get(&atom).map(Vec::as_slice).unwrap_or(&[]);
    for (i, (nb, bi)) in kids.iter().enumerate() {
        let branch = i + 1 < kids.len();
        if branch {
            out.push('(');
        }
        emit(g, *nb, Some(g.bonds[*bi].order), children, atom_labels, out, order);
        if branch {
            out.push(')');
        }
    }
}

fn closure_symbol(ord: BondOrder, here: &Atom) -> &'static str {
    // The parser takes the explicit symbol from whichever side carries one,
    // so a single ring bond touching an aromatic atom is marked '-' on that
    // side to avoid being read back as aromatic.
    match ord {
        BondOrder::Single => {
            if here.aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn bond_symbol(ord: BondOrder, to: &Atom) -> &'static str {
    match ord {
        BondOrder::Single => {
            if to.aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => "",
    }
}

const ORGANIC_SUBSET: &[&str] = &["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

fn atom_text(a: &Atom) -> String {
    let bare_ok = ORGANIC_SUBSET.contains(&a.element.as_str())
        && a.formal_charge == 0
        && a.explicit_h.is_none();
    let symbol = if a.aromatic {
        a.element.to_ascii_lowercase()
    } else {
        a.element.clone()
    };
    if bare_ok {
        return symbol;
    }
    let mut s = String::from("[");
    s.push_str(&symbol);
    if let Some(h) = a.explicit_h {
        if h > 0 {
            s.push('H');
            if h > 1 {
                s.push_str(&h.to_string());
            }
        }
    }
    match a.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn all_atoms(g: &MolGraph) -> Vec<usize> {
        (0..g.atoms.len()).collect()
    }

    #[test]
    fn single_atom_subset() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(write_smiles(&g, &[0]).unwrap(), "C");
        assert_eq!(write_smiles(&g, &[2]).unwrap(), "O");
    }

    #[test]
    fn disconnected_subset_rejected() {
        let g = parse_smiles("CCO").unwrap();
        assert!(write_smiles(&g, &[0, 2]).is_err());
    }

    #[test]
    fn benzene_round_trip() {
        let g = parse_smiles("c1ccccc1").unwrap();
        let s = write_smiles(&g, &all_atoms(&g)).unwrap();
        let g2 = parse_smiles(&s).unwrap();
        assert_eq!(g2.atoms.len(), 6);
        assert!(g2.atoms.iter().all(|a| a.aromatic));
        assert_eq!(g2.rings.len(), 1);
    }

    #[test]
    fn charged_bracket_atom_survives() {
        let g = parse_smiles("C[N+](C)(C)C").unwrap();
        let s = write_smiles(&g, &all_atoms(&g)).unwrap();
        let g2 = parse_smiles(&s).unwrap();
        let n = g2.atoms.iter().find(|a| a.element == "N").unwrap();
        assert_eq!(n.formal_charge, 1);
    }
}
