//! SMILES parsing into molecular graphs, ring perception, and fragment
//! re-emission.
//!
//! The accepted grammar is the Daylight organic subset plus bracket atoms.
//! Stereochemistry markers and isotopes are parsed and discarded with a
//! warning; aromaticity is trusted from lowercase input rather than
//! re-derived.

mod parse;
mod tokenize;
mod write;

pub use parse::{parse_smiles, parse_smiles_full, ParseOptions};
pub use tokenize::{tokenize_smiles, Token};
pub use write::{write_smiles, write_smiles_with_order};

use serde::{Deserialize, Serialize};

/// Elements the downstream model pipeline accepts. Molecules containing
/// anything else (metals, metalloids beyond boron) still parse but are
/// filtered out by the dataset loader.
pub const SUPPORTED_ELEMENTS: &[&str] = &[
    "H", "B", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "Se",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub aromatic: bool,
    pub formal_charge: i32,
    pub explicit_h: Option<u8>,
    /// Ordinal within the molecule.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, atom: usize) -> bool {
        self.a == atom || self.b == atom
    }
}

/// A parsed molecule: atoms, bonds, and a cycle basis of the bond graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Fundamental cycles, each a list of atom indices.
    pub rings: Vec<Vec<usize>>,
    pub source: String,
}

impl MolGraph {
    /// Neighbor list of `atom` as (neighbor atom index, bond index) pairs,
    /// sorted by neighbor index.
    pub fn neighbors(&self, atom: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .bonds
            .iter()
            .enumerate()
            .filter(|(_, b)| b.touches(atom))
            .map(|(bi, b)| (b.other(atom), bi))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.touches(atom)).count()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    /// True if the atom has a double or triple bond to an oxygen.
    pub fn has_carbonyl_oxygen(&self, atom: usize) -> bool {
        self.bonds.iter().any(|b| {
            b.touches(atom)
                && matches!(b.order, BondOrder::Double | BondOrder::Triple)
                && self.atoms[b.other(atom)].element == "O"
        })
    }

    /// True if any atom falls outside [`SUPPORTED_ELEMENTS`].
    pub fn has_unsupported_elements(&self) -> bool {
        self.atoms
            .iter()
            .any(|a| !SUPPORTED_ELEMENTS.contains(&a.element.as_str()))
    }

    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(a) = stack.pop() {
                comp.push(a);
                for (nb, _) in self.neighbors(a) {
                    if !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Compute the fundamental cycle basis of the bond graph and mark every
    /// bond that lies on a basis cycle as `in_ring`. Aromatic bonds that end
    /// up outside any ring (e.g. biaryl linkers written in lowercase) are
    /// downgraded to single.
    pub fn perceive_rings(&mut self) {
        let n = self.atoms.len();
        for b in &mut self.bonds {
            b.in_ring = false;
        }
        self.rings.clear();

        // DFS spanning forest; every non-tree bond closes one fundamental cycle.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n]; // (parent atom, bond idx)
        let mut depth = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut tree_bond = vec![false; self.bonds.len()];

        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut stack = vec![root];
            while let Some(a) = stack.pop() {
                for (nb, bi) in self.neighbors(a) {
                    if !visited[nb] {
                        visited[nb] = true;
                        parent[nb] = Some((a, bi));
                        depth[nb] = depth[a] + 1;
                        tree_bond[bi] = true;
                        stack.push(nb);
                    }
                }
            }
        }

        let mut ring_bonds = vec![false; self.bonds.len()];
        for (bi, bond) in self.bonds.iter().enumerate() {
            if tree_bond[bi] {
                continue;
            }
            // Walk both endpoints up to their lowest common ancestor.
            let (mut u, mut v) = (bond.a, bond.b);
            let mut path_u = vec![u];
            let mut path_v = vec![v];
            let mut cycle_bonds = vec![bi];
            while depth[u] > depth[v] {
                let (p, pb) = parent[u].expect("non-root has parent");
                cycle_bonds.push(pb);
                u = p;
                path_u.push(u);
            }
            while depth[v] > depth[u] {
                let (p, pb) = parent[v].expect("non-root has parent");
                cycle_bonds.push(pb);
                v = p;
                path_v.push(v);
            }
            while u != v {
                let (pu, bu) = parent[u].expect("non-root has parent");
                let (pv, bv) = parent[v].expect("non-root has parent");
                cycle_bonds.push(bu);
                cycle_bonds.push(bv);
                u = pu;
                v = pv;
                path_u.push(u);
                path_v.push(v);
            }
            path_v.pop(); // LCA already in path_u
            path_v.reverse();
            path_u.extend(path_v);
            for cb in &cycle_bonds {
                ring_bonds[*cb] = true;
            }
            self.rings.push(path_u);
        }

        for (bi, bond) in self.bonds.iter_mut().enumerate() {
            bond.in_ring = ring_bonds[bi];
            if bond.order == BondOrder::Aromatic && !bond.in_ring {
                bond.order = BondOrder::Single;
            }
        }
    }
}
