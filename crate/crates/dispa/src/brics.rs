//! Retrosynthetic fragmentation: cleave acyclic single bonds whose endpoint
//! environments match a fixed rule table, then emit the connected components
//! as fragments.
//!
//! The table is a documented subset of the BRICS environments, chosen to
//! reproduce reference decompositions on the fixture corpus. Ring bonds are
//! never cleaved, and all matching bonds are cut simultaneously, so the
//! result is order-independent and idempotent.

use serde::Serialize;

use crate::chem::{parse_smiles, write_smiles, BondOrder, MolGraph};
use crate::error::{Error, Result};

/// Version tag for the shipped rule table; bump when rules change so cached
/// fragment tables can be invalidated.
pub const RULE_TABLE_VERSION: &str = "dispa-brics-1";

/// One cleavage rule over a bond's two atom environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BricsRule {
    pub id: &'static str,
    pub description: &'static str,
}

pub const RULES: &[BricsRule] = &[
    BricsRule { id: "amide", description: "acyl C(=O)-N, N not aromatic" },
    BricsRule { id: "ester", description: "acyl C(=O)-O, O with a second neighbor" },
    BricsRule { id: "aryl_ether", description: "aromatic c-O, O not an ester oxygen, O with two neighbors" },
    BricsRule { id: "amine", description: "sp3 C-N, C non-terminal and non-acyl, N non-aromatic and not an amide N" },
    BricsRule { id: "sulfonamide", description: "S(=O)(=O)-N" },
    BricsRule { id: "aryl_sp3", description: "aromatic c to non-terminal sp3 C linker" },
    BricsRule { id: "biaryl", description: "acyclic aromatic c-c between two rings" },
];

/// A connected piece of the parent molecule after cleavage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fragment {
    /// Atom indices into the parent graph, sorted.
    pub atoms: Vec<usize>,
    pub smiles: String,
    /// Number of cleaved bonds incident to this fragment.
    pub attachment_count: usize,
}

fn is_sp3_carbon(g: &MolGraph, atom: usize) -> bool {
    let a = &g.atoms[atom];
    a.element == "C"
        && !a.aromatic
        && !g
            .bonds
            .iter()
            .any(|b| b.touches(atom) && matches!(b.order, BondOrder::Double | BondOrder::Triple))
}

fn is_acyl_carbon(g: &MolGraph, atom: usize) -> bool {
    g.atoms[atom].element == "C" && !g.atoms[atom].aromatic && g.has_carbonyl_oxygen(atom)
}

fn is_sulfonyl_sulfur(g: &MolGraph, atom: usize) -> bool {
    g.atoms[atom].element == "S"
        && g.bonds
            .iter()
            .filter(|b| {
                b.touches(atom)
                    && b.order == BondOrder::Double
                    && g.atoms[b.other(atom)].element == "O"
            })
            .count()
            >= 2
}

/// N bonded to an acyl carbon or sulfonyl sulfur (amide/sulfonamide N).
fn is_amide_nitrogen(g: &MolGraph, atom: usize) -> bool {
    g.neighbors(atom)
        .iter()
        .any(|&(nb, _)| is_acyl_carbon(g, nb) || is_sulfonyl_sulfur(g, nb))
}

/// O bonded to an acyl carbon through a single bond (ester/acid oxygen).
fn is_ester_oxygen(g: &MolGraph, atom: usize) -> bool {
    g.neighbors(atom).iter().any(|&(nb, bi)| {
        g.bonds[bi].order == BondOrder::Single && is_acyl_carbon(g, nb)
    })
}

/// Which rule, if any, matches the (unordered) bond between `u` and `v`.
fn matching_rule(g: &MolGraph, u: usize, v: usize) -> Option<&'static str> {
    let (eu, ev) = (g.atoms[u].element.as_str(), g.atoms[v].element.as_str());

    // amide: acyl carbon to non-aromatic nitrogen
    if is_acyl_carbon(g, u) && ev == "N" && !g.atoms[v].aromatic {
        return Some("amide");
    }
    // ester: acyl carbon to oxygen that bridges onward
    if is_acyl_carbon(g, u) && ev == "O" && g.degree(v) >= 2 {
        return Some("ester");
    }
    // sulfonamide
    if is_sulfonyl_sulfur(g, u) && ev == "N" && !g.atoms[v].aromatic {
        return Some("sulfonamide");
    }
    // aryl ether: aromatic carbon to a bridging oxygen that is not an ester O
    if eu == "C"
        && g.atoms[u].aromatic
        && ev == "O"
        && !g.atoms[v].aromatic
        && g.degree(v) >= 2
        && !is_ester_oxygen(g, v)
    {
        return Some("aryl_ether");
    }
    // amine: non-terminal sp3 carbon to a plain nitrogen
    if is_sp3_carbon(g, u)
        && g.degree(u) >= 2
        && ev == "N"
        && !g.atoms[v].aromatic
        && !is_amide_nitrogen(g, v)
        && g.degree(v) >= 2
    {
        return Some("amine");
    }
    // aryl to sp3 linker: the aliphatic side must continue (no methyl cuts)
    if eu == "C" && g.atoms[u].aromatic && is_sp3_carbon(g, v) && g.degree(v) >= 2 {
        // exclude C-N/C-O handled above; this rule is carbon-carbon only
        return Some("aryl_sp3");
    }
    // biaryl: two aromatic carbons joined outside any ring
    if eu == "C" && ev == "C" && g.atoms[u].aromatic && g.atoms[v].aromatic {
        return Some("biaryl");
    }
    None
}

/// Indices of bonds that would be cleaved, with the matching rule id.
pub fn find_cleavable_bonds(g: &MolGraph) -> Vec<(usize, &'static str)> {
    let mut out = Vec::new();
    for (bi, bond) in g.bonds.iter().enumerate() {
        if bond.in_ring || bond.order != BondOrder::Single {
            continue;
        }
        let rule = matching_rule(g, bond.a, bond.b).or_else(|| matching_rule(g, bond.b, bond.a));
        if let Some(r) = rule {
            out.push((bi, r));
        }
    }
    out
}

/// Cut all cleavable bonds simultaneously and emit the connected components
/// as fragments, ordered by their lowest parent atom index. A molecule with
/// no cleavable bonds comes back as a single whole-molecule fragment.
pub fn fragment(g: &MolGraph) -> Result<Vec<Fragment>> {
    let cleaved: Vec<usize> = find_cleavable_bonds(g).into_iter().map(|(bi, _)| bi).collect();

    // Connected components of the graph minus the cleaved bonds.
    let n = g.atoms.len();
    let mut comp = vec![usize::MAX; n];
    let mut ncomp = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = ncomp;
        while let Some(a) = stack.pop() {
            for (nb, bi) in g.neighbors(a) {
                if cleaved.contains(&bi) || comp[nb] != usize::MAX {
                    continue;
                }
                comp[nb] = ncomp;
                stack.push(nb);
            }
        }
        ncomp += 1;
    }

    let mut fragments = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let atoms: Vec<usize> = (0..n).filter(|&a| comp[a] == c).collect();
        // Cleavable bonds are never ring bonds, hence bridges: each cut
        // bond ends up with its endpoints in two different components.
        let attachment_count = cleaved
            .iter()
            .filter(|&&bi| {
                let b = &g.bonds[bi];
                (comp[b.a] == c) != (comp[b.b] == c)
            })
            .count();
        let smiles = write_smiles(g, &atoms)?;
        fragments.push(Fragment {
            atoms,
            smiles,
            attachment_count,
        });
    }
    Ok(fragments)
}

/// Sparse circular fingerprint of a fragment: hashed identifiers of every
/// atom environment up to radius 2, computed on the re-parsed fragment
/// SMILES so identical fragment strings always agree.
pub fn fragment_fingerprint(f: &Fragment) -> Result<std::collections::BTreeSet<u64>> {
    let g = parse_smiles(&f.smiles)
        .map_err(|e| Error::data(format!("fragment '{}' does not re-parse: {e}", f.smiles)))?;
    Ok(graph_fingerprint(&g))
}

/// Circular (Morgan-style) environment hashes for a whole graph.
pub fn graph_fingerprint(g: &MolGraph) -> std::collections::BTreeSet<u64> {
    let n = g.atoms.len();
    // Radius-0 identifiers: element, aromaticity, charge, degree.
    let mut ids: Vec<u64> = (0..n)
        .map(|a| {
            let atom = &g.atoms[a];
            let mut h = hash_str(&atom.element);
            h = mix(h ^ atom.aromatic as u64);
            h = mix(h ^ (atom.formal_charge as i64 as u64).wrapping_mul(0x9e37));
            mix(h ^ g.degree(a) as u64)
        })
        .collect();

    let mut features: std::collections::BTreeSet<u64> = ids.iter().copied().collect();
    for _radius in 1..=2 {
        let mut next = ids.clone();
        for a in 0..n {
            let mut env: Vec<u64> = g
                .neighbors(a)
                .iter()
                .map(|&(nb, bi)| mix(ids[nb] ^ bond_code(g.bonds[bi].order)))
                .collect();
            env.sort_unstable();
            let mut h = ids[a];
            for e in env {
                h = mix(h.rotate_left(17) ^ e);
            }
            next[a] = h;
        }
        ids = next;
        features.extend(ids.iter().copied());
    }
    features
}

fn bond_code(order: BondOrder) -> u64 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// splitmix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn frag_smiles(input: &str) -> Vec<String> {
        let g = parse_smiles(input).unwrap();
        fragment(&g).unwrap().into_iter().map(|f| f.smiles).collect()
    }

    #[test]
    fn plain_alkane_is_one_fragment() {
        assert_eq!(frag_smiles("CC"), ["CC"]);
    }

    #[test]
    fn ring_bonds_never_cleave() {
        let g = parse_smiles("C1CC1").unwrap();
        assert!(find_cleavable_bonds(&g).is_empty());
        assert_eq!(fragment(&g).unwrap().len(), 1);
    }

    #[test]
    fn n_methylacetamide_cuts_the_amide_bond() {
        let g = parse_smiles("CC(=O)NC").unwrap();
        let bonds = find_cleavable_bonds(&g);
        assert_eq!(bonds.len(), 1);
        assert_eq!(bonds[0].1, "amide");
        let frags = fragment(&g).unwrap();
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0].attachment_count, 1);
        assert_eq!(frags[1].attachment_count, 1);
    }

    #[test]
    fn toluene_methyl_is_not_cut() {
        assert_eq!(frag_smiles("Cc1ccccc1").len(), 1);
    }

    #[test]
    fn ethylbenzene_cuts_the_linker() {
        let frags = frag_smiles("CCc1ccccc1");
        assert_eq!(frags.len(), 2);
        assert!(frags.contains(&"CC".to_string()));
        assert!(frags.contains(&"c1ccccc1".to_string()));
    }

    #[test]
    fn biphenyl_splits_into_two_rings() {
        let frags = frag_smiles("c1ccccc1-c1ccccc1");
        assert_eq!(frags.len(), 2);
    }

    #[test]
    fn partition_covers_all_atoms_disjointly() {
        for s in ["CC(=O)NCCc1ccccc1", "CCOC(=O)c1ccccc1", "CCNCC"] {
            let g = parse_smiles(s).unwrap();
            let frags = fragment(&g).unwrap();
            let mut all: Vec<usize> = frags.iter().flat_map(|f| f.atoms.clone()).collect();
            all.sort_unstable();
            let expect: Vec<usize> = (0..g.atoms.len()).collect();
            assert_eq!(all, expect, "{s}");
        }
    }

    #[test]
    fn fragmentation_is_idempotent() {
        for s in ["CC(=O)NCCc1ccccc1", "CC(=O)Oc1ccccc1C(=O)O", "CCOCC"] {
            let g = parse_smiles(s).unwrap();
            for f in fragment(&g).unwrap() {
                let sub = parse_smiles(&f.smiles).unwrap();
                let again = fragment(&sub).unwrap();
                assert_eq!(again.len(), 1, "fragment '{}' re-fragmented", f.smiles);
            }
        }
    }

    #[test]
    fn fingerprints_deterministic_and_discriminating() {
        let make = |s: &str| {
            let g = parse_smiles(s).unwrap();
            let f = &fragment(&g).unwrap()[0];
            fragment_fingerprint(f).unwrap()
        };
        assert_eq!(make("CCO"), make("CCO"));
        let c = make("C");
        let o = make("O");
        assert!(c.is_disjoint(&o));
        let cco = make("CCO");
        let ccn = make("CCN");
        let inter = cco.intersection(&ccn).count();
        let union = cco.union(&ccn).count();
        let tanimoto = inter as f64 / union as f64;
        assert!(tanimoto > 0.0 && tanimoto < 1.0, "tanimoto {tanimoto}");
    }
}
