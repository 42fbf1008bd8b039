//! Train/validation/test partitioning over (cell, drug) response pairs.
//!
//! Four protocols of increasing difficulty: `random` shuffles pairs,
//! `cell_blind` and `drug_blind` hold out whole id groups, `disjoint` holds
//! out both sides at once and drops every boundary pair. With `fixed_test`
//! the test portion is carved out by a constant internal seed, so it stays
//! identical while train/val reshuffle under the run seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::data::ResponseTable;
use crate::error::{Error, Result};

/// Seed used for the frozen test partition when `fixed_test` is set. Any
/// constant works; it only has to be independent of the run seed.
const FIXED_TEST_SEED: u64 = 0x0d15_ea5e;

/// Blind modes need a few distinct ids on each side to partition at all.
const MIN_BLIND_IDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Random,
    CellBlind,
    DrugBlind,
    Disjoint,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitMode::Random),
            "cell_blind" => Ok(SplitMode::CellBlind),
            "drug_blind" => Ok(SplitMode::DrugBlind),
            "disjoint" => Ok(SplitMode::Disjoint),
            other => Err(Error::data(format!(
                "unknown split mode '{other}' (expected random, cell_blind, drug_blind, disjoint)"
            ))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SplitMode::Random => "random",
            SplitMode::CellBlind => "cell_blind",
            SplitMode::DrugBlind => "drug_blind",
            SplitMode::Disjoint => "disjoint",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Relative train/val/test weights; normalized internally.
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub fixed_test: bool,
}

impl SplitSpec {
    pub fn new(mode: SplitMode, seed: u64) -> Self {
        SplitSpec {
            mode,
            ratios: (3.0, 1.0, 1.0),
            seed,
            fixed_test: false,
        }
    }

    fn normalized_ratios(&self) -> Result<(f64, f64, f64)> {
        let (a, b, c) = self.ratios;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 {
            return Err(Error::data("split ratios must all be positive"));
        }
        let s = a + b + c;
        Ok((a / s, b / s, c / s))
    }
}

/// Index sets into the originating [`ResponseTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Boundary pairs discarded by the disjoint protocol.
    pub dropped: usize,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Partition `items` into (train, val, test) by shuffling. When
/// `fixed_test` is set the test slice comes from a constant-seed shuffle
/// and the remainder is reshuffled under `seed`.
fn three_way<T: Clone>(
    items: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
    fixed_test: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = items.len();
    let n_test = (n as f64 * ratios.2).round() as usize;
    let n_val = (n as f64 * ratios.1).round() as usize;

    let mut pool: Vec<T> = items.to_vec();
    let test: Vec<T>;
    if fixed_test {
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(FIXED_TEST_SEED));
        test = pool.split_off(n - n_test);
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    } else {
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        test = pool.split_off(n - n_test);
    }
    let val = pool.split_off(pool.len().saturating_sub(n_val));
    (pool, val, test)
}

pub fn make_split(table: &ResponseTable, spec: &SplitSpec) -> Result<Split> {
    if table.is_empty() {
        return Err(Error::data("cannot split an empty response table"));
    }
    let ratios = spec.normalized_ratios()?;

    match spec.mode {
        SplitMode::Random => {
            let indices: Vec<usize> = (0..table.len()).collect();
            let (train, val, test) = three_way(&indices, ratios, spec.seed, spec.fixed_test);
            Ok(Split {
                train,
                val,
                test,
                dropped: 0,
            })
        }
        SplitMode::CellBlind => {
            let ids = table.cell_ids();
            check_blind(&ids, "cell")?;
            let (tr, va, te) = three_way(&ids, ratios, spec.seed, spec.fixed_test);
            Ok(follow_ids(table, &tr, &va, &te, |r| &r.cell_id))
        }
        SplitMode::DrugBlind => {
            let ids = table.drug_ids();
            check_blind(&ids, "drug")?;
            let (tr, va, te) = three_way(&ids, ratios, spec.seed, spec.fixed_test);
            Ok(follow_ids(table, &tr, &va, &te, |r| &r.drug_id))
        }
        SplitMode::Disjoint => {
            let cells = table.cell_ids();
            let drugs = table.drug_ids();
            check_blind(&cells, "cell")?;
            check_blind(&drugs, "drug")?;
            // Distinct derived seeds keep the two shuffles independent.
            let (ctr, cva, cte) =
                three_way(&cells, ratios, spec.seed.wrapping_add(1), spec.fixed_test);
            let (dtr, dva, dte) =
                three_way(&drugs, ratios, spec.seed.wrapping_add(2), spec.fixed_test);
            let to_set = |v: &[String]| v.iter().cloned().collect::<HashSet<_>>();
            let (ctr, cva, cte) = (to_set(&ctr), to_set(&cva), to_set(&cte));
            let (dtr, dva, dte) = (to_set(&dtr), to_set(&dva), to_set(&dte));

            let mut split = Split {
                train: vec![],
                val: vec![],
                test: vec![],
                dropped: 0,
            };
            for (i, r) in table.rows.iter().enumerate() {
                if ctr.contains(&r.cell_id) && dtr.contains(&r.drug_id) {
                    split.train.push(i);
                } else if cva.contains(&r.cell_id) && dva.contains(&r.drug_id) {
                    split.val.push(i);
                } else if cte.contains(&r.cell_id) && dte.contains(&r.drug_id) {
                    split.test.push(i);
                } else {
                    split.dropped += 1;
                }
            }
            if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
                return Err(Error::data(
                    "disjoint split produced an empty partition; need more cells or drugs",
                ));
            }
            Ok(split)
        }
    }
}

fn check_blind(ids: &[String], kind: &str) -> Result<()> {
    if ids.len() < MIN_BLIND_IDS {
        return Err(Error::data(format!(
            "blind split needs at least {MIN_BLIND_IDS} distinct {kind} ids, got {}",
            ids.len()
        )));
    }
    Ok(())
}

fn follow_ids(
    table: &ResponseTable,
    train_ids: &[String],
    val_ids: &[String],
    test_ids: &[String],
    key: impl Fn(&crate::data::ResponseRow) -> &String,
) -> Split {
    let tr: HashSet<&String> = train_ids.iter().collect();
    let va: HashSet<&String> = val_ids.iter().collect();
    let te: HashSet<&String> = test_ids.iter().collect();
    let mut split = Split {
        train: vec![],
        val: vec![],
        test: vec![],
        dropped: 0,
    };
    for (i, r) in table.rows.iter().enumerate() {
        let k = key(r);
        if tr.contains(k) {
            split.train.push(i);
        } else if va.contains(k) {
            split.val.push(i);
        } else if te.contains(k) {
            split.test.push(i);
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ResponseRow;

    fn grid_table(n_cells: usize, n_drugs: usize) -> ResponseTable {
        let mut rows = Vec::new();
        for c in 0..n_cells {
            for d in 0..n_drugs {
                rows.push(ResponseRow {
                    cell_id: format!("c{c}"),
                    drug_id: format!("d{d}"),
                    ln_ic50: (c * n_drugs + d) as f64 * 0.1,
                });
            }
        }
        ResponseTable { rows }
    }

    fn ids<'a>(
        table: &'a ResponseTable,
        idx: &[usize],
        key: impl Fn(&'a ResponseRow) -> &'a String,
    ) -> HashSet<&'a String> {
        idx.iter().map(|&i| key(&table.rows[i])).collect()
    }

    #[test]
    fn random_hundred_pairs_splits_60_20_20() {
        let t = grid_table(10, 10);
        let split = make_split(&t, &SplitSpec::new(SplitMode::Random, 0)).unwrap();
        assert_eq!(split.sizes(), (60, 20, 20));
        assert_eq!(split.dropped, 0);
    }

    #[test]
    fn partitions_are_pairwise_disjoint_and_random_covers_all() {
        let t = grid_table(10, 10);
        for mode in [SplitMode::Random, SplitMode::CellBlind, SplitMode::DrugBlind] {
            let split = make_split(&t, &SplitSpec::new(mode, 3)).unwrap();
            let all: Vec<usize> = split
                .train
                .iter()
                .chain(&split.val)
                .chain(&split.test)
                .copied()
                .collect();
            let set: HashSet<usize> = all.iter().copied().collect();
            assert_eq!(all.len(), set.len(), "{mode}: overlapping partitions");
            if mode == SplitMode::Random {
                assert_eq!(all.len(), t.len());
            }
        }
    }

    #[test]
    fn cell_blind_separates_cell_ids() {
        let t = grid_table(10, 8);
        let split = make_split(&t, &SplitSpec::new(SplitMode::CellBlind, 7)).unwrap();
        let train_cells = ids(&t, &split.train, |r| &r.cell_id);
        let test_cells = ids(&t, &split.test, |r| &r.cell_id);
        assert!(train_cells.is_disjoint(&test_cells));
        // blind modes keep every pair, just grouped
        assert_eq!(
            split.train.len() + split.val.len() + split.test.len(),
            t.len()
        );
    }

    #[test]
    fn drug_blind_separates_drug_ids() {
        let t = grid_table(8, 10);
        let split = make_split(&t, &SplitSpec::new(SplitMode::DrugBlind, 11)).unwrap();
        let train_drugs = ids(&t, &split.train, |r| &r.drug_id);
        let test_drugs = ids(&t, &split.test, |r| &r.drug_id);
        assert!(train_drugs.is_disjoint(&test_drugs));
    }

    #[test]
    fn disjoint_separates_both_and_reports_drops() {
        let t = grid_table(10, 10);
        let split = make_split(&t, &SplitSpec::new(SplitMode::Disjoint, 5)).unwrap();
        let train_cells = ids(&t, &split.train, |r| &r.cell_id);
        let test_cells = ids(&t, &split.test, |r| &r.cell_id);
        let train_drugs = ids(&t, &split.train, |r| &r.drug_id);
        let test_drugs = ids(&t, &split.test, |r| &r.drug_id);
        assert!(train_cells.is_disjoint(&test_cells));
        assert!(train_drugs.is_disjoint(&test_drugs));
        assert!(split.dropped > 0);
        assert_eq!(
            split.train.len() + split.val.len() + split.test.len() + split.dropped,
            t.len()
        );
    }

    #[test]
    fn fixed_test_freezes_test_but_reshuffles_train_val() {
        let t = grid_table(10, 10);
        let mut spec = SplitSpec::new(SplitMode::Random, 1);
        spec.fixed_test = true;
        let a = make_split(&t, &spec).unwrap();
        spec.seed = 2;
        let b = make_split(&t, &spec).unwrap();
        let ta: HashSet<usize> = a.test.iter().copied().collect();
        let tb: HashSet<usize> = b.test.iter().copied().collect();
        assert_eq!(ta, tb);
        assert_ne!(a.train, b.train);
    }

    #[test]
    fn identical_seed_means_identical_split() {
        let t = grid_table(9, 9);
        for mode in [
            SplitMode::Random,
            SplitMode::CellBlind,
            SplitMode::DrugBlind,
            SplitMode::Disjoint,
        ] {
            let a = make_split(&t, &SplitSpec::new(mode, 42)).unwrap();
            let b = make_split(&t, &SplitSpec::new(mode, 42)).unwrap();
            assert_eq!(a, b, "{mode}");
        }
    }

    #[test]
    fn too_few_ids_for_blind_modes_is_an_error() {
        let t = grid_table(3, 10);
        assert!(make_split(&t, &SplitSpec::new(SplitMode::CellBlind, 0)).is_err());
        assert!(make_split(&t, &SplitSpec::new(SplitMode::Disjoint, 0)).is_err());
        let t = grid_table(10, 3);
        assert!(make_split(&t, &SplitSpec::new(SplitMode::DrugBlind, 0)).is_err());
    }

    #[test]
    fn four_by_four_disjoint_keeps_only_fully_held_out_test_pairs() {
        // Small grid: whatever ids land in the test partitions, no train
        // pair may touch them.
        let t = grid_table(5, 5);
        let split = make_split(&t, &SplitSpec::new(SplitMode::Disjoint, 9)).unwrap();
        let test_cells = ids(&t, &split.test, |r| &r.cell_id);
        let test_drugs = ids(&t, &split.test, |r| &r.drug_id);
        for &i in &split.train {
            assert!(!test_cells.contains(&t.rows[i].cell_id));
            assert!(!test_drugs.contains(&t.rows[i].drug_id));
        }
    }

    #[test]
    fn bad_ratios_rejected() {
        let t = grid_table(5, 5);
        let mut spec = SplitSpec::new(SplitMode::Random, 0);
        spec.ratios = (1.0, 0.0, 1.0);
        assert!(make_split(&t, &spec).is_err());
    }
}
