//! Interpretability surface: attention export, substructure-attention
//! alignment scores, and group-selective drug discovery.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::metrics::metric_scc;
use crate::model::{AttentionRecord, ModelParams};
use crate::stats::{bh_fdr, tanimoto, wilcoxon_one_sided};
use crate::train::{predict_pair, TrainingData};

/// One attention record per pair, in index order.
pub fn export_attention(
    params: &ModelParams,
    data: &TrainingData,
    idx: &[usize],
) -> Result<Vec<AttentionRecord>> {
    if idx.is_empty() {
        return Err(Error::Stats("no pairs to export attention for".into()));
    }
    let mut out = Vec::with_capacity(idx.len());
    for &i in idx {
        let &(c, d, _) = data
            .pairs
            .get(i)
            .ok_or_else(|| Error::Stats(format!("pair index {i} out of range")))?;
        let (_, rec) = predict_pair(params, data, c, d);
        out.push(rec);
    }
    Ok(out)
}

/// Long-format CSV: one line per attention cell of each view.
pub fn write_attention_csv<W: Write>(records: &[AttentionRecord], w: &mut W) -> Result<()> {
    writeln!(w, "cell_id,drug_id,view,row,col,softmax1,softmax2,net,lambda")?;
    for rec in records {
        for (view, comp) in [("path2sub", &rec.path2sub), ("drug2path", &rec.drug2path)] {
            for r in 0..comp.net.rows {
                for c in 0..comp.net.cols {
                    writeln!(
                        w,
                        "{},{},{view},{r},{c},{:?},{:?},{:?},{:?}",
                        rec.cell_id,
                        rec.drug_id,
                        comp.softmax1.get(r, c),
                        comp.softmax2.get(r, c),
                        comp.net.get(r, c),
                        comp.lambda
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Rank agreement between chemical similarity of a drug's substructures
/// and similarity of their attention columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub drug_id: String,
    /// Spearman correlation over substructure pairs, in [-1, 1].
    pub score: f64,
    pub n_pairs: usize,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Element-wise mean of the net Path2Sub maps across records.
pub fn mean_net_map(records: &[&AttentionRecord]) -> Result<Tensor> {
    let first = records
        .first()
        .ok_or_else(|| Error::Stats("no attention records".into()))?;
    let (rows, cols) = (first.path2sub.net.rows, first.path2sub.net.cols);
    let mut acc = Tensor::zeros(rows, cols);
    for rec in records {
        let net = &rec.path2sub.net;
        if (net.rows, net.cols) != (rows, cols) {
            return Err(Error::Stats("attention map shapes differ across cells".into()));
        }
        for k in 0..acc.data.len() {
            acc.data[k] += net.data[k];
        }
    }
    let inv = 1.0 / records.len() as f64;
    for v in &mut acc.data {
        *v *= inv;
    }
    Ok(acc)
}

/// For every substructure pair (i, j): x = Tanimoto of their fingerprints,
/// y = cosine of their columns in the cell-averaged net Path2Sub map.
/// The score is the Spearman correlation of x against y over all pairs.
pub fn substructure_alignment(
    drug_id: &str,
    fingerprints: &[BTreeSet<u64>],
    records: &[&AttentionRecord],
) -> Result<AlignmentScore> {
    let n_s = fingerprints.len();
    if n_s < 3 {
        return Err(Error::Stats(format!(
            "alignment needs at least 3 substructures, drug '{drug_id}' has {n_s}"
        )));
    }
    let mean = mean_net_map(records)?;
    if mean.cols != n_s {
        return Err(Error::Stats(format!(
            "attention has {} substructure columns but {} fingerprints given",
            mean.cols, n_s
        )));
    }
    let column = |j: usize| -> Vec<f64> { (0..mean.rows).map(|r| mean.get(r, j)).collect() };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n_s {
        for j in (i + 1)..n_s {
            xs.push(tanimoto(&fingerprints[i], &fingerprints[j])?);
            ys.push(cosine(&column(i), &column(j)));
        }
    }
    let score = metric_scc(&xs, &ys)?;
    Ok(AlignmentScore {
        drug_id: drug_id.to_string(),
        score,
        n_pairs: xs.len(),
    })
}

/// One drug's focal-group-vs-rest comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub drug_id: String,
    /// Focal group label; compared against all other units pooled.
    pub group: String,
    /// Median focal prediction minus median pooled-rest prediction;
    /// negative means more sensitive in the focal group.
    pub delta: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub selective: bool,
}

fn median(sorted_input: &[f64]) -> f64 {
    let mut v = sorted_input.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Predictions as (unit_id, drug_id, value) rows; labels map unit_id to a
/// group. For each group and drug, tests whether focal-group predictions
/// are lower (more sensitive) than the pooled rest, adjusts over drugs
/// within the group by BH, and flags adjusted p < alpha as selective.
pub fn group_selective_drugs(
    predictions: &[(String, String, f64)],
    labels: &HashMap<String, String>,
    alpha: f64,
) -> Result<BTreeMap<String, Vec<GroupComparison>>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Stats("alpha must lie in [0, 1]".into()));
    }
    // drug -> group -> values
    let mut by_drug: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for (unit, drug, value) in predictions {
        let group = labels
            .get(unit)
            .ok_or_else(|| Error::Stats(format!("unit '{unit}' has no group label")))?;
        by_drug
            .entry(drug)
            .or_default()
            .entry(group)
            .or_default()
            .push(*value);
    }
    let groups: BTreeSet<&str> = labels.values().map(|s| s.as_str()).collect();
    if groups.len() < 2 {
        return Err(Error::Stats("need at least 2 groups".into()));
    }

    let mut out: BTreeMap<String, Vec<GroupComparison>> = BTreeMap::new();
    for focal in groups {
        let mut comparisons = Vec::new();
        let mut p_raw = Vec::new();
        for (drug, per_group) in &by_drug {
            let Some(a) = per_group.get(focal) else {
                continue;
            };
            let rest: Vec<f64> = per_group
                .iter()
                .filter(|(g, _)| **g != focal)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            if a.len() < 2 || rest.len() < 2 {
                continue;
            }
            let (_, p) = wilcoxon_one_sided(a, &rest)?;
            comparisons.push(GroupComparison {
                drug_id: drug.to_string(),
                group: focal.to_string(),
                delta: median(a) - median(&rest),
                p_raw: p,
                p_adjusted: f64::NAN,
                selective: false,
            });
            p_raw.push(p);
        }
        let adjusted = bh_fdr(&p_raw)?;
        for (c, adj) in comparisons.iter_mut().zip(adjusted) {
            c.p_adjusted = adj;
            c.selective = adj < alpha;
        }
        out.insert(focal.to_string(), comparisons);
    }
    Ok(out)
}

pub fn write_comparisons_csv<W: Write>(
    table: &BTreeMap<String, Vec<GroupComparison>>,
    w: &mut W,
) -> Result<()> {
    writeln!(w, "group,drug_id,delta,p_raw,p_adjusted,selective")?;
    for (group, rows) in table {
        for c in rows {
            writeln!(
                w,
                "{group},{},{:?},{:?},{:?},{}",
                c.drug_id, c.delta, c.p_raw, c.p_adjusted, c.selective
            )?;
        }
    }
    Ok(())
}
