//! Ingestion of expression, response, and pathway files, z-score
//! normalization, and construction of the pathway-masked expression matrix
//! for each cell line.
//!
//! File formats: expression and responses are comma-separated CSV with a
//! header row; pathways are GMT (tab-separated: id, description, gene
//! ids...). Normalization statistics can be persisted to a CSV sidecar
//! (gene_id, mean, std) so a transfer run standardizes new expression with
//! the training statistics instead of its own.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionMatrix {
    pub cell_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    /// Row-major, cells x genes.
    pub values: Vec<Vec<f64>>,
    pub normalized: bool,
}

impl ExpressionMatrix {
    pub fn cell_index(&self, cell_id: &str) -> Option<usize> {
        self.cell_ids.iter().position(|c| c == cell_id)
    }
}

/// Per-gene normalization statistics (population mean / std over the
/// training cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub gene_ids: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayDB {
    /// (pathway id, gene ids) in file order, gene lists deduplicated.
    pub pathways: Vec<(String, Vec<String>)>,
}

impl PathwayDB {
    pub fn n_pathways(&self) -> usize {
        self.pathways.len()
    }

    /// Maximum gene count over pathways; the padded row width of the
    /// pathway tensor.
    pub fn max_genes(&self) -> usize {
        self.pathways.iter().map(|(_, g)| g.len()).max().unwrap_or(0)
    }
}

/// One cell line's pathway-masked expression: row p holds the z-scores of
/// pathway p's genes in GMT order, zero-padded on the right to the maximum
/// pathway size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayTensor {
    pub cell_id: String,
    /// n_pathways x max_genes, row-major.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub cell_id: String,
    pub drug_id: String,
    pub ln_ic50: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponseTable {
    pub rows: Vec<ResponseRow>,
}

impl ResponseTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn cell_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.cell_id.clone()))
            .map(|r| r.cell_id.clone())
            .collect()
    }

    pub fn drug_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.drug_id.clone()))
            .map(|r| r.drug_id.clone())
            .collect()
    }

    /// Drop rows whose drug is in `excluded`, returning the dropped count.
    pub fn filter_drugs(&mut self, excluded: &HashSet<String>) -> usize {
        let before = self.rows.len();
        self.rows.retain(|r| !excluded.contains(&r.drug_id));
        before - self.rows.len()
    }
}

/// Load an expression CSV: first column cell_id, header row gene ids,
/// numeric body. Duplicate ids, ragged rows, and non-numeric cells are
/// errors.
pub fn load_expression(path: &Path) -> Result<ExpressionMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::data("expression file is empty"))??;
    if header.len() < 2 {
        return Err(Error::data("expression file needs at least one gene column"));
    }
    let gene_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen_genes = HashSet::new();
    for g in &gene_ids {
        if !seen_genes.insert(g.clone()) {
            return Err(Error::data(format!("duplicate gene id '{g}' in header")));
        }
    }

    let mut cell_ids = Vec::new();
    let mut seen_cells = HashSet::new();
    let mut values = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != gene_ids.len() + 1 {
            return Err(Error::data(format!(
                "row {line}: expected {} fields, found {}",
                gene_ids.len() + 1,
                rec.len()
            )));
        }
        let cell = rec.get(0).unwrap_or("").to_string();
        if !seen_cells.insert(cell.clone()) {
            return Err(Error::data(format!("duplicate cell id '{cell}'")));
        }
        let mut row = Vec::with_capacity(gene_ids.len());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::data(format!(
                    "row {line}, column '{}': non-numeric value '{}'",
                    gene_ids[j], field
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "row {line}, column '{}': non-finite value",
                    gene_ids[j]
                )));
            }
            row.push(v);
        }
        cell_ids.push(cell);
        values.push(row);
    }
    if cell_ids.is_empty() {
        return Err(Error::data("expression file has no data rows"));
    }
    Ok(ExpressionMatrix {
        cell_ids,
        gene_ids,
        values,
        normalized: false,
    })
}

/// Z-score each gene column with the population std. Constant columns map
/// to all zeros. Returns the matrix together with the statistics used, so
/// they can be persisted for transfer runs.
pub fn zscore_normalize(m: &ExpressionMatrix) -> Result<(ExpressionMatrix, NormStats)> {
    if m.normalized {
        return Err(Error::data("matrix is already normalized"));
    }
    let n = m.values.len();
    if n < 2 {
        return Err(Error::data("normalization needs at least 2 cells"));
    }
    let g = m.gene_ids.len();
    let mut means = vec![0.0; g];
    let mut stds = vec![0.0; g];
    for j in 0..g {
        let mean = m.values.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = m.values.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        means[j] = mean;
        stds[j] = var.sqrt();
    }
    let stats = NormStats {
        gene_ids: m.gene_ids.clone(),
        means,
        stds,
    };
    let out = apply_norm_stats(m, &stats)?;
    Ok((out, stats))
}

/// Standardize a matrix with previously computed statistics (the zero-shot
/// transfer path). Genes missing from the stats are an error; the caller
/// aligns columns first.
pub fn apply_norm_stats(m: &ExpressionMatrix, stats: &NormStats) -> Result<ExpressionMatrix> {
    let idx: HashMap<&str, usize> = stats
        .gene_ids
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut values = Vec::with_capacity(m.values.len());
    for row in &m.values {
        let mut out = Vec::with_capacity(row.len());
        for (j, gene) in m.gene_ids.iter().enumerate() {
            let k = *idx
                .get(gene.as_str())
                .ok_or_else(|| Error::data(format!("gene '{gene}' missing from stored stats")))?;
            let std = stats.stds[k];
            out.push(if std > 0.0 { (row[j] - stats.means[k]) / std } else { 0.0 });
        }
        values.push(out);
    }
    Ok(ExpressionMatrix {
        cell_ids: m.cell_ids.clone(),
        gene_ids: m.gene_ids.clone(),
        values,
        normalized: true,
    })
}

pub fn save_norm_stats(stats: &NormStats, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gene_id", "mean", "std"])?;
    for i in 0..stats.gene_ids.len() {
        w.write_record([
            stats.gene_ids[i].as_str(),
            &format!("{:?}", stats.means[i]),
            &format!("{:?}", stats.stds[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_norm_stats(path: &Path) -> Result<NormStats> {
    let mut r = csv::Reader::from_path(path)?;
    let mut gene_ids = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        gene_ids.push(rec.get(0).unwrap_or("").to_string());
        means.push(parse_f64(rec.get(1))?);
        stds.push(parse_f64(rec.get(2))?);
    }
    Ok(NormStats { gene_ids, means, stds })
}

fn parse_f64(field: Option<&str>) -> Result<f64> {
    field
        .ok_or_else(|| Error::data("missing numeric field"))?
        .trim()
        .parse()
        .map_err(|_| Error::data("non-numeric field"))
}

/// Load a GMT file: tab-separated pathway_id, description, gene ids.
pub fn load_pathways(path: &Path) -> Result<PathwayDB> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    load_pathways_str(&text)
}

pub fn load_pathways_str(text: &str) -> Result<PathwayDB> {
    let mut pathways = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::data(format!(
                "GMT line {}: pathway '{}' has no genes",
                i + 1,
                fields.first().unwrap_or(&"")
            )));
        }
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::data(format!("duplicate pathway id '{id}'")));
        }
        let mut genes = Vec::new();
        let mut gene_seen = HashSet::new();
        for g in &fields[2..] {
            let g = g.trim();
            if g.is_empty() {
                continue;
            }
            if gene_seen.insert(g.to_string()) {
                genes.push(g.to_string());
            }
        }
        if genes.is_empty() {
            return Err(Error::data(format!("pathway '{id}' has no genes")));
        }
        pathways.push((id, genes));
    }
    if pathways.is_empty() {
        return Err(Error::data("GMT file has no pathways"));
    }
    Ok(PathwayDB { pathways })
}

/// Build one cell line's pathway tensor from a normalized expression matrix.
/// Genes listed in a pathway but absent from the expression matrix stay at
/// zero; their ids are returned so the caller can warn once.
pub fn build_pathway_tensor(
    m: &ExpressionMatrix,
    db: &PathwayDB,
    cell_id: &str,
) -> Result<(PathwayTensor, Vec<String>)> {
    if !m.normalized {
        return Err(Error::data("expression matrix must be normalized first"));
    }
    let ci = m
        .cell_index(cell_id)
        .ok_or_else(|| Error::data(format!("unknown cell id '{cell_id}'")))?;
    let gene_idx: HashMap<&str, usize> = m
        .gene_ids
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();

    let n_g = db.max_genes();
    let mut matrix = Vec::with_capacity(db.n_pathways());
    let mut missing = Vec::new();
    for (_, genes) in &db.pathways {
        let mut row = vec![0.0; n_g];
        for (slot, gene) in genes.iter().enumerate() {
            match gene_idx.get(gene.as_str()) {
                Some(&gj) => row[slot] = m.values[ci][gj],
                None => missing.push(gene.clone()),
            }
        }
        matrix.push(row);
    }
    missing.sort();
    missing.dedup();
    Ok((
        PathwayTensor {
            cell_id: cell_id.to_string(),
            matrix,
        },
        missing,
    ))
}

/// Load a response CSV with columns cell_id, drug_id, ln_ic50. Exact
/// duplicate pairs collapse to one row; conflicting duplicates are an error.
pub fn load_responses(path: &Path) -> Result<ResponseTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("responses file missing column '{name}'")))
    };
    let (ci, di, vi) = (col("cell_id")?, col("drug_id")?, col("ln_ic50")?);

    let mut rows = Vec::new();
    let mut seen: HashMap<(String, String), f64> = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cell = rec.get(ci).unwrap_or("").to_string();
        let drug = rec.get(di).unwrap_or("").to_string();
        let value: f64 = rec
            .get(vi)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {line}: non-numeric ln_ic50")))?;
        match seen.get(&(cell.clone(), drug.clone())) {
            Some(&prev) if prev == value => continue,
            Some(_) => {
                return Err(Error::data(format!(
                    "row {line}: conflicting duplicate for ({cell}, {drug})"
                )));
            }
            None => {
                seen.insert((cell.clone(), drug.clone()), value);
                rows.push(ResponseRow {
                    cell_id: cell,
                    drug_id: drug,
                    ln_ic50: value,
                });
            }
        }
    }
    Ok(ResponseTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_expression() {
        let f = write_tmp("cell_id,g1,g2\nc1,1.0,2.0\nc2,3.0,4.0\n");
        let m = load_expression(f.path()).unwrap();
        assert_eq!(m.cell_ids, ["c1", "c2"]);
        assert_eq!(m.gene_ids, ["g1", "g2"]);
        assert_eq!(m.values[1], [3.0, 4.0]);
    }

    #[test]
    fn duplicate_gene_header_rejected() {
        let f = write_tmp("cell_id,g1,g1\nc1,1,2\n");
        let err = load_expression(f.path()).unwrap_err();
        assert!(err.to_string().contains("g1"), "{err}");
    }

    #[test]
    fn na_cell_rejected_with_position() {
        let f = write_tmp("cell_id,g1,g2\nc1,1.0,NA\n");
        let err = load_expression(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("g2"), "{msg}");
    }

    #[test]
    fn zscore_hand_computed() {
        let m = ExpressionMatrix {
            cell_ids: vec!["a".into(), "b".into(), "c".into()],
            gene_ids: vec!["g".into()],
            values: vec![vec![1.0], vec![2.0], vec![3.0]],
            normalized: false,
        };
        let (z, stats) = zscore_normalize(&m).unwrap();
        // population std of [1,2,3] is sqrt(2/3)
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z.values[0][0] + expect).abs() < 1e-9);
        assert!(z.values[1][0].abs() < 1e-12);
        assert!((z.values[2][0] - expect).abs() < 1e-9);
        assert!((stats.means[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let m = ExpressionMatrix {
            cell_ids: vec!["a".into(), "b".into(), "c".into()],
            gene_ids: vec!["g".into()],
            values: vec![vec![5.0], vec![5.0], vec![5.0]],
            normalized: false,
        };
        let (z, _) = zscore_normalize(&m).unwrap();
        assert!(z.values.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn normalization_idempotent_on_standardized_input() {
        let vals = [-1.0, 0.0, 1.0];
        let std = (2.0f64 / 3.0).sqrt();
        let m = ExpressionMatrix {
            cell_ids: vec!["a".into(), "b".into(), "c".into()],
            gene_ids: vec!["g".into()],
            values: vals.iter().map(|&v| vec![v / std * std]).collect(),
            normalized: false,
        };
        let (z, _) = zscore_normalize(&m).unwrap();
        let (z2, _) = zscore_normalize(&ExpressionMatrix {
            normalized: false,
            ..z.clone()
        })
        .unwrap();
        for i in 0..3 {
            assert!((z.values[i][0] - z2.values[i][0]).abs() < 1e-9);
        }
    }

    #[test]
    fn gmt_parses_and_sizes() {
        let db = load_pathways_str("P1\tdesc\tg1\tg2\nP2\tdesc\tg3\tg4\tg5\n").unwrap();
        assert_eq!(db.n_pathways(), 2);
        assert_eq!(db.max_genes(), 3);
        assert_eq!(db.pathways[0].1, ["g1", "g2"]);
    }

    #[test]
    fn gmt_duplicate_pathway_rejected() {
        assert!(load_pathways_str("P1\td\tg1\nP1\td\tg2\n").is_err());
    }

    #[test]
    fn gmt_empty_pathway_rejected() {
        assert!(load_pathways_str("P1\tdesc\n").is_err());
    }

    #[test]
    fn pathway_tensor_zero_fill_and_shape() {
        let m = ExpressionMatrix {
            cell_ids: vec!["c1".into(), "c2".into()],
            gene_ids: vec!["g1".into(), "g2".into(), "g3".into()],
            values: vec![vec![0.5, -0.5, 1.0], vec![-0.5, 0.5, -1.0]],
            normalized: true,
        };
        let db = load_pathways_str("P1\td\tg1\tg2\nP2\td\tg1\tg2\tg3\n").unwrap();
        let (t, missing) = build_pathway_tensor(&m, &db, "c1").unwrap();
        assert!(missing.is_empty());
        assert_eq!(t.matrix.len(), 2);
        assert_eq!(t.matrix[0], [0.5, -0.5, 0.0]);
        assert_eq!(t.matrix[1], [0.5, -0.5, 1.0]);
    }

    #[test]
    fn pathway_gene_missing_from_expression_warns() {
        let m = ExpressionMatrix {
            cell_ids: vec!["c1".into(), "c2".into()],
            gene_ids: vec!["g1".into()],
            values: vec![vec![0.5], vec![-0.5]],
            normalized: true,
        };
        let db = load_pathways_str("P1\td\tg1\tgX\n").unwrap();
        let (t, missing) = build_pathway_tensor(&m, &db, "c1").unwrap();
        assert_eq!(missing, ["gX"]);
        assert_eq!(t.matrix[0], [0.5, 0.0]);
    }

    #[test]
    fn responses_dedup_and_conflict() {
        let f = write_tmp("cell_id,drug_id,ln_ic50\nc1,d1,1.5\nc1,d1,1.5\nc2,d1,2.0\n");
        let t = load_responses(f.path()).unwrap();
        assert_eq!(t.len(), 2);

        let f = write_tmp("cell_id,drug_id,ln_ic50\nc1,d1,1.5\nc1,d1,2.5\n");
        assert!(load_responses(f.path()).is_err());
    }

    #[test]
    fn norm_stats_round_trip() {
        let stats = NormStats {
            gene_ids: vec!["g1".into(), "g2".into()],
            means: vec![0.125, -3.5],
            stds: vec![1.75, 0.0625],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.csv");
        save_norm_stats(&stats, &p).unwrap();
        let back = load_norm_stats(&p).unwrap();
        assert_eq!(stats, back);
    }
}
