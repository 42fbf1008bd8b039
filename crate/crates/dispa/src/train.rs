//! Mini-batch Adam training of the model on (cell, drug, ln_ic50) pairs,
//! with early stopping on validation RMSE and seed-deterministic batching.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::metrics::{run_metrics, RunMetrics};
use crate::model::{forward, AttentionRecord, ModelConfig, ModelParams};
use crate::split::Split;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub d_a: usize,
    pub d: usize,
    pub lambda_init: f64,
    /// Epochs without validation RMSE improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            d_a: 16,
            d: 16,
            lambda_init: 0.5,
            patience: 20,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || self.d_a == 0
            || self.d == 0
            || self.patience == 0
        {
            return Err(Error::Train(
                "all run-config values must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fully resolved training inputs: every pair indexes into dense per-cell
/// and per-drug feature tables.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub cell_ids: Vec<String>,
    /// One N_p x N_g tensor per cell, aligned with `cell_ids`.
    pub cell_tensors: Vec<Tensor>,
    pub drug_ids: Vec<String>,
    /// One 1 x embed_dim vector per drug, aligned with `drug_ids`.
    pub drug_embeds: Vec<Tensor>,
    /// One N_s x embed_dim matrix per drug, aligned with `drug_ids`.
    pub sub_embeds: Vec<Tensor>,
    /// (cell index, drug index, ln_ic50); order mirrors the response table.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl TrainingData {
    pub fn embed_dim(&self) -> usize {
        self.drug_embeds.first().map(|t| t.cols).unwrap_or(0)
    }

    pub fn n_genes(&self) -> usize {
        self.cell_tensors.first().map(|t| t.cols).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Train("no training pairs".into()));
        }
        if self.cell_ids.len() != self.cell_tensors.len()
            || self.drug_ids.len() != self.drug_embeds.len()
            || self.drug_ids.len() != self.sub_embeds.len()
        {
            return Err(Error::Train("feature tables misaligned with id lists".into()));
        }
        for &(c, d, y) in &self.pairs {
            if c >= self.cell_ids.len() || d >= self.drug_ids.len() {
                return Err(Error::Train(format!("pair ({c},{d}) out of range")));
            }
            if !y.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite response for pair ({}, {})",
                    self.cell_ids[c], self.drug_ids[d]
                )));
            }
        }
        Ok(())
    }

    pub fn model_config(&self, run: &RunConfig) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim(),
            n_genes: self.n_genes(),
            d_a: run.d_a,
            d: run.d,
            lambda_init: run.lambda_init,
        }
    }
}

/// Resolve responses, expression, pathways, drug structures, and
/// embeddings into dense training inputs. Returns the per-drug fragment
/// lists alongside, aligned with `drug_ids`, for interpretability work.
pub fn assemble_training_data(
    normalized: &crate::data::ExpressionMatrix,
    db: &crate::data::PathwayDB,
    responses: &crate::data::ResponseTable,
    drugs: &[(String, String)],
    embed_cfg: &crate::embed::EmbeddingConfig,
    store: Option<&crate::embed::EmbeddingStore>,
) -> Result<(TrainingData, Vec<Vec<crate::brics::Fragment>>)> {
    if !normalized.normalized {
        return Err(Error::Train("expression matrix must be normalized".into()));
    }
    let smiles_of: HashMap<&str, &str> = drugs
        .iter()
        .map(|(id, s)| (id.as_str(), s.as_str()))
        .collect();

    let cell_ids = responses.cell_ids();
    let mut cell_tensors = Vec::with_capacity(cell_ids.len());
    for cell in &cell_ids {
        let (pt, _missing) = crate::data::build_pathway_tensor(normalized, db, cell)?;
        cell_tensors.push(Tensor::from_rows(&pt.matrix));
    }

    let drug_ids = responses.drug_ids();
    let mut drug_embeds = Vec::with_capacity(drug_ids.len());
    let mut sub_embeds = Vec::with_capacity(drug_ids.len());
    let mut fragments = Vec::with_capacity(drug_ids.len());
    for drug in &drug_ids {
        let smiles = smiles_of
            .get(drug.as_str())
            .ok_or_else(|| Error::Train(format!("drug '{drug}' has no structure entry")))?;
        let graph = crate::chem::parse_smiles(smiles)?;
        let frags = crate::brics::fragment(&graph)?;
        let (de, se) = crate::embed::embed_drug(drug, smiles, &frags, embed_cfg, store)?;
        drug_embeds.push(Tensor::from_rows(&[de.vector]));
        sub_embeds.push(Tensor::from_rows(&se.matrix));
        fragments.push(frags);
    }

    let cell_index: HashMap<&str, usize> = cell_ids
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let drug_index: HashMap<&str, usize> = drug_ids
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let pairs = responses
        .rows
        .iter()
        .map(|r| {
            (
                cell_index[r.cell_id.as_str()],
                drug_index[r.drug_id.as_str()],
                r.ln_ic50,
            )
        })
        .collect();

    let data = TrainingData {
        cell_ids,
        cell_tensors,
        drug_ids,
        drug_embeds,
        sub_embeds,
        pairs,
    };
    data.validate()?;
    Ok((data, fragments))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: usize,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows, t.cols))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = BETA1 * m.data[k] + (1.0 - BETA1) * gk;
                v.data[k] = BETA2 * v.data[k] + (1.0 - BETA2) * gk * gk;
                let mh = m.data[k] / bc1;
                let vh = v.data[k] / bc2;
                p.data[k] -= self.lr * mh / (vh.sqrt() + EPS);
            }
        }
    }
}

/// Forward a whole mini-batch on one tape: parameters are bound once, the
/// per-pair predictions join into a row, and a single MSE backward pass
/// yields batch-mean gradients. Returns (mean loss, gradients per
/// parameter tensor).
fn batch_loss_grads(
    params: &ModelParams,
    data: &TrainingData,
    batch: &[(usize, usize, f64)],
) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let mut preds = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for &(c, d, y) in batch {
        let (pred, _) = forward(
            &mut tape,
            &bound,
            &data.cell_tensors[c],
            &data.drug_embeds[d],
            &data.sub_embeds[d],
        );
        preds.push(pred);
        targets.push(y);
    }
    let pred_row = tape.concat_cols(&preds);
    let target = tape.constant(Tensor::from_vec(1, targets.len(), targets));
    let loss = tape.mse(pred_row, target);
    let value = tape.value(loss).data[0];
    let grads = tape.backward(loss);
    let gs = bound
        .leaves
        .iter()
        .map(|id| grads.get(&tape, *id))
        .collect();
    (value, gs)
}

pub fn predict_pair(
    params: &ModelParams,
    data: &TrainingData,
    cell: usize,
    drug: usize,
) -> (f64, AttentionRecord) {
    let (value, mut rec) = crate::model::predict(
        params,
        &data.cell_tensors[cell],
        &data.drug_embeds[drug],
        &data.sub_embeds[drug],
    );
    rec.cell_id = data.cell_ids[cell].clone();
    rec.drug_id = data.drug_ids[drug].clone();
    (value, rec)
}

fn mean_loss(params: &ModelParams, data: &TrainingData, idx: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in idx {
        let (c, d, y) = data.pairs[i];
        let (p, _) = predict_pair(params, data, c, d);
        s += (p - y) * (p - y);
    }
    s / idx.len() as f64
}

pub fn train(data: &TrainingData, config: &RunConfig, split: &Split) -> Result<TrainOutcome> {
    config.validate()?;
    data.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Train("empty train or validation partition".into()));
    }

    let model_config = data.model_config(config);
    let mut params = ModelParams::init(&model_config, config.seed)?;
    let mut opt = Adam::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x_bac4));

    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut order: Vec<usize> = split.train.to_vec();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let pairs: Vec<(usize, usize, f64)> =
                batch.iter().map(|&i| data.pairs[i]).collect();
            let (loss, gs) = batch_loss_grads(&params, data, &pairs);
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut params, &gs);
        }
        let train_loss = epoch_loss / order.len() as f64;
        let val_rmse = mean_loss(&params, data, &split.val).sqrt();
        history.push(EpochStats {
            epoch,
            train_loss,
            val_rmse,
        });

        let improved = best.as_ref().map(|(_, b, _)| val_rmse < *b).unwrap_or(true);
        if improved {
            best = Some((epoch, val_rmse, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_rmse, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_rmse,
    })
}

/// Per-group Pearson correlation; groups too small or constant are skipped
/// with a reason instead of failing the whole report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPcc {
    pub id: String,
    pub n: usize,
    pub pcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: RunMetrics,
    pub n: usize,
    pub per_drug: Vec<GroupPcc>,
    pub per_cell: Vec<GroupPcc>,
    /// (cell_id, drug_id, observed, predicted), in index-set order.
    pub predictions: Vec<(String, String, f64, f64)>,
}

pub fn evaluate(params: &ModelParams, data: &TrainingData, idx: &[usize]) -> Result<EvalReport> {
    if idx.is_empty() {
        return Err(Error::Train("cannot evaluate an empty index set".into()));
    }
    let mut preds = Vec::with_capacity(idx.len());
    let mut obs = Vec::with_capacity(idx.len());
    let mut rows = Vec::with_capacity(idx.len());
    for &i in idx {
        let (c, d, y) = data.pairs[i];
        let (p, _) = predict_pair(params, data, c, d);
        preds.push(p);
        obs.push(y);
        rows.push((data.cell_ids[c].clone(), data.drug_ids[d].clone(), y, p));
    }
    let metrics = run_metrics(&preds, &obs)?;

    let breakdown = |key: fn(&(String, String, f64, f64)) -> &String| -> Vec<GroupPcc> {
        let mut groups: HashMap<&String, (Vec<f64>, Vec<f64>)> = HashMap::new();
        for row in &rows {
            let e = groups.entry(key(row)).or_default();
            e.0.push(row.3);
            e.1.push(row.2);
        }
        let mut out: Vec<GroupPcc> = groups
            .into_iter()
            .map(|(id, (p, o))| GroupPcc {
                id: id.clone(),
                n: p.len(),
                pcc: crate::metrics::metric_pcc(&p, &o).ok(),
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    };

    Ok(EvalReport {
        metrics,
        n: idx.len(),
        per_drug: breakdown(|r| &r.1),
        per_cell: breakdown(|r| &r.0),
        predictions: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{make_split, SplitMode, SplitSpec};
    use rand::Rng;

    /// Tiny linear-signal dataset the model should fit quickly.
    fn toy_data(n_cells: usize, n_drugs: usize, seed: u64) -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_p, n_g, e) = (3, 4, 8);
        let mut cell_tensors = Vec::new();
        let mut cell_sig = Vec::new();
        for _ in 0..n_cells {
            let s: f64 = rng.gen_range(-1.0..1.0);
            cell_sig.push(s);
            let t = Tensor::from_vec(
                n_p,
                n_g,
                (0..n_p * n_g)
                    .map(|k| s + 0.05 * ((k as f64).sin()))
                    .collect(),
            );
            cell_tensors.push(t);
        }
        let mut drug_embeds = Vec::new();
        let mut sub_embeds = Vec::new();
        let mut drug_sig = Vec::new();
        for _ in 0..n_drugs {
            let s: f64 = rng.gen_range(-1.0..1.0);
            drug_sig.push(s);
            drug_embeds.push(Tensor::from_vec(
                1,
                e,
                (0..e).map(|k| s * ((k + 1) as f64 * 0.3).cos()).collect(),
            ));
            sub_embeds.push(Tensor::from_vec(
                2,
                e,
                (0..2 * e).map(|k| s * ((k + 1) as f64 * 0.2).sin()).collect(),
            ));
        }
        let mut pairs = Vec::new();
        for c in 0..n_cells {
            for d in 0..n_drugs {
                pairs.push((c, d, cell_sig[c] + drug_sig[d]));
            }
        }
        TrainingData {
            cell_ids: (0..n_cells).map(|c| format!("c{c}")).collect(),
            cell_tensors,
            drug_ids: (0..n_drugs).map(|d| format!("d{d}")).collect(),
            drug_embeds,
            sub_embeds,
            pairs,
        }
    }

    fn toy_table(data: &TrainingData) -> crate::data::ResponseTable {
        crate::data::ResponseTable {
            rows: data
                .pairs
                .iter()
                .map(|&(c, d, y)| crate::data::ResponseRow {
                    cell_id: data.cell_ids[c].clone(),
                    drug_id: data.drug_ids[d].clone(),
                    ln_ic50: y,
                })
                .collect(),
        }
    }

    fn quick_config() -> RunConfig {
        RunConfig {
            epochs: 15,
            batch_size: 16,
            d_a: 8,
            d: 8,
            patience: 15,
            ..RunConfig::default()
        }
    }

    #[test]
    fn training_reduces_loss() {
        let data = toy_data(8, 6, 1);
        let split = make_split(&toy_table(&data), &SplitSpec::new(SplitMode::Random, 1)).unwrap();
        let out = train(&data, &quick_config(), &split).unwrap();
        let first = out.history.first().unwrap().train_loss;
        let last = out.history.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn identical_seeds_give_bit_identical_params() {
        let data = toy_data(6, 5, 2);
        let split = make_split(&toy_table(&data), &SplitSpec::new(SplitMode::Random, 2)).unwrap();
        let mut cfg = quick_config();
        cfg.epochs = 4;
        let a = train(&data, &cfg, &split).unwrap();
        let b = train(&data, &cfg, &split).unwrap();
        for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
            assert_eq!(x.data, y.data);
        }
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn evaluate_identity_predictions() {
        let data = toy_data(5, 4, 3);
        let split = make_split(&toy_table(&data), &SplitSpec::new(SplitMode::Random, 3)).unwrap();
        let mut cfg = quick_config();
        cfg.epochs = 2;
        let out = train(&data, &cfg, &split).unwrap();
        let rep = evaluate(&out.params, &data, &split.test).unwrap();
        assert_eq!(rep.n, split.test.len());
        // breakdown row counts equal distinct ids in the set
        let drugs: std::collections::HashSet<_> =
            rep.predictions.iter().map(|r| r.1.clone()).collect();
        assert_eq!(rep.per_drug.len(), drugs.len());
        // self-consistency: metrics recomputed from emitted predictions
        let p: Vec<f64> = rep.predictions.iter().map(|r| r.3).collect();
        let o: Vec<f64> = rep.predictions.iter().map(|r| r.2).collect();
        assert!((crate::metrics::metric_rmse(&p, &o).unwrap() - rep.metrics.rmse).abs() < 1e-12);
    }

    #[test]
    fn early_stopping_returns_best_epoch_params() {
        let data = toy_data(6, 5, 4);
        let split = make_split(&toy_table(&data), &SplitSpec::new(SplitMode::Random, 4)).unwrap();
        let mut cfg = quick_config();
        cfg.epochs = 10;
        cfg.patience = 2;
        let out = train(&data, &cfg, &split).unwrap();
        let best_hist = out
            .history
            .iter()
            .map(|h| h.val_rmse)
            .fold(f64::INFINITY, f64::min);
        assert!((out.best_val_rmse - best_hist).abs() < 1e-12);
        assert!(out.history.len() <= cfg.epochs);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = RunConfig::default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }
}
