//! Command-line orchestration: dataset preparation, training, evaluation,
//! prediction, attention export, group comparison, and a self-test suite.
//! Every output directory gets a manifest recording the command, the
//! effective configuration, and SHA-256 digests of the inputs.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{
    apply_norm_stats, load_expression, load_norm_stats, load_pathways,
    load_responses, save_norm_stats, zscore_normalize, ExpressionMatrix, PathwayDB, ResponseTable,
};
use crate::embed::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::model::{hex_string, Checkpoint};
use crate::split::{make_split, SplitMode, SplitSpec};
use crate::train::{assemble_training_data, evaluate, train, RunConfig, TrainingData};

#[derive(Parser)]
#[command(
    name = "dispa",
    version,
    about = "Drug-response regression with substructure-pathway differential cross-attention"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate and normalize raw inputs into a dataset bundle directory.
    Prepare(PrepareArgs),
    /// Fragment SMILES strings and print or store the pieces.
    Fragment(FragmentArgs),
    /// Train models over one or more split protocols and seeds.
    Train(TrainArgs),
    /// Re-evaluate a checkpoint on a bundle's test split.
    Evaluate(EvaluateArgs),
    /// Predict responses for a new expression matrix with stored stats.
    Predict(PredictArgs),
    /// Export attention maps for evaluation pairs.
    Attention(AttentionArgs),
    /// Find group-selective drugs from predictions and unit labels.
    CompareGroups(CompareGroupsArgs),
    /// Run the built-in oracle and property checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
pub struct PrepareArgs {
    /// Expression CSV: header `cell_id,<gene...>`, one row per cell.
    #[arg(long)]
    pub expression: PathBuf,
    /// Response CSV with columns cell_id, drug_id, ln_ic50.
    #[arg(long)]
    pub responses: PathBuf,
    /// Pathway GMT file (name, description, genes...).
    #[arg(long)]
    pub pathways: PathBuf,
    /// Drug CSV with columns drug_id, smiles.
    #[arg(long)]
    pub drugs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the largest component of multi-component SMILES instead of
    /// rejecting them.
    #[arg(long)]
    pub allow_salts: bool,
    /// Keep drugs whose whole structure is a single fragment.
    #[arg(long)]
    pub keep_unfragmented: bool,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
}

#[derive(Args)]
pub struct FragmentArgs {
    /// One SMILES string to fragment.
    #[arg(long, conflicts_with = "drugs")]
    pub smiles: Option<String>,
    /// Drug CSV with columns drug_id, smiles.
    #[arg(long)]
    pub drugs: Option<PathBuf>,
    /// Print the cleavage rule table and exit.
    #[arg(long)]
    pub print_rules: bool,
    #[arg(long)]
    pub allow_salts: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Bundle directory produced by `prepare`.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated split modes.
    #[arg(long, default_value = "random", value_delimiter = ',')]
    pub splits: Vec<SplitMode>,
    /// Number of repeated runs; run k uses seed base_seed + k.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Base seed for splits and model initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Freeze the test partition across seeds.
    #[arg(long, default_value_t = true)]
    pub fixed_test: bool,
    /// Flat key=value config file; command-line flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub d_a: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lambda_init: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "random")]
    pub split: SplitMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = true)]
    pub fixed_test: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// New expression CSV (units as rows), normalized with stored stats.
    #[arg(long)]
    pub expression: PathBuf,
    /// Normalization statistics saved by `prepare`.
    #[arg(long)]
    pub norm_stats: PathBuf,
    #[arg(long)]
    pub pathways: PathBuf,
    #[arg(long)]
    pub drugs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
}

#[derive(Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to these drug ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub drugs: Vec<String>,
    /// Also write the records as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct CompareGroupsArgs {
    /// Prediction CSV with columns unit_id, drug_id, ln_ic50_pred.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Label CSV with columns unit_id, group.
    #[arg(long)]
    pub labels: PathBuf,
    /// Optional coordinates CSV (unit_id, x, y) for per-drug spatial
    /// coherence statistics.
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SelftestArgs {
    /// Also run the slow end-to-end learning check.
    #[arg(long)]
    pub full: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Fragment(a) => cmd_fragment(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Attention(a) => cmd_attention(a),
        Command::CompareGroups(a) => cmd_compare_groups(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

// ---------------------------------------------------------------- manifest

#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    config: BTreeMap<String, String>,
    input_digests: BTreeMap<String, String>,
    seed: u64,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex_string(&Sha256::digest(&bytes)))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: BTreeMap<String, String>,
    inputs: &[&Path],
    seed: u64,
) -> Result<()> {
    let mut input_digests = BTreeMap::new();
    for p in inputs {
        input_digests.insert(p.display().to_string(), sha256_file(p)?);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        input_digests,
        seed,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

// ----------------------------------------------------------------- prepare

fn load_drug_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("drug file missing column '{name}'")))
    };
    let (di, si) = (col("drug_id")?, col("smiles")?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let id = rec.get(di).unwrap_or("").to_string();
        let smiles = rec.get(si).unwrap_or("").to_string();
        if id.is_empty() || smiles.is_empty() {
            return Err(Error::data(format!("drug file row {}: empty field", i + 2)));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::data(format!("duplicate drug id '{id}'")));
        }
        out.push((id, smiles));
    }
    if out.is_empty() {
        return Err(Error::data("drug file has no rows"));
    }
    Ok(out)
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let expression = load_expression(&a.expression)?;
    let (normalized, stats) = zscore_normalize(&expression)?;
    let db = load_pathways(&a.pathways)?;
    let mut responses = load_responses(&a.responses)?;
    let drugs = load_drug_csv(&a.drugs)?;

    let parse_opts = crate::chem::ParseOptions {
        allow_salts: a.allow_salts,
    };
    let mut kept: Vec<(String, String)> = Vec::new();
    let mut excluded: Vec<(String, String)> = Vec::new();
    let mut fragment_rows: Vec<(String, usize, String, usize)> = Vec::new();
    for (id, smiles) in &drugs {
        let parsed = crate::chem::parse_smiles_full(smiles, &parse_opts)
            .and_then(|(g, _)| crate::brics::fragment(&g));
        match parsed {
            Err(e) => excluded.push((id.clone(), e.to_string())),
            Ok(frags) => {
                if frags.len() == 1 && !a.keep_unfragmented {
                    excluded.push((id.clone(), "no cleavable bond".into()));
                    continue;
                }
                for (k, f) in frags.iter().enumerate() {
                    fragment_rows.push((id.clone(), k, f.smiles.clone(), f.attachment_count));
                }
                kept.push((id.clone(), smiles.clone()));
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::data("no drug survived structure filtering"));
    }

    let kept_ids: HashSet<String> = kept.iter().map(|(id, _)| id.clone()).collect();
    let all_ids: HashSet<String> = drugs.iter().map(|(id, _)| id.clone()).collect();
    let excluded_ids: HashSet<String> = all_ids.difference(&kept_ids).cloned().collect();
    let dropped_pairs = responses.filter_drugs(&excluded_ids);
    // pairs must also resolve against expression and structures
    for r in &responses.rows {
        if normalized.cell_index(&r.cell_id).is_none() {
            return Err(Error::data(format!(
                "response cell '{}' missing from expression matrix",
                r.cell_id
            )));
        }
        if !kept_ids.contains(&r.drug_id) {
            return Err(Error::data(format!(
                "response drug '{}' missing from drug table",
                r.drug_id
            )));
        }
    }

    // persist the bundle
    write_expression_csv(&normalized, &a.out.join("normalized_expression.csv"))?;
    save_norm_stats(&stats, &a.out.join("norm_stats.csv"))?;
    std::fs::copy(&a.pathways, a.out.join("pathways.gmt"))?;
    let mut f = std::fs::File::create(a.out.join("responses.csv"))?;
    writeln!(f, "cell_id,drug_id,ln_ic50")?;
    for r in &responses.rows {
        writeln!(f, "{},{},{:?}", r.cell_id, r.drug_id, r.ln_ic50)?;
    }
    let mut f = std::fs::File::create(a.out.join("drugs.csv"))?;
    writeln!(f, "drug_id,smiles")?;
    for (id, smiles) in &kept {
        writeln!(f, "{id},{smiles}")?;
    }
    let mut f = std::fs::File::create(a.out.join("fragments.csv"))?;
    writeln!(f, "drug_id,fragment_index,smiles,attachment_count")?;
    for (id, k, smiles, att) in &fragment_rows {
        writeln!(f, "{id},{k},{smiles},{att}")?;
    }
    let mut f = std::fs::File::create(a.out.join("excluded_drugs.csv"))?;
    writeln!(f, "drug_id,reason")?;
    for (id, reason) in &excluded {
        writeln!(f, "{id},\"{}\"", reason.replace('"', "'"))?;
    }

    #[derive(Serialize)]
    struct Summary {
        n_cells: usize,
        n_genes: usize,
        n_pathways: usize,
        max_genes_per_pathway: usize,
        n_drugs: usize,
        n_excluded_drugs: usize,
        n_pairs: usize,
        n_dropped_pairs: usize,
        embed_dim: usize,
        rule_table: String,
    }
    let summary = Summary {
        n_cells: normalized.cell_ids.len(),
        n_genes: normalized.gene_ids.len(),
        n_pathways: db.n_pathways(),
        max_genes_per_pathway: db.max_genes(),
        n_drugs: kept.len(),
        n_excluded_drugs: excluded.len(),
        n_pairs: responses.len(),
        n_dropped_pairs: dropped_pairs,
        embed_dim: a.embed_dim,
        rule_table: crate::brics::RULE_TABLE_VERSION.to_string(),
    };
    std::fs::write(
        a.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    let mut config = BTreeMap::new();
    config.insert("allow_salts".into(), a.allow_salts.to_string());
    config.insert("keep_unfragmented".into(), a.keep_unfragmented.to_string());
    config.insert("embed_dim".into(), a.embed_dim.to_string());
    write_manifest(
        &a.out,
        "prepare",
        config,
        &[&a.expression, &a.responses, &a.pathways, &a.drugs],
        0,
    )?;
    println!(
        "prepared bundle: {} cells, {} pathways (<= {} genes), {} drugs ({} excluded), {} pairs ({} dropped)",
        summary.n_cells,
        summary.n_pathways,
        summary.max_genes_per_pathway,
        summary.n_drugs,
        summary.n_excluded_drugs,
        summary.n_pairs,
        summary.n_dropped_pairs
    );
    Ok(())
}

fn write_expression_csv(m: &ExpressionMatrix, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "cell_id")?;
    for g in &m.gene_ids {
        write!(f, ",{g}")?;
    }
    writeln!(f)?;
    for (cell, row) in m.cell_ids.iter().zip(&m.values) {
        write!(f, "{cell}")?;
        for v in row {
            write!(f, ",{v:?}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- fragment

fn cmd_fragment(a: FragmentArgs) -> Result<()> {
    if a.print_rules {
        println!("rule table {}", crate::brics::RULE_TABLE_VERSION);
        for r in crate::brics::RULES {
            println!("  {:12} {}", r.id, r.description);
        }
        return Ok(());
    }
    let opts = crate::chem::ParseOptions {
        allow_salts: a.allow_salts,
    };
    let inputs: Vec<(String, String)> = match (&a.smiles, &a.drugs) {
        (Some(s), _) => vec![("input".to_string(), s.clone())],
        (None, Some(path)) => load_drug_csv(path)?,
        (None, None) => {
            return Err(Error::data("fragment needs --smiles or --drugs"));
        }
    };
    for (id, smiles) in inputs {
        match crate::chem::parse_smiles_full(&smiles, &opts) {
            Err(e) => println!("{id}\tERROR\t{e}"),
            Ok((g, _)) => {
                let frags = crate::brics::fragment(&g)?;
                for (k, f) in frags.iter().enumerate() {
                    println!("{id}\t{k}\t{}\t{}", f.smiles, f.attachment_count);
                }
            }
        }
    }
    Ok(())
}

// ------------------------------------------------------------------- train

/// A bundle directory loaded back into memory.
pub struct Bundle {
    pub normalized: ExpressionMatrix,
    pub db: PathwayDB,
    pub responses: ResponseTable,
    pub drugs: Vec<(String, String)>,
    pub embed_cfg: EmbeddingConfig,
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let mut normalized = load_expression(&dir.join("normalized_expression.csv"))?;
    // the bundle stores already z-scored values
    normalized.normalized = true;
    let db = load_pathways(&dir.join("pathways.gmt"))?;
    let responses = load_responses(&dir.join("responses.csv"))?;
    let drugs = load_drug_csv(&dir.join("drugs.csv"))?;
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
    let embed_dim = summary["embed_dim"]
        .as_u64()
        .ok_or_else(|| Error::data("summary.json missing embed_dim"))? as usize;
    let embed_cfg = EmbeddingConfig {
        dim: embed_dim,
        ..EmbeddingConfig::default()
    };
    Ok(Bundle {
        normalized,
        db,
        responses,
        drugs,
        embed_cfg,
    })
}

impl Bundle {
    pub fn assemble(&self) -> Result<(TrainingData, Vec<Vec<crate::brics::Fragment>>)> {
        assemble_training_data(
            &self.normalized,
            &self.db,
            &self.responses,
            &self.drugs,
            &self.embed_cfg,
            None,
        )
    }
}

/// Flat `key=value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::data(format!("config line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn apply_config(run: &mut RunConfig, kv: &HashMap<String, String>) -> Result<()> {
    let parse_err = |k: &str, v: &str| Error::data(format!("config key '{k}': bad value '{v}'"));
    for (k, v) in kv {
        match k.as_str() {
            "learning_rate" => run.learning_rate = v.parse().map_err(|_| parse_err(k, v))?,
            "epochs" => run.epochs = v.parse().map_err(|_| parse_err(k, v))?,
            "batch_size" => run.batch_size = v.parse().map_err(|_| parse_err(k, v))?,
            "d_a" => run.d_a = v.parse().map_err(|_| parse_err(k, v))?,
            "d" => run.d = v.parse().map_err(|_| parse_err(k, v))?,
            "lambda_init" => run.lambda_init = v.parse().map_err(|_| parse_err(k, v))?,
            "patience" => run.patience = v.parse().map_err(|_| parse_err(k, v))?,
            other => {
                return Err(Error::data(format!("unknown config key '{other}'")));
            }
        }
    }
    Ok(())
}

fn effective_run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut run = RunConfig::default();
    if let Some(path) = &a.config {
        let kv = parse_config_file(&std::fs::read_to_string(path)?)?;
        apply_config(&mut run, &kv)?;
    }
    // flags win over the config file
    if let Some(v) = a.learning_rate {
        run.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        run.epochs = v;
    }
    if let Some(v) = a.batch_size {
        run.batch_size = v;
    }
    if let Some(v) = a.d_a {
        run.d_a = v;
    }
    if let Some(v) = a.d {
        run.d = v;
    }
    if let Some(v) = a.lambda_init {
        run.lambda_init = v;
    }
    if let Some(v) = a.patience {
        run.patience = v;
    }
    run.validate()?;
    Ok(run)
}

#[derive(Serialize)]
struct RunReport {
    split_mode: String,
    seed: u64,
    config: RunConfig,
    split_sizes: (usize, usize, usize),
    dropped_pairs: usize,
    best_epoch: usize,
    best_val_rmse: f64,
    history: Vec<crate::train::EpochStats>,
    test: crate::train::EvalReport,
    tool_version: String,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let base_run = effective_run_config(&a)?;
    let bundle = load_bundle(&a.bundle)?;
    let (data, _frags) = bundle.assemble()?;
    std::fs::create_dir_all(&a.out)?;

    let mut aggregate: Vec<(String, crate::metrics::MetricsReport)> = Vec::new();
    for mode in &a.splits {
        let mut per_seed = Vec::new();
        for k in 0..a.seeds.max(1) {
            let seed = a.seed + k;
            let mut split_spec = SplitSpec::new(*mode, seed);
            split_spec.fixed_test = a.fixed_test;
            let split = make_split(&bundle.responses, &split_spec)?;
            let mut run = base_run.clone();
            run.seed = seed;
            let outcome = train(&data, &run, &split)?;
            let report = evaluate(&outcome.params, &data, &split.test)?;
            per_seed.push(report.metrics);

            let run_dir = a.out.join(format!("{mode}/seed{seed}"));
            std::fs::create_dir_all(&run_dir)?;
            let ckpt = Checkpoint::new(
                outcome.params.clone(),
                Some(a.bundle.join("norm_stats.csv").display().to_string()),
            );
            ckpt.save(&run_dir.join("best.ckpt"))?;
            let full = RunReport {
                split_mode: mode.to_string(),
                seed,
                config: run.clone(),
                split_sizes: split.sizes(),
                dropped_pairs: split.dropped,
                best_epoch: outcome.best_epoch,
                best_val_rmse: outcome.best_val_rmse,
                history: outcome.history,
                test: report,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            };
            std::fs::write(
                run_dir.join("report.json"),
                serde_json::to_string_pretty(&full)?,
            )?;
            println!(
                "{mode} seed {seed}: test rmse {:.4} pcc {:.4} scc {:.4}",
                per_seed.last().unwrap().rmse,
                per_seed.last().unwrap().pcc,
                per_seed.last().unwrap().scc
            );
        }
        aggregate.push((mode.to_string(), crate::metrics::aggregate_runs(&per_seed)?));
    }

    // table-shaped aggregate: one row per split mode
    let mut f = std::fs::File::create(a.out.join("aggregate.csv"))?;
    writeln!(
        f,
        "split,rmse_mean,rmse_std,pcc_mean,pcc_std,scc_mean,scc_std,n_seeds"
    )?;
    for (mode, rep) in &aggregate {
        let std = rep.std.clone().unwrap_or(crate::metrics::RunMetrics {
            rmse: f64::NAN,
            pcc: f64::NAN,
            scc: f64::NAN,
        });
        writeln!(
            f,
            "{mode},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            rep.mean.rmse,
            std.rmse,
            rep.mean.pcc,
            std.pcc,
            rep.mean.scc,
            std.scc,
            rep.per_seed.len()
        )?;
    }

    let mut config = BTreeMap::new();
    config.insert("run_config".into(), serde_json::to_string(&base_run)?);
    config.insert(
        "splits".into(),
        a.splits
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    config.insert("seeds".into(), a.seeds.to_string());
    config.insert("fixed_test".into(), a.fixed_test.to_string());
    let inputs: Vec<PathBuf> = ["normalized_expression.csv", "responses.csv", "pathways.gmt", "drugs.csv"]
        .iter()
        .map(|n| a.bundle.join(n))
        .collect();
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    write_manifest(&a.out, "train", config, &input_refs, a.seed)?;
    Ok(())
}

// --------------------------------------------------------------- evaluate

fn check_checkpoint_compat(ckpt: &Checkpoint, data: &TrainingData) -> Result<()> {
    let cfg = &ckpt.params.config;
    if cfg.embed_dim != data.embed_dim() || cfg.n_genes != data.n_genes() {
        return Err(Error::Model(format!(
            "checkpoint expects embed_dim {} / n_genes {}, bundle provides {} / {}",
            cfg.embed_dim,
            cfg.n_genes,
            data.embed_dim(),
            data.n_genes()
        )));
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let (data, _) = bundle.assemble()?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    check_checkpoint_compat(&ckpt, &data)?;
    let mut spec = SplitSpec::new(a.split, a.seed);
    spec.fixed_test = a.fixed_test;
    let split = make_split(&bundle.responses, &spec)?;
    let report = evaluate(&ckpt.params, &data, &split.test)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(
        a.out.join("evaluation.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    let mut config = BTreeMap::new();
    config.insert("split".into(), a.split.to_string());
    config.insert("fixed_test".into(), a.fixed_test.to_string());
    write_manifest(&a.out, "evaluate", config, &[&a.checkpoint], a.seed)?;
    println!(
        "test ({} pairs): rmse {:.4} pcc {:.4} scc {:.4}",
        report.n, report.metrics.rmse, report.metrics.pcc, report.metrics.scc
    );
    Ok(())
}

// ---------------------------------------------------------------- predict

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let raw = load_expression(&a.expression)?;
    let stats = load_norm_stats(&a.norm_stats)?;
    let normalized = apply_norm_stats(&raw, &stats)?;
    let db = load_pathways(&a.pathways)?;
    let drugs = load_drug_csv(&a.drugs)?;
    let embed_cfg = EmbeddingConfig {
        dim: a.embed_dim,
        ..EmbeddingConfig::default()
    };

    // synthesize the full unit x drug grid as a response table
    let mut rows = Vec::new();
    for unit in &normalized.cell_ids {
        for (drug, _) in &drugs {
            rows.push(crate::data::ResponseRow {
                cell_id: unit.clone(),
                drug_id: drug.clone(),
                ln_ic50: 0.0,
            });
        }
    }
    let table = ResponseTable { rows };
    let (data, _) = assemble_training_data(&normalized, &db, &table, &drugs, &embed_cfg, None)?;
    check_checkpoint_compat(&ckpt, &data)?;

    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(&a.out)?;
    writeln!(f, "unit_id,drug_id,ln_ic50_pred")?;
    for &(c, d, _) in &data.pairs {
        let (value, _) = crate::train::predict_pair(&ckpt.params, &data, c, d);
        writeln!(f, "{},{},{:?}", data.cell_ids[c], data.drug_ids[d], value)?;
    }
    println!(
        "wrote {} predictions ({} units x {} drugs)",
        data.pairs.len(),
        data.cell_ids.len(),
        data.drug_ids.len()
    );
    Ok(())
}

// --------------------------------------------------------------- attention

fn cmd_attention(a: AttentionArgs) -> Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let (data, _) = bundle.assemble()?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    check_checkpoint_compat(&ckpt, &data)?;

    let keep: Option<HashSet<&String>> = if a.drugs.is_empty() {
        None
    } else {
        for d in &a.drugs {
            if !data.drug_ids.contains(d) {
                return Err(Error::data(format!("unknown drug id '{d}'")));
            }
        }
        Some(a.drugs.iter().collect())
    };
    let idx: Vec<usize> = data
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, (_, d, _))| {
            keep.as_ref()
                .map(|k| k.contains(&data.drug_ids[*d]))
                .unwrap_or(true)
        })
        .map(|(i, _)| i)
        .collect();
    let records = crate::analysis::export_attention(&ckpt.params, &data, &idx)?;

    std::fs::create_dir_all(&a.out)?;
    let mut f = std::fs::File::create(a.out.join("attention.csv"))?;
    crate::analysis::write_attention_csv(&records, &mut f)?;
    if a.json {
        std::fs::write(
            a.out.join("attention.json"),
            serde_json::to_string(&records)?,
        )?;
    }
    println!("wrote attention for {} pairs", records.len());
    Ok(())
}

// ---------------------------------------------------------- compare-groups

fn load_predictions_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("prediction file missing column '{name}'")))
    };
    let (ui, di, vi) = (col("unit_id")?, col("drug_id")?, col("ln_ic50_pred")?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec
            .get(vi)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("prediction row {}: bad value", i + 2)))?;
        out.push((
            rec.get(ui).unwrap_or("").to_string(),
            rec.get(di).unwrap_or("").to_string(),
            v,
        ));
    }
    Ok(out)
}

fn load_labels_csv(path: &Path) -> Result<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("label file missing column '{name}'")))
    };
    let (ui, gi) = (col("unit_id")?, col("group")?);
    let mut out = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        out.insert(
            rec.get(ui).unwrap_or("").to_string(),
            rec.get(gi).unwrap_or("").to_string(),
        );
    }
    Ok(out)
}

fn load_coords_csv(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("coords file missing column '{name}'")))
    };
    let (ui, xi, yi) = (col("unit_id")?, col("x")?, col("y")?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("coords row {}: bad number", i + 2)))
        };
        out.push((rec.get(ui).unwrap_or("").to_string(), parse(xi)?, parse(yi)?));
    }
    Ok(out)
}

fn cmd_compare_groups(a: CompareGroupsArgs) -> Result<()> {
    let predictions = load_predictions_csv(&a.predictions)?;
    let labels = load_labels_csv(&a.labels)?;
    let table = crate::analysis::group_selective_drugs(&predictions, &labels, a.alpha)?;

    std::fs::create_dir_all(&a.out)?;
    let mut f = std::fs::File::create(a.out.join("comparisons.csv"))?;
    crate::analysis::write_comparisons_csv(&table, &mut f)?;
    for (group, rows) in &table {
        let n = rows.iter().filter(|c| c.selective).count();
        println!("group {group}: {n} selective drugs of {}", rows.len());
    }

    if let Some(coords_path) = &a.coords {
        let coords = load_coords_csv(coords_path)?;
        let index: HashMap<&String, usize> = coords
            .iter()
            .enumerate()
            .map(|(i, (u, _, _))| (u, i))
            .collect();
        let points: Vec<(f64, f64)> = coords.iter().map(|(_, x, y)| (*x, *y)).collect();
        let k = 6.min(points.len().saturating_sub(1));
        let weights = crate::stats::knn_adjacency(&points, k)?;

        // per-drug spatial coherence of the prediction field
        let mut by_drug: BTreeMap<&String, Vec<(usize, f64)>> = BTreeMap::new();
        for (unit, drug, value) in &predictions {
            if let Some(&i) = index.get(unit) {
                by_drug.entry(drug).or_default().push((i, *value));
            }
        }
        let mut f = std::fs::File::create(a.out.join("moran.csv"))?;
        writeln!(f, "drug_id,morans_i,p_permutation")?;
        for (drug, entries) in by_drug {
            if entries.len() != points.len() {
                continue;
            }
            let mut values = vec![0.0; points.len()];
            for (i, v) in entries {
                values[i] = v;
            }
            let field = crate::stats::SpatialField {
                spot_ids: coords.iter().map(|(u, _, _)| u.clone()).collect(),
                values,
                weights: weights.clone(),
            };
            match crate::stats::morans_i(&field, a.permutations, a.seed) {
                Ok((i, p)) => writeln!(f, "{drug},{i:?},{p:?}")?,
                Err(_) => writeln!(f, "{drug},NaN,NaN")?,
            }
        }
    }

    let mut config = BTreeMap::new();
    config.insert("alpha".into(), a.alpha.to_string());
    config.insert("permutations".into(), a.permutations.to_string());
    write_manifest(
        &a.out,
        "compare-groups",
        config,
        &[&a.predictions, &a.labels],
        a.seed,
    )?;
    Ok(())
}

// ---------------------------------------------------------------- selftest

fn cmd_selftest(a: SelftestArgs) -> Result<()> {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {}", name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // gradient check on a composite expression
    let err = crate::autodiff::grad_check(
        |tape, ids| {
            let m = tape.matmul(ids[0], ids[1]);
            let s = tape.softmax_rows(m);
            let sum = tape.sum(s);
            let sq = tape.mul_elem(sum, sum);
            tape.sum(sq)
        },
        &[
            crate::autodiff::Tensor::from_vec(2, 3, vec![0.3, -0.2, 0.5, 0.1, 0.7, -0.4]),
            crate::autodiff::Tensor::from_vec(3, 2, vec![0.2, 0.6, -0.3, 0.4, 0.8, -0.1]),
        ],
        1e-5,
    );
    check("gradient check (composite)", err < 1e-4);

    // wilcoxon exact fixture
    let w = crate::stats::wilcoxon_one_sided(&[1.0, 2.0], &[3.0, 4.0]);
    check(
        "wilcoxon exact p = 1/6",
        matches!(w, Ok((_, p)) if (p - 1.0 / 6.0).abs() < 1e-12),
    );

    // benjamini-hochberg fixture
    let adj = crate::stats::bh_fdr(&[0.01, 0.04]);
    check(
        "benjamini-hochberg fixture",
        matches!(adj, Ok(v) if (v[0] - 0.02).abs() < 1e-12 && (v[1] - 0.04).abs() < 1e-12),
    );

    // moran's i checkerboard
    let field = crate::stats::SpatialField {
        spot_ids: (0..4).map(|i| format!("s{i}")).collect(),
        values: vec![1.0, -1.0, -1.0, 1.0],
        weights: vec![
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ],
    };
    let m = crate::stats::morans_i(&field, 0, 0);
    check(
        "moran's i checkerboard = -1",
        matches!(m, Ok((i, _)) if (i + 1.0).abs() < 1e-12),
    );

    // differential attention reduction at lambda = 0
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let d = 4;
    let cfg = crate::model::ModelConfig {
        embed_dim: 8,
        n_genes: 5,
        d_a: 6,
        d,
        lambda_init: 0.0,
    };
    let mut params = crate::model::ModelParams::init(&cfg, 1).unwrap();
    params.path2sub.zero_lambda();
    let q = crate::autodiff::Tensor::from_vec(
        3,
        6,
        (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let kv = crate::autodiff::Tensor::from_vec(
        4,
        6,
        (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let (_, comp) =
        crate::model::diff_attention_standalone(&params.path2sub, &q, &kv, d, 0.0);
    let reduces = comp.lambda == 0.0
        && comp
            .net
            .data
            .iter()
            .zip(&comp.softmax1.data)
            .all(|(n, s)| (n - s).abs() < 1e-12);
    check("differential attention reduces at lambda = 0", reduces);

    // split protocol invariants on a synthetic table
    let spec = crate::synthetic::SyntheticSpec::default();
    let synth = crate::synthetic::generate(&spec)?;
    let mut ok = true;
    for mode in [
        SplitMode::Random,
        SplitMode::CellBlind,
        SplitMode::DrugBlind,
        SplitMode::Disjoint,
    ] {
        let split = make_split(&synth.responses, &SplitSpec::new(mode, 1))?;
        let mut seen = HashSet::new();
        for i in split.train.iter().chain(&split.val).chain(&split.test) {
            if !seen.insert(*i) {
                ok = false;
            }
        }
    }
    check("split partitions disjoint", ok);

    // parser round trip over the synthetic drug set
    let mut ok = true;
    for (_, smiles) in &synth.drugs {
        let g = match crate::chem::parse_smiles(smiles) {
            Ok(g) => g,
            Err(_) => {
                ok = false;
                continue;
            }
        };
        let frags = crate::brics::fragment(&g)?;
        if frags.len() != 2 {
            ok = false;
        }
    }
    check("synthetic drugs fragment cleanly", ok);

    if a.full {
        // quick end-to-end learning on a reduced synthetic set
        let (td, _) = synth.to_training_data(&EmbeddingConfig::default())?;
        let mut split_spec = SplitSpec::new(SplitMode::Random, 1);
        split_spec.fixed_test = true;
        let split = make_split(&synth.responses, &split_spec)?;
        let mut run = RunConfig::default();
        run.epochs = 60;
        run.seed = 1;
        let outcome = train(&td, &run, &split)?;
        let report = evaluate(&outcome.params, &td, &split.test)?;
        check(
            "end-to-end learning (reduced budget)",
            report.metrics.pcc > 0.5,
        );
    }

    if failures > 0 {
        return Err(Error::Stats(format!("{failures} selftest check(s) failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_and_flags_win() {
        let kv = parse_config_file("learning_rate = 0.01\n# comment\nepochs=5\n").unwrap();
        let mut run = RunConfig::default();
        apply_config(&mut run, &kv).unwrap();
        assert_eq!(run.learning_rate, 0.01);
        assert_eq!(run.epochs, 5);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let mut run = RunConfig::default();
        let kv = parse_config_file("nonsense=1\n").unwrap();
        assert!(apply_config(&mut run, &kv).is_err());
        let kv = parse_config_file("epochs=abc\n").unwrap();
        assert!(apply_config(&mut run, &kv).is_err());
        assert!(parse_config_file("no_equals_sign\n").is_err());
    }

    #[test]
    fn sha256_digest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "hello").unwrap();
        let a = sha256_file(&p).unwrap();
        let b = sha256_file(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
