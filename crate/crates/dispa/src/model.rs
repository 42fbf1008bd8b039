//! The DiSPA network: three modality encoders into a shared latent space,
//! two differential cross-attention views (pathways attending to
//! substructures, the drug attending to pathways), and an MLP regression
//! head over pooled features. Attention maps are captured on every forward
//! pass for downstream analysis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Drug/substructure embedding width fed to their encoders.
    pub embed_dim: usize,
    /// Pathway row width (max genes per pathway).
    pub n_genes: usize,
    /// Shared latent dimension of the three encoders.
    pub d_a: usize,
    /// Attention output dimension.
    pub d: usize,
    /// Offset added to the learned suppression coefficient.
    pub lambda_init: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.n_genes == 0 || self.d_a == 0 || self.d == 0 {
            return Err(Error::Model("all model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Stable digest over the dimensions that must agree between a
    /// checkpoint and a data bundle.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(
            format!(
                "embed_dim={};n_genes={};d_a={};d={};lambda_init={:?}",
                self.embed_dim, self.n_genes, self.d_a, self.d, self.lambda_init
            )
            .as_bytes(),
        );
        hex_string(&h.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One hidden layer, ReLU: x W1 + b1 -> relu -> W2 + b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl FfnParams {
    fn init(rng: &mut ChaCha8Rng, input: usize, hidden: usize, output: usize) -> Self {
        FfnParams {
            w1: glorot(rng, input, hidden),
            b1: Tensor::zeros(1, hidden),
            w2: glorot(rng, hidden, output),
            b2: Tensor::zeros(1, output),
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub path: FfnParams,
    pub drug: FfnParams,
    pub sub: FfnParams,
}

/// Projections and suppression parameters for one differential attention
/// view. W_Q/W_K/W_V are d_a x 2d; the Q and K products split into two
/// d-wide halves, the two V halves are summed back to width d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffAttnParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub lambda_q1: Tensor,
    pub lambda_k1: Tensor,
    pub lambda_q2: Tensor,
    pub lambda_k2: Tensor,
}

impl DiffAttnParams {
    fn init(rng: &mut ChaCha8Rng, d_a: usize, d: usize) -> Self {
        let small = |rng: &mut ChaCha8Rng| {
            Tensor::from_vec(1, d, (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect())
        };
        DiffAttnParams {
            w_q: glorot(rng, d_a, 2 * d),
            w_k: glorot(rng, d_a, 2 * d),
            w_v: glorot(rng, d_a, 2 * d),
            lambda_q1: small(rng),
            lambda_k1: small(rng),
            lambda_q2: small(rng),
            lambda_k2: small(rng),
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.lambda_q1,
            &self.lambda_k1,
            &self.lambda_q2,
            &self.lambda_k2,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.lambda_q1,
            &mut self.lambda_k1,
            &mut self.lambda_q2,
            &mut self.lambda_k2,
        ]
    }
}

/// All trainable tensors plus the configuration they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoders: EncoderParams,
    pub path2sub: DiffAttnParams,
    pub drug2path: DiffAttnParams,
    pub head: FfnParams,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    )
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d_a, d) = (config.d_a, config.d);
        let concat_dim = d + d + d_a;
        Ok(ModelParams {
            config: config.clone(),
            encoders: EncoderParams {
                path: FfnParams::init(&mut rng, config.n_genes, d_a, d_a),
                drug: FfnParams::init(&mut rng, config.embed_dim, d_a, d_a),
                sub: FfnParams::init(&mut rng, config.embed_dim, d_a, d_a),
            },
            path2sub: DiffAttnParams::init(&mut rng, d_a, d),
            drug2path: DiffAttnParams::init(&mut rng, d_a, d),
            head: FfnParams::init(&mut rng, concat_dim, d, 1),
        })
    }

    /// All trainable tensors in a fixed, documented order: encoders (path,
    /// drug, sub; each w1,b1,w2,b2), path2sub, drug2path (each
    /// w_q,w_k,w_v,lq1,lk1,lq2,lk2), head (w1,b1,w2,b2).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        out.extend(self.encoders.path.tensors());
        out.extend(self.encoders.drug.tensors());
        out.extend(self.encoders.sub.tensors());
        out.extend(self.path2sub.tensors());
        out.extend(self.drug2path.tensors());
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        out.extend(self.encoders.path.tensors_mut());
        out.extend(self.encoders.drug.tensors_mut());
        out.extend(self.encoders.sub.tensors_mut());
        out.extend(self.path2sub.tensors_mut());
        out.extend(self.drug2path.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

/// Tape handles for one bound copy of the parameters.
pub struct BoundModel {
    pub leaves: Vec<NodeId>,
    enc_path: BoundFfn,
    enc_drug: BoundFfn,
    enc_sub: BoundFfn,
    path2sub: BoundAttn,
    drug2path: BoundAttn,
    head: BoundFfn,
    config: ModelConfig,
}

struct BoundFfn {
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
}

struct BoundAttn {
    w_q: NodeId,
    w_k: NodeId,
    w_v: NodeId,
    lq1: NodeId,
    lk1: NodeId,
    lq2: NodeId,
    lk2: NodeId,
}

impl ModelParams {
    /// Push every parameter tensor onto the tape, in [`Self::tensors`]
    /// order, so gradients line up with the optimizer state.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let mut leaves = Vec::new();
        let bind_ffn = |tape: &mut Tape, leaves: &mut Vec<NodeId>, f: &FfnParams| {
            let ids: Vec<NodeId> = f
                .tensors()
                .into_iter()
                .map(|t| {
                    let id = tape.leaf(t.clone(), trainable);
                    leaves.push(id);
                    id
                })
                .collect();
            BoundFfn {
                w1: ids[0],
                b1: ids[1],
                w2: ids[2],
                b2: ids[3],
            }
        };
        let enc_path = bind_ffn(tape, &mut leaves, &self.encoders.path);
        let enc_drug = bind_ffn(tape, &mut leaves, &self.encoders.drug);
        let enc_sub = bind_ffn(tape, &mut leaves, &self.encoders.sub);
        let bind_attn = |tape: &mut Tape, leaves: &mut Vec<NodeId>, a: &DiffAttnParams| {
            let ids: Vec<NodeId> = a
                .tensors()
                .into_iter()
                .map(|t| {
                    let id = tape.leaf(t.clone(), trainable);
                    leaves.push(id);
                    id
                })
                .collect();
            BoundAttn {
                w_q: ids[0],
                w_k: ids[1],
                w_v: ids[2],
                lq1: ids[3],
                lk1: ids[4],
                lq2: ids[5],
                lk2: ids[6],
            }
        };
        let path2sub = bind_attn(tape, &mut leaves, &self.path2sub);
        let drug2path = bind_attn(tape, &mut leaves, &self.drug2path);
        let head = bind_ffn(tape, &mut leaves, &self.head);
        BoundModel {
            leaves,
            enc_path,
            enc_drug,
            enc_sub,
            path2sub,
            drug2path,
            head,
            config: self.config.clone(),
        }
    }
}

fn ffn(tape: &mut Tape, p: &BoundFfn, x: NodeId) -> NodeId {
    let h = tape.matmul(x, p.w1);
    let h = tape.add_row(h, p.b1);
    let h = tape.relu(h);
    let o = tape.matmul(h, p.w2);
    tape.add_row(o, p.b2)
}

/// Softmax component maps and the suppression coefficient captured from one
/// attention forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionComponents {
    pub softmax1: Tensor,
    pub softmax2: Tensor,
    /// softmax1 - lambda * softmax2.
    pub net: Tensor,
    pub lambda: f64,
}

/// Differential attention: (softmax(Q1 K1ᵀ/√d) - λ softmax(Q2 K2ᵀ/√d)) V,
/// with λ = clamp(exp(λ_q1·λ_k1) - exp(λ_q2·λ_k2) + λ_init, 0, 0.99) and V
/// reduced back to width d by summing its two halves.
fn diff_attention(
    tape: &mut Tape,
    p: &BoundAttn,
    q_in: NodeId,
    kv_in: NodeId,
    d: usize,
    lambda_init: f64,
) -> (NodeId, AttentionComponents) {
    let q = tape.matmul(q_in, p.w_q);
    let k = tape.matmul(kv_in, p.w_k);
    let v = tape.matmul(kv_in, p.w_v);

    let q1 = tape.slice_cols(q, 0, d);
    let q2 = tape.slice_cols(q, d, 2 * d);
    let k1 = tape.slice_cols(k, 0, d);
    let k2 = tape.slice_cols(k, d, 2 * d);
    let v1 = tape.slice_cols(v, 0, d);
    let v2 = tape.slice_cols(v, d, 2 * d);
    let v_red = tape.add(v1, v2);

    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let k1t = tape.transpose(k1);
    let s1 = tape.matmul(q1, k1t);
    let s1 = tape.scale(s1, inv_sqrt_d);
    let a1 = tape.softmax_rows(s1);
    let k2t = tape.transpose(k2);
    let s2 = tape.matmul(q2, k2t);
    let s2 = tape.scale(s2, inv_sqrt_d);
    let a2 = tape.softmax_rows(s2);

    // lambda = exp(lq1 . lk1) - exp(lq2 . lk2) + lambda_init, clamped.
    let lk1t = tape.transpose(p.lk1);
    let dot1 = tape.matmul(p.lq1, lk1t);
    let e1 = tape.exp(dot1);
    let lk2t = tape.transpose(p.lk2);
    let dot2 = tape.matmul(p.lq2, lk2t);
    let e2 = tape.exp(dot2);
    let diff = tape.sub(e1, e2);
    let offset = tape.constant(Tensor::scalar(lambda_init));
    let raw = tape.add(diff, offset);
    let lambda = tape.clamp(raw, 0.0, 0.99);

    let scaled_a2 = tape.scalar_mul(lambda, a2);
    let net = tape.sub(a1, scaled_a2);
    let out = tape.matmul(net, v_red);

    let components = AttentionComponents {
        softmax1: tape.value(a1).clone(),
        softmax2: tape.value(a2).clone(),
        net: tape.value(net).clone(),
        lambda: tape.value(lambda).data[0],
    };
    (out, components)
}

/// One differential attention view on its own throwaway tape; inputs and
/// outputs are plain tensors. Used for component-level checks.
pub fn diff_attention_standalone(
    params: &DiffAttnParams,
    q_in: &Tensor,
    kv_in: &Tensor,
    d: usize,
    lambda_init: f64,
) -> (Tensor, AttentionComponents) {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params
        .tensors()
        .into_iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let bound = BoundAttn {
        w_q: ids[0],
        w_k: ids[1],
        w_v: ids[2],
        lq1: ids[3],
        lk1: ids[4],
        lq2: ids[5],
        lk2: ids[6],
    };
    let q = tape.constant(q_in.clone());
    let kv = tape.constant(kv_in.clone());
    let (out, comp) = diff_attention(&mut tape, &bound, q, kv, d, lambda_init);
    (tape.value(out).clone(), comp)
}

/// Zeroed suppression parameters: with `lambda_init` 0 the view reduces to
/// standard single-softmax attention.
impl DiffAttnParams {
    pub fn zero_lambda(&mut self) {
        for t in [
            &mut self.lambda_q1,
            &mut self.lambda_k1,
            &mut self.lambda_q2,
            &mut self.lambda_k2,
        ] {
            t.data.fill(0.0);
        }
    }
}

/// Attention maps exported for one (cell, drug) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub cell_id: String,
    pub drug_id: String,
    /// Net Path2Sub map, n_pathways x n_substructures.
    pub path2sub: AttentionComponents,
    /// Net Drug2Path map, 1 x n_pathways.
    pub drug2path: AttentionComponents,
}

/// Full forward pass on an existing tape. Inputs are pushed as constants;
/// returns the scalar prediction node and the captured attention maps.
pub fn forward(
    tape: &mut Tape,
    bound: &BoundModel,
    e_path: &Tensor,
    e_drug: &Tensor,
    e_sub: &Tensor,
) -> (NodeId, AttentionRecord) {
    let cfg = &bound.config;
    assert_eq!(e_path.cols, cfg.n_genes, "pathway tensor width mismatch");
    assert_eq!(e_drug.cols, cfg.embed_dim, "drug embedding width mismatch");
    assert_eq!(e_sub.cols, cfg.embed_dim, "substructure embedding width mismatch");

    let e_path = tape.constant(e_path.clone());
    let e_drug = tape.constant(e_drug.clone());
    let e_sub = tape.constant(e_sub.clone());

    let h_path = ffn(tape, &bound.enc_path, e_path);
    let h_drug = ffn(tape, &bound.enc_drug, e_drug);
    let h_sub = ffn(tape, &bound.enc_sub, e_sub);

    let (h_p2s, p2s) = diff_attention(tape, &bound.path2sub, h_path, h_sub, cfg.d, cfg.lambda_init);
    let (h_d2p, d2p) = diff_attention(tape, &bound.drug2path, h_drug, h_path, cfg.d, cfg.lambda_init);

    let pooled_p2s = tape.mean_rows(h_p2s);
    let pooled_sub = tape.mean_rows(h_sub);
    let concat = tape.concat_cols(&[pooled_p2s, h_d2p, pooled_sub]);
    let pred = ffn(tape, &bound.head, concat);

    let record = AttentionRecord {
        cell_id: String::new(),
        drug_id: String::new(),
        path2sub: p2s,
        drug2path: d2p,
    };
    (pred, record)
}

/// Inference-only prediction on a throwaway tape.
pub fn predict(
    params: &ModelParams,
    e_path: &Tensor,
    e_drug: &Tensor,
    e_sub: &Tensor,
) -> (f64, AttentionRecord) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let (pred, record) = forward(&mut tape, &bound, e_path, e_drug, e_sub);
    (tape.value(pred).data[0], record)
}

/// On-disk checkpoint: parameters plus the data-geometry hash they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub params: ModelParams,
    /// Path of the normalization-stats sidecar the model was trained with.
    pub norm_stats_ref: Option<String>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, norm_stats_ref: Option<String>) -> Self {
        Checkpoint {
            format_version: 1,
            config_hash: params.config.hash(),
            params,
            norm_stats_ref,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&json)?;
        if ckpt.config_hash != ckpt.params.config.hash() {
            return Err(Error::Model(
                "checkpoint config hash does not match its parameters".into(),
            ));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            n_genes: 5,
            d_a: 6,
            d: 4,
            lambda_init: 0.5,
        }
    }

    fn rand_inputs(seed: u64, n_p: usize, n_s: usize) -> (Tensor, Tensor, Tensor) {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |r: usize, c: usize| {
            Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        (t(n_p, cfg.n_genes), t(1, cfg.embed_dim), t(n_s, cfg.embed_dim))
    }

    #[test]
    fn shapes_follow_the_contract() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 7).unwrap();
        let (e_path, e_drug, e_sub) = rand_inputs(1, 3, 5);
        let (value, rec) = predict(&params, &e_path, &e_drug, &e_sub);
        assert!(value.is_finite());
        assert_eq!(rec.path2sub.net.rows, 3);
        assert_eq!(rec.path2sub.net.cols, 5);
        assert_eq!(rec.drug2path.net.rows, 1);
        assert_eq!(rec.drug2path.net.cols, 3);
    }

    #[test]
    fn softmax_components_row_sums() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 3).unwrap();
        let (e_path, e_drug, e_sub) = rand_inputs(2, 4, 6);
        let (_, rec) = predict(&params, &e_path, &e_drug, &e_sub);
        for comp in [&rec.path2sub, &rec.drug2path] {
            for r in 0..comp.softmax1.rows {
                let s1: f64 = comp.softmax1.row(r).iter().sum();
                let s2: f64 = comp.softmax2.row(r).iter().sum();
                let net: f64 = comp.net.row(r).iter().sum();
                assert!((s1 - 1.0).abs() < 1e-9);
                assert!((s2 - 1.0).abs() < 1e-9);
                assert!((net - (1.0 - comp.lambda)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_key_attention_weight_is_one_minus_lambda() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let (e_path, e_drug, e_sub) = rand_inputs(3, 4, 1);
        let (_, rec) = predict(&params, &e_path, &e_drug, &e_sub);
        for r in 0..rec.path2sub.net.rows {
            assert!((rec.path2sub.net.get(r, 0) - (1.0 - rec.path2sub.lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_invariant_to_substructure_order() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 11).unwrap();
        let (e_path, e_drug, e_sub) = rand_inputs(9, 4, 5);
        let (v1, _) = predict(&params, &e_path, &e_drug, &e_sub);

        // reverse substructure rows
        let rows: Vec<Vec<f64>> = (0..e_sub.rows).rev().map(|r| e_sub.row(r).to_vec()).collect();
        let e_sub_rev = Tensor::from_rows(&rows);
        let (v2, _) = predict(&params, &e_path, &e_drug, &e_sub_rev);
        assert!((v1 - v2).abs() < 1e-9, "{v1} vs {v2}");
    }

    #[test]
    fn constant_head_means_constant_prediction() {
        let cfg = small_config();
        let mut params = ModelParams::init(&cfg, 13).unwrap();
        params.head.w1.data.fill(0.0);
        params.head.w2.data.fill(0.0);
        params.head.b2.data.fill(2.75);
        for seed in 0..3 {
            let (e_path, e_drug, e_sub) = rand_inputs(seed, 4, 3);
            let (v, _) = predict(&params, &e_path, &e_drug, &e_sub);
            assert!((v - 2.75).abs() < 1e-12);
        }
    }

    #[test]
    fn end_to_end_grad_check() {
        let cfg = small_config();
        for seed in [1u64, 2, 3] {
            let params = ModelParams::init(&cfg, seed).unwrap();
            let (e_path, e_drug, e_sub) = rand_inputs(seed + 10, 3, 4);
            let target = 0.37;
            let point: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
            let err = grad_check(
                |tape, ids| {
                    // rebuild a params struct around the leaf ids
                    let mut p = params.clone();
                    for (t, id) in p.tensors_mut().into_iter().zip(ids) {
                        *t = tape.value(*id).clone();
                    }
                    // bind manually: reuse the provided leaves
                    let bound = rebind(&p, ids);
                    let (pred, _) = forward(tape, &bound, &e_path, &e_drug, &e_sub);
                    let t = tape.constant(Tensor::scalar(target));
                    tape.mse(pred, t)
                },
                &point,
                1e-5,
            );
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    // Test helper: construct a BoundModel over externally created leaves in
    // ModelParams::tensors order.
    fn rebind(params: &ModelParams, ids: &[NodeId]) -> BoundModel {
        let f = |o: usize| BoundFfn {
            w1: ids[o],
            b1: ids[o + 1],
            w2: ids[o + 2],
            b2: ids[o + 3],
        };
        let a = |o: usize| BoundAttn {
            w_q: ids[o],
            w_k: ids[o + 1],
            w_v: ids[o + 2],
            lq1: ids[o + 3],
            lk1: ids[o + 4],
            lq2: ids[o + 5],
            lk2: ids[o + 6],
        };
        BoundModel {
            leaves: ids.to_vec(),
            enc_path: f(0),
            enc_drug: f(4),
            enc_sub: f(8),
            path2sub: a(12),
            drug2path: a(19),
            head: f(26),
            config: params.config.clone(),
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 99).unwrap();
        let ckpt = Checkpoint::new(params.clone(), Some("stats.csv".into()));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("best.ckpt");
        ckpt.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(ckpt, back);
        for (a, b) in params.tensors().iter().zip(back.params.tensors()) {
            assert_eq!(a.data, b.data);
        }
    }
}
