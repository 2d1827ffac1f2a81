use crate::data::FrameGrid;
use crate::error::{Error, Result};
use crate::graph::{build_graph, TemporalGraph};
use crate::linalg::{linear, Mat};

use super::{DecoderInput, ModelConfig, ModelParams};

/// Standardized coordinates of a grid as an `N x 3` matrix.
pub(crate) fn grid_matrix(grid: &FrameGrid, config: &ModelConfig) -> Mat {
    let (c, s) = (config.input_center, config.input_scale);
    let data = grid.coords().chunks_exact(3).flat_map(|pt| [0, 1, 2].map(|d| (pt[d] - c[d]) / s[d])).collect();
    Mat::from_vec(grid.len(), 3, data)
}

/// Encoder intermediates: `h = relu(relu(x W1^T + b1) W2^T + b2)`.
pub(crate) struct Encoded {
    pub a1: Mat,
    pub a2: Mat,
    pub h: Mat,
}

pub(crate) fn encode(coords: &Mat, p: &ModelParams) -> Encoded {
    let a1 = linear(coords, &p.enc1.weight.data, p.enc1.outputs(), Some(&p.enc1.bias.data));
    let r1 = a1.relu();
    let a2 = linear(&r1, &p.enc2.weight.data, p.enc2.outputs(), Some(&p.enc2.bias.data));
    let h = a2.relu();
    Encoded { a1, a2, h }
}

/// Per-node features `h_i = f_mlp(x_i, y_i, z_i)`.
pub fn encode_nodes(coords: &Mat, params: &ModelParams) -> Mat {
    encode(coords, params).h
}

/// Edge messages and their pre-activations, one row per edge in edge order.
#[derive(Debug, Clone)]
pub struct MessageOutput {
    /// `W_a - W_b`, the node-side block of the first message layer.
    pub(crate) w_self: Vec<f64>,
    pub pre1: Mat,
    pub pre2: Mat,
    pub messages: Mat,
}

/// `m_ij = M(h_i ⊕ (h_j - h_i))` for every edge `(j -> i)`.
///
/// The first layer is linear in its input, so with `W = [W_a | W_b]` the
/// pre-activation splits into `(W_a - W_b) h_i + W_b h_j`; both halves are
/// computed once per node instead of once per edge.
pub fn generate_messages(graph: &TemporalGraph, h: &Mat, params: &ModelParams) -> MessageOutput {
    let dh = h.cols;
    let dm = params.msg1.outputs();
    let w = &params.msg1.weight.data;
    let mut w_self = vec![0.0; dm * dh];
    let mut w_nbr = vec![0.0; dm * dh];
    for o in 0..dm {
        let row = &w[o * 2 * dh..(o + 1) * 2 * dh];
        for c in 0..dh {
            w_self[o * dh + c] = row[c] - row[dh + c];
            w_nbr[o * dh + c] = row[dh + c];
        }
    }
    let node_part = linear(h, &w_self, dm, None);
    let nbr_part = linear(h, &w_nbr, dm, None);
    let bias = &params.msg1.bias.data;
    let mut pre1 = Mat::zeros(graph.edges.len(), dm);
    for (e, &(src, dst)) in graph.edges.iter().enumerate() {
        let out = pre1.row_mut(e);
        let a = node_part.row(dst);
        let b = nbr_part.row(src);
        for c in 0..dm {
            out[c] = a[c] + b[c] + bias[c];
        }
    }
    let s1 = pre1.relu();
    let pre2 = linear(&s1, &params.msg2.weight.data, dm, Some(&params.msg2.bias.data));
    let messages = pre2.relu();
    MessageOutput { w_self, pre1, pre2, messages }
}

/// Attention aggregation intermediates.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `N x heads*d_k`, from node features.
    pub query: Mat,
    /// `E x heads*d_k`, from edge messages.
    pub key: Mat,
    /// `E x heads*d_v`, from edge messages.
    pub value: Mat,
    /// `E x heads`; softmax over each node's incoming edges.
    pub alpha: Mat,
    /// `N x heads*d_v`, concatenated per-head sums.
    pub z_heads: Mat,
    /// `N x d_z`.
    pub z: Mat,
}

/// Multi-head attention over incoming edges: queries from `h_i`, keys and
/// values from `m_ij`, logits scaled by `1/sqrt(d_k)`. Nodes without
/// incoming edges aggregate to zero.
pub fn aggregate_attention(graph: &TemporalGraph, h: &Mat, messages: &Mat, params: &ModelParams) -> AttentionOutput {
    let c = &params.config;
    let (heads, dk, dv) = (c.heads, c.d_k, c.d_v);
    let query = linear(h, &params.attn_query.data, heads * dk, None);
    let key = linear(messages, &params.attn_key.data, heads * dk, None);
    let value = linear(messages, &params.attn_value.data, heads * dv, None);
    let scale = 1.0 / (dk as f64).sqrt();
    let n = h.rows;
    let mut alpha = Mat::zeros(graph.edges.len(), heads);
    let mut z_heads = Mat::zeros(n, heads * dv);
    for i in 0..n {
        let (lo, hi) = (graph.dst_offsets[i], graph.dst_offsets[i + 1]);
        if lo == hi {
            continue;
        }
        let q = query.row(i);
        for b in 0..heads {
            let qb = &q[b * dk..(b + 1) * dk];
            let mut max = f64::NEG_INFINITY;
            for e in lo..hi {
                let kb = &key.row(e)[b * dk..(b + 1) * dk];
                let s = qb.iter().zip(kb).map(|(x, y)| x * y).sum::<f64>() * scale;
                alpha.data[e * heads + b] = s;
                max = max.max(s);
            }
            let mut total = 0.0;
            for e in lo..hi {
                let w = (alpha.data[e * heads + b] - max).exp();
                alpha.data[e * heads + b] = w;
                total += w;
            }
            let zb = &mut z_heads.data[i * heads * dv + b * dv..i * heads * dv + (b + 1) * dv];
            for e in lo..hi {
                let a = alpha.data[e * heads + b] / total;
                alpha.data[e * heads + b] = a;
                let vb = &value.row(e)[b * dv..(b + 1) * dv];
                for (zz, vv) in zb.iter_mut().zip(vb) {
                    *zz += a * vv;
                }
            }
        }
    }
    let z = linear(&z_heads, &params.attn_out.data, c.d_z, None);
    AttentionOutput { query, key, value, alpha, z_heads, z }
}

pub(crate) struct Updated {
    pub input: Mat,
    pub a1: Mat,
    pub a2: Mat,
    pub h_out: Mat,
}

pub(crate) fn update(h: &Mat, z: &Mat, p: &ModelParams) -> Updated {
    let input = h.hcat(z);
    let a1 = linear(&input, &p.upd1.weight.data, p.upd1.outputs(), Some(&p.upd1.bias.data));
    let r1 = a1.relu();
    let a2 = linear(&r1, &p.upd2.weight.data, p.upd2.outputs(), Some(&p.upd2.bias.data));
    let h_out = a2.relu();
    Updated { input, a1, a2, h_out }
}

/// `h'_i = f_update(h_i ⊕ z_i)`.
pub fn update_nodes(h: &Mat, z: &Mat, params: &ModelParams) -> Mat {
    update(h, z, params).h_out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub values: Vec<f64>,
    /// Row that supplied each column's maximum (lowest index on ties).
    pub argmax: Vec<usize>,
}

pub fn global_max_pool(h: &Mat) -> MaxPool {
    assert!(h.rows >= 1, "max pool needs at least one node");
    let mut values = h.row(0).to_vec();
    let mut argmax = vec![0; h.cols];
    for r in 1..h.rows {
        for (c, &v) in h.row(r).iter().enumerate() {
            if v > values[c] {
                values[c] = v;
                argmax[c] = r;
            }
        }
    }
    MaxPool { values, argmax }
}

pub(crate) struct Decoded {
    pub input: Mat,
    pub a1: Mat,
    pub out: Mat,
}

pub(crate) fn decoder_input(coords: &Mat, pooled: &[f64], node_features: &Mat, mode: DecoderInput) -> Mat {
    let extra = match mode {
        DecoderInput::Global => pooled.len(),
        DecoderInput::NodeFeatures => node_features.cols,
        DecoderInput::GlobalAndNode => pooled.len() + node_features.cols,
    };
    let mut input = Mat::zeros(coords.rows, 3 + extra);
    for r in 0..coords.rows {
        let row = input.row_mut(r);
        row[..3].copy_from_slice(coords.row(r));
        match mode {
            DecoderInput::Global => row[3..].copy_from_slice(pooled),
            DecoderInput::NodeFeatures => row[3..].copy_from_slice(node_features.row(r)),
            DecoderInput::GlobalAndNode => {
                row[3..3 + pooled.len()].copy_from_slice(pooled);
                row[3 + pooled.len()..].copy_from_slice(node_features.row(r));
            }
        }
    }
    input
}

pub(crate) fn decode_input(input: Mat, p: &ModelParams) -> Decoded {
    let dec1 = p.dec1.as_ref().expect("autoencoder parameters carry a decoder");
    let dec2 = p.dec2.as_ref().expect("autoencoder parameters carry a decoder");
    let a1 = linear(&input, &dec1.weight.data, dec1.outputs(), Some(&dec1.bias.data));
    let r1 = a1.relu();
    let out = linear(&r1, &dec2.weight.data, 3, Some(&dec2.bias.data));
    Decoded { input, a1, out }
}

/// `p'_i = f_out(p_i ⊕ H_max)`; `node_features` is only read when the
/// decoder is configured to see `h'_i`.
pub fn decode(coords: &Mat, pooled: &[f64], node_features: &Mat, params: &ModelParams) -> Mat {
    let input = decoder_input(coords, pooled, node_features, params.config.decoder_input);
    decode_input(input, params).out
}

/// Everything the shared backbone computed for one grid.
pub struct BackboneCache {
    pub coords: Mat,
    pub graph: TemporalGraph,
    pub(crate) enc: Encoded,
    pub msg: MessageOutput,
    pub attn: AttentionOutput,
    pub(crate) upd: Updated,
    pub pool: MaxPool,
}

impl BackboneCache {
    pub fn node_features(&self) -> &Mat {
        &self.enc.h
    }

    pub fn updated_features(&self) -> &Mat {
        &self.upd.h_out
    }
}

pub(crate) fn backbone(grid: &FrameGrid, p: &ModelParams) -> BackboneCache {
    let coords = grid_matrix(grid, &p.config);
    let graph = build_graph(grid, p.config.k, p.config.graph_mode);
    let enc = encode(&coords, p);
    let msg = generate_messages(&graph, &enc.h, p);
    let attn = aggregate_attention(&graph, &enc.h, &msg.messages, p);
    let upd = update(&enc.h, &attn.z, p);
    let pool = global_max_pool(&upd.h_out);
    BackboneCache { coords, graph, enc, msg, attn, upd, pool }
}

pub struct AutoencoderCache {
    pub backbone: BackboneCache,
    pub(crate) dec: Decoded,
    pub output: FrameGrid,
}

/// Runs the autoencoder and keeps every intermediate for backpropagation.
pub fn autoencoder_forward(grid: &FrameGrid, params: &ModelParams) -> Result<AutoencoderCache> {
    if params.dec1.is_none() || params.dec2.is_none() {
        return Err(Error::Config("parameters have no decoder; not an autoencoder".into()));
    }
    let backbone = backbone(grid, params);
    let input = decoder_input(
        &backbone.coords,
        &backbone.pool.values,
        &backbone.upd.h_out,
        params.config.decoder_input,
    );
    let dec = decode_input(input, params);
    if dec.out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Gradient("autoencoder produced non-finite coordinates".into()));
    }
    let (c, s) = (params.config.input_center, params.config.input_scale);
    let coords = dec.out.data.chunks_exact(3).flat_map(|pt| [0, 1, 2].map(|d| c[d] + s[d] * pt[d])).collect();
    let output = grid.with_coords(coords)?;
    Ok(AutoencoderCache { backbone, dec, output })
}

pub struct ClassifierCache {
    pub backbone: BackboneCache,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn classifier_forward(grid: &FrameGrid, params: &ModelParams) -> Result<ClassifierCache> {
    let head = params.head.as_ref().ok_or_else(|| Error::Config("parameters have no classifier head".into()))?;
    let backbone = backbone(grid, params);
    let classes = head.outputs();
    let dh = head.inputs();
    let logits: Vec<f64> = (0..classes)
        .map(|c| {
            let w = &head.weight.data[c * dh..(c + 1) * dh];
            head.bias.data[c] + w.iter().zip(&backbone.pool.values).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let probs = softmax(&logits);
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Gradient("classifier produced non-finite probabilities".into()));
    }
    Ok(ClassifierCache { backbone, logits, probs })
}

/// Class probabilities for one grid.
pub fn classify(grid: &FrameGrid, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(classifier_forward(grid, params)?.probs)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
