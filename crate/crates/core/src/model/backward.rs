//! Hand-derived reverse pass for the backbone, decoder and classifier head.
//!
//! Subgradient conventions: ReLU passes gradient only for strictly positive
//! pre-activations; max pool routes each column's gradient to its argmax
//! row. Graph topology is a constant.

use crate::linalg::{
    accumulate_bias_grad, accumulate_weight_grad, linear_backward_input, relu_backward, Mat,
};

use super::forward::{AutoencoderCache, BackboneCache, ClassifierCache};
use super::{DecoderInput, ModelParams};

/// Backpropagates `d_out` (upstream gradient of the `N x 3` output
/// coordinates) into `grad`.
pub fn backward_autoencoder(cache: &AutoencoderCache, params: &ModelParams, d_out: &Mat, grad: &mut ModelParams) {
    let scale = params.config.input_scale;
    let mut d_out = d_out.clone();
    for r in 0..d_out.rows {
        d_out.row_mut(r).iter_mut().zip(scale).for_each(|(g, s)| *g *= s);
    }
    let d_out = &d_out;
    let dec1 = params.dec1.as_ref().expect("autoencoder");
    let dec2 = params.dec2.as_ref().expect("autoencoder");
    let g_dec2 = grad.dec2.as_mut().expect("autoencoder");
    let r1 = cache.dec.a1.relu();
    accumulate_weight_grad(&mut g_dec2.weight.data, d_out, &r1);
    accumulate_bias_grad(&mut g_dec2.bias.data, d_out);
    let mut d_a1 = linear_backward_input(d_out, &dec2.weight.data, dec2.inputs());
    relu_backward(&mut d_a1, &cache.dec.a1);
    let g_dec1 = grad.dec1.as_mut().expect("autoencoder");
    accumulate_weight_grad(&mut g_dec1.weight.data, &d_a1, &cache.dec.input);
    accumulate_bias_grad(&mut g_dec1.bias.data, &d_a1);
    let d_input = linear_backward_input(&d_a1, &dec1.weight.data, dec1.inputs());

    let bb = &cache.backbone;
    let dh = params.config.d_h;
    let n = bb.coords.rows;
    let mut d_pool = vec![0.0; dh];
    let mut d_hout = Mat::zeros(n, dh);
    let (pool_at, node_at) = match params.config.decoder_input {
        DecoderInput::Global => (Some(3), None),
        DecoderInput::NodeFeatures => (None, Some(3)),
        DecoderInput::GlobalAndNode => (Some(3), Some(3 + dh)),
    };
    for r in 0..n {
        let row = d_input.row(r);
        if let Some(at) = pool_at {
            for (acc, v) in d_pool.iter_mut().zip(&row[at..at + dh]) {
                *acc += v;
            }
        }
        if let Some(at) = node_at {
            d_hout.row_mut(r).copy_from_slice(&row[at..at + dh]);
        }
    }
    if pool_at.is_some() {
        pool_backward(bb, &d_pool, &mut d_hout);
    }
    backbone_backward(bb, params, d_hout, grad, false);
}

/// Backpropagates `d_logits` through the head and backbone. Returns the
/// gradient with respect to the input coordinates when `want_input` is set.
pub fn backward_classifier(
    cache: &ClassifierCache,
    params: &ModelParams,
    d_logits: &[f64],
    grad: &mut ModelParams,
    want_input: bool,
) -> Option<Mat> {
    let head = params.head.as_ref().expect("classifier");
    let dh = head.inputs();
    let g_head = grad.head.as_mut().expect("classifier");
    let pooled = &cache.backbone.pool.values;
    let mut d_pool = vec![0.0; dh];
    for (c, &dl) in d_logits.iter().enumerate() {
        g_head.bias.data[c] += dl;
        let w = &head.weight.data[c * dh..(c + 1) * dh];
        let gw = &mut g_head.weight.data[c * dh..(c + 1) * dh];
        for k in 0..dh {
            gw[k] += dl * pooled[k];
            d_pool[k] += dl * w[k];
        }
    }
    let mut d_hout = Mat::zeros(cache.backbone.coords.rows, dh);
    pool_backward(&cache.backbone, &d_pool, &mut d_hout);
    backbone_backward(&cache.backbone, params, d_hout, grad, want_input)
}

fn pool_backward(bb: &BackboneCache, d_pool: &[f64], d_hout: &mut Mat) {
    let cols = d_hout.cols;
    for (c, (&row, &g)) in bb.pool.argmax.iter().zip(d_pool).enumerate() {
        d_hout.data[row * cols + c] += g;
    }
}

fn backbone_backward(
    bb: &BackboneCache,
    params: &ModelParams,
    mut d_hout: Mat,
    grad: &mut ModelParams,
    want_input: bool,
) -> Option<Mat> {
    let cfg = &params.config;
    let (dh, dm, dk, dv, heads) = (cfg.d_h, cfg.d_m, cfg.d_k, cfg.d_v, cfg.heads);

    // Node update.
    relu_backward(&mut d_hout, &bb.upd.a2);
    let r1 = bb.upd.a1.relu();
    accumulate_weight_grad(&mut grad.upd2.weight.data, &d_hout, &r1);
    accumulate_bias_grad(&mut grad.upd2.bias.data, &d_hout);
    let mut d_ua1 = linear_backward_input(&d_hout, &params.upd2.weight.data, dh);
    relu_backward(&mut d_ua1, &bb.upd.a1);
    accumulate_weight_grad(&mut grad.upd1.weight.data, &d_ua1, &bb.upd.input);
    accumulate_bias_grad(&mut grad.upd1.bias.data, &d_ua1);
    let d_uin = linear_backward_input(&d_ua1, &params.upd1.weight.data, dh + cfg.d_z);
    let mut d_h = d_uin.col_block(0, dh);
    let d_z = d_uin.col_block(dh, cfg.d_z);

    // Attention.
    let attn = &bb.attn;
    accumulate_weight_grad(&mut grad.attn_out.data, &d_z, &attn.z_heads);
    let d_zh = linear_backward_input(&d_z, &params.attn_out.data, heads * dv);
    let edges = bb.graph.edges.len();
    let mut d_query = Mat::zeros(d_zh.rows, heads * dk);
    let mut d_key = Mat::zeros(edges, heads * dk);
    let mut d_value = Mat::zeros(edges, heads * dv);
    let scale = 1.0 / (dk as f64).sqrt();
    let mut d_alpha = Vec::new();
    for i in 0..d_zh.rows {
        let (lo, hi) = (bb.graph.dst_offsets[i], bb.graph.dst_offsets[i + 1]);
        if lo == hi {
            continue;
        }
        for b in 0..heads {
            let dz = &d_zh.row(i)[b * dv..(b + 1) * dv];
            d_alpha.clear();
            let mut weighted = 0.0;
            for e in lo..hi {
                let a = attn.alpha.data[e * heads + b];
                let v = &attn.value.row(e)[b * dv..(b + 1) * dv];
                let da: f64 = dz.iter().zip(v).map(|(x, y)| x * y).sum();
                d_alpha.push(da);
                weighted += a * da;
                let dvr = &mut d_value.row_mut(e)[b * dv..(b + 1) * dv];
                for (o, g) in dvr.iter_mut().zip(dz) {
                    *o += a * g;
                }
            }
            let q = &attn.query.row(i)[b * dk..(b + 1) * dk];
            for (idx, e) in (lo..hi).enumerate() {
                let a = attn.alpha.data[e * heads + b];
                let ds = a * (d_alpha[idx] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                let k = &attn.key.row(e)[b * dk..(b + 1) * dk];
                let dq = &mut d_query.data[i * heads * dk + b * dk..i * heads * dk + (b + 1) * dk];
                for (o, kv) in dq.iter_mut().zip(k) {
                    *o += ds * kv;
                }
                let dkr = &mut d_key.row_mut(e)[b * dk..(b + 1) * dk];
                for (o, qv) in dkr.iter_mut().zip(q) {
                    *o += ds * qv;
                }
            }
        }
    }
    accumulate_weight_grad(&mut grad.attn_query.data, &d_query, &bb.enc.h);
    let dq_h = linear_backward_input(&d_query, &params.attn_query.data, dh);
    add_into(&mut d_h, &dq_h);
    accumulate_weight_grad(&mut grad.attn_key.data, &d_key, &bb.msg.messages);
    accumulate_weight_grad(&mut grad.attn_value.data, &d_value, &bb.msg.messages);
    let mut d_msg = linear_backward_input(&d_key, &params.attn_key.data, dm);
    add_into(&mut d_msg, &linear_backward_input(&d_value, &params.attn_value.data, dm));

    // Messages.
    relu_backward(&mut d_msg, &bb.msg.pre2);
    let s1 = bb.msg.pre1.relu();
    accumulate_weight_grad(&mut grad.msg2.weight.data, &d_msg, &s1);
    accumulate_bias_grad(&mut grad.msg2.bias.data, &d_msg);
    let mut d_pre1 = linear_backward_input(&d_msg, &params.msg2.weight.data, dm);
    relu_backward(&mut d_pre1, &bb.msg.pre1);
    accumulate_bias_grad(&mut grad.msg1.bias.data, &d_pre1);
    let n = bb.coords.rows;
    let mut d_self = Mat::zeros(n, dm);
    let mut d_nbr = Mat::zeros(n, dm);
    for (e, &(src, dst)) in bb.graph.edges.iter().enumerate() {
        let g = d_pre1.row(e);
        for (o, v) in d_self.row_mut(dst).iter_mut().zip(g) {
            *o += v;
        }
        for (o, v) in d_nbr.row_mut(src).iter_mut().zip(g) {
            *o += v;
        }
    }
    // W = [W_a | W_b]; node half uses W_a - W_b, neighbor half uses W_b.
    let mut g_self = vec![0.0; dm * dh];
    let mut g_nbr = vec![0.0; dm * dh];
    accumulate_weight_grad(&mut g_self, &d_self, &bb.enc.h);
    accumulate_weight_grad(&mut g_nbr, &d_nbr, &bb.enc.h);
    let gw = &mut grad.msg1.weight.data;
    for o in 0..dm {
        for c in 0..dh {
            gw[o * 2 * dh + c] += g_self[o * dh + c];
            gw[o * 2 * dh + dh + c] += g_nbr[o * dh + c] - g_self[o * dh + c];
        }
    }
    add_into(&mut d_h, &linear_backward_input(&d_self, &bb.msg.w_self, dh));
    let w_nbr: Vec<f64> = (0..dm)
        .flat_map(|o| params.msg1.weight.data[o * 2 * dh + dh..(o + 1) * 2 * dh].iter().copied())
        .collect();
    add_into(&mut d_h, &linear_backward_input(&d_nbr, &w_nbr, dh));

    // Encoder.
    relu_backward(&mut d_h, &bb.enc.a2);
    let er1 = bb.enc.a1.relu();
    accumulate_weight_grad(&mut grad.enc2.weight.data, &d_h, &er1);
    accumulate_bias_grad(&mut grad.enc2.bias.data, &d_h);
    let mut d_ea1 = linear_backward_input(&d_h, &params.enc2.weight.data, dh);
    relu_backward(&mut d_ea1, &bb.enc.a1);
    accumulate_weight_grad(&mut grad.enc1.weight.data, &d_ea1, &bb.coords);
    accumulate_bias_grad(&mut grad.enc1.bias.data, &d_ea1);
    want_input.then(|| {
        // Back through the input standardization to raw coordinates.
        let mut d_x = linear_backward_input(&d_ea1, &params.enc1.weight.data, 3);
        for r in 0..d_x.rows {
            d_x.row_mut(r).iter_mut().zip(cfg.input_scale).for_each(|(g, s)| *g /= s);
        }
        d_x
    })
}

fn add_into(acc: &mut Mat, other: &Mat) {
    for (a, b) in acc.data.iter_mut().zip(&other.data) {
        *a += b;
    }
}
