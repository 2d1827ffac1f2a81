//! Graph autoencoder and its classifier-head variant.
//!
//! One round of message passing over the temporal KNN graph:
//! node MLP encoding, edge messages `M(h_i ⊕ (h_j - h_i))`, multi-head
//! attention aggregation, node update, global max pool, then either a
//! per-point decoder (autoencoder) or a linear softmax head (classifier).

mod backward;
mod forward;
mod io;

pub use backward::{backward_autoencoder, backward_classifier};
pub use forward::{
    aggregate_attention, autoencoder_forward, classifier_forward, classify, decode, encode_nodes,
    generate_messages, global_max_pool, update_nodes, AttentionOutput, AutoencoderCache, BackboneCache,
    ClassifierCache, MaxPool, MessageOutput,
};
pub use io::{load_params, read_checkpoint, read_params, save_params, write_checkpoint, write_params, OptimizerState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FrameGrid;
use crate::error::{Error, Result};
use crate::graph::GraphMode;
use crate::rng::rng_for;

/// What the decoder sees besides the raw input coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DecoderInput {
    /// `p_i ⊕ H_max`.
    #[default]
    Global,
    /// `p_i ⊕ h'_i` (max pool removed).
    NodeFeatures,
    /// `p_i ⊕ H_max ⊕ h'_i`.
    GlobalAndNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_h: usize,
    pub d_m: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub heads: usize,
    pub d_z: usize,
    pub k: usize,
    pub graph_mode: GraphMode,
    pub decoder_input: DecoderInput,
    pub seed: u64,
    /// Per-axis offset subtracted from coordinates before they enter the
    /// network, and added back to decoded coordinates.
    #[serde(default)]
    pub input_center: [f64; 3],
    /// Per-axis divisor applied after `input_center`.
    #[serde(default = "unit_scale")]
    pub input_scale: [f64; 3],
}

fn unit_scale() -> [f64; 3] {
    [1.0; 3]
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 64,
            d_m: 64,
            d_k: 16,
            d_v: 16,
            heads: 4,
            d_z: 64,
            k: 2,
            graph_mode: GraphMode::Temporal,
            decoder_input: DecoderInput::Global,
            seed: 0,
            input_center: [0.0; 3],
            input_scale: unit_scale(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.d_h, self.d_m, self.d_k, self.d_v, self.heads, self.d_z, self.k];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("model dimensions, head count and k must be positive".into()));
        }
        if self.input_center.iter().any(|v| !v.is_finite())
            || self.input_scale.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::Config("input standardization must be finite with positive scale".into()));
        }
        Ok(())
    }

    /// Copy whose input standardization is the per-axis mean and standard
    /// deviation of every point in `grids`. An axis without spread keeps
    /// scale 1.
    pub fn standardized_on(&self, grids: &[FrameGrid]) -> Self {
        let n = grids.iter().map(|g| g.len()).sum::<usize>();
        if n == 0 {
            return self.clone();
        }
        let mut center = [0.0; 3];
        for g in grids {
            for pt in g.coords().chunks_exact(3) {
                for d in 0..3 {
                    center[d] += pt[d];
                }
            }
        }
        center = center.map(|v| v / n as f64);
        let mut var = [0.0; 3];
        for g in grids {
            for pt in g.coords().chunks_exact(3) {
                for d in 0..3 {
                    var[d] += (pt[d] - center[d]).powi(2);
                }
            }
        }
        let scale = var.map(|v| {
            let sd = (v / n as f64).sqrt();
            if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
        });
        Self { input_center: center, input_scale: scale, ..self.clone() }
    }

    fn decoder_in(&self) -> usize {
        match self.decoder_input {
            DecoderInput::Global | DecoderInput::NodeFeatures => 3 + self.d_h,
            DecoderInput::GlobalAndNode => 3 + 2 * self.d_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Autoencoder,
    Classifier { classes: usize },
}

/// A named learnable array. `data` is row-major over `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Fully connected layer, weight stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(name: &str, inp: usize, out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&format!("{name}.weight"), &[out, inp]),
            bias: Tensor::zeros(&format!("{name}.bias"), &[out]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }
}

/// All learnable tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub kind: ModelKind,
    pub enc1: Dense,
    pub enc2: Dense,
    pub msg1: Dense,
    pub msg2: Dense,
    /// `heads * d_k x d_h`
    pub attn_query: Tensor,
    /// `heads * d_k x d_m`
    pub attn_key: Tensor,
    /// `heads * d_v x d_m`
    pub attn_value: Tensor,
    /// `d_z x heads * d_v`
    pub attn_out: Tensor,
    pub upd1: Dense,
    pub upd2: Dense,
    pub dec1: Option<Dense>,
    pub dec2: Option<Dense>,
    pub head: Option<Dense>,
}

impl ModelParams {
    /// All-zero parameters of the right shapes.
    pub fn zeros(config: &ModelConfig, kind: ModelKind) -> Self {
        let c = config;
        let (dec1, dec2, head) = match kind {
            ModelKind::Autoencoder => {
                (Some(Dense::zeros("dec1", c.decoder_in(), c.d_h)), Some(Dense::zeros("dec2", c.d_h, 3)), None)
            }
            ModelKind::Classifier { classes } => (None, None, Some(Dense::zeros("head", c.d_h, classes))),
        };
        Self {
            config: c.clone(),
            kind,
            enc1: Dense::zeros("enc1", 3, c.d_h),
            enc2: Dense::zeros("enc2", c.d_h, c.d_h),
            msg1: Dense::zeros("msg1", 2 * c.d_h, c.d_m),
            msg2: Dense::zeros("msg2", c.d_m, c.d_m),
            attn_query: Tensor::zeros("attn.query", &[c.heads * c.d_k, c.d_h]),
            attn_key: Tensor::zeros("attn.key", &[c.heads * c.d_k, c.d_m]),
            attn_value: Tensor::zeros("attn.value", &[c.heads * c.d_v, c.d_m]),
            attn_out: Tensor::zeros("attn.out", &[c.d_z, c.heads * c.d_v]),
            upd1: Dense::zeros("upd1", c.d_h + c.d_z, c.d_h),
            upd2: Dense::zeros("upd2", c.d_h, c.d_h),
            dec1,
            dec2,
            head,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization from `config.seed`.
    pub fn init(config: &ModelConfig, kind: ModelKind) -> Result<Self> {
        config.validate()?;
        if let ModelKind::Classifier { classes } = kind {
            if classes == 0 {
                return Err(Error::Config("classifier needs at least one class".into()));
            }
        }
        let mut p = Self::zeros(config, kind);
        let mut rng = rng_for(config.seed, 77);
        for t in p.tensors_mut() {
            let fan_in = if t.shape.len() == 2 { t.shape[1] } else { t.shape[0] };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = rng.random_range(-bound..bound);
            }
        }
        // Bias fans follow their weights.
        for d in p.dense_layers_mut() {
            let bound = 1.0 / (d.inputs() as f64).sqrt();
            for v in &mut d.bias.data {
                *v = rng.random_range(-bound..bound);
            }
        }
        p.round_to_f32();
        Ok(p)
    }

    /// An autoencoder whose output reproduces its input exactly: six decoder
    /// hidden units carry `±x, ±y, ±z` through the ReLU and the output layer
    /// recombines them; every other unit is cut off from the output.
    pub fn copy_through(config: &ModelConfig) -> Result<Self> {
        if config.d_h < 6 {
            return Err(Error::Config("copy-through decoder needs d_h >= 6".into()));
        }
        let mut p = Self::init(config, ModelKind::Autoencoder)?;
        let dec1 = p.dec1.as_mut().expect("autoencoder has a decoder");
        let dec2 = p.dec2.as_mut().expect("autoencoder has a decoder");
        let inp = dec1.inputs();
        dec2.weight.data.iter_mut().for_each(|v| *v = 0.0);
        dec2.bias.data.iter_mut().for_each(|v| *v = 0.0);
        for axis in 0..3 {
            for (unit, sign) in [(2 * axis, 1.0), (2 * axis + 1, -1.0)] {
                let row = &mut dec1.weight.data[unit * inp..(unit + 1) * inp];
                row.iter_mut().for_each(|v| *v = 0.0);
                row[axis] = sign;
                dec1.bias.data[unit] = 0.0;
                dec2.weight.data[axis * config.d_h + unit] = sign;
            }
        }
        Ok(p)
    }

    fn dense_layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut v = vec![&mut self.enc1, &mut self.enc2, &mut self.msg1, &mut self.msg2, &mut self.upd1, &mut self.upd2];
        if let Some(d) = self.dec1.as_mut() {
            v.push(d);
        }
        if let Some(d) = self.dec2.as_mut() {
            v.push(d);
        }
        if let Some(d) = self.head.as_mut() {
            v.push(d);
        }
        v
    }

    /// Canonical tensor order, shared by optimization, serialization and
    /// gradient checking.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.enc1.weight, &self.enc1.bias, &self.enc2.weight, &self.enc2.bias,
            &self.msg1.weight, &self.msg1.bias, &self.msg2.weight, &self.msg2.bias,
            &self.attn_query, &self.attn_key, &self.attn_value, &self.attn_out,
            &self.upd1.weight, &self.upd1.bias, &self.upd2.weight, &self.upd2.bias,
        ];
        for d in [&self.dec1, &self.dec2, &self.head].into_iter().flatten() {
            v.push(&d.weight);
            v.push(&d.bias);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.enc1.weight, &mut self.enc1.bias, &mut self.enc2.weight, &mut self.enc2.bias,
            &mut self.msg1.weight, &mut self.msg1.bias, &mut self.msg2.weight, &mut self.msg2.bias,
            &mut self.attn_query, &mut self.attn_key, &mut self.attn_value, &mut self.attn_out,
            &mut self.upd1.weight, &mut self.upd1.bias, &mut self.upd2.weight, &mut self.upd2.bias,
        ];
        for d in [&mut self.dec1, &mut self.dec2, &mut self.head].into_iter().flatten() {
            v.push(&mut d.weight);
            v.push(&mut d.bias);
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// `self += other`, tensor by tensor in canonical order.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// FNV-1a over the exact bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in &t.data {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn classes(&self) -> Option<usize> {
        match self.kind {
            ModelKind::Classifier { classes } => Some(classes),
            ModelKind::Autoencoder => None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
