//! Mask parameterizations: per-pixel logits, and a small encoder-decoder
//! with dual attention that maps the target to a mask.

use crate::autodiff::{logit, sigmoid, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::field::Field2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Targets are clamped to this range before the inverse-sigmoid warm start.
pub const WARM_START_CLAMP: (f64, f64) = (0.01, 0.99);
/// Half-width of the uniform weight initialization of the mini CNN.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    PixelDirect,
    MiniCnn,
}

impl GeneratorMode {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorMode::PixelDirect => "pixel_direct",
            GeneratorMode::MiniCnn => "mini_cnn",
        }
    }
}

impl fmt::Display for GeneratorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel_direct" => Ok(GeneratorMode::PixelDirect),
            "mini_cnn" => Ok(GeneratorMode::MiniCnn),
            _ => Err(Error::Config(format!("unknown generator mode '{s}'"))),
        }
    }
}

/// Unconstrained per-pixel logits; the mask is their sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMaskParams {
    pub logits: Field2D,
}

impl PixelMaskParams {
    pub fn zeros(width: usize, height: usize, pixel_size_nm: f64) -> Self {
        Self {
            logits: Field2D::zeros(width, height, pixel_size_nm),
        }
    }

    /// Warm start: `logit(clamp(T, 0.01, 0.99))`.
    pub fn from_target(target: &Field2D) -> Self {
        let (lo, hi) = WARM_START_CLAMP;
        Self {
            logits: target.map(|t| logit(t.clamp(lo, hi))),
        }
    }
}

pub fn pixel_mask(params: &PixelMaskParams) -> Field2D {
    params.logits.map(sigmoid)
}

/// One learnable convolution: `weights` is `(cout*cin) x kh x kw`, `bias`
/// is `cout x 1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn zeros(cin: usize, cout: usize, kh: usize, kw: usize) -> Self {
        Self {
            weights: Tensor::zeros(cout * cin, kh, kw),
            bias: Tensor::zeros(cout, 1, 1),
        }
    }

    fn uniform(cin: usize, cout: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(cin, cout, kh, kw);
        for w in p.weights.data_mut() {
            *w = rng.gen_range(-INIT_SCALE..=INIT_SCALE);
        }
        p
    }

    pub fn in_channels(&self) -> usize {
        self.weights.channels() / self.out_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.bias.channels()
    }

    pub fn kernel_shape(&self) -> (usize, usize) {
        (self.weights.height(), self.weights.width())
    }

    fn record(&self, tape: &mut Tape) -> Result<ConvNodes> {
        Ok(ConvNodes {
            weights: tape.leaf(self.weights.clone())?,
            bias: tape.leaf(self.bias.clone())?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvNodes {
    pub weights: NodeId,
    pub bias: NodeId,
}

impl ConvNodes {
    fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        tape.conv_layer(x, self.weights, self.bias)
    }
}

/// Channel gate (1x1, c -> c) and spatial gate (3x3, c -> 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub channel: ConvParams,
    pub spatial: ConvParams,
}

impl AttentionParams {
    pub fn zeros(channels: usize) -> Self {
        Self {
            channel: ConvParams::zeros(channels, channels, 1, 1),
            spatial: ConvParams::zeros(channels, 1, 3, 3),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub channel: ConvNodes,
    pub spatial: ConvNodes,
}

impl AttentionNodes {
    pub fn record(tape: &mut Tape, p: &AttentionParams) -> Result<Self> {
        Ok(Self {
            channel: p.channel.record(tape)?,
            spatial: p.spatial.record(tape)?,
        })
    }
}

/// `X * sigmoid(conv1x1(X)) * sigmoid(conv3x3(X))`, the spatial gate
/// broadcast over channels.
pub fn dual_attention_on_tape(tape: &mut Tape, x: NodeId, att: AttentionNodes) -> Result<NodeId> {
    let c = att.channel.apply(tape, x)?;
    let gc = tape.sigmoid(c)?;
    let s = att.spatial.apply(tape, x)?;
    let gs = tape.sigmoid(s)?;
    let xc = tape.mul(x, gc)?;
    tape.mul(xc, gs)
}

pub fn dual_attention(x: &Tensor, att: &AttentionParams) -> Result<Tensor> {
    if x.channels() != att.channel.in_channels() || x.channels() != att.spatial.in_channels() {
        return Err(Error::dim(format!(
            "attention over {} channels given {} channels",
            att.channel.in_channels(),
            x.channels()
        )));
    }
    let mut tape = Tape::new();
    let xn = tape.leaf(x.clone())?;
    let nodes = AttentionNodes::record(&mut tape, att)?;
    let out = dual_attention_on_tape(&mut tape, xn, nodes)?;
    Ok(tape.value(out).clone())
}

/// Encoder 1 -> 16 -> 32 -> 64 (9x7, 5x5, 3x3), dual attention, decoder
/// 64 -> 32 -> 16 -> 1 (3x3). ReLU between layers, sigmoid at the end; no
/// batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniGeneratorParams {
    pub encoder: [ConvParams; 3],
    pub attention: AttentionParams,
    pub decoder: [ConvParams; 3],
}

const ENCODER: [(usize, usize, usize, usize); 3] = [(1, 16, 9, 7), (16, 32, 5, 5), (32, 64, 3, 3)];
const DECODER: [(usize, usize, usize, usize); 3] = [(64, 32, 3, 3), (32, 16, 3, 3), (16, 1, 3, 3)];

impl MiniGeneratorParams {
    pub fn zeros() -> Self {
        let z = |(ci, co, kh, kw): (usize, usize, usize, usize)| ConvParams::zeros(ci, co, kh, kw);
        Self {
            encoder: ENCODER.map(z),
            attention: AttentionParams::zeros(64),
            decoder: DECODER.map(z),
        }
    }

    /// Weights uniform in `[-0.05, 0.05]` from `seed`, biases zero.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = |(ci, co, kh, kw): (usize, usize, usize, usize)| {
            ConvParams::uniform(ci, co, kh, kw, &mut rng)
        };
        let encoder = ENCODER.map(&mut u);
        let attention = AttentionParams {
            channel: u((64, 64, 1, 1)),
            spatial: u((64, 1, 3, 3)),
        };
        let decoder = DECODER.map(&mut u);
        Self {
            encoder,
            attention,
            decoder,
        }
    }

    fn layers(&self) -> [&ConvParams; 8] {
        let [e0, e1, e2] = &self.encoder;
        let [d0, d1, d2] = &self.decoder;
        [
            e0,
            e1,
            e2,
            &self.attention.channel,
            &self.attention.spatial,
            d0,
            d1,
            d2,
        ]
    }

    fn layers_mut(&mut self) -> [&mut ConvParams; 8] {
        let [e0, e1, e2] = &mut self.encoder;
        let [d0, d1, d2] = &mut self.decoder;
        [
            e0,
            e1,
            e2,
            &mut self.attention.channel,
            &mut self.attention.spatial,
            d0,
            d1,
            d2,
        ]
    }

    /// Learnable tensors in a fixed order (weights then bias, layer by layer).
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers()
            .into_iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn record(&self, tape: &mut Tape) -> Result<MiniGeneratorNodes> {
        let mut rec = |l: &ConvParams| l.record(tape);
        Ok(MiniGeneratorNodes {
            encoder: [
                rec(&self.encoder[0])?,
                rec(&self.encoder[1])?,
                rec(&self.encoder[2])?,
            ],
            attention: AttentionNodes {
                channel: rec(&self.attention.channel)?,
                spatial: rec(&self.attention.spatial)?,
            },
            decoder: [
                rec(&self.decoder[0])?,
                rec(&self.decoder[1])?,
                rec(&self.decoder[2])?,
            ],
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MiniGeneratorNodes {
    pub encoder: [ConvNodes; 3],
    pub attention: AttentionNodes,
    pub decoder: [ConvNodes; 3],
}

impl MiniGeneratorNodes {
    /// Leaf nodes in the same order as [`MiniGeneratorParams::tensors`].
    pub fn leaves(&self) -> Vec<NodeId> {
        let a = &self.attention;
        let mut out = Vec::with_capacity(16);
        for l in self
            .encoder
            .iter()
            .chain([&a.channel, &a.spatial])
            .chain(&self.decoder)
        {
            out.push(l.weights);
            out.push(l.bias);
        }
        out
    }

    /// Mask node (1 x H x W) for a single-channel target node.
    pub fn forward(&self, tape: &mut Tape, target: NodeId) -> Result<NodeId> {
        let mut x = target;
        for l in &self.encoder {
            let y = l.apply(tape, x)?;
            x = tape.relu(y)?;
        }
        x = dual_attention_on_tape(tape, x, self.attention)?;
        for (i, l) in self.decoder.iter().enumerate() {
            let y = l.apply(tape, x)?;
            x = if i + 1 < self.decoder.len() {
                tape.relu(y)?
            } else {
                tape.sigmoid(y)?
            };
        }
        Ok(x)
    }
}

/// A trainable mask source.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    PixelDirect(PixelMaskParams),
    MiniCnn(Box<MiniGeneratorParams>),
}

impl Generator {
    /// Warm-started logits for pixel mode, seeded weights for the CNN.
    pub fn init(mode: GeneratorMode, target: &Field2D, seed: u64) -> Self {
        match mode {
            GeneratorMode::PixelDirect => {
                Generator::PixelDirect(PixelMaskParams::from_target(target))
            }
            GeneratorMode::MiniCnn => Generator::MiniCnn(Box::new(MiniGeneratorParams::init(seed))),
        }
    }

    pub fn mode(&self) -> GeneratorMode {
        match self {
            Generator::PixelDirect(_) => GeneratorMode::PixelDirect,
            Generator::MiniCnn(_) => GeneratorMode::MiniCnn,
        }
    }
}

/// Mask for `target`. Pixel mode ignores the target apart from checking
/// its shape.
pub fn generate(target: &Field2D, generator: &Generator) -> Result<Field2D> {
    match generator {
        Generator::PixelDirect(p) => {
            p.logits.check_same_shape(target, "pixel mask")?;
            Ok(pixel_mask(p))
        }
        Generator::MiniCnn(p) => {
            let mut tape = Tape::new();
            let t = tape.leaf(Tensor::from_field(target))?;
            let nodes = p.record(&mut tape)?;
            let m = nodes.forward(&mut tape, t)?;
            tape.value(m).to_field(target.pixel_size_nm())
        }
    }
}
