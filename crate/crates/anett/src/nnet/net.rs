//! Multiscale convolutional encoder and decoder networks plus the
//! task-specific artifact-removal network.
//!
//! The encoder applies `conv -> activation` per level with 2x average
//! pooling between levels and emits the concatenation of every level output
//! as the coefficient vector, so the latent dimension exceeds the pixel
//! count (no bottleneck).  The decoder mirrors the encoder with transposed
//! convolutions and nearest-neighbor upsampling; the coefficient block of
//! each scale is added to the synthesis path at that scale.  There are no
//! skip connections between encoder and decoder activations.  The task
//! network is a small stride-1 convolution stack with a global residual
//! connection, composed after the decoder for reconstruction.

use ndarray::{Array3, Array4};
use rand::Rng;
use rand_distr::StandardNormal;

use super::layers::{
    act_forward, act_input_grad, avgpool2, avgpool2_backward, conv3x3, conv3x3_input_grad,
    conv3x3_param_grads, convt3x3, convt3x3_input_grad, convt3x3_param_grads, upsample2,
    upsample2_backward, ActKind,
};
use crate::error::{AnettError, Result};
use crate::image::Image;
use crate::regularizer::{BlockShape, Coefficients};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `[out_ch, in_ch, 3, 3]`
    pub w: Array4<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvTLayer {
    /// `[in_ch, out_ch, 3, 3]`
    pub w: Array4<f64>,
    pub b: Vec<f64>,
}

fn he_normal(rng: &mut impl Rng, fan_in: usize) -> f64 {
    let std = (2.0 / fan_in as f64).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

impl ConvLayer {
    fn init(out_ch: usize, in_ch: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * 9;
        let w = Array4::from_shape_simple_fn((out_ch, in_ch, 3, 3), || he_normal(rng, fan_in));
        ConvLayer {
            w,
            b: vec![0.0; out_ch],
        }
    }

    fn zeros_like(&self) -> Self {
        ConvLayer {
            w: Array4::zeros(self.w.dim()),
            b: vec![0.0; self.b.len()],
        }
    }
}

impl ConvTLayer {
    fn init(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * 9;
        let w = Array4::from_shape_simple_fn((in_ch, out_ch, 3, 3), || he_normal(rng, fan_in));
        ConvTLayer {
            w,
            b: vec![0.0; out_ch],
        }
    }

    fn zeros_like(&self) -> Self {
        ConvTLayer {
            w: Array4::zeros(self.w.dim()),
            b: vec![0.0; self.b.len()],
        }
    }
}

/// One `conv -> activation` block.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub conv: ConvLayer,
    pub act: Option<ActKind>,
}

/// One `transposed conv -> activation` block.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTBlock {
    pub convt: ConvTLayer,
    pub act: Option<ActKind>,
}

fn image_to_feature(img: &[f64], n: usize) -> Array3<f64> {
    Array3::from_shape_vec((1, n, n), img.to_vec()).expect("length checked by caller")
}

// ---------------------------------------------------------------------------
// encoder

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderNet {
    input_n: usize,
    levels: Vec<ConvBlock>,
}

pub(crate) struct EncoderTrace {
    conv_inputs: Vec<Array3<f64>>,
    pre_acts: Vec<Array3<f64>>,
}

impl EncoderNet {
    pub fn new(input_n: usize, channels: &[usize], act: Option<ActKind>, rng: &mut impl Rng) -> Result<Self> {
        if channels.is_empty() {
            return Err(AnettError::domain("encoder needs at least one level"));
        }
        if input_n % (1 << (channels.len() - 1)) != 0 {
            return Err(AnettError::domain(format!(
                "input size {input_n} is not divisible by 2^{}",
                channels.len() - 1
            )));
        }
        let mut levels = Vec::with_capacity(channels.len());
        let mut in_ch = 1;
        for &out_ch in channels {
            levels.push(ConvBlock {
                conv: ConvLayer::init(out_ch, in_ch, rng),
                act,
            });
            in_ch = out_ch;
        }
        Ok(EncoderNet { input_n, levels })
    }

    pub(crate) fn from_levels(input_n: usize, levels: Vec<ConvBlock>) -> Result<Self> {
        let net = EncoderNet { input_n, levels };
        net.validate()?;
        Ok(net)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(AnettError::domain("encoder needs at least one level"));
        }
        if self.input_n % (1 << (self.levels.len() - 1)) != 0 {
            return Err(AnettError::domain("input size does not support the level count"));
        }
        let mut in_ch = 1;
        for (i, lvl) in self.levels.iter().enumerate() {
            let (oc, ic, kh, kw) = lvl.conv.w.dim();
            if ic != in_ch || (kh, kw) != (3, 3) || lvl.conv.b.len() != oc {
                return Err(AnettError::dim(format!("encoder level {i} has inconsistent shapes")));
            }
            in_ch = oc;
        }
        Ok(())
    }

    pub fn input_n(&self) -> usize {
        self.input_n
    }

    pub fn levels(&self) -> &[ConvBlock] {
        &self.levels
    }

    pub fn channels(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.conv.w.dim().0).collect()
    }

    /// Shapes of the per-level coefficient blocks.
    pub fn block_shapes(&self) -> Vec<BlockShape> {
        let mut n = self.input_n;
        let mut out = Vec::with_capacity(self.levels.len());
        for lvl in &self.levels {
            out.push(BlockShape {
                channels: lvl.conv.w.dim().0,
                height: n,
                width: n,
            });
            n /= 2;
        }
        out
    }

    pub fn latent_len(&self) -> usize {
        self.block_shapes().iter().map(BlockShape::len).sum()
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> (Vec<f64>, EncoderTrace) {
        assert_eq!(x.len(), self.input_n * self.input_n);
        let mut feat = image_to_feature(x, self.input_n);
        let mut coeffs = Vec::with_capacity(self.latent_len());
        let mut conv_inputs = Vec::with_capacity(self.levels.len());
        let mut pre_acts = Vec::with_capacity(self.levels.len());
        for (i, lvl) in self.levels.iter().enumerate() {
            if i > 0 {
                feat = avgpool2(&feat);
            }
            let pre = conv3x3(&lvl.conv.w, &lvl.conv.b, &feat);
            conv_inputs.push(feat);
            let a = match lvl.act {
                Some(kind) => act_forward(kind, &pre),
                None => pre.clone(),
            };
            pre_acts.push(pre);
            coeffs.extend_from_slice(a.as_slice().unwrap());
            feat = a;
        }
        (
            coeffs,
            EncoderTrace {
                conv_inputs,
                pre_acts,
            },
        )
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_traced(x).0
    }

    /// Deterministic forward pass producing the typed coefficient vector.
    pub fn apply(&self, img: &Image) -> Result<Coefficients> {
        if img.n() != self.input_n {
            return Err(AnettError::dim(format!(
                "image size {} does not match encoder input size {}",
                img.n(),
                self.input_n
            )));
        }
        Coefficients::new(self.forward(img.as_slice()), self.block_shapes())
    }

    /// Splits a flat cotangent into per-level feature maps.
    fn split_cotangent(&self, cot: &[f64]) -> Vec<Array3<f64>> {
        let mut out = Vec::with_capacity(self.levels.len());
        let mut offset = 0;
        for shape in self.block_shapes() {
            let len = shape.len();
            let arr = Array3::from_shape_vec(
                (shape.channels, shape.height, shape.width),
                cot[offset..offset + len].to_vec(),
            )
            .expect("shape product equals len");
            out.push(arr);
            offset += len;
        }
        assert_eq!(offset, cot.len(), "cotangent length mismatch");
        out
    }

    /// Reverse pass; returns parameter gradients (as a same-shaped network)
    /// and the gradient with respect to the input when requested.
    pub(crate) fn backward(
        &self,
        trace: &EncoderTrace,
        cot: &[f64],
        want_params: bool,
    ) -> (Option<EncoderNet>, Vec<f64>) {
        let blocks = self.split_cotangent(cot);
        let mut grads = want_params.then(|| EncoderNet {
            input_n: self.input_n,
            levels: self
                .levels
                .iter()
                .map(|l| ConvBlock {
                    conv: l.conv.zeros_like(),
                    act: l.act,
                })
                .collect(),
        });
        let mut flow: Option<Array3<f64>> = None;
        let mut input_grad = Vec::new();
        for i in (0..self.levels.len()).rev() {
            let mut g_act = blocks[i].clone();
            if let Some(f) = flow.take() {
                g_act += &f;
            }
            let g_pre = match self.levels[i].act {
                Some(kind) => act_input_grad(kind, &trace.pre_acts[i], &g_act),
                None => g_act,
            };
            if let Some(g) = grads.as_mut() {
                let (gw, gb) = conv3x3_param_grads(&trace.conv_inputs[i], &g_pre);
                g.levels[i].conv.w = gw;
                g.levels[i].conv.b = gb;
            }
            let g_in = conv3x3_input_grad(&self.levels[i].conv.w, &g_pre, trace.conv_inputs[i].dim());
            if i > 0 {
                flow = Some(avgpool2_backward(&g_in));
            } else {
                input_grad = g_in.into_raw_vec_and_offset().0;
            }
        }
        (grads, input_grad)
    }

    /// `E'(x)^T cot` recomputing the forward trace.
    pub(crate) fn pullback(&self, x: &[f64], cot: &[f64]) -> Vec<f64> {
        let (_, trace) = self.forward_traced(x);
        self.backward(&trace, cot, false).1
    }

    pub(crate) fn for_each_param(&mut self, f: &mut impl FnMut(&mut f64)) {
        for lvl in &mut self.levels {
            for v in lvl.conv.w.iter_mut() {
                f(v);
            }
            for v in lvl.conv.b.iter_mut() {
                f(v);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.levels
            .iter()
            .map(|l| l.conv.w.len() + l.conv.b.len())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// decoder

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderNet {
    output_n: usize,
    /// Coarsest scale first.
    levels: Vec<ConvTBlock>,
}

pub(crate) struct DecoderTrace {
    convt_inputs: Vec<Array3<f64>>,
    pre_acts: Vec<Array3<f64>>,
}

impl DecoderNet {
    /// Mirror of an encoder with the given channel progression: level `j`
    /// maps `channels[L-1-j]` to `channels[L-2-j]` (or to one output channel
    /// at the finest scale); all levels but the last are activated.
    pub fn mirror_of(
        output_n: usize,
        channels: &[usize],
        act: Option<ActKind>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(AnettError::domain("decoder needs at least one level"));
        }
        let l = channels.len();
        let mut levels = Vec::with_capacity(l);
        for j in 0..l {
            let in_ch = channels[l - 1 - j];
            let out_ch = if j + 1 == l { 1 } else { channels[l - 2 - j] };
            levels.push(ConvTBlock {
                convt: ConvTLayer::init(in_ch, out_ch, rng),
                act: if j + 1 == l { None } else { act },
            });
        }
        Ok(DecoderNet { output_n, levels })
    }

    pub(crate) fn from_levels(output_n: usize, levels: Vec<ConvTBlock>) -> Result<Self> {
        let net = DecoderNet { output_n, levels };
        net.validate()?;
        Ok(net)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(AnettError::domain("decoder needs at least one level"));
        }
        // channels must chain: out of level j feeds (upsampled) level j+1
        for (j, lvl) in self.levels.iter().enumerate() {
            let (_, oc, kh, kw) = lvl.convt.w.dim();
            if (kh, kw) != (3, 3) || lvl.convt.b.len() != oc {
                return Err(AnettError::dim(format!("decoder level {j} has inconsistent shapes")));
            }
            if j + 1 < self.levels.len() && self.levels[j + 1].convt.w.dim().0 != oc {
                return Err(AnettError::dim(format!(
                    "decoder levels {j} and {} do not compose",
                    j + 1
                )));
            }
        }
        if self.levels.last().unwrap().convt.w.dim().1 != 1 {
            return Err(AnettError::dim("decoder must end in one channel"));
        }
        Ok(())
    }

    pub fn output_n(&self) -> usize {
        self.output_n
    }

    pub fn levels(&self) -> &[ConvTBlock] {
        &self.levels
    }

    /// Coefficient block shapes this decoder consumes (finest first), the
    /// mirror image of [`EncoderNet::block_shapes`].
    pub fn block_shapes(&self) -> Vec<BlockShape> {
        let l = self.levels.len();
        let mut out = Vec::with_capacity(l);
        for j in 0..l {
            let channels = self.levels[l - 1 - j].convt.w.dim().0;
            let n = self.output_n >> j;
            out.push(BlockShape {
                channels,
                height: n,
                width: n,
            });
        }
        out
    }

    pub fn latent_len(&self) -> usize {
        self.block_shapes().iter().map(BlockShape::len).sum()
    }

    fn split_blocks(&self, xi: &[f64]) -> Vec<Array3<f64>> {
        let mut out = Vec::with_capacity(self.levels.len());
        let mut offset = 0;
        for shape in self.block_shapes() {
            let len = shape.len();
            out.push(
                Array3::from_shape_vec(
                    (shape.channels, shape.height, shape.width),
                    xi[offset..offset + len].to_vec(),
                )
                .expect("shape product equals len"),
            );
            offset += len;
        }
        assert_eq!(offset, xi.len(), "coefficient length mismatch");
        out
    }

    pub(crate) fn forward_traced(&self, xi: &[f64]) -> (Vec<f64>, DecoderTrace) {
        let blocks = self.split_blocks(xi);
        let l = self.levels.len();
        let mut feat = blocks[l - 1].clone();
        let mut convt_inputs = Vec::with_capacity(l);
        let mut pre_acts = Vec::with_capacity(l);
        for (j, lvl) in self.levels.iter().enumerate() {
            if j > 0 {
                feat = upsample2(&feat);
                feat += &blocks[l - 1 - j];
            }
            let pre = convt3x3(&lvl.convt.w, &lvl.convt.b, &feat);
            convt_inputs.push(feat);
            feat = match lvl.act {
                Some(kind) => act_forward(kind, &pre),
                None => pre.clone(),
            };
            pre_acts.push(pre);
        }
        (
            feat.into_raw_vec_and_offset().0,
            DecoderTrace {
                convt_inputs,
                pre_acts,
            },
        )
    }

    pub(crate) fn forward(&self, xi: &[f64]) -> Vec<f64> {
        self.forward_traced(xi).0
    }

    /// Deterministic forward pass producing an image.
    pub fn apply(&self, xi: &Coefficients) -> Result<Image> {
        if xi.len() != self.latent_len() {
            return Err(AnettError::dim(format!(
                "coefficient vector has {} entries, decoder expects {}",
                xi.len(),
                self.latent_len()
            )));
        }
        Image::new(self.output_n, self.forward(xi.as_slice()))
    }

    pub(crate) fn backward(
        &self,
        trace: &DecoderTrace,
        cot_out: &[f64],
        want_params: bool,
    ) -> (Option<DecoderNet>, Vec<f64>) {
        let l = self.levels.len();
        let mut grads = want_params.then(|| DecoderNet {
            output_n: self.output_n,
            levels: self
                .levels
                .iter()
                .map(|lvl| ConvTBlock {
                    convt: lvl.convt.zeros_like(),
                    act: lvl.act,
                })
                .collect(),
        });
        let shapes = self.block_shapes();
        let mut block_cots: Vec<Array3<f64>> = shapes
            .iter()
            .map(|s| Array3::zeros((s.channels, s.height, s.width)))
            .collect();
        let mut g = Array3::from_shape_vec((1, self.output_n, self.output_n), cot_out.to_vec())
            .expect("output cotangent has image shape");
        for j in (0..l).rev() {
            let g_pre = match self.levels[j].act {
                Some(kind) => act_input_grad(kind, &trace.pre_acts[j], &g),
                None => g,
            };
            if let Some(gs) = grads.as_mut() {
                let (gw, gb) = convt3x3_param_grads(&trace.convt_inputs[j], &g_pre);
                gs.levels[j].convt.w = gw;
                gs.levels[j].convt.b = gb;
            }
            let g_feat =
                convt3x3_input_grad(&self.levels[j].convt.w, &g_pre, trace.convt_inputs[j].dim());
            if j > 0 {
                block_cots[l - 1 - j] = g_feat.clone();
                g = upsample2_backward(&g_feat);
            } else {
                block_cots[l - 1] = g_feat;
                g = Array3::zeros((0, 0, 0));
            }
        }
        let mut flat_cot = Vec::with_capacity(self.latent_len());
        for b in &block_cots {
            flat_cot.extend_from_slice(b.as_slice().unwrap());
        }
        (grads, flat_cot)
    }

    /// `D'(xi)^T cot` recomputing the forward trace.
    pub(crate) fn pullback(&self, xi: &[f64], cot: &[f64]) -> Vec<f64> {
        let (_, trace) = self.forward_traced(xi);
        self.backward(&trace, cot, false).1
    }

    pub(crate) fn for_each_param(&mut self, f: &mut impl FnMut(&mut f64)) {
        for lvl in &mut self.levels {
            for v in lvl.convt.w.iter_mut() {
                f(v);
            }
            for v in lvl.convt.b.iter_mut() {
                f(v);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.levels
            .iter()
            .map(|l| l.convt.w.len() + l.convt.b.len())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// task network

/// Stride-1 convolution stack with a global residual connection, applied to
/// decoder outputs to remove operator-specific artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskNet {
    n: usize,
    layers: Vec<ConvBlock>,
    residual: bool,
}

pub(crate) struct TaskTrace {
    conv_inputs: Vec<Array3<f64>>,
    pre_acts: Vec<Array3<f64>>,
}

impl TaskNet {
    pub fn new(n: usize, channels: &[usize], act: ActKind, residual: bool, rng: &mut impl Rng) -> Result<Self> {
        if channels.is_empty() {
            return Err(AnettError::domain("task network needs at least one hidden layer"));
        }
        let mut layers = Vec::with_capacity(channels.len() + 1);
        let mut in_ch = 1;
        for &out_ch in channels {
            layers.push(ConvBlock {
                conv: ConvLayer::init(out_ch, in_ch, rng),
                act: Some(act),
            });
            in_ch = out_ch;
        }
        layers.push(ConvBlock {
            conv: ConvLayer::init(1, in_ch, rng),
            act: None,
        });
        Ok(TaskNet { n, layers, residual })
    }

    pub(crate) fn from_layers(n: usize, layers: Vec<ConvBlock>, residual: bool) -> Result<Self> {
        let net = TaskNet { n, layers, residual };
        net.validate()?;
        Ok(net)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(AnettError::domain("task network needs at least one layer"));
        }
        let mut in_ch = 1;
        for (i, l) in self.layers.iter().enumerate() {
            let (oc, ic, kh, kw) = l.conv.w.dim();
            if ic != in_ch || (kh, kw) != (3, 3) || l.conv.b.len() != oc {
                return Err(AnettError::dim(format!("task layer {i} has inconsistent shapes")));
            }
            in_ch = oc;
        }
        if in_ch != 1 {
            return Err(AnettError::dim("task network must end in one channel"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn layers(&self) -> &[ConvBlock] {
        &self.layers
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> (Vec<f64>, TaskTrace) {
        let mut feat = image_to_feature(x, self.n);
        let mut conv_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let pre = conv3x3(&l.conv.w, &l.conv.b, &feat);
            conv_inputs.push(feat);
            feat = match l.act {
                Some(kind) => act_forward(kind, &pre),
                None => pre.clone(),
            };
            pre_acts.push(pre);
        }
        let mut out = feat.into_raw_vec_and_offset().0;
        if self.residual {
            for (o, xi) in out.iter_mut().zip(x) {
                *o += xi;
            }
        }
        (
            out,
            TaskTrace {
                conv_inputs,
                pre_acts,
            },
        )
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_traced(x).0
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        if img.n() != self.n {
            return Err(AnettError::dim("image size does not match task network"));
        }
        Image::new(self.n, self.forward(img.as_slice()))
    }

    pub(crate) fn backward(
        &self,
        trace: &TaskTrace,
        cot: &[f64],
        want_params: bool,
    ) -> (Option<TaskNet>, Vec<f64>) {
        let mut grads = want_params.then(|| TaskNet {
            n: self.n,
            layers: self
                .layers
                .iter()
                .map(|l| ConvBlock {
                    conv: l.conv.zeros_like(),
                    act: l.act,
                })
                .collect(),
            residual: self.residual,
        });
        let mut g = Array3::from_shape_vec((1, self.n, self.n), cot.to_vec())
            .expect("cotangent has image shape");
        for i in (0..self.layers.len()).rev() {
            let g_pre = match self.layers[i].act {
                Some(kind) => act_input_grad(kind, &trace.pre_acts[i], &g),
                None => g,
            };
            if let Some(gs) = grads.as_mut() {
                let (gw, gb) = conv3x3_param_grads(&trace.conv_inputs[i], &g_pre);
                gs.layers[i].conv.w = gw;
                gs.layers[i].conv.b = gb;
            }
            g = conv3x3_input_grad(&self.layers[i].conv.w, &g_pre, trace.conv_inputs[i].dim());
        }
        let mut input_grad = g.into_raw_vec_and_offset().0;
        if self.residual {
            for (gi, c) in input_grad.iter_mut().zip(cot) {
                *gi += c;
            }
        }
        (grads, input_grad)
    }

    pub(crate) fn pullback(&self, x: &[f64], cot: &[f64]) -> Vec<f64> {
        let (_, trace) = self.forward_traced(x);
        self.backward(&trace, cot, false).1
    }

    pub(crate) fn for_each_param(&mut self, f: &mut impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            for v in l.conv.w.iter_mut() {
                f(v);
            }
            for v in l.conv.b.iter_mut() {
                f(v);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.conv.w.len() + l.conv.b.len())
            .sum()
    }
}

/// Flattens network parameters into a vector (shared layout with gradients
/// represented as same-shaped networks).
pub(crate) fn collect_params(visit: impl FnOnce(&mut dyn FnMut(&mut f64))) -> Vec<f64> {
    let mut out = Vec::new();
    let mut push = |v: &mut f64| out.push(*v);
    visit(&mut push);
    out
}

pub(crate) fn assign_params(src: &[f64], visit: impl FnOnce(&mut dyn FnMut(&mut f64))) {
    let mut it = src.iter();
    let mut pull = |v: &mut f64| *v = *it.next().expect("parameter count mismatch");
    visit(&mut pull);
}
