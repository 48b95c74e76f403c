//! Forward-only convolutional network interpreter.
//!
//! Parameters are stored as `f32`; all arithmetic runs in `f64`. Tensors are
//! channel-major (C, H, W).

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{Prediction, TileClassifier};
use crate::error::{Error, Result};
use crate::raster::Raster;

const WEIGHTS_MAGIC: &[u8; 4] = b"CSW1";
const TOPOLOGY_FORMAT: &str = "crackscope-cnn";
const TOPOLOGY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} values for shape {shape}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape.h + y) * self.shape.w + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.shape.h * self.shape.w;
        &self.data[c * n..(c + 1) * n]
    }

    /// Pixels divided by `scale`, channel-major. A gray raster is replicated
    /// when `channels` is 3.
    pub fn from_raster(raster: &Raster, channels: usize, scale: f64) -> Result<Self> {
        let src = match (raster.channels(), channels) {
            (a, b) if a == b => raster.clone(),
            (1, 3) => raster.replicate3(),
            (a, b) => {
                return Err(Error::Shape(format!(
                    "raster has {a} channels, network expects {b}"
                )))
            }
        };
        let (w, h) = (src.width(), src.height());
        let mut data = vec![0.0; channels * w * h];
        for (i, px) in src.samples().chunks_exact(channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * w * h + i] = v as f64 / scale;
            }
        }
        Tensor::new(Shape::new(channels, h, w), data)
    }
}

/// One layer record. Parameter vectors are not part of the topology JSON;
/// they travel in the weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    Conv2D {
        #[serde(rename = "outCh")]
        out_ch: usize,
        #[serde(rename = "kH")]
        k_h: usize,
        #[serde(rename = "kW")]
        k_w: usize,
        #[serde(rename = "strideH")]
        stride_h: usize,
        #[serde(rename = "strideW")]
        stride_w: usize,
        #[serde(rename = "padH")]
        pad_h: usize,
        #[serde(rename = "padW")]
        pad_w: usize,
        /// Row-major (outCh, inCh, kH, kW).
        #[serde(skip)]
        weights: Vec<f32>,
        #[serde(skip)]
        bias: Vec<f32>,
    },
    BatchNorm {
        eps: f32,
        #[serde(skip)]
        gamma: Vec<f32>,
        #[serde(skip)]
        beta: Vec<f32>,
        #[serde(skip)]
        mean: Vec<f32>,
        #[serde(skip)]
        var: Vec<f32>,
    },
    ReLU,
    MaxPool {
        k: usize,
        stride: usize,
    },
    GlobalAvgPool,
    ResidualAdd {
        #[serde(rename = "fromLayerIndex")]
        from_layer_index: usize,
    },
    Dense {
        out: usize,
        /// Row-major (out, in) over the flattened input.
        #[serde(skip)]
        weights: Vec<f32>,
        #[serde(skip)]
        bias: Vec<f32>,
    },
    Softmax,
}

impl LayerSpec {
    pub fn conv(out_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv2D {
            out_ch,
            k_h: k,
            k_w: k,
            stride_h: stride,
            stride_w: stride,
            pad_h: pad,
            pad_w: pad,
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }

    pub fn batch_norm(eps: f32) -> Self {
        LayerSpec::BatchNorm {
            eps,
            gamma: Vec::new(),
            beta: Vec::new(),
            mean: Vec::new(),
            var: Vec::new(),
        }
    }

    pub fn dense(out: usize) -> Self {
        LayerSpec::Dense {
            out,
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::BatchNorm { .. } => "BatchNorm",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::MaxPool { .. } => "MaxPool",
            LayerSpec::GlobalAvgPool => "GlobalAvgPool",
            LayerSpec::ResidualAdd { .. } => "ResidualAdd",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Softmax => "Softmax",
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2D { .. } | LayerSpec::BatchNorm { .. } | LayerSpec::Dense { .. }
        )
    }

    /// Parameters in weights-file order.
    pub fn params(&self) -> Vec<f32> {
        match self {
            LayerSpec::Conv2D { weights, bias, .. } | LayerSpec::Dense { weights, bias, .. } => {
                weights.iter().chain(bias).copied().collect()
            }
            LayerSpec::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                ..
            } => gamma
                .iter()
                .chain(beta)
                .chain(mean)
                .chain(var)
                .copied()
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Inverse of [`LayerSpec::params`]; `values` must have the expected length.
    pub(crate) fn set_params(&mut self, values: &[f32]) {
        match self {
            LayerSpec::Conv2D { weights, bias, out_ch, .. } => {
                let nw = values.len() - *out_ch;
                *weights = values[..nw].to_vec();
                *bias = values[nw..].to_vec();
            }
            LayerSpec::Dense { weights, bias, out } => {
                let nw = values.len() - *out;
                *weights = values[..nw].to_vec();
                *bias = values[nw..].to_vec();
            }
            LayerSpec::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                ..
            } => {
                let c = values.len() / 4;
                *gamma = values[..c].to_vec();
                *beta = values[c..2 * c].to_vec();
                *mean = values[2 * c..3 * c].to_vec();
                *var = values[3 * c..].to_vec();
            }
            _ => {}
        }
    }
}

fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if k == 0 || stride == 0 || padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

/// Output shape and parameter count of layer `i` given its input shape.
fn propagate(i: usize, layer: &LayerSpec, input: Shape, history: &[Shape]) -> Result<(Shape, usize)> {
    let bad = |expected: String| Error::LayerShape {
        layer: i,
        expected,
        actual: input.to_string(),
    };
    match layer {
        LayerSpec::Conv2D {
            out_ch,
            k_h,
            k_w,
            stride_h,
            stride_w,
            pad_h,
            pad_w,
            ..
        } => {
            let h = conv_out(input.h, *k_h, *stride_h, *pad_h);
            let w = conv_out(input.w, *k_w, *stride_w, *pad_w);
            match (h, w) {
                (Some(h), Some(w)) if *out_ch > 0 => Ok((
                    Shape::new(*out_ch, h, w),
                    out_ch * input.c * k_h * k_w + out_ch,
                )),
                _ => Err(bad(format!(
                    "input at least {k_h}x{k_w} after padding, positive strides and channels"
                ))),
            }
        }
        LayerSpec::BatchNorm { eps, .. } => {
            if !(*eps >= 0.0) {
                return Err(bad("non-negative eps".into()));
            }
            Ok((input, 4 * input.c))
        }
        LayerSpec::ReLU | LayerSpec::Softmax => Ok((input, 0)),
        LayerSpec::MaxPool { k, stride } => {
            match (conv_out(input.h, *k, *stride, 0), conv_out(input.w, *k, *stride, 0)) {
                (Some(h), Some(w)) => Ok((Shape::new(input.c, h, w), 0)),
                _ => Err(bad(format!("spatial size at least {k}, positive stride"))),
            }
        }
        LayerSpec::GlobalAvgPool => Ok((Shape::new(input.c, 1, 1), 0)),
        LayerSpec::ResidualAdd { from_layer_index } => {
            if *from_layer_index >= i {
                return Err(Error::ModelFormat(format!(
                    "layer {i}: ResidualAdd refers to layer {from_layer_index}, which does not precede it"
                )));
            }
            let src = history[*from_layer_index];
            if src != input {
                return Err(bad(format!("{src} (output of layer {from_layer_index})")));
            }
            Ok((input, 0))
        }
        LayerSpec::Dense { out, .. } => {
            if *out == 0 {
                return Err(bad("positive output width".into()));
            }
            Ok((Shape::new(*out, 1, 1), out * input.len() + out))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnGraph {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    param_counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Topology {
    format: String,
    version: u32,
    input: [usize; 3],
    layers: Vec<LayerSpec>,
}

impl CnnGraph {
    /// Build and shape-check a graph. Parametric layers must carry parameters
    /// of the propagated size.
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let g = Self::unweighted(input, layers)?;
        for (i, layer) in g.layers.iter().enumerate() {
            let n = layer.params().len();
            if n != g.param_counts[i] {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: format!("{} parameters", g.param_counts[i]),
                    actual: format!("{n} parameters"),
                });
            }
        }
        g.check_split()?;
        Ok(g)
    }

    /// Shape-check topology only.
    fn unweighted(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::Shape(format!("empty input shape {input}")));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut counts = Vec::with_capacity(layers.len());
        let mut cur = input;
        for (i, layer) in layers.iter().enumerate() {
            let (next, n) = propagate(i, layer, cur, &shapes)?;
            shapes.push(next);
            counts.push(n);
            cur = next;
        }
        Ok(Self {
            input,
            layers,
            shapes,
            param_counts: counts,
        })
    }

    fn check_split(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            let ok = match l {
                LayerSpec::Conv2D { weights, bias, out_ch, .. } => bias.len() == *out_ch && !weights.is_empty(),
                LayerSpec::Dense { bias, out, .. } => bias.len() == *out,
                LayerSpec::BatchNorm { gamma, beta, mean, var, .. } => {
                    let c = gamma.len();
                    beta.len() == c && mean.len() == c && var.len() == c
                }
                _ => true,
            };
            if !ok {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: "weight/bias split matching the layer width".into(),
                    actual: "inconsistent parameter vectors".into(),
                });
            }
        }
        Ok(())
    }

    /// Output shape of each layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn output_shape(&self) -> Shape {
        self.shapes.last().copied().unwrap_or(self.input)
    }

    pub fn param_count(&self, layer: usize) -> usize {
        self.param_counts[layer]
    }

    /// Replace the parameters of one layer; the length must match.
    pub fn set_layer_params(&mut self, layer: usize, values: &[f32]) -> Result<()> {
        let expected = *self
            .param_counts
            .get(layer)
            .ok_or_else(|| Error::invalid(format!("no layer {layer}")))?;
        if values.len() != expected {
            return Err(Error::LayerShape {
                layer,
                expected: format!("{expected} parameters"),
                actual: format!("{} parameters", values.len()),
            });
        }
        self.layers[layer].set_params(values);
        Ok(())
    }

    pub fn last_conv_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Conv2D { .. }))
    }

    /// Run the graph on a tensor. With `stop_at = Some(i)` the output of layer
    /// `i` is returned; otherwise the final output.
    pub fn forward_tensor(&self, x: Tensor, stop_at: Option<usize>) -> Result<Tensor> {
        if x.shape != self.input {
            return Err(Error::LayerShape {
                layer: 0,
                expected: self.input.to_string(),
                actual: x.shape.to_string(),
            });
        }
        if self.layers.is_empty() {
            return Ok(x);
        }
        let last = match stop_at {
            Some(i) if i >= self.layers.len() => {
                return Err(Error::invalid(format!(
                    "stop layer {i} beyond {} layers",
                    self.layers.len()
                )))
            }
            Some(i) => i,
            None => self.layers.len() - 1,
        };
        let keep: HashSet<usize> = self
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::ResidualAdd { from_layer_index } => Some(*from_layer_index),
                _ => None,
            })
            .collect();
        let mut saved: Vec<Option<Tensor>> = vec![None; self.layers.len()];
        let mut cur = x;
        for (i, layer) in self.layers.iter().enumerate().take(last + 1) {
            cur = apply(layer, cur, self.shapes[i], &saved)?;
            if keep.contains(&i) {
                saved[i] = Some(cur.clone());
            }
        }
        Ok(cur)
    }

    /// Run on a raster scaled by 1/255.
    pub fn forward(&self, tile: &Raster, stop_at: Option<usize>) -> Result<Tensor> {
        if tile.width() != self.input.w || tile.height() != self.input.h {
            return Err(Error::LayerShape {
                layer: 0,
                expected: self.input.to_string(),
                actual: format!("{}x{}x{}", tile.channels(), tile.height(), tile.width()),
            });
        }
        self.forward_tensor(Tensor::from_raster(tile, self.input.c, 255.0)?, stop_at)
    }

    // -- persistence ------------------------------------------------------

    pub fn topology_json(&self) -> Result<String> {
        let t = Topology {
            format: TOPOLOGY_FORMAT.into(),
            version: TOPOLOGY_VERSION,
            input: [self.input.c, self.input.h, self.input.w],
            layers: self
                .layers
                .iter()
                .map(|l| strip_params(l.clone()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&t)?)
    }

    pub fn weights_bytes(&self) -> Vec<u8> {
        let mut out = WEIGHTS_MAGIC.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            if !l.is_parametric() {
                continue;
            }
            let p = l.params();
            out.extend_from_slice(&(i as u32).to_le_bytes());
            out.extend_from_slice(&(p.len() as u64).to_le_bytes());
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_parts(topology_json: &str, weights: &[u8]) -> Result<Self> {
        let t: Topology = serde_json::from_str(topology_json)?;
        if t.format != TOPOLOGY_FORMAT || t.version != TOPOLOGY_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported topology {} v{}",
                t.format, t.version
            )));
        }
        let layers: Vec<LayerSpec> = t.layers.into_iter().map(strip_params).collect();
        let mut g = Self::unweighted(Shape::new(t.input[0], t.input[1], t.input[2]), layers)?;
        let parametric: Vec<usize> = (0..g.layers.len())
            .filter(|&i| g.layers[i].is_parametric())
            .collect();
        let expected = 4 + parametric
            .iter()
            .map(|&i| 12 + 4 * g.param_counts[i])
            .sum::<usize>();
        if weights.len() < 4 || &weights[..4] != WEIGHTS_MAGIC {
            return Err(Error::ModelFormat("bad magic, expected CSW1".into()));
        }
        if weights.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: weights.len(),
            });
        }
        if weights.len() > expected {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes after the last layer",
                weights.len() - expected
            )));
        }
        let mut pos = 4;
        for &i in &parametric {
            let idx = u32::from_le_bytes(weights[pos..pos + 4].try_into().unwrap()) as usize;
            let count = u64::from_le_bytes(weights[pos + 4..pos + 12].try_into().unwrap()) as usize;
            pos += 12;
            if idx != i || count != g.param_counts[i] {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: format!("record for layer {i} with {} parameters", g.param_counts[i]),
                    actual: format!("record for layer {idx} with {count} parameters"),
                });
            }
            let vals: Vec<f32> = weights[pos..pos + 4 * count]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            pos += 4 * count;
            g.layers[i].set_params(&vals);
        }
        g.check_split()?;
        Ok(g)
    }
}

fn strip_params(l: LayerSpec) -> LayerSpec {
    match l {
        LayerSpec::Conv2D {
            out_ch,
            k_h,
            k_w,
            stride_h,
            stride_w,
            pad_h,
            pad_w,
            ..
        } => LayerSpec::Conv2D {
            out_ch,
            k_h,
            k_w,
            stride_h,
            stride_w,
            pad_h,
            pad_w,
            weights: Vec::new(),
            bias: Vec::new(),
        },
        LayerSpec::Dense { out, .. } => LayerSpec::dense(out),
        LayerSpec::BatchNorm { eps, .. } => LayerSpec::batch_norm(eps),
        other => other,
    }
}

pub fn load_cnn(weights_path: impl AsRef<Path>, topology_path: impl AsRef<Path>) -> Result<CnnGraph> {
    let (wp, tp) = (weights_path.as_ref(), topology_path.as_ref());
    let topo = std::fs::read_to_string(tp).map_err(|e| Error::io(tp, e))?;
    let weights = std::fs::read(wp).map_err(|e| Error::io(wp, e))?;
    CnnGraph::from_parts(&topo, &weights)
}

pub fn write_cnn(
    graph: &CnnGraph,
    weights_path: impl AsRef<Path>,
    topology_path: impl AsRef<Path>,
) -> Result<()> {
    let (wp, tp) = (weights_path.as_ref(), topology_path.as_ref());
    std::fs::write(tp, graph.topology_json()?).map_err(|e| Error::io(tp, e))?;
    std::fs::write(wp, graph.weights_bytes()).map_err(|e| Error::io(wp, e))
}

// ---------------------------------------------------------------------------
// Layer kernels

fn apply(layer: &LayerSpec, x: Tensor, out_shape: Shape, saved: &[Option<Tensor>]) -> Result<Tensor> {
    Ok(match layer {
        LayerSpec::Conv2D {
            k_h,
            k_w,
            stride_h,
            stride_w,
            pad_h,
            pad_w,
            weights,
            bias,
            ..
        } => conv2d(&x, out_shape, (*k_h, *k_w), (*stride_h, *stride_w), (*pad_h, *pad_w), weights, bias),
        LayerSpec::BatchNorm {
            eps,
            gamma,
            beta,
            mean,
            var,
        } => {
            let mut x = x;
            let n = x.shape.h * x.shape.w;
            for c in 0..x.shape.c {
                let scale = gamma[c] as f64 / (var[c] as f64 + *eps as f64).sqrt();
                let shift = beta[c] as f64 - mean[c] as f64 * scale;
                for v in &mut x.data[c * n..(c + 1) * n] {
                    *v = *v * scale + shift;
                }
            }
            x
        }
        LayerSpec::ReLU => {
            let mut x = x;
            x.data.iter_mut().for_each(|v| *v = v.max(0.0));
            x
        }
        LayerSpec::MaxPool { k, stride } => {
            let mut out = Tensor::zeros(out_shape);
            let mut idx = 0;
            for c in 0..out_shape.c {
                for oy in 0..out_shape.h {
                    for ox in 0..out_shape.w {
                        let mut m = f64::NEG_INFINITY;
                        for dy in 0..*k {
                            for dx in 0..*k {
                                m = m.max(x.at(c, oy * stride + dy, ox * stride + dx));
                            }
                        }
                        out.data[idx] = m;
                        idx += 1;
                    }
                }
            }
            out
        }
        LayerSpec::GlobalAvgPool => {
            let n = (x.shape.h * x.shape.w) as f64;
            let data = (0..x.shape.c)
                .map(|c| x.plane(c).iter().sum::<f64>() / n)
                .collect();
            Tensor {
                shape: out_shape,
                data,
            }
        }
        LayerSpec::ResidualAdd { from_layer_index } => {
            let src = saved[*from_layer_index]
                .as_ref()
                .expect("residual sources are retained");
            let mut x = x;
            x.data.iter_mut().zip(&src.data).for_each(|(a, b)| *a += b);
            x
        }
        LayerSpec::Dense { out, weights, bias } => {
            let n_in = x.data.len();
            let data = (0..*out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] as f64
                        + row
                            .iter()
                            .zip(&x.data)
                            .map(|(&w, &v)| w as f64 * v)
                            .sum::<f64>()
                })
                .collect();
            Tensor {
                shape: out_shape,
                data,
            }
        }
        LayerSpec::Softmax => Tensor {
            shape: out_shape,
            data: super::softmax(&x.data),
        },
    })
}

/// Cross-correlation with zero padding via im2col and a matrix product.
fn conv2d(
    x: &Tensor,
    out_shape: Shape,
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    weights: &[f32],
    bias: &[f32],
) -> Tensor {
    let in_c = x.shape.c;
    let (oh, ow) = (out_shape.h, out_shape.w);
    let patch = in_c * kh * kw;
    let mut cols = Array2::<f64>::zeros((patch, oh * ow));
    for c in 0..in_c {
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (c * kh + ky) * kw + kx;
                let mut row = cols.row_mut(r);
                for oy in 0..oh {
                    let iy = (oy * sh + ky) as isize - ph as isize;
                    if iy < 0 || iy >= x.shape.h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * sw + kx) as isize - pw as isize;
                        if ix >= 0 && ix < x.shape.w as isize {
                            row[oy * ow + ox] = x.at(c, iy as usize, ix as usize);
                        }
                    }
                }
            }
        }
    }
    let w64: Vec<f64> = weights.iter().map(|&v| v as f64).collect();
    let wm = ArrayView2::from_shape((out_shape.c, patch), &w64).expect("validated weight count");
    let mut y = wm.dot(&cols);
    for (o, mut row) in y.rows_mut().into_iter().enumerate() {
        let b = bias[o] as f64;
        row.iter_mut().for_each(|v| *v += b);
    }
    Tensor {
        shape: out_shape,
        data: y.into_raw_vec_and_offset().0,
    }
}

impl TileClassifier for CnnGraph {
    /// Requires a graph ending in a 2-way Softmax (index 0 = P).
    fn predict(&self, tile: &Raster) -> Result<Prediction> {
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax)) || self.output_shape().len() != 2 {
            return Err(Error::Shape(
                "classification needs a graph ending in a 2-way Softmax".into(),
            ));
        }
        let out = self.forward(tile, None)?;
        Ok(Prediction {
            prob_p: out.data[0],
            prob_n: out.data[1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn with_params(mut layers: Vec<LayerSpec>, input: Shape, seed: u64) -> CnnGraph {
        let g = CnnGraph::unweighted(input, layers.clone()).unwrap();
        let mut rng = Seed(seed).rng();
        for (i, l) in layers.iter_mut().enumerate() {
            let n = g.param_count(i);
            let mut v: Vec<f32> = (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
            if let LayerSpec::BatchNorm { .. } = l {
                let c = n / 4;
                v[3 * c..].iter_mut().for_each(|x| *x = x.abs() + 0.1);
            }
            l.set_params(&v);
        }
        CnnGraph::new(input, layers).unwrap()
    }

    #[test]
    fn identity_1x1_conv() {
        let mut l = LayerSpec::conv(1, 1, 1, 0);
        l.set_params(&[1.0, 0.0]);
        let g = CnnGraph::new(Shape::new(1, 4, 5), vec![l]).unwrap();
        let x = Tensor::new(Shape::new(1, 4, 5), (0..20).map(|v| v as f64 * 0.3).collect()).unwrap();
        assert_eq!(g.forward_tensor(x.clone(), None).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_on_constant() {
        let mut l = LayerSpec::conv(1, 3, 1, 1);
        let mut p = vec![1.0f32; 9];
        p.push(0.0);
        l.set_params(&p);
        let g = CnnGraph::new(Shape::new(1, 6, 6), vec![l]).unwrap();
        let y = g
            .forward_tensor(Tensor::new(Shape::new(1, 6, 6), vec![2.5; 36]).unwrap(), None)
            .unwrap();
        for yy in 1..5 {
            for xx in 1..5 {
                assert_eq!(y.at(0, yy, xx), 22.5);
            }
        }
        assert_eq!(y.at(0, 0, 0), 4.0 * 2.5);
    }

    #[test]
    fn residual_to_later_layer_is_rejected() {
        let err = CnnGraph::unweighted(
            Shape::new(1, 4, 4),
            vec![LayerSpec::ReLU, LayerSpec::ResidualAdd { from_layer_index: 1 }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ModelFormat(_)));
    }

    #[test]
    fn residual_adds_earlier_activation() {
        let g = CnnGraph::new(
            Shape::new(1, 1, 2),
            vec![LayerSpec::ReLU, LayerSpec::ReLU, LayerSpec::ResidualAdd { from_layer_index: 0 }],
        )
        .unwrap();
        let y = g
            .forward_tensor(Tensor::new(Shape::new(1, 1, 2), vec![-1.0, 3.0]).unwrap(), None)
            .unwrap();
        assert_eq!(y.data, vec![0.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_reports_layer() {
        let err = CnnGraph::unweighted(
            Shape::new(1, 4, 4),
            vec![LayerSpec::ReLU, LayerSpec::MaxPool { k: 5, stride: 1 }],
        )
        .unwrap_err();
        match err {
            Error::LayerShape { layer, actual, .. } => {
                assert_eq!(layer, 1);
                assert_eq!(actual, "1x4x4");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn files_round_trip_bit_exactly() {
        let input = Shape::new(3, 9, 9);
        let g = with_params(
            vec![
                LayerSpec::conv(4, 3, 2, 1),
                LayerSpec::batch_norm(1e-5),
                LayerSpec::ReLU,
                LayerSpec::ResidualAdd { from_layer_index: 1 },
                LayerSpec::MaxPool { k: 2, stride: 1 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::dense(2),
                LayerSpec::Softmax,
            ],
            input,
            9,
        );
        let topo = g.topology_json().unwrap();
        let w = g.weights_bytes();
        let back = CnnGraph::from_parts(&topo, &w).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.weights_bytes(), w);
        match CnnGraph::from_parts(&topo, &w[..w.len() - 5]) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, w.len());
                assert_eq!(actual, w.len() - 5);
            }
            other => panic!("{:?}", other.map(|_| ())),
        }
        let tile = Raster::filled(9, 9, 3, 100).unwrap();
        let p = g.predict(&tile).unwrap();
        assert!((p.prob_p + p.prob_n - 1.0).abs() < 1e-12);
    }
}
