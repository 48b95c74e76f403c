//! Transfer head: a frozen convolutional backbone used as a feature
//! extractor, followed by a trained perceptron.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use super::cnn::{load_cnn, write_cnn, CnnGraph, LayerSpec, Shape};
use super::mlp::{fit, FeatureSamples, InputEncoding, MlpModel, TrainConfig, TrainTrace};
use super::{Prediction, TileClassifier};
use crate::dataset::{DatasetManifest, Label, TileResolver};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::Seed;

/// Activation threshold of the line detectors on inputs scaled to [0, 1].
const RIDGE_BIAS: f32 = -0.08;
const BN_EPS: f32 = 1e-5;

/// Oriented dark-line detector: second derivative of a Gaussian across the
/// line direction, zero-mean, L1 norm 2.
fn ridge_kernel(k: usize, theta: f64, sigma: f64) -> Vec<f64> {
    let r = (k / 2) as f64;
    let (nx, ny) = (theta.cos(), theta.sin());
    let mut w: Vec<f64> = (0..k * k)
        .map(|i| {
            let (y, x) = ((i / k) as f64 - r, (i % k) as f64 - r);
            let d = x * nx + y * ny;
            let q = d * d / (sigma * sigma);
            (q - 1.0) * (-0.5 * q).exp()
        })
        .collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter_mut().for_each(|v| *v -= mean);
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    w.iter_mut().for_each(|v| *v *= 2.0 / l1);
    w
}

/// Fixed two-convolution backbone ending in global pooling and a BatchNorm
/// whose statistics come from [`calibrate_backbone`]:
/// conv(8, 5x5, /2) - ReLU - conv(16, 3x3, /2) - ReLU - GAP - BatchNorm.
///
/// The first four conv1 filters detect dark lines at 0/45/90/135 degrees,
/// the other four are seeded random. conv2 passes each conv1 map through a
/// 3x3 box filter and adds eight seeded random mixtures.
pub fn desk_backbone(input: Shape, seed: Seed) -> Result<CnnGraph> {
    let mut rng = seed.rng();
    let cin = input.c;

    let mut w1 = Vec::with_capacity(8 * cin * 25);
    let mut b1 = Vec::with_capacity(8);
    for o in 0..8 {
        let k: Vec<f64> = if o < 4 {
            ridge_kernel(5, o as f64 * PI / 4.0, 1.0)
        } else {
            let bound = (6.0 / (25 * cin) as f64).sqrt();
            (0..25).map(|_| rng.uniform(-bound, bound)).collect()
        };
        for _ in 0..cin {
            w1.extend(k.iter().map(|&v| (v / cin as f64) as f32));
        }
        b1.push(if o < 4 { RIDGE_BIAS } else { 0.0 });
    }

    let mut w2 = vec![0.0f32; 16 * 8 * 9];
    let bound = (6.0 / 72.0f64).sqrt();
    for o in 0..16 {
        for i in 0..8 {
            for t in 0..9 {
                w2[(o * 8 + i) * 9 + t] = if o < 8 {
                    if i == o {
                        1.0 / 9.0
                    } else {
                        0.0
                    }
                } else {
                    rng.uniform(-bound, bound) as f32
                };
            }
        }
    }

    let mut layers = vec![
        LayerSpec::conv(8, 5, 2, 2),
        LayerSpec::ReLU,
        LayerSpec::conv(16, 3, 2, 1),
        LayerSpec::ReLU,
        LayerSpec::GlobalAvgPool,
        LayerSpec::batch_norm(BN_EPS),
    ];
    let bn = [vec![1.0f32; 16], vec![0.0; 16], vec![0.0; 16], vec![1.0; 16]].concat();
    let params = [
        [w1, b1].concat(),
        Vec::new(),
        [w2, vec![0.0; 16]].concat(),
        Vec::new(),
        Vec::new(),
        bn,
    ];
    for (l, p) in layers.iter_mut().zip(&params) {
        if !p.is_empty() {
            l.set_params(p);
        }
    }
    CnnGraph::new(input, layers)
}

/// Set the trailing BatchNorm to standardize pooled features over `tiles`
/// (gamma 1, beta 0, population statistics).
pub fn calibrate_backbone(graph: &mut CnnGraph, tiles: &[Raster]) -> Result<()> {
    let bn = graph.layers.len().checked_sub(1).filter(|&i| {
        matches!(graph.layers[i], LayerSpec::BatchNorm { .. })
    });
    let Some(bn) = bn else {
        return Err(Error::invalid("backbone must end in a BatchNorm layer"));
    };
    if tiles.is_empty() {
        return Err(Error::Dataset("no tiles to calibrate on".into()));
    }
    let pooled = tiles
        .par_iter()
        .map(|t| graph.forward(t, Some(bn - 1)).map(|x| x.data))
        .collect::<Result<Vec<_>>>()?;
    let c = pooled[0].len();
    let n = pooled.len() as f64;
    let mut mean = vec![0.0f64; c];
    for f in &pooled {
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0f64; c];
    for f in &pooled {
        var.iter_mut()
            .zip(f.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    let params: Vec<f32> = std::iter::repeat_n(1.0, c)
        .chain(std::iter::repeat_n(0.0, c))
        .chain(mean.iter().copied())
        .chain(var.iter().copied())
        .map(|v| v as f32)
        .collect();
    graph.set_layer_params(bn, &params)
}

/// Backbone outputs for every record, in manifest order.
pub fn extract_features(
    graph: &CnnGraph,
    manifest: &DatasetManifest,
    resolver: &TileResolver,
) -> Result<Vec<(Vec<f64>, Label)>> {
    (0..manifest.len())
        .into_par_iter()
        .map(|i| {
            let tile = resolver.load_record(manifest, i)?;
            let f = graph.forward(&tile, None)?;
            Ok((f.data, manifest.records[i].label))
        })
        .collect()
}

/// Train a `featureDim -> 128 -> 128 -> 2` head on frozen features.
pub fn train_head(
    features: &[(Vec<f64>, Label)],
    val: Option<&[(Vec<f64>, Label)]>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainTrace)> {
    let train = FeatureSamples::new(features)?;
    let template = MlpModel::zeros(&[features[0].0.len(), 128, 128, 2], InputEncoding::Features)?;
    let val = val.map(FeatureSamples::new).transpose()?;
    fit(
        &template,
        &train,
        val.as_ref().map(|v| v as &dyn super::mlp::SampleSource),
        cfg,
    )
}

/// Backbone plus head, usable as a tile classifier.
#[derive(Debug, Clone)]
pub struct CnnHeadClassifier {
    pub backbone: CnnGraph,
    pub head: MlpModel,
}

impl CnnHeadClassifier {
    pub fn new(backbone: CnnGraph, head: MlpModel) -> Result<Self> {
        if backbone.output_shape().len() != head.input_dim() {
            return Err(Error::Shape(format!(
                "backbone yields {} features, head expects {}",
                backbone.output_shape().len(),
                head.input_dim()
            )));
        }
        Ok(Self { backbone, head })
    }

    /// Writes `backbone.json`, `backbone.csw` and `head.csm` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_cnn(&self.backbone, dir.join("backbone.csw"), dir.join("backbone.json"))?;
        self.head.save(dir.join("head.csm"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let backbone = load_cnn(dir.join("backbone.csw"), dir.join("backbone.json"))?;
        Self::new(backbone, MlpModel::load(dir.join("head.csm"))?)
    }
}

impl TileClassifier for CnnHeadClassifier {
    fn predict(&self, tile: &Raster) -> Result<Prediction> {
        let f = self.backbone.forward(tile, None)?;
        self.head.predict_vector(&f.data)
    }
}
