//! Fully connected ReLU network with a softmax output, trained by mini-batch
//! SGD with momentum on the summed cross-entropy loss.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::{softmax, Prediction, TileClassifier};
use crate::dataset::{DatasetManifest, Label, TileResolver};
use crate::error::{Error, Result};
use crate::raster::{to_grayscale, Raster};
use crate::rng::Seed;

const MODEL_MAGIC: &[u8; 4] = b"CSM1";
const LOG_FLOOR: f64 = 1e-12;

/// How a tile becomes the network's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputEncoding {
    /// Grayscale pixels (the "bnw" variant).
    Gray,
    /// Interleaved RGB pixels; gray tiles are replicated.
    Rgb,
    /// Precomputed feature vectors (transfer head).
    Features,
}

impl InputEncoding {
    fn code(self) -> u8 {
        match self {
            InputEncoding::Gray => 0,
            InputEncoding::Rgb => 1,
            InputEncoding::Features => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(InputEncoding::Gray),
            1 => Ok(InputEncoding::Rgb),
            2 => Ok(InputEncoding::Features),
            _ => Err(Error::ModelFormat(format!("unknown input encoding {c}"))),
        }
    }

    pub fn channels(self) -> usize {
        match self {
            InputEncoding::Rgb => 3,
            _ => 1,
        }
    }

    /// Raw 8-bit input vector for a tile.
    pub fn encode(self, tile: &Raster) -> Result<Vec<u8>> {
        match self {
            InputEncoding::Gray => Ok(to_grayscale(tile).into_samples()),
            InputEncoding::Rgb => Ok(tile.replicate3().into_samples()),
            InputEncoding::Features => Err(Error::invalid(
                "feature-input models cannot encode raw tiles",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    /// One `(out, in)` matrix per layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: InputEncoding,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpModel {
    pub fn zeros(layer_sizes: &[usize], input: InputEncoding) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {layer_sizes:?}")));
        }
        if *layer_sizes.last().unwrap() != 2 {
            return Err(Error::invalid("output layer must have 2 units (P, N)"));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            input,
        })
    }

    /// The two-hidden-layer shape `[d_in, 128, 128, 2]`.
    pub fn sfnn(d_in: usize, input: InputEncoding) -> Result<Self> {
        Self::zeros(&[d_in, 128, 128, 2], input)
    }

    /// Same shape, weights drawn from U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
    /// zero biases. Draw order is layer by layer, row-major.
    pub fn glorot(&self, seed: Seed) -> Self {
        let mut rng = seed.rng();
        let mut out = self.clone();
        for w in out.weights.iter_mut() {
            let (fan_out, fan_in) = w.dim();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
        }
        out.biases.iter_mut().for_each(|b| b.fill(0.0));
        out
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn zero_grads(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// Pre-activations and activations of every layer for a batch (rows = samples).
    fn forward_all(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(&w.t());
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
                acts.push(z);
            } else {
                let mut probs = z;
                for mut row in probs.rows_mut() {
                    let p = softmax(row.as_slice().expect("contiguous row"));
                    row.assign(&Array1::from(p));
                }
                return (acts, probs);
            }
        }
        unreachable!("at least one layer")
    }

    /// Class probabilities `[p_P, p_N]` per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_all(x).1
    }

    pub fn predict_vector(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let p = self.forward(view);
        Ok(Prediction {
            prob_p: p[[0, 0]],
            prob_n: p[[0, 1]],
        })
    }

    /// Summed cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, labels: &[Label]) -> (f64, Gradients) {
        let (acts, probs) = self.forward_all(x);
        let n = labels.len();
        let mut loss = 0.0;
        let mut delta = probs;
        for (i, &label) in labels.iter().enumerate() {
            let t = class_index(label);
            loss -= clamped_ln(delta[[i, t]]);
            delta[[i, t]] -= 1.0;
        }
        debug_assert_eq!(delta.nrows(), n);
        let mut grads = self.zero_grads();
        for l in (0..self.weights.len()).rev() {
            grads.weights[l] = delta.t().dot(&acts[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l]);
                Zip::from(&mut prev)
                    .and(&acts[l])
                    .for_each(|d, &a| if a <= 0.0 { *d = 0.0 });
                delta = prev;
            }
        }
        (loss, grads)
    }

    pub fn loss(&self, x: ArrayView2<f64>, labels: &[Label]) -> f64 {
        let probs = self.forward(x);
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -clamped_ln(probs[[i, class_index(l)]]))
            .sum()
    }

    // -- persistence ------------------------------------------------------

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.param_count() * 8);
        out.extend_from_slice(MODEL_MAGIC);
        out.push(self.input.code());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &n in &self.layer_sizes {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic, expected CSM1".into()));
        }
        let mut code = [0u8; 1];
        read_exact(&mut r, &mut code)?;
        let input = InputEncoding::from_code(code[0])?;
        let mut u32b = [0u8; 4];
        read_exact(&mut r, &mut u32b)?;
        let n_layers = u32::from_le_bytes(u32b) as usize;
        if n_layers > 64 {
            return Err(Error::ModelFormat(format!("{n_layers} layers")));
        }
        let mut sizes = Vec::with_capacity(n_layers);
        let mut u64b = [0u8; 8];
        for _ in 0..n_layers {
            read_exact(&mut r, &mut u64b)?;
            sizes.push(u64::from_le_bytes(u64b) as usize);
        }
        let mut model = Self::zeros(&sizes, input)?;
        let expected = bytes.len() - r.len() + model.param_count() * 8;
        if bytes.len() != expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        let mut f64b = [0u8; 8];
        for (w, b) in model.weights.iter_mut().zip(model.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                read_exact(&mut r, &mut f64b)?;
                *v = f64::from_le_bytes(f64b);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `ln(max(p, floor))`, letting NaN through.
fn clamped_ln(p: f64) -> f64 {
    if p.is_nan() {
        p
    } else {
        p.max(LOG_FLOOR).ln()
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::ModelFormat("unexpected end of model file".into()))
}

pub(crate) fn class_index(label: Label) -> usize {
    match label {
        Label::P => 0,
        Label::N => 1,
    }
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: Seed,
    /// Raw inputs are divided by this before entering the network.
    pub pixel_scale: f64,
    /// Also record validation accuracy every this many iterations.
    pub eval_every: Option<usize>,
    /// Return the weights of the epoch with the highest validation accuracy
    /// (earliest on ties) instead of the last epoch's.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 32,
            epochs: 10,
            seed: Seed(0),
            pixel_scale: 255.0,
            eval_every: None,
            keep_best: true,
        }
    }
}

impl TrainConfig {
    /// Defaults for a head on standardized features, whose inputs are far
    /// smaller in norm than raw pixel vectors.
    pub fn for_features() -> Self {
        Self {
            learning_rate: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.epochs > 0
            && self.pixel_scale > 0.0
            && self.eval_every != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean per-sample loss of each iteration's batch.
    pub loss: Vec<f64>,
    /// Validation accuracy after each epoch.
    pub val_accuracy: Vec<f64>,
    /// `(iteration, validation accuracy)` at `eval_every` checkpoints.
    pub checkpoints: Vec<(usize, f64)>,
    pub iterations_per_epoch: usize,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in self.loss.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out.push_str("epoch,val_accuracy\n");
        for (e, a) in self.val_accuracy.iter().enumerate() {
            out.push_str(&format!("{},{}\n", e + 1, a));
        }
        out
    }
}

/// Labeled input vectors the trainer can draw batches from.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn label(&self, i: usize) -> Label;
    /// Write sample `i`, already scaled, into `out`.
    fn fill(&self, i: usize, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 8-bit samples divided by a fixed scale.
pub struct ByteSamples {
    dim: usize,
    data: Vec<u8>,
    labels: Vec<Label>,
    scale: f64,
}

impl ByteSamples {
    pub fn new(dim: usize, scale: f64) -> Self {
        Self {
            dim,
            data: Vec::new(),
            labels: Vec::new(),
            scale,
        }
    }

    pub fn push(&mut self, values: &[u8], label: Label) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Shape(format!(
                "sample has {} values, expected {}",
                values.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(values);
        self.labels.push(label);
        Ok(())
    }

    /// Encode every record of a manifest.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        encoding: InputEncoding,
        scale: f64,
        resolver: &TileResolver,
    ) -> Result<Self> {
        let dim = manifest.window * manifest.window * encoding.channels();
        let mut out = Self::new(dim, scale);
        out.data.reserve(dim * manifest.len());
        for (i, rec) in manifest.records.iter().enumerate() {
            let tile = resolver.load_record(manifest, i)?;
            out.push(&encoding.encode(&tile)?, rec.label)?;
        }
        Ok(out)
    }
}

impl SampleSource for ByteSamples {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    fn fill(&self, i: usize, out: &mut [f64]) {
        let inv = 1.0 / self.scale;
        let row = &self.data[i * self.dim..(i + 1) * self.dim];
        for (o, &v) in out.iter_mut().zip(row) {
            *o = v as f64 * inv;
        }
    }
}

/// Real-valued feature vectors used as-is.
pub struct FeatureSamples {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<Label>,
}

impl FeatureSamples {
    pub fn new(features: &[(Vec<f64>, Label)]) -> Result<Self> {
        let dim = features
            .first()
            .map(|f| f.0.len())
            .ok_or_else(|| Error::Dataset("no feature vectors".into()))?;
        let mut data = Vec::with_capacity(dim * features.len());
        let mut labels = Vec::with_capacity(features.len());
        for (v, l) in features {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "feature vector of length {} among length {dim}",
                    v.len()
                )));
            }
            data.extend_from_slice(v);
            labels.push(*l);
        }
        Ok(Self { dim, data, labels })
    }
}

impl SampleSource for FeatureSamples {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    fn fill(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[i * self.dim..(i + 1) * self.dim]);
    }
}

fn gather(src: &dyn SampleSource, idx: &[usize]) -> (Array2<f64>, Vec<Label>) {
    let mut x = Array2::zeros((idx.len(), src.dim()));
    for (row, &i) in idx.iter().enumerate() {
        src.fill(i, x.row_mut(row).as_slice_mut().expect("contiguous"));
    }
    (x, idx.iter().map(|&i| src.label(i)).collect())
}

/// Fraction of samples whose argmax (ties to P) matches the label.
pub fn accuracy(model: &MlpModel, data: &dyn SampleSource) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(64) {
        let (x, labels) = gather(data, chunk);
        let probs = model.forward(x.view());
        for (row, label) in probs.rows().into_iter().zip(labels) {
            let pred = if row[0] >= row[1] { Label::P } else { Label::N };
            correct += (pred == label) as usize;
        }
    }
    correct as f64 / data.len() as f64
}

/// Train a freshly initialized network shaped like `template`.
pub fn fit(
    template: &MlpModel,
    train: &dyn SampleSource,
    val: Option<&dyn SampleSource>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("empty batch: training set has no samples".into()));
    }
    if train.dim() != template.input_dim() {
        return Err(Error::Shape(format!(
            "samples have {} inputs, model expects {}",
            train.dim(),
            template.input_dim()
        )));
    }
    let mut model = template.glorot(cfg.seed.derive(0));
    let mut velocity = model.zero_grads();
    let mut trace = TrainTrace {
        iterations_per_epoch: train.len().div_ceil(cfg.batch_size),
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut iteration = 0usize;
    let mut best: Option<(f64, MlpModel)> = None;
    for epoch in 0..cfg.epochs {
        cfg.seed.derive(1 + epoch as u64).rng().shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            iteration += 1;
            let (x, labels) = gather(train, batch);
            let (loss, grads) = model.loss_and_gradient(x.view(), &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            trace.loss.push(loss / batch.len() as f64);
            let step = cfg.learning_rate / batch.len() as f64;
            let mom = cfg.momentum;
            for l in 0..model.weights.len() {
                Zip::from(&mut velocity.weights[l])
                    .and(&grads.weights[l])
                    .and(&mut model.weights[l])
                    .for_each(|v, &g, w| {
                        *v = mom * *v - step * g;
                        *w += *v;
                    });
                Zip::from(&mut velocity.biases[l])
                    .and(&grads.biases[l])
                    .and(&mut model.biases[l])
                    .for_each(|v, &g, b| {
                        *v = mom * *v - step * g;
                        *b += *v;
                    });
            }
            if let (Some(k), Some(val)) = (cfg.eval_every, val) {
                if iteration.is_multiple_of(k) {
                    trace.checkpoints.push((iteration, accuracy(&model, val)));
                }
            }
        }
        if let Some(val) = val {
            let acc = accuracy(&model, val);
            trace.val_accuracy.push(acc);
            if cfg.keep_best && best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, model.clone()));
            }
        }
    }
    Ok((best.map_or(model, |b| b.1), trace))
}

/// Train a tile classifier on `train`, tracking accuracy on `val`.
pub fn mlp_train(
    train: &DatasetManifest,
    val: &DatasetManifest,
    cfg: &TrainConfig,
    template: &MlpModel,
    resolver: &TileResolver,
) -> Result<(MlpModel, TrainTrace)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset("training and validation sets must be non-empty".into()));
    }
    let enc = template.input;
    let expected = train.window * train.window * enc.channels();
    if template.input_dim() != expected {
        return Err(Error::Shape(format!(
            "template expects {} inputs, {}x{} tiles give {expected}",
            template.input_dim(),
            train.window,
            train.window
        )));
    }
    let tr = ByteSamples::from_manifest(train, enc, cfg.pixel_scale, resolver)?;
    let va = ByteSamples::from_manifest(val, enc, cfg.pixel_scale, resolver)?;
    fit(template, &tr, Some(&va), cfg)
}

/// Compare backprop gradients against central finite differences; returns the
/// largest `|gA - gN| / max(1e-8, |gA| + |gN|)` over all parameters.
pub fn mlp_gradient_check(model: &MlpModel, batch: &[(Vec<f64>, Label)], h: f64) -> Result<f64> {
    let src = FeatureSamples::new(batch)?;
    if src.dim() != model.input_dim() {
        return Err(Error::Shape("batch width differs from model input".into()));
    }
    let idx: Vec<usize> = (0..src.len()).collect();
    let (x, labels) = gather(&src, &idx);
    let (_, grads) = model.loss_and_gradient(x.view(), &labels);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
    for l in 0..model.weights.len() {
        for (idx, &ga) in grads.weights[l].indexed_iter() {
            let orig = probe.weights[l][idx];
            probe.weights[l][idx] = orig + h;
            let up = probe.loss(x.view(), &labels);
            probe.weights[l][idx] = orig - h;
            let down = probe.loss(x.view(), &labels);
            probe.weights[l][idx] = orig;
            worst = worst.max(rel(ga, (up - down) / (2.0 * h)));
        }
        for (i, &ga) in grads.biases[l].iter().enumerate() {
            let orig = probe.biases[l][i];
            probe.biases[l][i] = orig + h;
            let up = probe.loss(x.view(), &labels);
            probe.biases[l][i] = orig - h;
            let down = probe.loss(x.view(), &labels);
            probe.biases[l][i] = orig;
            worst = worst.max(rel(ga, (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// Forward a tile through the network, converting it as the model expects.
pub fn mlp_predict(model: &MlpModel, tile: &Raster, pixel_scale: f64) -> Result<Prediction> {
    let raw = model.input.encode(tile)?;
    if raw.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "tile {}x{} encodes to {} values, model expects {}",
            tile.width(),
            tile.height(),
            raw.len(),
            model.input_dim()
        )));
    }
    let x: Vec<f64> = raw.iter().map(|&v| v as f64 / pixel_scale).collect();
    model.predict_vector(&x)
}

#[derive(Debug, Clone)]
pub struct MlpClassifier {
    pub model: MlpModel,
    pub pixel_scale: f64,
}

impl MlpClassifier {
    pub fn new(model: MlpModel) -> Self {
        Self {
            model,
            pixel_scale: 255.0,
        }
    }
}

impl TileClassifier for MlpClassifier {
    fn predict(&self, tile: &Raster) -> Result<Prediction> {
        mlp_predict(&self.model, tile, self.pixel_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(n: usize, dim: usize, seed: u64) -> Vec<(Vec<f64>, Label)> {
        let mut rng = Seed(seed).rng();
        (0..n)
            .map(|i| {
                let v = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
                (v, if i % 2 == 0 { Label::P } else { Label::N })
            })
            .collect()
    }

    fn as_matrix(batch: &[(Vec<f64>, Label)]) -> (Array2<f64>, Vec<Label>) {
        let src = FeatureSamples::new(batch).unwrap();
        let idx: Vec<usize> = (0..src.len()).collect();
        gather(&src, &idx)
    }

    #[test]
    fn loss_of_certain_and_uniform_predictions() {
        let mut m = MlpModel::zeros(&[1, 2], InputEncoding::Features).unwrap();
        let x = Array2::zeros((1, 1));
        assert!((m.loss(x.view(), &[Label::P]) - std::f64::consts::LN_2).abs() < 1e-12);
        m.biases[0][0] = 1000.0;
        assert_eq!(m.loss(x.view(), &[Label::P]), 0.0);
    }

    #[test]
    fn zero_net_predicts_half() {
        let m = MlpModel::zeros(&[4, 3, 2], InputEncoding::Features).unwrap();
        let p = m.predict_vector(&[0.3, -1.0, 2.0, 5.0]).unwrap();
        assert_eq!((p.prob_p, p.prob_n), (0.5, 0.5));
    }

    #[test]
    fn output_bias_ten_gives_near_certain() {
        let mut m = MlpModel::zeros(&[4, 3, 2], InputEncoding::Features).unwrap();
        m.biases[1][0] = 10.0;
        m.biases[1][1] = -10.0;
        let p = m.predict_vector(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        // 1 / (1 + e^-20)
        let expect = 1.0 / (1.0 + (-20.0f64).exp());
        assert!((p.prob_p - expect).abs() < 1e-15);
        assert!((p.prob_p - (1.0 - 2.061_153_6e-9)).abs() < 1e-15);
        assert!((p.prob_p + p.prob_n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut m = MlpModel::zeros(&[8, 4, 4, 2], InputEncoding::Features)
                .unwrap()
                .glorot(Seed(seed));
            // nonzero biases keep the ReLU kinks away from the probe points
            let mut rng = Seed(50 + seed).rng();
            for b in m.biases.iter_mut() {
                b.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
            }
            let batch = random_batch(6, 8, 100 + seed);
            let err = mlp_gradient_check(&m, &batch, 1e-5).unwrap();
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_net_output_bias_gradient_closed_form() {
        let m = MlpModel::zeros(&[3, 2, 2], InputEncoding::Features).unwrap();
        let x = Array2::zeros((1, 3));
        let (_, g) = m.loss_and_gradient(x.view(), &[Label::P]);
        // softmax(0,0) - onehot(P)
        assert_eq!(g.biases[1].to_vec(), vec![-0.5, 0.5]);
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let m = MlpModel::zeros(&[5, 4, 2], InputEncoding::Features)
            .unwrap()
            .glorot(Seed(3));
        let one = random_batch(1, 5, 8);
        let two = vec![one[0].clone(), one[0].clone()];
        let (x1, l1) = as_matrix(&one);
        let (x2, l2) = as_matrix(&two);
        let (_, g1) = m.loss_and_gradient(x1.view(), &l1);
        let (_, g2) = m.loss_and_gradient(x2.view(), &l2);
        for l in 0..2 {
            assert_eq!(g2.weights[l], &g1.weights[l] * 2.0);
            assert_eq!(g2.biases[l], &g1.biases[l] * 2.0);
        }
    }

    #[test]
    fn positive_homogeneity_preserves_argmax() {
        let mut rng = Seed(21).rng();
        for seed in 0..10 {
            let m = MlpModel::zeros(&[6, 5, 5, 2], InputEncoding::Features)
                .unwrap()
                .glorot(Seed(seed));
            let x: Vec<f64> = (0..6).map(|_| rng.uniform(0.0, 1.0)).collect();
            let base = m.predict_vector(&x).unwrap().label();
            for k in [0.1, 2.0, 37.0] {
                let xs: Vec<f64> = x.iter().map(|v| v * k).collect();
                assert_eq!(m.predict_vector(&xs).unwrap().label(), base);
            }
        }
    }

    #[test]
    fn model_bytes_round_trip() {
        let m = MlpModel::zeros(&[7, 3, 2], InputEncoding::Gray)
            .unwrap()
            .glorot(Seed(4));
        let bytes = m.to_bytes();
        assert_eq!(MlpModel::from_bytes(&bytes).unwrap(), m);
        assert!(matches!(
            MlpModel::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MlpModel::from_bytes(&bad).is_err());
    }

    fn bar_samples(n: usize, side: usize, seed: u64) -> ByteSamples {
        let mut rng = Seed(seed).rng();
        let mut s = ByteSamples::new(side * side, 255.0);
        for i in 0..n {
            let label = if i % 2 == 0 { Label::P } else { Label::N };
            let mut px: Vec<u8> = (0..side * side)
                .map(|_| (170.0 + 8.0 * rng.normal()).clamp(0.0, 255.0) as u8)
                .collect();
            if label == Label::P {
                let col = side / 4 + rng.below((side / 2) as u64) as usize;
                for y in 0..side {
                    px[y * side + col] = 60;
                }
            }
            s.push(&px, label).unwrap();
        }
        s
    }

    #[test]
    fn training_separates_bars_and_is_deterministic() {
        let train = bar_samples(2000, 16, 1);
        let val = bar_samples(100, 16, 2);
        let template = MlpModel::zeros(&[256, 32, 32, 2], InputEncoding::Gray).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            seed: Seed(5),
            eval_every: Some(5),
            ..Default::default()
        };
        let (m, trace) = fit(&template, &train, Some(&val), &cfg).unwrap();
        assert!(trace.loss.iter().all(|l| l.is_finite()));
        assert_eq!(trace.loss.len(), 10 * trace.iterations_per_epoch);
        assert!(*trace.val_accuracy.last().unwrap() >= 0.95, "{:?}", trace.val_accuracy);
        let (m2, trace2) = fit(&template, &train, Some(&val), &cfg).unwrap();
        assert_eq!(m, m2);
        assert_eq!(trace, trace2);
    }

    #[test]
    fn empty_training_set_errors() {
        let template = MlpModel::zeros(&[4, 2], InputEncoding::Gray).unwrap();
        let empty = ByteSamples::new(4, 255.0);
        assert!(fit(&template, &empty, None, &TrainConfig::default()).is_err());
    }

    #[test]
    fn exploding_learning_rate_reports_iteration() {
        let train = bar_samples(64, 8, 3);
        let template = MlpModel::zeros(&[64, 8, 2], InputEncoding::Gray).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            ..Default::default()
        };
        match fit(&template, &train, None, &cfg) {
            Err(Error::NonFiniteLoss { iteration }) => assert!(iteration >= 1),
            other => panic!("expected non-finite loss, got {:?}", other.map(|_| ())),
        }
    }
}
