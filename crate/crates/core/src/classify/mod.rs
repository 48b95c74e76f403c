//! Per-tile classifiers and batch prediction over manifests.
//!
//! Every classifier yields a [`Prediction`]; output index 0 of any network is
//! the P (cracked) class and index 1 the N class.

pub mod cnn;
pub mod head;
pub mod heatmap;
pub mod mlp;
pub mod otsu;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Label, TileResolver};
use crate::error::{Error, Result};
use crate::raster::Raster;

pub use cnn::{load_cnn, write_cnn, CnnGraph, LayerSpec, Shape, Tensor};
pub use head::{train_head, CnnHeadClassifier};
pub use heatmap::{activation_heatmap, overlay_heatmap, ChannelAggregate};
pub use mlp::{
    mlp_gradient_check, mlp_predict, mlp_train, InputEncoding, MlpClassifier, MlpModel,
    TrainConfig, TrainTrace,
};
pub use otsu::{adt_classify, otsu_threshold, AdtClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob_p: f64,
    pub prob_n: f64,
}

impl Prediction {
    pub fn certain(label: Label) -> Self {
        match label {
            Label::P => Prediction {
                prob_p: 1.0,
                prob_n: 0.0,
            },
            Label::N => Prediction {
                prob_p: 0.0,
                prob_n: 1.0,
            },
        }
    }

    /// Most probable class; an exact tie goes to P.
    pub fn label(&self) -> Label {
        if self.prob_p >= self.prob_n {
            Label::P
        } else {
            Label::N
        }
    }
}

pub trait TileClassifier: Send + Sync {
    fn predict(&self, tile: &Raster) -> Result<Prediction>;
}

impl<T: TileClassifier + ?Sized> TileClassifier for Box<T> {
    fn predict(&self, tile: &Raster) -> Result<Prediction> {
        (**self).predict(tile)
    }
}

impl<T: TileClassifier + ?Sized> TileClassifier for &T {
    fn predict(&self, tile: &Raster) -> Result<Prediction> {
        (**self).predict(tile)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub record_index: usize,
    pub prob_p: f64,
    pub prob_n: f64,
    pub label: Label,
}

/// Predictions in manifest order. Serialized as TSV
/// `recordIndex  probP  probN  label`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionsTable {
    pub rows: Vec<PredictionRow>,
}

impl PredictionsTable {
    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.prob_p).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("recordIndex\tprobP\tprobN\tlabel\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.record_index, r.prob_p, r.prob_n, r.label
            ));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::Manifest {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            rows.push(PredictionRow {
                record_index: f[0].parse().map_err(|_| bad("bad record index"))?,
                prob_p: f[1].parse().map_err(|_| bad("bad probP"))?,
                prob_n: f[2].parse().map_err(|_| bad("bad probN"))?,
                label: f[3].parse().map_err(|_| bad("bad label"))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}

/// Classify every record. Work fans out over the rayon pool; rows come back
/// in manifest order.
pub fn predict_dataset(
    classifier: &dyn TileClassifier,
    manifest: &DatasetManifest,
    resolver: &TileResolver,
) -> Result<PredictionsTable> {
    let rows = (0..manifest.len())
        .into_par_iter()
        .map(|i| {
            let tile = resolver.load_record(manifest, i)?;
            let p = classifier.predict(&tile)?;
            Ok(PredictionRow {
                record_index: i,
                prob_p: p.prob_p,
                prob_n: p.prob_n,
                label: p.label(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionsTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{annotate, TileRef};
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn tie_goes_to_positive() {
        let p = Prediction {
            prob_p: 0.5,
            prob_n: 0.5,
        };
        assert_eq!(p.label(), Label::P);
    }

    #[test]
    fn adt_on_constant_manifest_is_all_negative() {
        let tiles: Vec<TileRef> = (0..5)
            .map(|i| TileRef::Memory(Arc::new(Raster::filled(8, 8, 1, 40 * i).unwrap())))
            .collect();
        let m = annotate(8, tiles, &[Label::P; 5], "t").unwrap();
        let table = predict_dataset(&AdtClassifier::default(), &m, &TileResolver::new()).unwrap();
        assert_eq!(table.rows.len(), 5);
        assert!(table.rows.iter().all(|r| r.label == Label::N));
        assert_eq!(
            PredictionsTable::parse_tsv(&table.to_tsv()).unwrap(),
            table
        );
    }

    #[test]
    fn unresolvable_tile_errors() {
        let m = annotate(8, vec![TileRef::File("/nonexistent/x.pgm".into())], &[Label::P], "t").unwrap();
        assert!(predict_dataset(&AdtClassifier::default(), &m, &TileResolver::new()).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_shift_invariant(z in proptest::collection::vec(-50.0f64..50.0, 2..6), c in -100.0f64..100.0) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
