//! Class-agnostic activation heatmaps from the last convolution block.

use serde::{Deserialize, Serialize};

use super::cnn::{CnnGraph, LayerSpec};
use crate::error::{Error, Result};
use crate::raster::{bilinear_resize, quantize, to_grayscale, Raster};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelAggregate {
    #[default]
    Mean,
    Max,
}

/// Index of the activation used for the heatmap: the last Conv2D, moved past
/// any BatchNorm/ReLU directly after it.
pub fn heatmap_layer(graph: &CnnGraph) -> Option<usize> {
    let mut i = graph.last_conv_index()?;
    while matches!(
        graph.layers.get(i + 1),
        Some(LayerSpec::BatchNorm { .. } | LayerSpec::ReLU)
    ) {
        i += 1;
    }
    Some(i)
}

/// 1-channel heatmap with the tile's dimensions. A spatially constant
/// activation gives an all-zero map.
pub fn activation_heatmap(graph: &CnnGraph, tile: &Raster, agg: ChannelAggregate) -> Result<Raster> {
    let layer = heatmap_layer(graph)
        .ok_or_else(|| Error::invalid("heatmap needs a graph with at least one Conv2D"))?;
    let act = graph.forward(tile, Some(layer))?;
    let (c, h, w) = (act.shape.c, act.shape.h, act.shape.w);
    let n = h * w;
    let map: Vec<f64> = (0..n)
        .map(|i| {
            let vals = (0..c).map(|ch| act.data[ch * n + i]);
            match agg {
                ChannelAggregate::Mean => vals.sum::<f64>() / c as f64,
                ChannelAggregate::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let samples = if hi > lo {
        map.iter().map(|&v| quantize((v - lo) / (hi - lo) * 255.0)).collect()
    } else {
        vec![0; n]
    };
    let small = Raster::new(w, h, 1, samples)?;
    bilinear_resize(&small, tile.width(), tile.height())
}

/// Blend a heatmap over a tile in red, weighting by heat (0 = transparent).
pub fn overlay_heatmap(tile: &Raster, heat: &Raster, opacity: f64) -> Result<Raster> {
    if heat.channels() != 1 || heat.width() != tile.width() || heat.height() != tile.height() {
        return Err(Error::Shape("heatmap must be 1-channel and tile-sized".into()));
    }
    if !(0.0..=1.0).contains(&opacity) {
        return Err(Error::invalid("opacity must lie in [0, 1]"));
    }
    let gray = to_grayscale(tile);
    let mut out = Vec::with_capacity(gray.samples().len() * 3);
    for (&g, &hv) in gray.samples().iter().zip(heat.samples()) {
        let a = opacity * hv as f64 / 255.0;
        let base = g as f64 * (1.0 - a);
        out.push(quantize(base + a * 255.0));
        out.push(quantize(base));
        out.push(quantize(base));
    }
    Raster::new(tile.width(), tile.height(), 3, out)
}
