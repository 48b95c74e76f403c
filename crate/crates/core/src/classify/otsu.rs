//! Otsu threshold and the adaptive-threshold (AdT) tile classifier.

use serde::{Deserialize, Serialize};

use super::{Prediction, TileClassifier};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::raster::{to_grayscale, Raster};

/// Between-class variance of the split `<= k | > k`, as the exact fraction
/// `(S0*w1 - S1*w0)^2 / (w0*w1)` (a positive multiple of the textbook value).
/// Returns `None` for an empty side.
fn split_score(w0: u64, s0: u64, w1: u64, s1: u64) -> Option<(u128, u128)> {
    if w0 == 0 || w1 == 0 {
        return None;
    }
    let diff = (s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128).unsigned_abs();
    Some((diff * diff, w0 as u128 * w1 as u128))
}

/// Compare a/b against c/d without division. Falls back to f64 when the
/// cross products would overflow (histograms above ~2^20 pixels).
fn cmp_frac(a: (u128, u128), c: (u128, u128)) -> std::cmp::Ordering {
    match (a.0.checked_mul(c.1), c.0.checked_mul(a.1)) {
        (Some(l), Some(r)) => l.cmp(&r),
        _ => {
            let l = a.0 as f64 / a.1 as f64;
            let r = c.0 as f64 / c.1 as f64;
            l.partial_cmp(&r).expect("finite scores")
        }
    }
}

/// Threshold maximizing between-class variance over splits k in 0..=255.
/// Tied maximizers are averaged (rounded down); a single-valued histogram
/// returns that value.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Result<u8> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::invalid("empty histogram"));
    }
    let sum_all: u64 = histogram
        .iter()
        .enumerate()
        .map(|(i, &h)| i as u64 * h)
        .sum();
    let mut best: Option<(u128, u128)> = None;
    let mut tied: Vec<usize> = Vec::new();
    let (mut w0, mut s0) = (0u64, 0u64);
    for (k, &h) in histogram.iter().enumerate() {
        w0 += h;
        s0 += k as u64 * h;
        let Some(score) = split_score(w0, s0, total - w0, sum_all - s0) else {
            continue;
        };
        match best.map(|b| cmp_frac(score, b)) {
            None | Some(std::cmp::Ordering::Greater) => {
                best = Some(score);
                tied.clear();
                tied.push(k);
            }
            Some(std::cmp::Ordering::Equal) => tied.push(k),
            Some(std::cmp::Ordering::Less) => {}
        }
    }
    if tied.is_empty() {
        // only one occupied bin
        let v = histogram.iter().position(|&h| h > 0).expect("non-empty");
        return Ok(v as u8);
    }
    let sum: usize = tied.iter().sum();
    Ok((sum / tied.len()) as u8)
}

pub fn histogram(gray: &Raster) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in gray.samples() {
        h[v as usize] += 1;
    }
    h
}

/// Adaptive-threshold classifier: P when at least `min_dark_pixels` gray
/// pixels fall strictly below the tile's Otsu threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdtClassifier {
    pub min_dark_pixels: usize,
}

impl Default for AdtClassifier {
    fn default() -> Self {
        Self { min_dark_pixels: 1 }
    }
}

impl TileClassifier for AdtClassifier {
    fn predict(&self, tile: &Raster) -> Result<Prediction> {
        Ok(adt_classify(tile, self.min_dark_pixels))
    }
}

pub fn adt_classify(tile: &Raster, min_dark_pixels: usize) -> Prediction {
    let gray = to_grayscale(tile);
    let th = otsu_threshold(&histogram(&gray)).expect("raster is never empty");
    let dark = gray.samples().iter().filter(|&&v| v < th).count();
    if dark >= min_dark_pixels.max(1) {
        Prediction::certain(Label::P)
    } else {
        Prediction::certain(Label::N)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive textbook maximization in floating point.
    fn brute_force(h: &[u64; 256]) -> u8 {
        let n: f64 = h.iter().map(|&v| v as f64).sum();
        let mut best = -1.0f64;
        let mut ks = Vec::new();
        for k in 0..256 {
            let w0: f64 = h[..=k].iter().map(|&v| v as f64).sum::<f64>() / n;
            let w1 = 1.0 - w0;
            if h[..=k].iter().sum::<u64>() == 0 || h[k + 1..].iter().sum::<u64>() == 0 {
                continue;
            }
            let m0 = h[..=k]
                .iter()
                .enumerate()
                .map(|(i, &v)| i as f64 * v as f64)
                .sum::<f64>()
                / (w0 * n);
            let m1 = h[k + 1..]
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + k + 1) as f64 * v as f64)
                .sum::<f64>()
                / (w1 * n);
            let var = w0 * w1 * (m0 - m1) * (m0 - m1);
            if var > best * (1.0 + 1e-12) {
                best = var;
                ks = vec![k];
            } else if (var - best).abs() <= 1e-12 * best {
                ks.push(k);
            }
        }
        if ks.is_empty() {
            return h.iter().position(|&v| v > 0).unwrap() as u8;
        }
        (ks.iter().sum::<usize>() / ks.len()) as u8
    }

    #[test]
    fn bimodal_threshold_matches_brute_force() {
        let mut h = [0u64; 256];
        h[50] = 100;
        h[200] = 100;
        let th = otsu_threshold(&h).unwrap();
        assert!((50..=199).contains(&th));
        assert_eq!(th, brute_force(&h));
        assert_eq!(th, 124);
    }

    #[test]
    fn constant_histogram() {
        let mut h = [0u64; 256];
        h[128] = 77;
        assert_eq!(otsu_threshold(&h).unwrap(), 128);
    }

    #[test]
    fn extremes_tie_average() {
        let mut h = [0u64; 256];
        h[0] = 3;
        h[255] = 5;
        assert_eq!(otsu_threshold(&h).unwrap(), brute_force(&h));
        assert_eq!(otsu_threshold(&h).unwrap(), 127);
    }

    #[test]
    fn empty_histogram_errors() {
        assert!(otsu_threshold(&[0u64; 256]).is_err());
    }

    #[test]
    fn random_patches_match_brute_force() {
        let mut rng = crate::rng::Seed(17).rng();
        for _ in 0..50 {
            let lo = rng.below(200);
            let span = 1 + rng.below(56);
            let mut h = [0u64; 256];
            for _ in 0..256 {
                h[(lo + rng.below(span)) as usize] += 1;
            }
            assert_eq!(otsu_threshold(&h).unwrap(), brute_force(&h));
        }
    }

    #[test]
    fn adt_examples() {
        let flat = Raster::filled(16, 16, 3, 90).unwrap();
        assert_eq!(adt_classify(&flat, 1).label(), Label::N);
        let mut line = Raster::filled(16, 16, 1, 240).unwrap();
        for y in 0..16 {
            line.set(7, y, 0, 10);
        }
        assert_eq!(adt_classify(&line, 1).label(), Label::P);
        assert_eq!(adt_classify(&line, 17).label(), Label::N);
    }
}
