//! Digital degradations of tiles: salt-and-pepper noise, partial hiding by
//! translation, Gaussian blur and saturation changes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Label, Provenance, SegmentRecord, TileRef, TileResolver};
use crate::error::{Error, Result};
use crate::filter::{blur_plane, gaussian_kernel};
use crate::raster::{luma, quantize, Raster};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModificationKind {
    SaltPepper,
    Hide,
    Blur,
    Desaturate,
}

impl ModificationKind {
    pub const ALL: [ModificationKind; 4] = [
        ModificationKind::SaltPepper,
        ModificationKind::Hide,
        ModificationKind::Blur,
        ModificationKind::Desaturate,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModificationKind::SaltPepper => "saltpepper",
            ModificationKind::Hide => "hide",
            ModificationKind::Blur => "blur",
            ModificationKind::Desaturate => "desaturate",
        }
    }
}

impl fmt::Display for ModificationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModificationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModificationKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown modification kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModificationSpec {
    pub kind: ModificationKind,
    pub salt_pepper_density: f64,
    pub hide_max_frac_x: f64,
    pub hide_max_frac_y: f64,
    pub blur_sigma_max: f64,
    pub sat_low: f64,
    pub sat_high: f64,
}

impl ModificationSpec {
    pub fn new(kind: ModificationKind) -> Self {
        Self {
            kind,
            salt_pepper_density: 0.15,
            hide_max_frac_x: 0.2,
            hide_max_frac_y: 0.2,
            blur_sigma_max: 3.0,
            sat_low: -0.5,
            sat_high: 1.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.salt_pepper_density)
            && (0.0..1.0).contains(&self.hide_max_frac_x)
            && (0.0..1.0).contains(&self.hide_max_frac_y)
            && self.blur_sigma_max >= 0.0
            && self.blur_sigma_max.is_finite()
            && self.sat_low <= self.sat_high;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid modification spec {self:?}")))
        }
    }
}

/// Apply one modification. Identical inputs and seed give identical output.
pub fn modify(raster: &Raster, spec: &ModificationSpec, seed: Seed) -> Result<Raster> {
    spec.validate()?;
    let mut rng = seed.rng();
    match spec.kind {
        ModificationKind::SaltPepper => {
            let mut out = raster.clone();
            let ch = raster.channels();
            for px in out.samples_mut().chunks_exact_mut(ch) {
                if rng.next_f64() < spec.salt_pepper_density {
                    let v = if rng.coin() { 255 } else { 0 };
                    px.fill(v);
                }
            }
            Ok(out)
        }
        ModificationKind::Hide => {
            let (w, h) = (raster.width(), raster.height());
            let dx = quantize_shift(rng.uniform(0.0, spec.hide_max_frac_x) * w as f64);
            let dy = quantize_shift(rng.uniform(0.0, spec.hide_max_frac_y) * h as f64);
            Ok(translate(raster, dx, dy))
        }
        ModificationKind::Blur => {
            let sigma = rng.uniform(0.0, spec.blur_sigma_max);
            Ok(gaussian_blur(raster, sigma))
        }
        ModificationKind::Desaturate => {
            if raster.channels() != 3 {
                return Err(Error::invalid("desaturate needs a 3-channel raster"));
            }
            let s = rng.uniform(spec.sat_low, spec.sat_high);
            Ok(blend_saturation(raster, s))
        }
    }
}

fn quantize_shift(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

/// Shift content by (`dx`, `dy`) toward +x/+y, filling the vacated band with 0.
pub fn translate(raster: &Raster, dx: usize, dy: usize) -> Raster {
    let (w, h, ch) = (raster.width(), raster.height(), raster.channels());
    let mut out = Raster::filled(w, h, ch, 0).expect("same shape as input");
    for y in dy..h {
        for x in dx..w {
            let src = raster.index(x - dx, y - dy, 0);
            let dst = raster.index(x, y, 0);
            out.samples_mut()[dst..dst + ch].copy_from_slice(&raster.samples()[src..src + ch]);
        }
    }
    out
}

/// Per-channel separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(raster: &Raster, sigma: f64) -> Raster {
    if sigma < 1e-6 {
        return raster.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h, ch) = (raster.width(), raster.height(), raster.channels());
    let mut out = raster.clone();
    for c in 0..ch {
        let plane: Vec<f64> = (0..w * h)
            .map(|i| raster.samples()[i * ch + c] as f64)
            .collect();
        let blurred = blur_plane(&plane, w, h, &kernel);
        for (i, v) in blurred.into_iter().enumerate() {
            out.samples_mut()[i * ch + c] = quantize(v);
        }
    }
    out
}

/// `gray + s * (orig - gray)` per channel; `s = 0` is grayscale, `s = 1` identity.
pub fn blend_saturation(raster: &Raster, s: f64) -> Raster {
    let mut out = raster.clone();
    for px in out.samples_mut().chunks_exact_mut(3) {
        let g = luma(px[0], px[1], px[2]) as f64;
        for v in px.iter_mut() {
            *v = quantize(g + s * (*v as f64 - g));
        }
    }
    out
}

/// Result of [`expand_dataset`]: the combined manifest. Modified tiles are
/// held in memory (`TileRef::Memory`) until materialized.
pub fn expand_dataset<F>(
    manifest: &DatasetManifest,
    n_p: usize,
    n_n: usize,
    center_predicate: F,
    resolver: &TileResolver,
    seed: Seed,
) -> Result<DatasetManifest>
where
    F: Fn(usize, &SegmentRecord) -> bool,
{
    let eligible = |label: Label| -> Vec<usize> {
        manifest
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| r.label == label && center_predicate(*i, r))
            .map(|(i, _)| i)
            .collect()
    };
    let elig_p = eligible(Label::P);
    let elig_n = eligible(Label::N);
    if elig_p.len() < n_p {
        return Err(Error::Dataset(format!(
            "need {n_p} eligible P tiles, have {}",
            elig_p.len()
        )));
    }
    if elig_n.len() < n_n {
        return Err(Error::Dataset(format!(
            "need {n_n} eligible N tiles, have {}",
            elig_n.len()
        )));
    }

    let mut out = manifest.clone();
    for (class_idx, (pool, n)) in [(elig_p, n_p), (elig_n, n_n)].into_iter().enumerate() {
        let class_seed = seed.derive(class_idx as u64);
        let picks = class_seed.rng().sample_indices(pool.len(), n);
        for (j, pick) in picks.into_iter().enumerate() {
            let src = &manifest.records[pool[pick]];
            let tile = resolver.load_record(manifest, pool[pick])?;
            let sub = class_seed.derive(1 + j as u64);
            let mut rng = sub.rng();
            let kinds: &[ModificationKind] = if tile.channels() == 3 {
                &ModificationKind::ALL
            } else {
                &ModificationKind::ALL[..3]
            };
            let kind = kinds[rng.below(kinds.len() as u64) as usize];
            let modified = modify(&tile, &ModificationSpec::new(kind), Seed(rng.next_u64()))?;
            out.records.push(SegmentRecord {
                tile: TileRef::Memory(Arc::new(modified)),
                label: src.label,
                provenance: Provenance::Modified(kind),
                source: src.source.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(w: usize, h: usize, ch: usize, seed: u64) -> Raster {
        let mut rng = Seed(seed).rng();
        let s = (0..w * h * ch).map(|_| rng.below(256) as u8).collect();
        Raster::new(w, h, ch, s).unwrap()
    }

    #[test]
    fn salt_pepper_fraction_in_band() {
        let tile = Raster::filled(227, 227, 1, 128).unwrap();
        let spec = ModificationSpec::new(ModificationKind::SaltPepper);
        let out = modify(&tile, &spec, Seed(3)).unwrap();
        let altered = out.samples().iter().filter(|&&v| v != 128).count();
        let frac = altered as f64 / (227.0 * 227.0);
        assert!((0.13..=0.17).contains(&frac), "{frac}");
        assert!(out.samples().iter().all(|&v| v == 0 || v == 128 || v == 255));
    }

    #[test]
    fn salt_pepper_sets_all_channels_together() {
        let tile = Raster::filled(50, 50, 3, 100).unwrap();
        let out = modify(
            &tile,
            &ModificationSpec::new(ModificationKind::SaltPepper),
            Seed(1),
        )
        .unwrap();
        for px in out.samples().chunks_exact(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }

    #[test]
    fn zero_sigma_blur_is_identity() {
        let tile = noisy(31, 17, 3, 4);
        let mut spec = ModificationSpec::new(ModificationKind::Blur);
        spec.blur_sigma_max = 0.0;
        assert_eq!(modify(&tile, &spec, Seed(9)).unwrap(), tile);
    }

    #[test]
    fn blur_keeps_constant_image() {
        let tile = Raster::filled(40, 30, 1, 173).unwrap();
        for sigma in [0.5, 1.7, 3.0, 12.0] {
            assert_eq!(gaussian_blur(&tile, sigma), tile);
        }
    }

    #[test]
    fn desaturate_endpoints() {
        let tile = noisy(20, 20, 3, 5);
        let mut spec = ModificationSpec::new(ModificationKind::Desaturate);
        spec.sat_low = 0.0;
        spec.sat_high = 0.0;
        let gray = crate::raster::to_grayscale(&tile).replicate3();
        assert_eq!(modify(&tile, &spec, Seed(1)).unwrap(), gray);
        spec.sat_low = 1.0;
        spec.sat_high = 1.0;
        assert_eq!(modify(&tile, &spec, Seed(1)).unwrap(), tile);
    }

    #[test]
    fn desaturate_rejects_gray() {
        let tile = Raster::filled(4, 4, 1, 3).unwrap();
        let spec = ModificationSpec::new(ModificationKind::Desaturate);
        assert!(modify(&tile, &spec, Seed(1)).is_err());
    }

    #[test]
    fn hide_translates_with_black_fill() {
        let tile = Raster::filled(10, 10, 1, 200).unwrap();
        let out = translate(&tile, 2, 3);
        assert_eq!(out.get(1, 5, 0), 0);
        assert_eq!(out.get(5, 2, 0), 0);
        assert_eq!(out.get(2, 3, 0), 200);
        let spec = ModificationSpec::new(ModificationKind::Hide);
        let out = modify(&tile, &spec, Seed(11)).unwrap();
        // never shifts by more than 20% of the side
        assert_eq!(out.get(9, 9, 0), 200);
    }

    #[test]
    fn modify_is_deterministic() {
        let tile = noisy(33, 29, 3, 8);
        for kind in ModificationKind::ALL {
            let spec = ModificationSpec::new(kind);
            assert_eq!(
                modify(&tile, &spec, Seed(77)).unwrap(),
                modify(&tile, &spec, Seed(77)).unwrap()
            );
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = ModificationSpec::new(ModificationKind::SaltPepper);
        spec.salt_pepper_density = 1.5;
        assert!(modify(&Raster::filled(2, 2, 1, 0).unwrap(), &spec, Seed(0)).is_err());
    }

    #[test]
    fn kind_round_trips_through_tag() {
        for k in ModificationKind::ALL {
            assert_eq!(k.tag().parse::<ModificationKind>().unwrap(), k);
        }
    }
}
