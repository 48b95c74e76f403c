//! Labeled tile manifests, class balancing and the train/validation/test
//! split protocol.
//!
//! Manifest files are UTF-8 text: a header line
//! `#crackscope-manifest v1 window=<px>` followed by one tab-separated record
//! per line: `path  row  col  label  provenance  source`. Standalone tile
//! files use `-` for row and col.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::augment::ModificationKind;
use crate::error::{Error, Result};
use crate::raster::{image_read, image_write, Raster};
use crate::rng::Seed;

const MANIFEST_MAGIC: &str = "#crackscope-manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    P,
    N,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::P
    }

    pub fn other(self) -> Label {
        match self {
            Label::P => Label::N,
            Label::N => Label::P,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::P => "P",
            Label::N => "N",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" | "p" => Ok(Label::P),
            "N" | "n" => Ok(Label::N),
            _ => Err(Error::invalid(format!("label must be P or N, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    Modified(ModificationKind),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Original => f.write_str("original"),
            Provenance::Modified(k) => write!(f, "modified:{k}"),
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "original" {
            return Ok(Provenance::Original);
        }
        match s.strip_prefix("modified:") {
            Some(kind) => Ok(Provenance::Modified(kind.parse()?)),
            None => Err(Error::invalid(format!("unknown provenance {s:?}"))),
        }
    }
}

/// Where a tile's pixels come from.
#[derive(Debug, Clone)]
pub enum TileRef {
    /// Window (`row`, `col`) of a larger image.
    Region { image: PathBuf, row: usize, col: usize },
    /// A standalone window-sized image file.
    File(PathBuf),
    /// Pixels held in memory (generated or modified tiles).
    Memory(Arc<Raster>),
}

impl PartialEq for TileRef {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                TileRef::Region { image, row, col },
                TileRef::Region {
                    image: i2,
                    row: r2,
                    col: c2,
                },
            ) => image == i2 && row == r2 && col == c2,
            (TileRef::File(a), TileRef::File(b)) => a == b,
            (TileRef::Memory(a), TileRef::Memory(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub tile: TileRef,
    pub label: Label,
    pub provenance: Provenance,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub window: usize,
    pub records: Vec<SegmentRecord>,
}

impl DatasetManifest {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    fn subset(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest {
            window: self.window,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("{MANIFEST_MAGIC} window={}\n", self.window);
        for (i, r) in self.records.iter().enumerate() {
            let (path, row, col) = match &r.tile {
                TileRef::Region { image, row, col } => {
                    (image.display().to_string(), row.to_string(), col.to_string())
                }
                TileRef::File(p) => (p.display().to_string(), "-".into(), "-".into()),
                TileRef::Memory(_) => {
                    return Err(Error::Dataset(format!(
                        "record {i} is an in-memory tile; materialize before saving"
                    )))
                }
            };
            if path.contains('\t') || r.source.contains('\t') {
                return Err(Error::Dataset(format!("record {i} contains a tab")));
            }
            out.push_str(&format!(
                "{path}\t{row}\t{col}\t{}\t{}\t{}\n",
                r.label, r.provenance, r.source
            ));
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Manifest {
            line: 1,
            reason: "empty file".into(),
        })?;
        let window = header
            .strip_prefix(MANIFEST_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("window="))
            .and_then(|w| w.parse::<usize>().ok())
            .filter(|&w| w > 0)
            .ok_or(Error::Manifest {
                line: 1,
                reason: format!("expected header \"{MANIFEST_MAGIC} window=<px>\""),
            })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Manifest {
                line: i + 1,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, got {}", fields.len())));
            }
            let tile = match (fields[1], fields[2]) {
                ("-", "-") => TileRef::File(fields[0].into()),
                (r, c) => TileRef::Region {
                    image: fields[0].into(),
                    row: r.parse().map_err(|_| bad(format!("bad row {r:?}")))?,
                    col: c.parse().map_err(|_| bad(format!("bad col {c:?}")))?,
                },
            };
            records.push(SegmentRecord {
                tile,
                label: fields[3].parse().map_err(|e: Error| bad(e.to_string()))?,
                provenance: fields[4].parse().map_err(|e: Error| bad(e.to_string()))?,
                source: fields[5].to_string(),
            });
        }
        Ok(Self { window, records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Write every in-memory tile into `dir` as PGM/PPM and point its record
    /// at the written file. Filenames are `tile_<index>.pgm|ppm`.
    pub fn materialize(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, r) in self.records.iter_mut().enumerate() {
            if let TileRef::Memory(raster) = &r.tile {
                let ext = if raster.channels() == 1 { "pgm" } else { "ppm" };
                let path = dir.join(format!("tile_{i:06}.{ext}"));
                image_write(raster, &path)?;
                r.tile = TileRef::File(path);
            }
        }
        Ok(())
    }
}

/// Loads tile pixels for records, caching whole source images.
#[derive(Debug, Default)]
pub struct TileResolver {
    base_dir: Option<PathBuf>,
    cache: Mutex<HashMap<PathBuf, Arc<Raster>>>,
}

impl TileResolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Relative paths are resolved against `dir`.
    pub fn with_base_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: Some(dir.into()),
            cache: Mutex::default(),
        }
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn image(&self, p: &Path) -> Result<Arc<Raster>> {
        let full = self.resolve_path(p);
        if let Some(r) = self.cache.lock().expect("cache lock").get(&full) {
            return Ok(r.clone());
        }
        let r = Arc::new(image_read(&full)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(full, r.clone());
        Ok(r)
    }

    pub fn load(&self, tile: &TileRef) -> Result<Raster> {
        self.load_windowed(tile, None)
    }

    /// Load a tile; regions are cut with the given window size.
    pub fn load_windowed(&self, tile: &TileRef, window: Option<usize>) -> Result<Raster> {
        match tile {
            TileRef::Memory(r) => Ok((**r).clone()),
            TileRef::File(p) => image_read(self.resolve_path(p)),
            TileRef::Region { image, row, col } => {
                let window = window.ok_or_else(|| {
                    Error::invalid("region tile references need the manifest window")
                })?;
                let img = self.image(image)?;
                img.crop(col * window, row * window, window, window)
            }
        }
    }

    pub fn load_record(&self, manifest: &DatasetManifest, index: usize) -> Result<Raster> {
        let rec = manifest
            .records
            .get(index)
            .ok_or_else(|| Error::invalid(format!("record {index} out of range")))?;
        let tile = self.load_windowed(&rec.tile, Some(manifest.window))?;
        if tile.width() != manifest.window || tile.height() != manifest.window {
            return Err(Error::Dataset(format!(
                "record {index}: tile is {}x{}, manifest window is {}",
                tile.width(),
                tile.height(),
                manifest.window
            )));
        }
        Ok(tile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_frac: f64,
    pub train_frac_of_remainder: f64,
    pub seed: Seed,
}

impl SplitSpec {
    pub fn new(seed: Seed) -> Self {
        Self {
            test_frac: 0.10,
            train_frac_of_remainder: 0.7,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

fn floor_frac(n: usize, frac: f64) -> usize {
    // absorbs representation error such as 0.7 * 450 = 314.99999...
    ((n as f64 * frac) + 1e-9).floor() as usize
}

/// Stratified three-way split. Within each partition records keep manifest order.
pub fn split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Split> {
    if !(spec.test_frac > 0.0 && spec.test_frac < 1.0)
        || !(spec.train_frac_of_remainder > 0.0 && spec.train_frac_of_remainder < 1.0)
    {
        return Err(Error::invalid(format!("split fractions out of (0,1): {spec:?}")));
    }
    if manifest.len() < 10 {
        return Err(Error::Dataset(format!(
            "split needs at least 10 records, got {}",
            manifest.len()
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (ci, label) in [Label::P, Label::N].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..manifest.len())
            .filter(|&i| manifest.records[i].label == label)
            .collect();
        if idx.is_empty() {
            return Err(Error::Dataset(format!("class {label} has no records")));
        }
        spec.seed.derive(ci as u64).rng().shuffle(&mut idx);
        let n_test = floor_frac(idx.len(), spec.test_frac);
        let n_train = floor_frac(idx.len() - n_test, spec.train_frac_of_remainder);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..n_test + n_train]);
        val.extend_from_slice(&idx[n_test + n_train..]);
    }
    for v in [&mut train, &mut val, &mut test] {
        v.sort_unstable();
    }
    Ok(Split {
        train: manifest.subset(&train),
        val: manifest.subset(&val),
        test: manifest.subset(&test),
    })
}

/// Subsample the majority class without replacement down to the minority count.
pub fn balance(manifest: &DatasetManifest, seed: Seed) -> Result<DatasetManifest> {
    let n_p = manifest.count(Label::P);
    let n_n = manifest.count(Label::N);
    let (minority, majority) = if n_p <= n_n {
        (n_p, Label::N)
    } else {
        (n_n, Label::P)
    };
    if minority == 0 {
        return Err(Error::Dataset("minority class is empty".into()));
    }
    let major_idx: Vec<usize> = (0..manifest.len())
        .filter(|&i| manifest.records[i].label == majority)
        .collect();
    let mut keep: Vec<bool> = manifest
        .records
        .iter()
        .map(|r| r.label != majority)
        .collect();
    for pick in seed.rng().sample_indices(major_idx.len(), minority) {
        keep[major_idx[pick]] = true;
    }
    let indices: Vec<usize> = (0..manifest.len()).filter(|&i| keep[i]).collect();
    Ok(manifest.subset(&indices))
}

pub fn annotate(window: usize, tiles: Vec<TileRef>, labels: &[Label], source: &str) -> Result<DatasetManifest> {
    if tiles.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} tiles but {} labels",
            tiles.len(),
            labels.len()
        )));
    }
    Ok(DatasetManifest {
        window,
        records: tiles
            .into_iter()
            .zip(labels)
            .map(|(tile, &label)| SegmentRecord {
                tile,
                label,
                provenance: Provenance::Original,
                source: source.to_string(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(n_p: usize, n_n: usize) -> DatasetManifest {
        let tiles = (0..n_p + n_n)
            .map(|i| TileRef::File(format!("t{i}.pgm").into()))
            .collect();
        let labels: Vec<Label> = (0..n_p + n_n)
            .map(|i| if i < n_p { Label::P } else { Label::N })
            .collect();
        annotate(227, tiles, &labels, "NC").unwrap()
    }

    #[test]
    fn split_counts_match_protocol() {
        let m = manifest(500, 500);
        let s = split(&m, &SplitSpec::new(Seed(1))).unwrap();
        assert_eq!(s.test.len(), 100);
        assert_eq!(s.test.count(Label::P), 50);
        assert_eq!(s.train.len(), 630);
        assert_eq!(s.val.len(), 270);
    }

    #[test]
    fn split_is_deterministic() {
        let m = manifest(40, 33);
        let a = split(&m, &SplitSpec::new(Seed(5))).unwrap();
        let b = split(&m, &SplitSpec::new(Seed(5))).unwrap();
        assert_eq!(a, b);
        let c = split(&m, &SplitSpec::new(Seed(6))).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_rejects_single_class_and_tiny() {
        assert!(split(&manifest(20, 0), &SplitSpec::new(Seed(1))).is_err());
        assert!(split(&manifest(4, 4), &SplitSpec::new(Seed(1))).is_err());
    }

    #[test]
    fn balance_examples() {
        let m = manifest(3852, 7876);
        let b = balance(&m, Seed(2)).unwrap();
        assert_eq!(b.count(Label::P), 3852);
        assert_eq!(b.count(Label::N), 3852);
        let even = manifest(10, 10);
        assert_eq!(balance(&even, Seed(2)).unwrap(), even);
        assert!(balance(&manifest(0, 5), Seed(2)).is_err());
    }

    #[test]
    fn annotate_examples() {
        let m = annotate(227, vec![TileRef::File("a.pgm".into())], &[Label::P], "NC").unwrap();
        assert_eq!(m.count(Label::P), 1);
        assert!(annotate(227, vec![], &[], "NC").unwrap().is_empty());
        let two = vec![TileRef::File("a".into()), TileRef::File("b".into())];
        assert!(annotate(227, two, &[Label::P], "NC").is_err());
    }

    #[test]
    fn manifest_text_round_trip() {
        let mut m = manifest(2, 1);
        m.records.push(SegmentRecord {
            tile: TileRef::Region {
                image: "frames/f0.pgm".into(),
                row: 1,
                col: 3,
            },
            label: Label::N,
            provenance: Provenance::Modified(ModificationKind::Blur),
            source: "synth".into(),
        });
        let text = m.to_text().unwrap();
        assert!(text.starts_with("#crackscope-manifest v1 window=227\n"));
        assert!(text.contains("frames/f0.pgm\t1\t3\tN\tmodified:blur\tsynth\n"));
        assert_eq!(DatasetManifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(DatasetManifest::parse("bogus\n").is_err());
        let bad = "#crackscope-manifest v1 window=227\na\t-\t-\tQ\toriginal\tNC\n";
        assert!(matches!(
            DatasetManifest::parse(bad),
            Err(Error::Manifest { line: 2, .. })
        ));
    }

    #[test]
    fn memory_tiles_must_be_materialized() {
        let mut m = DatasetManifest::new(2);
        m.records.push(SegmentRecord {
            tile: TileRef::Memory(Arc::new(Raster::filled(2, 2, 1, 9).unwrap())),
            label: Label::P,
            provenance: Provenance::Original,
            source: "synth".into(),
        });
        assert!(m.to_text().is_err());
        let dir = tempfile::tempdir().unwrap();
        m.materialize(dir.path()).unwrap();
        let r = TileResolver::new().load_record(&m, 0).unwrap();
        assert_eq!(r.samples(), &[9, 9, 9, 9]);
        assert!(m.to_text().is_ok());
    }

    proptest! {
        #[test]
        fn split_partitions_and_stratifies(n_p in 5usize..80, n_n in 5usize..80, seed in any::<u64>()) {
            let m = manifest(n_p, n_n);
            let s = split(&m, &SplitSpec::new(Seed(seed))).unwrap();
            let mut all: Vec<String> = [&s.train, &s.val, &s.test]
                .iter()
                .flat_map(|p| p.records.iter().map(|r| match &r.tile {
                    TileRef::File(p) => p.display().to_string(),
                    _ => unreachable!(),
                }))
                .collect();
            all.sort();
            let mut expect: Vec<String> = (0..n_p + n_n).map(|i| format!("t{i}.pgm")).collect();
            expect.sort();
            prop_assert_eq!(all, expect);
            for (label, n) in [(Label::P, n_p), (Label::N, n_n)] {
                let want = 0.1 * n as f64;
                prop_assert!((s.test.count(label) as f64 - want).abs() <= 1.0);
            }
        }

        #[test]
        fn balance_equalizes_and_is_submultiset(n_p in 1usize..60, n_n in 1usize..60, seed in any::<u64>()) {
            let m = manifest(n_p, n_n);
            let b = balance(&m, Seed(seed)).unwrap();
            prop_assert_eq!(b.count(Label::P), b.count(Label::N));
            prop_assert_eq!(b.count(Label::P), n_p.min(n_n));
            for r in &b.records {
                prop_assert!(m.records.contains(r));
            }
        }
    }
}
