//! On-disk frame sequences: a directory of images plus `sequence.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FrameMeta;
use crate::error::{Error, Result};
use crate::raster::{image_read, image_write, Raster};

pub const SEQUENCE_FILE: &str = "sequence.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFrame {
    /// Image path relative to the sequence directory.
    pub file: PathBuf,
    pub meta: FrameMeta,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub frames: Vec<SequenceFrame>,
}

impl SequenceManifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(SEQUENCE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Load every frame image, in manifest order.
    pub fn load_frames(&self, dir: impl AsRef<Path>) -> Result<Vec<(Raster, FrameMeta)>> {
        let dir = dir.as_ref();
        self.frames
            .iter()
            .map(|f| Ok((image_read(dir.join(&f.file))?, f.meta)))
            .collect()
    }
}

/// Write frames as `frame_NNN.pgm|ppm` with a `sequence.json` index.
pub fn write_sequence(dir: impl AsRef<Path>, frames: &[Raster], meta: &[FrameMeta]) -> Result<SequenceManifest> {
    let dir = dir.as_ref();
    if frames.len() != meta.len() {
        return Err(Error::invalid(format!("{} frames but {} metadata records", frames.len(), meta.len())));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = SequenceManifest::default();
    for (i, (r, m)) in frames.iter().zip(meta).enumerate() {
        let ext = if r.channels() == 1 { "pgm" } else { "ppm" };
        let file = PathBuf::from(format!("frame_{i:03}.{ext}"));
        image_write(r, dir.join(&file))?;
        manifest.frames.push(SequenceFrame { file, meta: *m });
    }
    let path = dir.join(SEQUENCE_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![Raster::filled(4, 3, 1, 9).unwrap(), Raster::filled(4, 3, 3, 7).unwrap()];
        let meta: Vec<FrameMeta> = (0..2)
            .map(|i| FrameMeta {
                frame_index: i,
                strain: i as f64 * 0.01,
                lvdt_mm: Some(0.1),
                gauge_length_m: 0.1,
                load_kn: None,
                mm_per_pixel: 0.05,
            })
            .collect();
        let written = write_sequence(dir.path(), &frames, &meta).unwrap();
        let read = SequenceManifest::read(dir.path()).unwrap();
        assert_eq!(written, read);
        let loaded = read.load_frames(dir.path()).unwrap();
        assert_eq!(loaded[1].0, frames[1]);
        assert_eq!(loaded[0].1, meta[0]);
    }
}
