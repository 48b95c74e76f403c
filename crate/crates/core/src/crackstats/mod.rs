//! Frame-level crack statistics: window search, cracking-zone grouping,
//! crack tracing and counting, average crack width and crack density.

mod count;
mod sequence;
mod trace;

use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use count::{crack_number, CrackCount, LoadingAxis};
pub use sequence::{write_sequence, SequenceFrame, SequenceManifest, SEQUENCE_FILE};
pub use trace::{merge_polylines, trace_cracks, TraceParams};

use crate::classify::{Prediction, TileClassifier};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::raster::{tile, Raster, TileGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Per-window classification of a frame.
pub trait WindowClassifier: Sync {
    fn classify_window(&self, frame: &Raster, grid: &TileGrid, row: usize, col: usize) -> Result<Prediction>;
}

impl<T: TileClassifier> WindowClassifier for T {
    fn classify_window(&self, frame: &Raster, grid: &TileGrid, row: usize, col: usize) -> Result<Prediction> {
        self.predict(&grid.extract(frame, row, col)?)
    }
}

/// Known window labels, e.g. from synthetic ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub labels: Vec<Label>,
}

impl WindowClassifier for TruthGrid {
    fn classify_window(&self, _: &Raster, grid: &TileGrid, row: usize, col: usize) -> Result<Prediction> {
        if grid.rows != self.rows || grid.cols != self.cols {
            return Err(Error::Shape(format!(
                "truth grid {}x{} for a {}x{} window grid",
                self.rows, self.cols, grid.rows, grid.cols
            )));
        }
        Ok(Prediction::certain(self.labels[row * self.cols + col]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub grid: TileGrid,
    /// Row-major `(label, probP)`.
    pub cells: Vec<(Label, f64)>,
}

impl WindowGrid {
    pub fn label_at(&self, row: usize, col: usize) -> Label {
        self.cells[row * self.grid.cols + col].0
    }

    pub fn prob_at(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.grid.cols + col].1
    }

    pub fn positives(&self) -> usize {
        self.cells.iter().filter(|c| c.0 == Label::P).count()
    }
}

/// Classify every window of the stride-`window` lattice.
pub fn window_search(raster: &Raster, classifier: &dyn WindowClassifier, window: usize) -> Result<WindowGrid> {
    let grid = tile(raster, window)?;
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = classifier.classify_window(raster, &grid, i / grid.cols, i % grid.cols)?;
            Ok((p.label(), p.prob_p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowGrid { grid, cells })
}

/// Localized cracking zone: an 8-connected group of at least two P windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lcz {
    /// `(row, col)`, sorted.
    pub cells: Vec<(usize, usize)>,
    pub bbox: PixelRect,
}

pub fn group_lcz(wg: &WindowGrid) -> Vec<Lcz> {
    let (rows, cols) = (wg.grid.rows, wg.grid.cols);
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    for start in 0..rows * cols {
        if seen[start] || wg.cells[start].0 != Label::P {
            continue;
        }
        seen[start] = true;
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / cols, i % cols);
            cells.push((r, c));
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if !seen[j] && wg.cells[j].0 == Label::P {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if cells.len() < 2 {
            continue;
        }
        cells.sort_unstable();
        let min_r = cells.iter().map(|c| c.0).min().unwrap();
        let max_r = cells.iter().map(|c| c.0).max().unwrap();
        let min_c = cells.iter().map(|c| c.1).min().unwrap();
        let max_c = cells.iter().map(|c| c.1).max().unwrap();
        let (x, y) = wg.grid.tile_origin(min_r, min_c);
        let w = wg.grid.window;
        out.push(Lcz {
            cells,
            bbox: PixelRect {
                x,
                y,
                w: (max_c - min_c + 1) * w,
                h: (max_r - min_r + 1) * w,
            },
        });
    }
    out.sort_by_key(|l| {
        let min_r = l.cells[0].0;
        let min_c = l.cells.iter().map(|c| c.1).min().unwrap();
        (min_r, min_c)
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackPolyline {
    /// `(x, y)` pixel coordinates.
    pub points: Vec<(f64, f64)>,
    pub length_px: f64,
    pub length_mm: Option<f64>,
}

impl CrackPolyline {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        let length_px = trace::path_length(&points);
        Self {
            points,
            length_px,
            length_mm: None,
        }
    }

    pub fn with_scale(mut self, mm_per_pixel: f64) -> Self {
        self.length_mm = Some(self.length_px * mm_per_pixel);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_index: usize,
    pub strain: f64,
    /// LVDT displacement over the gauge length, mm.
    pub lvdt_mm: Option<f64>,
    pub gauge_length_m: f64,
    pub load_kn: Option<f64>,
    pub mm_per_pixel: f64,
}

impl FrameMeta {
    fn validate(&self) -> Result<()> {
        if !(self.gauge_length_m > 0.0) || !(self.mm_per_pixel > 0.0) {
            return Err(Error::invalid(format!(
                "frame {}: gauge length and pixel scale must be positive",
                self.frame_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsParams {
    pub window: usize,
    pub trace: TraceParams,
    pub scan_lines: usize,
    pub axis: LoadingAxis,
    /// Fail when the LVDT reading is missing instead of leaving ACW absent.
    pub require_acw: bool,
}

impl Default for StatsParams {
    fn default() -> Self {
        Self {
            window: 227,
            trace: TraceParams::default(),
            scan_lines: 5,
            axis: LoadingAxis::Horizontal,
            require_acw: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame_index: usize,
    pub crack_number: CrackCount,
    /// Average crack width in µm; absent below half a crack.
    pub acw_um: Option<f64>,
    pub cd_per_m: f64,
    pub lczs: Vec<Lcz>,
    pub polylines: Vec<CrackPolyline>,
}

/// Average crack width in µm from the LVDT displacement and crack number.
pub fn average_crack_width_um(lvdt_mm: f64, n: f64) -> Option<f64> {
    (n >= 0.5).then(|| lvdt_mm / n * 1000.0)
}

/// Cracks per metre of gauge length.
pub fn crack_density_per_m(n: f64, gauge_length_m: f64) -> f64 {
    n / gauge_length_m
}

pub fn frame_stats(
    raster: &Raster,
    classifier: &dyn WindowClassifier,
    meta: &FrameMeta,
    params: &StatsParams,
) -> Result<FrameStats> {
    meta.validate()?;
    if params.require_acw && meta.lvdt_mm.is_none() {
        return Err(Error::invalid(format!(
            "frame {}: LVDT displacement required for crack width",
            meta.frame_index
        )));
    }
    let wg = window_search(raster, classifier, params.window)?;
    let lczs = group_lcz(&wg);
    let mut polys = Vec::new();
    for lcz in &lczs {
        polys.extend(trace_cracks(raster, &wg.grid, lcz, &params.trace)?);
    }
    let polylines: Vec<CrackPolyline> = merge_polylines(polys, params.trace.delta)
        .into_iter()
        .map(|p| p.with_scale(meta.mm_per_pixel))
        .collect();
    let (cw, ch) = wg.grid.covered();
    let region = PixelRect {
        x: wg.grid.origin_x,
        y: wg.grid.origin_y,
        w: cw,
        h: ch,
    };
    let n = crack_number(&polylines, region, params.scan_lines, params.axis)?;
    Ok(FrameStats {
        frame_index: meta.frame_index,
        crack_number: n,
        acw_um: meta.lvdt_mm.and_then(|d| average_crack_width_um(d, n.real)),
        cd_per_m: crack_density_per_m(n.real, meta.gauge_length_m),
        lczs,
        polylines,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub frame_index: usize,
    pub strain: f64,
    pub load_kn: Option<f64>,
    pub crack_number_real: f64,
    pub crack_number_int: u64,
    pub acw_um: Option<f64>,
    pub cd_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesTable {
    pub rows: Vec<SeriesRow>,
    /// Traced polylines per frame, for pattern export.
    pub patterns: Vec<Vec<CrackPolyline>>,
}

const SERIES_HEADER: &str = "frameIndex,strain,load_kN,crackNumberReal,crackNumberInt,acw_um,cd_per_m";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl SeriesTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SERIES_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.frame_index,
                r.strain,
                opt(r.load_kn),
                r.crack_number_real,
                r.crack_number_int,
                opt(r.acw_um),
                r.cd_per_m
            ));
        }
        out
    }

    /// Parse rows written by [`SeriesTable::to_csv`]; patterns are not part
    /// of the CSV.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == SERIES_HEADER => {}
            _ => {
                return Err(Error::Manifest {
                    line: 1,
                    reason: format!("expected header {SERIES_HEADER}"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Manifest {
                line: i + 1,
                reason: format!("bad {what}"),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let opt_num = |s: &str, what: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, what).map(Some)
                }
            };
            rows.push(SeriesRow {
                frame_index: f[0].parse().map_err(|_| bad("frameIndex"))?,
                strain: num(f[1], "strain")?,
                load_kn: opt_num(f[2], "load_kN")?,
                crack_number_real: num(f[3], "crackNumberReal")?,
                crack_number_int: f[4].parse().map_err(|_| bad("crackNumberInt"))?,
                acw_um: opt_num(f[5], "acw_um")?,
                cd_per_m: num(f[6], "cd_per_m")?,
            });
        }
        Ok(Self {
            rows,
            patterns: Vec::new(),
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    /// `[{"frameIndex": i, "polylines": [[[x, y], ...], ...]}, ...]`
    pub fn pattern_json(&self) -> Result<String> {
        let frames: Vec<serde_json::Value> = self
            .rows
            .iter()
            .zip(&self.patterns)
            .map(|(r, polys)| {
                serde_json::json!({
                    "frameIndex": r.frame_index,
                    "polylines": polys
                        .iter()
                        .map(|p| p.points.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(serde_json::to_string_pretty(&frames)?)
    }

    pub fn strains(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.strain).collect()
    }

    pub fn crack_densities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cd_per_m).collect()
    }
}

/// Per-frame statistics for a strain-ordered sequence. Frames run in
/// parallel; rows keep input order.
pub fn series_stats(
    frames: &[(Raster, FrameMeta)],
    classifier: &dyn WindowClassifier,
    params: &StatsParams,
) -> Result<SeriesTable> {
    if frames.is_empty() {
        return Err(Error::Dataset("no frames".into()));
    }
    if let Some(w) = frames.windows(2).find(|w| !(w[1].1.strain >= w[0].1.strain)) {
        return Err(Error::Dataset(format!(
            "frames not ordered by strain: frame {} ({}) follows frame {} ({})",
            w[1].1.frame_index, w[1].1.strain, w[0].1.frame_index, w[0].1.strain
        )));
    }
    let stats = frames
        .par_iter()
        .map(|(r, m)| frame_stats(r, classifier, m, params))
        .collect::<Result<Vec<_>>>()?;
    let mut table = SeriesTable::default();
    for ((_, m), s) in frames.iter().zip(stats) {
        table.rows.push(SeriesRow {
            frame_index: m.frame_index,
            strain: m.strain,
            load_kn: m.load_kn,
            crack_number_real: s.crack_number.real,
            crack_number_int: s.crack_number.int,
            acw_um: s.acw_um,
            cd_per_m: s.cd_per_m,
        });
        table.patterns.push(s.polylines);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::AdtClassifier;
    use proptest::prelude::*;

    fn grid_of(rows: usize, cols: usize, positives: &[(usize, usize)]) -> WindowGrid {
        grid_of_w(rows, cols, 10, positives)
    }

    fn grid_of_w(rows: usize, cols: usize, window: usize, positives: &[(usize, usize)]) -> WindowGrid {
        let mut cells = vec![(Label::N, 0.0); rows * cols];
        for &(r, c) in positives {
            cells[r * cols + c] = (Label::P, 1.0);
        }
        WindowGrid {
            grid: TileGrid {
                window,
                rows,
                cols,
                origin_x: 0,
                origin_y: 0,
            },
            cells,
        }
    }

    #[test]
    fn lcz_examples() {
        assert_eq!(group_lcz(&grid_of(3, 3, &[(0, 0), (0, 1)])).len(), 1);
        assert!(group_lcz(&grid_of(3, 3, &[(1, 1)])).is_empty());
        let diag = group_lcz(&grid_of(3, 3, &[(0, 0), (1, 1)]));
        assert_eq!(diag.len(), 1);
        assert_eq!(diag[0].bbox, PixelRect { x: 0, y: 0, w: 20, h: 20 });
    }

    #[test]
    fn constant_frame_is_all_negative() {
        let frame = Raster::filled(50, 30, 1, 128).unwrap();
        let wg = window_search(&frame, &AdtClassifier::default(), 10).unwrap();
        assert_eq!((wg.grid.rows, wg.grid.cols), (3, 5));
        assert_eq!(wg.positives(), 0);
    }

    #[test]
    fn constant_lcz_traces_nothing() {
        let frame = Raster::filled(40, 40, 1, 90).unwrap();
        let wg = grid_of_w(2, 2, 20, &[(0, 0), (0, 1), (1, 1)]);
        let lcz = &group_lcz(&wg)[0];
        assert!(trace_cracks(&frame, &wg.grid, lcz, &TraceParams::default()).unwrap().is_empty());
    }

    fn striped(width: usize, height: usize, xs: &[usize]) -> Raster {
        let mut r = Raster::filled(width, height, 1, 200).unwrap();
        for y in 0..height {
            for &x0 in xs {
                for x in x0 - 1..=x0 + 1 {
                    r.set(x, y, 0, 40);
                }
            }
        }
        r
    }

    #[test]
    fn straight_line_is_traced() {
        let frame = striped(60, 60, &[25]);
        let wg = grid_of_w(2, 2, 30, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let polys = trace_cracks(&frame, &wg.grid, &group_lcz(&wg)[0], &TraceParams::default()).unwrap();
        assert_eq!(polys.len(), 1);
        let p = &polys[0];
        let rms = (p.points.iter().map(|q| (q.0 - 25.0).powi(2)).sum::<f64>() / p.points.len() as f64).sqrt();
        assert!(rms <= 2.0);
        assert!((p.length_px - 59.0).abs() / 59.0 <= 0.05, "{}", p.length_px);
    }

    #[test]
    fn parallel_lines_give_two_polylines() {
        let frame = striped(60, 60, &[12, 30]);
        let wg = grid_of_w(2, 2, 30, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let polys = trace_cracks(&frame, &wg.grid, &group_lcz(&wg)[0], &TraceParams::default()).unwrap();
        assert_eq!(polys.len(), 2);
    }

    #[test]
    fn width_and_density_arithmetic() {
        assert_eq!(average_crack_width_um(0.75, 10.0), Some(75.0));
        assert!((crack_density_per_m(4.85, 0.025) - 194.0).abs() < 1e-9);
        assert_eq!(average_crack_width_um(0.1, 0.0), None);
    }

    #[test]
    fn series_rejects_bad_input() {
        let p = StatsParams {
            window: 10,
            ..Default::default()
        };
        assert!(series_stats(&[], &AdtClassifier::default(), &p).is_err());
        let meta = |i: usize, s: f64| FrameMeta {
            frame_index: i,
            strain: s,
            lvdt_mm: Some(0.0),
            gauge_length_m: 0.05,
            load_kn: None,
            mm_per_pixel: 0.1,
        };
        let f = Raster::filled(20, 20, 1, 10).unwrap();
        let frames = vec![(f.clone(), meta(0, 0.002)), (f.clone(), meta(1, 0.001))];
        assert!(series_stats(&frames, &AdtClassifier::default(), &p).is_err());
        let one = series_stats(&frames[..1], &AdtClassifier::default(), &p).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.rows[0].acw_um, None);
        assert_eq!(SeriesTable::parse_csv(&one.to_csv()).unwrap().rows, one.rows);
    }

    proptest! {
        #[test]
        fn lcz_members_are_exactly_non_isolated_positives(bits in proptest::collection::vec(any::<bool>(), 20)) {
            let pos: Vec<(usize, usize)> = (0..20).filter(|&i| bits[i]).map(|i| (i / 5, i % 5)).collect();
            let wg = grid_of(4, 5, &pos);
            let lczs = group_lcz(&wg);
            let mut members: Vec<(usize, usize)> = lczs.iter().flat_map(|l| l.cells.clone()).collect();
            members.sort();
            let non_isolated: Vec<(usize, usize)> = pos
                .iter()
                .copied()
                .filter(|&(r, c)| pos.iter().any(|&(r2, c2)| (r, c) != (r2, c2) && r.abs_diff(r2) <= 1 && c.abs_diff(c2) <= 1))
                .collect();
            prop_assert_eq!(members, non_isolated);
        }
    }
}
