//! Trough following inside a localized cracking zone.

use serde::{Deserialize, Serialize};

use super::{CrackPolyline, Lcz, PixelRect};
use crate::error::Result;
use crate::filter::{blur_plane, gaussian_kernel};
use crate::raster::{contrast_stretch, to_grayscale, Raster, TileGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    /// Minima must lie below `mean - k * std` of the enhanced patch.
    pub k: f64,
    /// Largest step between consecutive chain points, in pixels.
    pub delta: f64,
    /// Shortest chain kept, in pixels; `None` means two thirds of the window.
    pub min_len: Option<f64>,
    /// Gaussian pre-smoothing; 0 disables it.
    pub smooth_sigma: f64,
    pub stretch_low: f64,
    pub stretch_high: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            delta: 3.0,
            min_len: None,
            smooth_sigma: 1.0,
            stretch_low: 1.0,
            stretch_high: 99.0,
        }
    }
}

impl TraceParams {
    pub fn min_len_for(&self, window: usize) -> f64 {
        self.min_len.unwrap_or(2.0 * window as f64 / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    /// One scan per row, minima along x; follows cracks running along y.
    Rows,
    /// One scan per column, minima along y.
    Cols,
}

struct Patch {
    rect: PixelRect,
    values: Vec<f64>,
    member: Vec<bool>,
}

impl Patch {
    fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.rect.w + x]
    }

    fn is_member(&self, x: usize, y: usize) -> bool {
        self.member[y * self.rect.w + x]
    }
}

#[derive(Debug)]
struct Chain {
    points: Vec<(f64, f64)>,
    last_line: usize,
}

impl Chain {
    fn length(&self) -> f64 {
        path_length(&self.points)
    }
}

pub(crate) fn path_length(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum()
}

fn enhanced_patch(raster: &Raster, grid: &TileGrid, lcz: &Lcz, params: &TraceParams) -> Result<Patch> {
    let rect = lcz.bbox;
    let gray = to_grayscale(&raster.crop(rect.x, rect.y, rect.w, rect.h)?);
    let stretched = contrast_stretch(&gray, params.stretch_low, params.stretch_high)?;
    let plane: Vec<f64> = stretched.samples().iter().map(|&v| v as f64).collect();
    let values = if params.smooth_sigma > 0.0 {
        blur_plane(&plane, rect.w, rect.h, &gaussian_kernel(params.smooth_sigma))
    } else {
        plane
    };
    let mut member = vec![false; rect.w * rect.h];
    for &(r, c) in &lcz.cells {
        let (tx, ty) = grid.tile_origin(r, c);
        for y in ty..ty + grid.window {
            let row = (y - rect.y) * rect.w;
            for x in tx..tx + grid.window {
                member[row + x - rect.x] = true;
            }
        }
    }
    Ok(Patch {
        rect,
        values,
        member,
    })
}

/// Positions along one scan line that are below `thr`, minimal within
/// `radius` on both sides (ties go to the first), and inside member cells.
fn line_minima(patch: &Patch, sweep: Sweep, line: usize, thr: f64, radius: usize) -> Vec<usize> {
    let len = match sweep {
        Sweep::Rows => patch.rect.w,
        Sweep::Cols => patch.rect.h,
    };
    let at = |p: usize| match sweep {
        Sweep::Rows => (p, line),
        Sweep::Cols => (line, p),
    };
    let val = |p: usize| {
        let (x, y) = at(p);
        patch.get(x, y)
    };
    let mut out = Vec::new();
    for p in 0..len {
        let v = val(p);
        let (x, y) = at(p);
        if v >= thr || !patch.is_member(x, y) {
            continue;
        }
        let lo = p.saturating_sub(radius);
        let hi = (p + radius).min(len - 1);
        let is_min = (lo..p).all(|q| val(q) > v) && (p + 1..=hi).all(|q| val(q) >= v);
        if is_min {
            out.push(p);
        }
    }
    out
}

/// Greedy nearest-first linking of per-line minima into chains.
fn link(minima: &[Vec<usize>], sweep: Sweep, rect: PixelRect, delta: f64) -> Vec<Chain> {
    let gap = delta.floor().max(1.0) as usize;
    let to_xy = |line: usize, pos: usize| match sweep {
        Sweep::Rows => ((rect.x + pos) as f64, (rect.y + line) as f64),
        Sweep::Cols => ((rect.x + line) as f64, (rect.y + pos) as f64),
    };
    let mut active: Vec<Chain> = Vec::new();
    let mut done: Vec<Chain> = Vec::new();
    for (line, mins) in minima.iter().enumerate() {
        let (stale, live): (Vec<Chain>, Vec<Chain>) = active
            .into_iter()
            .partition(|c| c.last_line + gap < line);
        done.extend(stale);
        active = live;

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ci, c) in active.iter().enumerate() {
            let last = *c.points.last().expect("chains are non-empty");
            for (mi, &pos) in mins.iter().enumerate() {
                let p = to_xy(line, pos);
                let d = ((p.0 - last.0).powi(2) + (p.1 - last.1).powi(2)).sqrt();
                if d <= delta {
                    pairs.push((d, ci, mi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut chain_used = vec![false; active.len()];
        let mut min_used = vec![false; mins.len()];
        for (_, ci, mi) in pairs {
            if chain_used[ci] || min_used[mi] {
                continue;
            }
            chain_used[ci] = true;
            min_used[mi] = true;
            active[ci].points.push(to_xy(line, mins[mi]));
            active[ci].last_line = line;
        }
        for (mi, &pos) in mins.iter().enumerate() {
            if !min_used[mi] {
                active.push(Chain {
                    points: vec![to_xy(line, pos)],
                    last_line: line,
                });
            }
        }
    }
    done.extend(active);
    done
}

fn sweep_chains(patch: &Patch, sweep: Sweep, thr: f64, params: &TraceParams, min_len: f64) -> Vec<Chain> {
    let lines = match sweep {
        Sweep::Rows => patch.rect.h,
        Sweep::Cols => patch.rect.w,
    };
    let radius = params.delta.max(1.0) as usize;
    let minima: Vec<Vec<usize>> = (0..lines)
        .map(|l| line_minima(patch, sweep, l, thr, radius))
        .collect();
    let mut chains: Vec<Chain> = link(&minima, sweep, patch.rect, params.delta)
        .into_iter()
        .filter(|c| c.length() >= min_len)
        .collect();
    chains.sort_by(|a, b| {
        a.points[0]
            .1
            .total_cmp(&b.points[0].1)
            .then(a.points[0].0.total_cmp(&b.points[0].0))
    });
    chains
}

/// Dark-trough centerlines inside one LCZ, in frame pixel coordinates.
/// Both sweep orientations are tried and the one with the larger total
/// chain length is kept (rows win ties).
pub fn trace_cracks(
    raster: &Raster,
    grid: &TileGrid,
    lcz: &Lcz,
    params: &TraceParams,
) -> Result<Vec<CrackPolyline>> {
    let patch = enhanced_patch(raster, grid, lcz, params)?;
    let inside: Vec<f64> = patch
        .values
        .iter()
        .zip(&patch.member)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    let n = inside.len() as f64;
    let mean = inside.iter().sum::<f64>() / n;
    let std = (inside.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let thr = mean - params.k * std;
    let min_len = params.min_len_for(grid.window);

    let rows = sweep_chains(&patch, Sweep::Rows, thr, params, min_len);
    let cols = sweep_chains(&patch, Sweep::Cols, thr, params, min_len);
    let total = |cs: &[Chain]| cs.iter().map(Chain::length).sum::<f64>();
    let best = if total(&cols) > total(&rows) { cols } else { rows };
    Ok(best
        .into_iter()
        .map(|c| CrackPolyline::new(c.points))
        .collect())
}

/// Join polylines whose endpoints lie within `delta` of each other, until no
/// such pair remains. Pairs are taken in index order.
pub fn merge_polylines(mut polys: Vec<CrackPolyline>, delta: f64) -> Vec<CrackPolyline> {
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    'outer: loop {
        for i in 0..polys.len() {
            for j in i + 1..polys.len() {
                let (a, b) = (&polys[i].points, &polys[j].points);
                let (a0, a1) = (a[0], *a.last().unwrap());
                let (b0, b1) = (b[0], *b.last().unwrap());
                let joined: Option<Vec<(f64, f64)>> = if dist(a1, b0) <= delta {
                    Some(a.iter().chain(b.iter()).copied().collect())
                } else if dist(b1, a0) <= delta {
                    Some(b.iter().chain(a.iter()).copied().collect())
                } else if dist(a1, b1) <= delta {
                    Some(a.iter().chain(b.iter().rev()).copied().collect())
                } else if dist(a0, b0) <= delta {
                    Some(a.iter().rev().chain(b.iter()).copied().collect())
                } else {
                    None
                };
                if let Some(points) = joined {
                    polys[i] = CrackPolyline::new(points);
                    polys.remove(j);
                    continue 'outer;
                }
            }
        }
        return polys;
    }
}
