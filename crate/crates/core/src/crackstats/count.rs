//! Crack number by scan-line crossings.

use serde::{Deserialize, Serialize};

use super::{CrackPolyline, PixelRect};
use crate::error::{Error, Result};

/// Direction of the applied tension. Cracks run across it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadingAxis {
    /// Tension along x; cracks are roughly vertical.
    #[default]
    Horizontal,
    /// Tension along y; cracks are roughly horizontal.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrackCount {
    /// Mean crossings per scan line.
    pub real: f64,
    /// `real` rounded half up.
    pub int: u64,
}

/// Mean number of polyline crossings over `k` scan lines parallel to the
/// loading axis, placed at the centers of `k` equal bands across `region`
/// (pixel-center coordinates). A segment crosses line `c` when its endpoints
/// fall on different sides of the split `< c | >= c`; a polyline ending
/// exactly on the line also counts once.
pub fn crack_number(
    polylines: &[CrackPolyline],
    region: PixelRect,
    k: usize,
    axis: LoadingAxis,
) -> Result<CrackCount> {
    let extent = match axis {
        LoadingAxis::Horizontal => region.h,
        LoadingAxis::Vertical => region.w,
    };
    if k == 0 || k > extent {
        return Err(Error::invalid(format!(
            "{k} scan lines for a region {extent} px across"
        )));
    }
    let start = match axis {
        LoadingAxis::Horizontal => region.y,
        LoadingAxis::Vertical => region.x,
    } as f64;
    let mut crossings = 0u64;
    for i in 0..k {
        let c = start - 0.5 + (i as f64 + 0.5) * extent as f64 / k as f64;
        for poly in polylines {
            let coord: Vec<f64> = poly
                .points
                .iter()
                .map(|p| match axis {
                    LoadingAxis::Horizontal => p.1,
                    LoadingAxis::Vertical => p.0,
                })
                .collect();
            crossings += coord.windows(2).filter(|s| (s[0] < c) != (s[1] < c)).count() as u64;
            // an end resting on the line from the upper side still touches it
            if let [first, second, ..] = coord[..] {
                crossings += (first == c && second > c) as u64;
            }
            if let [.., before, last] = coord[..] {
                crossings += (last == c && before > c) as u64;
            }
        }
    }
    let real = crossings as f64 / k as f64;
    Ok(CrackCount {
        real,
        int: (real + 0.5).floor() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical(x: f64, y0: f64, y1: f64) -> CrackPolyline {
        CrackPolyline::new(vec![(x, y0), (x + 1.0, (y0 + y1) / 2.0), (x, y1)])
    }

    #[test]
    fn full_width_cracks_count_exactly_for_any_k() {
        let region = PixelRect { x: 0, y: 0, w: 300, h: 100 };
        let polys = vec![vertical(20.0, 0.0, 99.0), vertical(150.0, 0.0, 99.0), vertical(280.0, 0.0, 99.0)];
        for k in 1..=100 {
            let n = crack_number(&polys, region, k, LoadingAxis::Horizontal).unwrap();
            assert_eq!(n.real, 3.0);
            assert_eq!(n.int, 3);
        }
    }

    #[test]
    fn half_span_crack_counts_half() {
        let region = PixelRect { x: 0, y: 0, w: 300, h: 100 };
        let polys = vec![vertical(40.0, 0.0, 50.0)];
        let n = crack_number(&polys, region, 10, LoadingAxis::Horizontal).unwrap();
        assert_eq!(n.real, 0.5);
        assert_eq!(n.int, 1);
    }

    #[test]
    fn empty_and_invalid() {
        let region = PixelRect { x: 0, y: 0, w: 30, h: 4 };
        assert_eq!(crack_number(&[], region, 3, LoadingAxis::Horizontal).unwrap().real, 0.0);
        assert!(crack_number(&[], region, 5, LoadingAxis::Horizontal).is_err());
        assert!(crack_number(&[], region, 5, LoadingAxis::Vertical).is_ok());
        assert!(crack_number(&[], region, 0, LoadingAxis::Vertical).is_err());
    }
}
