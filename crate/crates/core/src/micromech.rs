//! Micromechanical crack spacing, strain decomposition and the empirical
//! crack-density and crack-width models fitted to measured series.
//!
//! Units: lengths in mm, stresses in MPa, moduli in GPa, crack density in 1/m.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnubbingForm {
    /// `2 (pi f / 2 + 1) / (4 + f^2)`
    #[default]
    Printed,
    /// `2 (1 + exp(pi f / 2)) / (4 + f^2)`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicromechParams {
    pub fiber_length_mm: f64,
    pub fiber_radius_mm: f64,
    pub fiber_fraction: f64,
    pub matrix_fraction: f64,
    pub matrix_modulus_gpa: f64,
    pub matrix_failure_strain: f64,
    pub bond_mpa: f64,
    pub snubbing_coefficient: f64,
    pub snubbing_form: SnubbingForm,
}

/// A PVA-fiber ECC mix: 12 mm x 40 µm fibers at 2 %, a 20 GPa matrix
/// cracking at 0.01 % strain, 4 MPa frictional bond.
impl Default for MicromechParams {
    fn default() -> Self {
        Self {
            fiber_length_mm: 12.0,
            fiber_radius_mm: 0.02,
            fiber_fraction: 0.02,
            matrix_fraction: 0.98,
            matrix_modulus_gpa: 20.0,
            matrix_failure_strain: 0.0001,
            bond_mpa: 4.0,
            snubbing_coefficient: 0.8,
            snubbing_form: SnubbingForm::Printed,
        }
    }
}

impl MicromechParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fiber length", self.fiber_length_mm),
            ("fiber radius", self.fiber_radius_mm),
            ("fiber volume fraction", self.fiber_fraction),
            ("matrix volume fraction", self.matrix_fraction),
            ("matrix modulus", self.matrix_modulus_gpa),
            ("matrix failure strain", self.matrix_failure_strain),
            ("interface bond", self.bond_mpa),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.snubbing_coefficient >= 0.0) {
            return Err(Error::invalid("snubbing coefficient must be non-negative"));
        }
        if self.fiber_fraction + self.matrix_fraction > 1.0 + 1e-9 {
            return Err(Error::invalid("volume fractions exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryOutputs {
    pub g: f64,
    pub lambda: f64,
    pub x_mm: f64,
    pub x_prime_mm: f64,
    pub cd_max_per_m: f64,
}

impl TheoryOutputs {
    pub fn to_text(&self) -> String {
        format!(
            "g={}\nlambda={}\nx_mm={}\nxprime_mm={}\ncdmax_per_m={}\n",
            self.g, self.lambda, self.x_mm, self.x_prime_mm, self.cd_max_per_m
        )
    }
}

pub fn snubbing_factor(f: f64, form: SnubbingForm) -> f64 {
    let num = match form {
        SnubbingForm::Printed => PI * f / 2.0 + 1.0,
        SnubbingForm::Exponential => 1.0 + (PI * f / 2.0).exp(),
    };
    2.0 * num / (4.0 + f * f)
}

/// Transfer distance in mm.
pub fn transfer_distance_mm(p: &MicromechParams) -> f64 {
    let em_mpa = p.matrix_modulus_gpa * 1000.0;
    p.matrix_fraction * em_mpa * p.matrix_failure_strain * p.fiber_radius_mm
        / (p.fiber_fraction * 2.0 * p.bond_mpa)
}

/// Crack spacing `x'` (mm) from `x`, `lambda` and the fiber length.
pub fn crack_spacing_mm(x_mm: f64, lambda: f64, fiber_length_mm: f64) -> Result<f64> {
    let lf = fiber_length_mm;
    let disc = lf * lf - 2.0 * PI * lf * lambda * x_mm;
    if disc < 0.0 {
        return Err(Error::SaturationViolated {
            x: x_mm,
            discriminant: disc,
        });
    }
    // (L - sqrt(L^2 - a)) / 2 == a / (2 (L + sqrt(L^2 - a))), stable for small a
    let a = 2.0 * PI * lf * lambda * x_mm;
    Ok(a / (2.0 * (lf + disc.sqrt())))
}

pub fn theory_outputs(p: &MicromechParams) -> Result<TheoryOutputs> {
    p.validate()?;
    let g = snubbing_factor(p.snubbing_coefficient, p.snubbing_form);
    let lambda = 4.0 / (PI * g);
    let x = transfer_distance_mm(p);
    let xp = crack_spacing_mm(x, lambda, p.fiber_length_mm)?;
    Ok(TheoryOutputs {
        g,
        lambda,
        x_mm: x,
        x_prime_mm: xp,
        cd_max_per_m: 1000.0 / (2.0 * xp),
    })
}

/// Total strain from `n` cracks of mean opening `avg_opening_mm` over a gauge
/// of `gauge_length_m`, plus an optional elastic part.
pub fn strain_from_cracks(n: f64, gauge_length_m: f64, avg_opening_mm: f64, elastic: Option<f64>) -> f64 {
    (n / gauge_length_m) * avg_opening_mm / 1000.0 + elastic.unwrap_or(0.0)
}

// ---------------------------------------------------------------------------
// Trilinear crack-density model

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrilinearParams {
    pub eps_cr: f64,
    pub eps_lcr: f64,
    pub cd_max: f64,
    pub r_squared: Option<f64>,
}

impl TrilinearParams {
    pub fn eval(&self, eps: f64) -> f64 {
        self.cd_max * ramp(eps, self.eps_cr, self.eps_lcr)
    }
}

/// Normalized shape: 0 up to `cr`, linear to 1 at `lcr`, then 1.
fn ramp(eps: f64, cr: f64, lcr: f64) -> f64 {
    if eps <= cr {
        0.0
    } else if eps >= lcr {
        1.0
    } else {
        (eps - cr) / (lcr - cr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cr: f64,
    lcr: f64,
    cd_max: f64,
    ss_res: f64,
}

impl Candidate {
    /// Lower residual first; ties by smaller `cr`, then smaller `lcr`.
    fn better_than(&self, other: &Candidate) -> bool {
        self.ss_res
            .total_cmp(&other.ss_res)
            .then(self.cr.total_cmp(&other.cr))
            .then(self.lcr.total_cmp(&other.lcr))
            .is_lt()
    }
}

/// Best `cd_max` for fixed breakpoints, with its residual.
fn solve_cd_max(x: &[f64], y: &[f64], cr: f64, lcr: f64) -> Option<Candidate> {
    if !(cr < lcr) {
        return None;
    }
    let (mut hy, mut hh) = (0.0, 0.0);
    for (&e, &v) in x.iter().zip(y) {
        let h = ramp(e, cr, lcr);
        hy += h * v;
        hh += h * h;
    }
    if hh == 0.0 {
        return None;
    }
    let cd_max = hy / hh;
    let ss_res = x
        .iter()
        .zip(y)
        .map(|(&e, &v)| (v - cd_max * ramp(e, cr, lcr)).powi(2))
        .sum();
    Some(Candidate {
        cr,
        lcr,
        cd_max,
        ss_res,
    })
}

fn grid_search(x: &[f64], y: &[f64], cr_axis: &[f64], lcr_axis: &[f64]) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for &cr in cr_axis {
        for &lcr in lcr_axis {
            if let Some(c) = solve_cd_max(x, y, cr, lcr) {
                if best.is_none_or(|b| c.better_than(&b)) {
                    best = Some(c);
                }
            }
        }
    }
    best
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Exact least squares over regime assignments of the sorted points: zero
/// regime `[0, a)`, ramp `[a, b)`, plateau `[b, n)`. With the ramp free as a
/// line and the plateau as a constant the problem separates; a solution is
/// kept only when its implied breakpoints respect the assignment.
fn polish(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<Candidate> {
    let n = x.len();
    let mut best: Option<Candidate> = None;
    for b in 1..n {
        let plateau = &y[b..];
        let cd_max = plateau.iter().sum::<f64>() / plateau.len() as f64;
        if !(cd_max > 0.0) {
            continue;
        }
        for a in 0..b.saturating_sub(1) {
            let (rx, ry) = (&x[a..b], &y[a..b]);
            let m = rx.len() as f64;
            let mx = rx.iter().sum::<f64>() / m;
            let my = ry.iter().sum::<f64>() / m;
            let sxx: f64 = rx.iter().map(|v| (v - mx).powi(2)).sum();
            if sxx == 0.0 {
                continue;
            }
            let sxy: f64 = rx.iter().zip(ry).map(|(u, v)| (u - mx) * (v - my)).sum();
            let s = sxy / sxx;
            if !(s > 0.0) {
                continue;
            }
            let t = my - s * mx;
            let cr = -t / s;
            let lcr = (cd_max - t) / s;
            let fits = cr >= lo.max(0.0)
                && lcr <= hi
                && cr < lcr
                && (a == 0 || x[a - 1] <= cr)
                && x[a] >= cr
                && x[b - 1] <= lcr
                && x[b] >= lcr;
            if !fits {
                continue;
            }
            let ss_res = x
                .iter()
                .zip(y)
                .map(|(&e, &v)| (v - cd_max * ramp(e, cr, lcr)).powi(2))
                .sum();
            let c = Candidate {
                cr,
                lcr,
                cd_max,
                ss_res,
            };
            if best.is_none_or(|bst| c.better_than(&bst)) {
                best = Some(c);
            }
        }
    }
    best
}

/// Compass search on the breakpoints, restarting from the coarsest scale
/// after every improvement so no single move of up to `2 * step` helps.
fn pattern_search(x: &[f64], y: &[f64], start: Candidate, step: f64, lo: f64, hi: f64) -> Candidate {
    let mut scales = vec![2.0 * step];
    while *scales.last().unwrap() > 1e-10 * (hi - lo) {
        let s = scales.last().unwrap() / 2.0;
        scales.push(s);
    }
    let mut best = start;
    let mut budget = 20_000;
    'restart: while budget > 0 {
        for &s in &scales {
            for (dc, dl) in [(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0), (-1.0, -1.0), (1.0, 1.0)] {
                budget -= 1;
                let cr = (best.cr + dc * s).clamp(lo, hi);
                let lcr = (best.lcr + dl * s).clamp(lo, hi);
                if let Some(c) = solve_cd_max(x, y, cr, lcr) {
                    if c.ss_res < best.ss_res {
                        best = c;
                        continue 'restart;
                    }
                }
            }
        }
        break;
    }
    best
}

/// Fit the trilinear crack-density model to `(strain, cd)` points.
///
/// A 50x50 grid over the observed strain range is refined tenfold around
/// its best cell, `cd_max` solved in closed form at each node. The result
/// is then compared against the exact piecewise least-squares solution,
/// the lower residual wins, and a local compass search finishes.
pub fn fit_trilinear(points: &[(f64, f64)]) -> Result<TrilinearParams> {
    if points.len() < 6 {
        return Err(Error::invalid(format!(
            "trilinear fit needs at least 6 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid("non-finite point"));
    }
    if points.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::invalid("strains must be non-decreasing"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (lo, hi) = (x[0], x[x.len() - 1]);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 || lo == hi {
        return Ok(TrilinearParams {
            eps_cr: lo,
            eps_lcr: hi,
            cd_max: mean,
            r_squared: None,
        });
    }

    let coarse = axis(lo, hi, 50);
    let step = (hi - lo) / 49.0;
    let mut best = grid_search(&x, &y, &coarse, &coarse)
        .ok_or_else(|| Error::Numeric("no admissible breakpoints on the grid".into()))?;
    let fine = |c: f64| -> Vec<f64> {
        axis(c - step, c + step, 21)
            .into_iter()
            .map(|v| v.clamp(lo, hi))
            .collect()
    };
    if let Some(r) = grid_search(&x, &y, &fine(best.cr), &fine(best.lcr)) {
        if r.better_than(&best) {
            best = r;
        }
    }
    if let Some(p) = polish(&x, &y, lo, hi) {
        if p.better_than(&best) {
            best = p;
        }
    }
    best = pattern_search(&x, &y, best, step / 10.0, lo, hi);
    Ok(TrilinearParams {
        eps_cr: best.cr,
        eps_lcr: best.lcr,
        cd_max: best.cd_max,
        r_squared: Some(1.0 - best.ss_res / ss_tot),
    })
}

/// Residual sum of squares of a trilinear model on the points.
pub fn trilinear_ss_res(points: &[(f64, f64)], m: &TrilinearParams) -> f64 {
    points.iter().map(|&(e, v)| (v - m.eval(e)).powi(2)).sum()
}

// ---------------------------------------------------------------------------
// Constant crack-width model

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantAcwFit {
    pub acw_constant_um: f64,
    pub window: (f64, f64),
    pub points_used: usize,
    /// Centered R² of the constant against the windowed points.
    pub r_squared: Option<f64>,
}

/// Least-squares constant (the mean) of the ACW values whose strain lies in
/// the closed `window`.
pub fn fit_constant_acw(points: &[(f64, f64)], window: (f64, f64)) -> Result<ConstantAcwFit> {
    let inside: Vec<f64> = points
        .iter()
        .filter(|p| p.0 >= window.0 && p.0 <= window.1)
        .map(|p| p.1)
        .collect();
    if inside.is_empty() {
        return Err(Error::invalid(format!(
            "no points with strain in [{}, {}]",
            window.0, window.1
        )));
    }
    if inside.len() < 3 {
        return Err(Error::invalid(format!(
            "constant fit needs at least 3 points in the window, got {}",
            inside.len()
        )));
    }
    let n = inside.len() as f64;
    let mean = inside.iter().sum::<f64>() / n;
    let ss_tot: f64 = inside.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res = ss_tot;
    Ok(ConstantAcwFit {
        acw_constant_um: mean,
        window,
        points_used: inside.len(),
        r_squared: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
    })
}

/// Divide strains by the limit of multiple cracking.
pub fn normalize_strain(points: &[(f64, f64)], eps_lcr: f64) -> Result<Vec<(f64, f64)>> {
    if !(eps_lcr > 0.0) {
        return Err(Error::invalid("limit strain must be positive"));
    }
    Ok(points.iter().map(|&(e, v)| (e / eps_lcr, v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageRatio {
    pub ratio: f64,
    /// Set once the observed density reaches the maximum.
    pub failure: bool,
}

pub fn damage_ratio(cd_observed: f64, cd_max: f64) -> Result<DamageRatio> {
    if !(cd_max > 0.0) {
        return Err(Error::invalid("maximum crack density must be positive"));
    }
    let ratio = cd_observed / cd_max;
    Ok(DamageRatio {
        ratio,
        failure: ratio >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use proptest::prelude::*;

    fn base() -> MicromechParams {
        MicromechParams::default()
    }

    #[test]
    fn snubbing_at_zero() {
        assert_eq!(snubbing_factor(0.0, SnubbingForm::Printed), 0.5);
        let mut p = base();
        p.snubbing_coefficient = 0.0;
        let t = theory_outputs(&p).unwrap();
        assert_eq!(t.g, 0.5);
        assert_eq!(t.lambda, 8.0 / PI);
        assert_eq!(snubbing_factor(0.0, SnubbingForm::Exponential), 1.0);
    }

    #[test]
    fn transfer_distance_units() {
        // 0.98 * 20000 * 0.0001 * 0.02 / (0.02 * 2 * 4) = 0.245 mm
        assert!((transfer_distance_mm(&base()) - 0.245).abs() < 1e-12);
    }

    #[test]
    fn small_x_asymptote() {
        let lambda = 8.0 / PI;
        for x in [1e-7, 1e-6, 1e-5] {
            let lf = 12.0;
            assert!(2.0 * PI * lambda * x / lf <= 1e-3);
            let xp = crack_spacing_mm(x, lambda, lf).unwrap();
            let approx = PI * lambda * x / 2.0;
            assert!((xp / approx - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn boundary_and_violation() {
        let lambda = 2.0;
        let lf = 10.0;
        let x = lf / (2.0 * PI * lambda);
        let xp = crack_spacing_mm(x, lambda, lf).unwrap();
        assert!((xp - lf / 2.0).abs() < 1e-12);
        assert!((1000.0 / (2.0 * xp) - 1000.0 / lf).abs() < 1e-9);
        assert!(matches!(
            crack_spacing_mm(x * 1.01, lambda, lf),
            Err(Error::SaturationViolated { .. })
        ));
        let mut p = base();
        p.bond_mpa = 0.001;
        assert!(matches!(theory_outputs(&p), Err(Error::SaturationViolated { .. })));
    }

    #[test]
    fn crack_spacing_is_monotone_in_x() {
        let lambda = 2.5;
        let lf = 12.0;
        let xmax = lf / (2.0 * PI * lambda);
        let mut prev = 0.0;
        for i in 1..=1000 {
            let xp = crack_spacing_mm(xmax * i as f64 / 1000.0, lambda, lf).unwrap();
            assert!(xp > prev);
            assert!(xp <= lf / 2.0 + 1e-12);
            prev = xp;
        }
    }

    #[test]
    fn strain_decomposition() {
        assert_eq!(strain_from_cracks(0.0, 0.1, 0.05, Some(1e-4)), 1e-4);
        assert!((strain_from_cracks(194.0, 1.0, 0.075, None) - 0.01455).abs() < 1e-15);
        let a = strain_from_cracks(7.0, 0.1, 0.05, Some(2e-4)) - 2e-4;
        let b = strain_from_cracks(7.0, 0.1, 0.10, Some(2e-4)) - 2e-4;
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    fn synthetic(n: usize, noise: f64, seed: u64) -> Vec<(f64, f64)> {
        let truth = TrilinearParams {
            eps_cr: 0.00012,
            eps_lcr: 0.0159,
            cd_max: 194.0,
            r_squared: None,
        };
        let mut rng = Seed(seed).rng();
        (0..n)
            .map(|i| {
                let e = 0.03 * i as f64 / (n - 1) as f64;
                (e, truth.eval(e) * (1.0 + noise * rng.normal()))
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let fit = fit_trilinear(&synthetic(61, 0.0, 0)).unwrap();
        assert!((fit.eps_cr / 0.00012 - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.eps_lcr / 0.0159 - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.cd_max / 194.0 - 1.0).abs() < 0.01, "{fit:?}");
        assert!(fit.r_squared.unwrap() >= 0.999);
    }

    #[test]
    fn breakpoint_perturbation_never_helps() {
        for seed in 0..5 {
            let pts = synthetic(61, 0.05, seed);
            let fit = fit_trilinear(&pts).unwrap();
            let base_ss = trilinear_ss_res(&pts, &fit);
            let step = 0.03 / 49.0 / 10.0;
            for (dc, dl) in [(-2.0, 0.0), (2.0, 0.0), (0.0, -2.0), (0.0, 2.0), (-1.0, 0.0), (0.0, 1.0)] {
                let cr = fit.eps_cr + dc * step;
                let lcr = fit.eps_lcr + dl * step;
                if cr < 0.0 || lcr > 0.03 {
                    continue;
                }
                if let Some(c) = solve_cd_max(
                    &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
                    &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
                    cr,
                    lcr,
                ) {
                    assert!(c.ss_res >= base_ss - 1e-9 * base_ss, "seed {seed} {dc} {dl} {fit:?} {} {base_ss}", c.ss_res);
                }
            }
        }
    }

    #[test]
    fn degenerate_and_errors() {
        let flat: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 * 0.001, 0.0)).collect();
        let f = fit_trilinear(&flat).unwrap();
        assert_eq!((f.cd_max, f.eps_cr, f.eps_lcr, f.r_squared), (0.0, 0.0, 0.007, None));
        assert!(fit_trilinear(&flat[..5]).is_err());
        let mut bad = flat.clone();
        bad.swap(2, 3);
        bad[2].1 = 1.0;
        assert!(fit_trilinear(&bad).is_err());
    }

    #[test]
    fn constant_acw() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.001, 75.0)).collect();
        let f = fit_constant_acw(&pts, (0.0, 1.0)).unwrap();
        assert_eq!(f.acw_constant_um, 75.0);
        assert_eq!(f.r_squared, None);
        assert!(fit_constant_acw(&pts, (2.0, 3.0)).is_err());
        let mut rng = Seed(4).rng();
        let noisy: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.001, 77.0 + 4.0 * rng.normal())).collect();
        let f = fit_constant_acw(&noisy, (0.0, 1.0)).unwrap();
        assert!((f.acw_constant_um / 77.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn normalization_and_damage() {
        let n = normalize_strain(&[(0.0159, 5.0)], 0.0159).unwrap();
        assert_eq!(n[0].0, 1.0);
        assert_eq!(normalize_strain(&[(0.3, 1.0)], 1.0).unwrap(), vec![(0.3, 1.0)]);
        let d = damage_ratio(194.0, 194.0).unwrap();
        assert_eq!((d.ratio, d.failure), (1.0, true));
        assert_eq!(damage_ratio(97.0, 194.0).unwrap().ratio, 0.5);
        assert!(!damage_ratio(0.0, 194.0).unwrap().failure);
    }

    proptest! {
        #[test]
        fn homogeneity(e in 0.0f64..0.05, l in 1e-4f64..0.05, k in 0.1f64..10.0) {
            let a = normalize_strain(&[(k * e, 1.0)], k * l).unwrap()[0].0;
            let b = normalize_strain(&[(e, 1.0)], l).unwrap()[0].0;
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn damage_ratio_scale_invariant(a in 0.0f64..500.0, b in 1.0f64..500.0, k in 0.01f64..100.0) {
            let r1 = damage_ratio(k * a, k * b).unwrap().ratio;
            let r2 = damage_ratio(a, b).unwrap().ratio;
            prop_assert!((r1 - r2).abs() <= 1e-12 * r2.max(1.0));
        }

        #[test]
        fn r_squared_invariant_under_cd_scaling(seed in 0u64..50, k in 0.1f64..20.0) {
            let pts = synthetic(30, 0.05, seed);
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(e, v)| (e, k * v)).collect();
            let a = fit_trilinear(&pts).unwrap();
            let b = fit_trilinear(&scaled).unwrap();
            prop_assert!((a.r_squared.unwrap() - b.r_squared.unwrap()).abs() < 1e-9);
        }
    }
}
