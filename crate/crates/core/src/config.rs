//! Line-oriented `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! repeated keys are rejected; values are parsed and range-checked by the
//! builders below.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::classify::TrainConfig;
use crate::crackstats::{LoadingAxis, StatsParams, TraceParams};
use crate::dataset::SplitSpec;
use crate::error::{Error, Result};
use crate::micromech::{MicromechParams, SnubbingForm};
use crate::rng::Seed;

pub const KNOWN_KEYS: &[&str] = &[
    "window",
    "classifier",
    "seed",
    "jobs",
    "train.learning_rate",
    "train.momentum",
    "train.batch_size",
    "train.epochs",
    "train.pixel_scale",
    "train.keep_best",
    "train.eval_every",
    "adt.min_dark_pixels",
    "trace.k",
    "trace.delta",
    "trace.min_len",
    "trace.smooth_sigma",
    "trace.stretch_low",
    "trace.stretch_high",
    "stats.scan_lines",
    "stats.axis",
    "stats.require_acw",
    "split.test_frac",
    "split.train_frac",
    "augment.n_p",
    "augment.n_n",
    "fit.acw_window_lo",
    "fit.acw_window_hi",
    "theory.fiber_length_mm",
    "theory.fiber_radius_mm",
    "theory.fiber_fraction",
    "theory.matrix_fraction",
    "theory.matrix_modulus_gpa",
    "theory.matrix_failure_strain",
    "theory.bond_mpa",
    "theory.snubbing_coefficient",
    "theory.snubbing_form",
    "synth.count_per_class",
    "synth.tile_size",
    "synth.noise_std",
    "synth.speckle_density",
    "synth.mottling",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value", i + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if cfg.values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    /// Set a value, as a command-line flag would.
    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn seed(&self) -> Result<Seed> {
        Ok(Seed(self.get_or("seed", 0u64)?))
    }

    pub fn window(&self) -> Result<usize> {
        let w: usize = self.get_or("window", 227)?;
        if w == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        Ok(w)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        self.train_config_from(TrainConfig::default())
    }

    /// Training settings layered over `base`.
    pub fn train_config_from(&self, base: TrainConfig) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.get_or("train.learning_rate", base.learning_rate)?,
            momentum: self.get_or("train.momentum", base.momentum)?,
            batch_size: self.get_or("train.batch_size", base.batch_size)?,
            epochs: self.get_or("train.epochs", base.epochs)?,
            seed: self.seed()?,
            pixel_scale: self.get_or("train.pixel_scale", base.pixel_scale)?,
            eval_every: self.get::<usize>("train.eval_every")?.or(base.eval_every),
            keep_best: self.get_or("train.keep_best", base.keep_best)?,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn stats_params(&self) -> Result<StatsParams> {
        let d = StatsParams::default();
        let t = TraceParams::default();
        let axis = match self.raw("stats.axis") {
            None => d.axis,
            Some("horizontal") => LoadingAxis::Horizontal,
            Some("vertical") => LoadingAxis::Vertical,
            Some(v) => return Err(Error::Config(format!("stats.axis: expected horizontal|vertical, got {v:?}"))),
        };
        let p = StatsParams {
            window: self.window()?,
            trace: TraceParams {
                k: self.get_or("trace.k", t.k)?,
                delta: self.get_or("trace.delta", t.delta)?,
                min_len: self.get::<f64>("trace.min_len")?.or(t.min_len),
                smooth_sigma: self.get_or("trace.smooth_sigma", t.smooth_sigma)?,
                stretch_low: self.get_or("trace.stretch_low", t.stretch_low)?,
                stretch_high: self.get_or("trace.stretch_high", t.stretch_high)?,
            },
            scan_lines: self.get_or("stats.scan_lines", d.scan_lines)?,
            axis,
            require_acw: self.get_or("stats.require_acw", d.require_acw)?,
        };
        let tr = &p.trace;
        if !(tr.delta >= 1.0) || !(tr.smooth_sigma >= 0.0) || p.scan_lines == 0 {
            return Err(Error::Config("trace.delta must be >= 1, trace.smooth_sigma >= 0, stats.scan_lines >= 1".into()));
        }
        if !(0.0 <= tr.stretch_low && tr.stretch_low < tr.stretch_high && tr.stretch_high <= 100.0) {
            return Err(Error::Config("stretch percentiles must satisfy 0 <= low < high <= 100".into()));
        }
        Ok(p)
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let d = SplitSpec::new(self.seed()?);
        let s = SplitSpec {
            test_frac: self.get_or("split.test_frac", d.test_frac)?,
            train_frac_of_remainder: self.get_or("split.train_frac", d.train_frac_of_remainder)?,
            seed: d.seed,
        };
        let ok = |f: f64| (0.0..=1.0).contains(&f);
        if !ok(s.test_frac) || !ok(s.train_frac_of_remainder) {
            return Err(Error::Config("split fractions must lie in [0, 1]".into()));
        }
        Ok(s)
    }

    pub fn micromech(&self) -> Result<MicromechParams> {
        let d = MicromechParams::default();
        let form = match self.raw("theory.snubbing_form") {
            None => d.snubbing_form,
            Some("printed") => SnubbingForm::Printed,
            Some("exponential") => SnubbingForm::Exponential,
            Some(v) => return Err(Error::Config(format!("theory.snubbing_form: expected printed|exponential, got {v:?}"))),
        };
        let p = MicromechParams {
            fiber_length_mm: self.get_or("theory.fiber_length_mm", d.fiber_length_mm)?,
            fiber_radius_mm: self.get_or("theory.fiber_radius_mm", d.fiber_radius_mm)?,
            fiber_fraction: self.get_or("theory.fiber_fraction", d.fiber_fraction)?,
            matrix_fraction: self.get_or("theory.matrix_fraction", d.matrix_fraction)?,
            matrix_modulus_gpa: self.get_or("theory.matrix_modulus_gpa", d.matrix_modulus_gpa)?,
            matrix_failure_strain: self.get_or("theory.matrix_failure_strain", d.matrix_failure_strain)?,
            bond_mpa: self.get_or("theory.bond_mpa", d.bond_mpa)?,
            snubbing_coefficient: self.get_or("theory.snubbing_coefficient", d.snubbing_coefficient)?,
            snubbing_form: form,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    /// Strain window for the constant crack-width fit, when both ends are set.
    pub fn acw_window(&self) -> Result<Option<(f64, f64)>> {
        match (self.get::<f64>("fit.acw_window_lo")?, self.get::<f64>("fit.acw_window_hi")?) {
            (Some(lo), Some(hi)) if lo <= hi => Ok(Some((lo, hi))),
            (None, None) => Ok(None),
            _ => Err(Error::Config("fit.acw_window_lo and fit.acw_window_hi must both be set, lo <= hi".into())),
        }
    }
}
