//! Run configuration: a flat text file of `key = value` lines.
//!
//! `#` starts a comment; blank lines are ignored; unknown or repeated keys
//! are errors. Every key is optional and falls back to the defaults below.
//!
//! ```text
//! mode = rsl                      # rsl | conventional
//! seed = 1                        # model initialization and batch partition
//! input_size = 64x64              # network input, height x width
//! padding = same                  # same | valid
//! learning_rate = 0.01
//! batch_size = 20
//! max_epochs = 150
//! epoch_map = 0.05:1, 0.15:2, inf:3
//! plateau_patience = 0            # 0 disables the plateau stop
//! plateau_min_delta = 0.001
//! stop_at_train_error = none      # stop once train error <= value
//! record_wall_clock = true
//! manifest = data/manifest.csv    # relative to this file; omit for synthetic data
//! synthetic_seed = 0
//! synthetic_train_per_class = 200
//! synthetic_val_per_class = 50
//! synthetic_image_size = 96
//! synthetic_noise = 6
//! synthetic_mass_intensity = 50:90
//! synthetic_mass_radius = 4:7
//! synthetic_speckles = 4:10
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::synthetic::SyntheticSpec;
use crate::network::{Padding, DEFAULT_INPUT_SIZE};
use crate::rsl::{PiecewiseEpochMap, Plateau, Termination};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Conventional,
    #[default]
    Rsl,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rsl" => Ok(Mode::Rsl),
            "conventional" => Ok(Mode::Conventional),
            other => Err(format!("mode must be rsl or conventional, got {other:?}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rsl => "rsl",
            Mode::Conventional => "conventional",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synthetic {
        spec: SyntheticSpec,
        train_per_class: usize,
        val_per_class: usize,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: SyntheticSpec::default(),
            train_per_class: 200,
            val_per_class: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// (height, width).
    pub input_size: (usize, usize),
    pub padding: Padding,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epoch_map: PiecewiseEpochMap,
    pub termination: Termination,
    /// When false the wall-clock column is written as 0.
    pub record_wall_clock: bool,
    pub data: DataSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Rsl,
            seed: 0,
            input_size: DEFAULT_INPUT_SIZE,
            padding: Padding::Same,
            learning_rate: 0.01,
            batch_size: 20,
            epoch_map: PiecewiseEpochMap::default_map(),
            termination: Termination::default(),
            record_wall_clock: true,
            data: DataSource::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, path, base)
    }

    /// Parses config text; `origin` names it in errors and relative manifest
    /// paths resolve against `base_dir`.
    pub fn parse(text: &str, origin: &Path, base_dir: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let mut synthetic = SyntheticSpec::default();
        let (mut train_per_class, mut val_per_class) = (200, 50);
        let mut manifest = None;
        let mut plateau = Plateau::default();
        let mut plateau_patience = 0;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::parse(origin, Some(line_no), msg);
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key {key:?} given twice")));
            }
            let bad = |what: &str| err(format!("{key}: {value:?} is not {what}"));
            match key {
                "mode" => cfg.mode = value.parse().map_err(err)?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                "input_size" => cfg.input_size = parse_size(value).ok_or_else(|| bad("HxW or a single size"))?,
                "padding" => {
                    cfg.padding = match value {
                        "same" => Padding::Same,
                        "valid" => Padding::Valid,
                        _ => return Err(bad("same or valid")),
                    }
                }
                "learning_rate" => cfg.learning_rate = parse_positive(value).ok_or_else(|| bad("a positive number"))?,
                "batch_size" => cfg.batch_size = parse_count(value).ok_or_else(|| bad("a positive integer"))?,
                "max_epochs" => cfg.termination.max_epochs = parse_count(value).ok_or_else(|| bad("a positive integer"))?,
                "epoch_map" => cfg.epoch_map = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "plateau_patience" => plateau_patience = value.parse().map_err(|_| bad("a non-negative integer"))?,
                "plateau_min_delta" => {
                    plateau.min_delta = value
                        .parse()
                        .ok()
                        .filter(|d: &f64| *d >= 0.0 && d.is_finite())
                        .ok_or_else(|| bad("a non-negative number"))?
                }
                "stop_at_train_error" => {
                    cfg.termination.target_train_error = match value {
                        "none" => None,
                        v => Some(
                            v.parse()
                                .ok()
                                .filter(|t| (0.0..=1.0).contains(t))
                                .ok_or_else(|| bad("none or a number in [0, 1]"))?,
                        ),
                    }
                }
                "record_wall_clock" => cfg.record_wall_clock = value.parse().map_err(|_| bad("true or false"))?,
                "manifest" => manifest = Some(base_dir.join(value)),
                "synthetic_seed" => synthetic.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                "synthetic_train_per_class" => {
                    train_per_class = parse_count(value).ok_or_else(|| bad("a positive integer"))?
                }
                "synthetic_val_per_class" => val_per_class = parse_count(value).ok_or_else(|| bad("a positive integer"))?,
                "synthetic_image_size" => {
                    let (h, w) = parse_size(value).ok_or_else(|| bad("HxW or a single size"))?;
                    synthetic.image_size = (w, h);
                }
                "synthetic_noise" => {
                    synthetic.background_noise = value
                        .parse()
                        .ok()
                        .filter(|n: &f64| *n >= 0.0)
                        .ok_or_else(|| bad("a non-negative number"))?
                }
                "synthetic_mass_intensity" => {
                    synthetic.mass_intensity = parse_range(value).ok_or_else(|| bad("min:max"))?
                }
                "synthetic_mass_radius" => synthetic.mass_radius = parse_range(value).ok_or_else(|| bad("min:max"))?,
                "synthetic_speckles" => {
                    let (lo, hi) = value
                        .split_once(':')
                        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                        .ok_or_else(|| bad("min:max"))?;
                    synthetic.speckle_count = lo..=hi;
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }

        if plateau_patience > 0 {
            plateau.patience = plateau_patience;
            cfg.termination.plateau = Some(plateau);
        }
        cfg.data = match manifest {
            Some(path) => {
                if let Some(k) = seen.iter().find(|k| k.starts_with("synthetic_")) {
                    return Err(Error::parse(origin, None, format!("{k} cannot be combined with manifest")));
                }
                DataSource::Manifest(path)
            }
            None => DataSource::Synthetic {
                spec: synthetic,
                train_per_class,
                val_per_class,
            },
        };
        cfg.validate().map_err(|e| Error::parse(origin, None, e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.termination.max_epochs == 0 {
            return Err(Error::Domain("batch size and max epochs must be positive".into()));
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::Domain("input size must be positive".into()));
        }
        if let DataSource::Synthetic { spec, .. } = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// The configuration as loadable text. Manifest paths are written as given.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("mode", self.mode.to_string());
        put("seed", self.seed.to_string());
        put("input_size", format!("{}x{}", self.input_size.0, self.input_size.1));
        put("padding", match self.padding {
            Padding::Same => "same".into(),
            Padding::Valid => "valid".into(),
        });
        put("learning_rate", self.learning_rate.to_string());
        put("batch_size", self.batch_size.to_string());
        put("max_epochs", self.termination.max_epochs.to_string());
        put("epoch_map", self.epoch_map.to_string());
        match self.termination.plateau {
            Some(p) => {
                put("plateau_patience", p.patience.to_string());
                put("plateau_min_delta", p.min_delta.to_string());
            }
            None => put("plateau_patience", "0".into()),
        }
        put(
            "stop_at_train_error",
            self.termination.target_train_error.map_or("none".into(), |t| t.to_string()),
        );
        put("record_wall_clock", self.record_wall_clock.to_string());
        match &self.data {
            DataSource::Manifest(path) => put("manifest", path.display().to_string()),
            DataSource::Synthetic {
                spec,
                train_per_class,
                val_per_class,
            } => {
                put("synthetic_seed", spec.seed.to_string());
                put("synthetic_train_per_class", train_per_class.to_string());
                put("synthetic_val_per_class", val_per_class.to_string());
                put("synthetic_image_size", format!("{}x{}", spec.image_size.1, spec.image_size.0));
                put("synthetic_noise", spec.background_noise.to_string());
                put(
                    "synthetic_mass_intensity",
                    format!("{}:{}", spec.mass_intensity.start(), spec.mass_intensity.end()),
                );
                put("synthetic_mass_radius", format!("{}:{}", spec.mass_radius.start(), spec.mass_radius.end()));
                put(
                    "synthetic_speckles",
                    format!("{}:{}", spec.speckle_count.start(), spec.speckle_count.end()),
                );
            }
        }
        out
    }
}

fn parse_count(s: &str) -> Option<usize> {
    s.parse().ok().filter(|&n| n > 0)
}

fn parse_positive(s: &str) -> Option<f64> {
    s.parse().ok().filter(|&x: &f64| x > 0.0 && x.is_finite())
}

/// `64x48` (height x width) or `64` for a square.
fn parse_size(s: &str) -> Option<(usize, usize)> {
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Some((parse_count(h.trim())?, parse_count(w.trim())?)),
        None => parse_count(s).map(|n| (n, n)),
    }
}

fn parse_range(s: &str) -> Option<std::ops::RangeInclusive<f64>> {
    let (lo, hi) = s.split_once(':')?;
    let (lo, hi): (f64, f64) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
    (lo.is_finite() && hi.is_finite() && lo <= hi).then_some(lo..=hi)
}
