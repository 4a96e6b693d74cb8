//! Run configuration: a line-oriented `key = value` file, command-line
//! overrides, and the `SLSREC_SEED` environment variable.
//!
//! ```
//! use slsrec::config::RunConfig;
//!
//! let mut cfg = RunConfig::parse_str("d = 8\n# comment\nlambda = 0.1\n").unwrap();
//! cfg.set("no_cl", "true").unwrap();
//! assert_eq!(cfg.d, 8);
//! assert!(cfg.resolved().contains("lambda=0.1\n"));
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::autodiff::AdamConfig;
use crate::data::{Shape, SyntheticConfig};
use crate::model::{Ablation, ContrastProjection, ModelConfig};
use crate::objectives::LossConfig;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "SLSREC_SEED";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Split boundary: a timestamp, or derived from the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Auto,
    At(u64),
}

impl FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Boundary::Auto);
        }
        s.parse().map(Boundary::At).map_err(|e| format!("{e}"))
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Auto => f.write_str("auto"),
            Boundary::At(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// `synthetic` or the path of an interaction log.
    pub data: String,
    pub synth: SyntheticConfig,
    pub train_end: Boundary,
    pub val_end: Boundary,
    pub d: usize,
    pub l: usize,
    pub k_max: usize,
    pub s_max: usize,
    /// Session gap threshold in seconds.
    pub omega: u64,
    pub lambda: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Candidates per training task, positive included.
    pub n_candidates: usize,
    pub eval_candidates: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub contrast_projection: ContrastProjection,
    pub eq17_literal: bool,
    pub share_pool_weights: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: "synthetic".into(),
            synth: SyntheticConfig::default(),
            train_end: Boundary::Auto,
            val_end: Boundary::Auto,
            d: 16,
            l: 10,
            k_max: 10,
            s_max: 50,
            omega: 90 * 60,
            lambda: 0.2,
            margin: 0.5,
            batch_size: 500,
            lr: 0.001,
            n_candidates: 5,
            eval_candidates: 50,
            epochs: 20,
            patience: 3,
            seed: 42,
            ablation: Ablation::default(),
            contrast_projection: ContrastProjection::FirstHalf,
            eq17_literal: false,
            share_pool_weights: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl RunConfig {
    /// Every key in serialization order.
    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn is_key(key: &str) -> bool {
        RunConfig::keys().contains(&key)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let a = &self.ablation;
        vec![
            ("data", self.data.clone()),
            ("synth_users", s.users.to_string()),
            ("synth_items", s.items.to_string()),
            ("synth_categories", s.categories.to_string()),
            ("synth_sessions", s.sessions_per_user.to_string()),
            ("synth_session_len", s.session_len.to_string()),
            ("drift_prob", fmt_f64(s.drift_prob)),
            ("noise_prob", fmt_f64(s.noise_prob)),
            ("session_gap", s.session_gap.to_string()),
            ("train_end", self.train_end.to_string()),
            ("val_end", self.val_end.to_string()),
            ("d", self.d.to_string()),
            ("l", self.l.to_string()),
            ("k_max", self.k_max.to_string()),
            ("s_max", self.s_max.to_string()),
            ("omega", self.omega.to_string()),
            ("lambda", fmt_f64(self.lambda)),
            ("margin", fmt_f64(self.margin)),
            ("batch_size", self.batch_size.to_string()),
            ("lr", fmt_f64(self.lr)),
            ("n_candidates", self.n_candidates.to_string()),
            ("eval_candidates", self.eval_candidates.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("no_cl", a.no_cl.to_string()),
            ("no_cate", a.no_cate.to_string()),
            ("no_long", a.no_long.to_string()),
            ("no_short", a.no_short.to_string()),
            ("contrast_projection", self.contrast_projection.to_string()),
            ("eq17_literal", self.eq17_literal.to_string()),
            ("share_pool_weights", self.share_pool_weights.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "data" => self.data = v.to_string(),
            "synth_users" => self.synth.users = parse(key, v)?,
            "synth_items" => self.synth.items = parse(key, v)?,
            "synth_categories" => self.synth.categories = parse(key, v)?,
            "synth_sessions" => self.synth.sessions_per_user = parse(key, v)?,
            "synth_session_len" => self.synth.session_len = parse(key, v)?,
            "drift_prob" => self.synth.drift_prob = parse(key, v)?,
            "noise_prob" => self.synth.noise_prob = parse(key, v)?,
            "session_gap" => self.synth.session_gap = parse(key, v)?,
            "train_end" => self.train_end = parse(key, v)?,
            "val_end" => self.val_end = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "l" => self.l = parse(key, v)?,
            "k_max" => self.k_max = parse(key, v)?,
            "s_max" => self.s_max = parse(key, v)?,
            "omega" => self.omega = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "margin" => self.margin = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "n_candidates" => self.n_candidates = parse(key, v)?,
            "eval_candidates" => self.eval_candidates = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "no_cl" => self.ablation.no_cl = parse(key, v)?,
            "no_cate" => self.ablation.no_cate = parse(key, v)?,
            "no_long" => self.ablation.no_long = parse(key, v)?,
            "no_short" => self.ablation.no_short = parse(key, v)?,
            "contrast_projection" => self.contrast_projection = parse(key, v)?,
            "eq17_literal" => self.eq17_literal = parse(key, v)?,
            "share_pool_weights" => self.share_pool_weights = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        RunConfig::parse_str(&text)
    }

    /// Replaces the seed with `value` when it is set.
    pub fn apply_seed_env(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        match value {
            Some(v) => self.set("seed", v),
            None => Ok(()),
        }
    }

    /// One `key=value` line per field, in [`RunConfig::keys`] order.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::resolved`].
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.resolved().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.ablation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.shape().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.data == "synthetic" {
            self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.d == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("d, batch_size and epochs must be positive".into());
        }
        if self.omega == 0 {
            return bad("omega must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.margin >= 0.0) {
            return bad(format!("lambda ({}) and margin ({}) must be nonnegative", self.lambda, self.margin));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr={} must be positive", self.lr));
        }
        if self.n_candidates < 2 || self.eval_candidates < 2 {
            return bad("n_candidates and eval_candidates must be at least 2".into());
        }
        if let (Boundary::At(t), Boundary::At(v)) = (self.train_end, self.val_end) {
            if t >= v {
                return bad(format!("train_end ({t}) must precede val_end ({v})"));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        Shape { l: self.l, k_max: self.k_max, s_max: self.s_max }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            share_pool_weights: self.share_pool_weights,
            contrast_projection: self.contrast_projection,
            ablation: self.ablation,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: if self.ablation.no_cl { 0.0 } else { self.lambda },
            margin: self.margin,
            eq17_literal: self.eq17_literal,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }
}
