//! Run configuration: a flat `key = value` text format with exhaustive range
//! validation. Every default matches the engine's published constants.

use crate::appearance::{BetaMode, UpdateParams};
use crate::association::{AssociationParams, Stage2Embedding};
use crate::error::{Error, Result};
use crate::io::DetectionParseOptions;
use crate::motion::CHI2_GATE_95_4DOF;

/// Every tunable in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Long-term embedding blend weight.
    pub alpha: f64,
    /// Occlusion-score threshold for long-term updates.
    pub tau_upd: f64,
    /// Visibility threshold for valid-sample selection.
    pub tau_vis: f64,
    /// Stage-one appearance/geometry fusion weight.
    pub gamma: f64,
    /// Cosine/Mahalanobis weight inside the appearance term.
    pub lambda: f64,
    pub stage1_threshold: f64,
    pub stage2_cos_threshold: f64,
    pub chi2_gate: f64,
    pub keep_alive: u32,
    pub tentative_confirm: u32,
    pub beta_mode: BetaMode,
    pub min_confidence: f64,
    /// IOU floor used by evaluation matching.
    pub iou_threshold: f64,
    pub seed: u64,
    pub stage2_embedding: Stage2Embedding,
    pub stage2_motion_weight: f64,
    pub embedding_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            tau_upd: 0.5,
            tau_vis: 0.5,
            gamma: 0.8,
            lambda: 0.9,
            stage1_threshold: 0.7,
            stage2_cos_threshold: 0.3,
            chi2_gate: CHI2_GATE_95_4DOF,
            keep_alive: 30,
            tentative_confirm: 2,
            beta_mode: BetaMode::VisibilityScaled,
            min_confidence: 0.4,
            iou_threshold: 0.5,
            seed: 1,
            stage2_embedding: Stage2Embedding::Long,
            stage2_motion_weight: 0.0,
            embedding_dim: 128,
        }
    }
}

impl std::str::FromStr for RunConfig {
    type Err = Error;

    /// Parses `key = value` lines. `#` starts a comment; keys may appear at
    /// most once; unknown keys and out-of-range values are errors.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected 'key = value', got '{line}'"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {line_no}: duplicate key '{key}'")));
            }
            seen.push(key.to_string());
            cfg.apply(key, value)
                .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let as_f64 = |v: &str| v.parse::<f64>().map_err(|_| format!("'{v}' is not a number"));
        let as_u32 = |v: &str| v.parse::<u32>().map_err(|_| format!("'{v}' is not an integer"));
        match key {
            "alpha" => self.alpha = as_f64(value)?,
            "tau_upd" => self.tau_upd = as_f64(value)?,
            "tau_vis" => self.tau_vis = as_f64(value)?,
            "gamma" => self.gamma = as_f64(value)?,
            "lambda" => self.lambda = as_f64(value)?,
            "stage1_threshold" => self.stage1_threshold = as_f64(value)?,
            "stage2_cos_threshold" => self.stage2_cos_threshold = as_f64(value)?,
            "chi2_gate" => self.chi2_gate = as_f64(value)?,
            "keep_alive" => self.keep_alive = as_u32(value)?,
            "tentative_confirm" => self.tentative_confirm = as_u32(value)?,
            "beta_mode" => {
                self.beta_mode = match value {
                    "linear" => BetaMode::VisibilityScaled,
                    "constant" => BetaMode::Constant,
                    other => return Err(format!("beta_mode '{other}' (use linear|constant)")),
                }
            }
            "min_confidence" => self.min_confidence = as_f64(value)?,
            "iou_threshold" => self.iou_threshold = as_f64(value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| format!("'{value}' is not an integer"))?
            }
            "stage2_embedding" => {
                self.stage2_embedding = match value {
                    "long" => Stage2Embedding::Long,
                    "short" => Stage2Embedding::Short,
                    other => return Err(format!("stage2_embedding '{other}' (use long|short)")),
                }
            }
            "stage2_motion_weight" => self.stage2_motion_weight = as_f64(value)?,
            "embedding_dim" => {
                let d = as_u32(value)? as usize;
                self.embedding_dim = d;
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0,1]")));
            }
            Ok(())
        };
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha = {} must be >= 0", self.alpha)));
        }
        unit("tau_upd", self.tau_upd)?;
        unit("tau_vis", self.tau_vis)?;
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        unit("min_confidence", self.min_confidence)?;
        unit("stage2_motion_weight", self.stage2_motion_weight)?;
        if self.stage1_threshold < 0.0 || self.stage2_cos_threshold < 0.0 {
            return Err(Error::Config("stage thresholds must be >= 0".into()));
        }
        if self.chi2_gate <= 0.0 {
            return Err(Error::Config("chi2_gate must be positive".into()));
        }
        if self.iou_threshold <= 0.0 || self.iou_threshold > 1.0 {
            return Err(Error::Config(format!(
                "iou_threshold = {} outside (0,1]",
                self.iou_threshold
            )));
        }
        if self.tentative_confirm == 0 {
            return Err(Error::Config("tentative_confirm must be >= 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn association_params(&self) -> AssociationParams {
        AssociationParams {
            gamma: self.gamma,
            lambda: self.lambda,
            stage1_threshold: self.stage1_threshold,
            stage2_cos_threshold: self.stage2_cos_threshold,
            chi2_gate: self.chi2_gate,
            keep_alive: self.keep_alive,
            tentative_confirm: self.tentative_confirm,
            stage2_embedding: self.stage2_embedding,
            stage2_motion_weight: self.stage2_motion_weight,
            update: UpdateParams {
                alpha: self.alpha,
                occlusion_threshold: self.tau_upd,
                beta_mode: self.beta_mode,
            },
        }
    }

    pub fn detection_parse_options(&self) -> DetectionParseOptions {
        DetectionParseOptions {
            min_confidence: self.min_confidence,
            default_embedding_dim: self.embedding_dim,
        }
    }
}
