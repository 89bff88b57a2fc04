//! Run configuration: one JSON document, with command-line flags layered on top.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use boxsim_core::{AnchorSpec, CalibrationOptions, NormMode, NormParams, SynthParams, Thresholds};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no dataset source: set `dataset` or `synthetic`")]
    NoDatasetSource,
    #[error("both `dataset` and `synthetic` are set; choose one")]
    ConflictingDatasetSources,
    #[error("this command needs a `synthetic` section")]
    NotSynthetic,
    #[error("metric `simd` needs `norm_params` (\"calibrate\", {{\"m\": .., \"n\": ..}} or {{\"path\": ..}})")]
    MissingNormParams,
    #[error("cannot load normalization parameters from {path}: {reason}")]
    BadNormParamsFile { path: PathBuf, reason: String },
    #[error("nms-demo needs a detections file (`detections` or --detections)")]
    MissingDetections,
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Iou,
    Dotd,
    Nwd,
    Rfd,
    Simd,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Iou,
        MetricName::Dotd,
        MetricName::Nwd,
        MetricName::Rfd,
        MetricName::Simd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::Iou => "iou",
            MetricName::Dotd => "dotd",
            MetricName::Nwd => "nwd",
            MetricName::Rfd => "rfd",
            MetricName::Simd => "simd",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}` (expected iou, dotd, nwd, rfd or simd)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmsMetricName {
    Iou,
    Simd,
}

impl FromStr for NmsMetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iou" => Ok(NmsMetricName::Iou),
            "simd" => Ok(NmsMetricName::Simd),
            other => Err(format!(
                "unknown NMS metric `{other}` (expected iou or simd)"
            )),
        }
    }
}

/// DotD's `S`: a fixed value or `"auto"` (square root of the mean gt area).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSetting {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl Default for ScaleSetting {
    fn default() -> Self {
        ScaleSetting::Keyword(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NormParamsSetting {
    /// `"calibrate"`: compute from the dataset with the configured anchors.
    Keyword(CalibrateKeyword),
    Manual {
        m: f64,
        n: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrateKeyword {
    Calibrate,
}

impl NormParamsSetting {
    pub const CALIBRATE: NormParamsSetting =
        NormParamsSetting::Keyword(CalibrateKeyword::Calibrate);
}

impl FromStr for NormParamsSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "calibrate" {
            Ok(Self::CALIBRATE)
        } else {
            Ok(NormParamsSetting::File { path: s.into() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub images: usize,
    pub image_size: (f64, f64),
    pub scale_range: (f64, f64),
    pub objects_per_image: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub levels: Option<Vec<usize>>,
    pub subsample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsConfig {
    pub metric: NmsMetricName,
    pub threshold: f64,
    pub class_aware: bool,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            metric: NmsMetricName::Iou,
            threshold: 0.5,
            class_aware: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub synthetic: Option<SynthConfig>,
    pub anchors: AnchorSpec,
    pub thresholds: Thresholds,
    pub metric: MetricName,
    pub dotd_scale: ScaleSetting,
    pub nwd_constant: f64,
    pub rfd_beta: f64,
    pub norm_params: Option<NormParamsSetting>,
    pub norm_mode: NormMode,
    pub calibration: CalibrationConfig,
    pub nms: NmsConfig,
    pub detections: Option<PathBuf>,
    /// Maximum number of gt-anchor pairs listed by `compare`.
    pub compare_samples: usize,
    pub seed: u64,
    /// Output directory; not part of the report header.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic: None,
            anchors: AnchorSpec::default(),
            thresholds: Thresholds::default(),
            metric: MetricName::Iou,
            dotd_scale: ScaleSetting::default(),
            nwd_constant: 12.8,
            rfd_beta: 1.0,
            norm_params: None,
            norm_mode: NormMode::Both,
            calibration: CalibrationConfig::default(),
            nms: NmsConfig::default(),
            detections: None,
            compare_samples: 1000,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Malformed {
            path: path.to_owned(),
            source,
        })
    }

    /// Checks everything that does not depend on the command or the dataset
    /// contents.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset.is_some() && self.synthetic.is_some() {
            return Err(ConfigError::ConflictingDatasetSources);
        }
        let invalid = |field, e: boxsim_core::Error| ConfigError::InvalidField {
            field,
            reason: e.to_string(),
        };
        self.anchors.validate().map_err(|e| invalid("anchors", e))?;
        self.thresholds
            .validate()
            .map_err(|e| invalid("thresholds", e))?;
        if let ScaleSetting::Value(s) = self.dotd_scale {
            positive("dotd_scale", s)?;
        }
        positive("nwd_constant", self.nwd_constant)?;
        positive("rfd_beta", self.rfd_beta)?;
        if let Some(NormParamsSetting::Manual { m, n }) = &self.norm_params {
            NormParams::manual(*m, *n).map_err(|e| invalid("norm_params", e))?;
        }
        if let Some(rate) = self.calibration.subsample {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(ConfigError::InvalidField {
                    field: "calibration.subsample",
                    reason: format!("{rate} is outside (0, 1]"),
                });
            }
        }
        if let Some(levels) = &self.calibration.levels {
            if levels.is_empty() || levels.iter().any(|&l| l >= self.anchors.levels.len()) {
                return Err(ConfigError::InvalidField {
                    field: "calibration.levels",
                    reason: format!(
                        "{levels:?} must be a non-empty subset of 0..{}",
                        self.anchors.levels.len()
                    ),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.nms.threshold) {
            return Err(ConfigError::InvalidField {
                field: "nms.threshold",
                reason: format!("{} is outside [0, 1]", self.nms.threshold),
            });
        }
        if self.compare_samples == 0 {
            return Err(ConfigError::InvalidField {
                field: "compare_samples",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn synth_params(&self) -> Option<SynthParams> {
        self.synthetic.as_ref().map(|s| SynthParams {
            images: s.images,
            image_size: s.image_size,
            scale_range: s.scale_range,
            objects_per_image: s.objects_per_image,
            seed: self.seed,
        })
    }

    /// Short provenance label for the dataset source.
    pub fn source_label(&self) -> String {
        match (&self.dataset, &self.synth_params()) {
            (Some(path), _) => format!(
                "dataset={}",
                path.file_name().map_or_else(
                    || path.display().to_string(),
                    |n| n.to_string_lossy().into_owned()
                )
            ),
            (None, Some(p)) => format!("synthetic(seed={})", p.seed),
            (None, None) => "none".into(),
        }
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            levels: self.calibration.levels.clone(),
            subsample: self.calibration.subsample,
            seed: self.seed,
            threads: None,
            label: Some(self.source_label()),
        }
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::InvalidField {
            field,
            reason: format!("{value} must be finite and > 0"),
        })
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub metric: Option<MetricName>,
    pub pos: Option<f64>,
    pub neg: Option<f64>,
    pub min_pos: Option<f64>,
    pub seed: Option<u64>,
    pub norm_mode: Option<NormMode>,
    pub norm_params: Option<NormParamsSetting>,
    pub nms_metric: Option<NmsMetricName>,
    pub nms_thr: Option<f64>,
    pub detections: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(self, config: &mut RunConfig) {
        if let Some(dataset) = self.dataset {
            config.dataset = Some(dataset);
            config.synthetic = None;
        }
        if let Some(out) = self.out {
            config.out = out;
        }
        if let Some(metric) = self.metric {
            config.metric = metric;
        }
        if let Some(pos) = self.pos {
            config.thresholds.pos = pos;
        }
        if let Some(neg) = self.neg {
            config.thresholds.neg = neg;
        }
        if let Some(min_pos) = self.min_pos {
            config.thresholds.min_pos = min_pos;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = self.norm_mode {
            config.norm_mode = mode;
        }
        if let Some(params) = self.norm_params {
            config.norm_params = Some(params);
        }
        if let Some(metric) = self.nms_metric {
            config.nms.metric = metric;
        }
        if let Some(thr) = self.nms_thr {
            config.nms.threshold = thr;
        }
        if let Some(path) = self.detections {
            config.detections = Some(path);
        }
    }
}
