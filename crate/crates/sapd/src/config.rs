//! Run configuration: every knob of the detector in one flat dotted-key
//! namespace, parsed from `key = value` lines. Unknown keys are rejected and
//! the fully resolved config can be echoed back out, which makes run
//! directories self-describing and reloadable.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::PyramidSpec;
use crate::losses::FocalConfig;
use crate::selection::SelectionConfig;
use crate::weighting::{SoftWeightConfig, WeightMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    /// Instance side lengths are drawn log-uniformly from this range (px).
    pub min_size: f32,
    pub max_size: f32,
    pub max_instances: usize,
    /// Background noise amplitude in [0, 1].
    pub noise: f32,
    pub seed: u64,
    pub eval_seed: u64,
    pub dir: String,
    pub eval_dir: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub channels: usize,
    pub head_layers: usize,
    pub select_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignSection {
    /// Valid-box shrink factor.
    pub epsilon: f32,
    /// Distance normalization scalar.
    pub z: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightingSection {
    pub eta: f32,
    pub mode: WeightMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectSection {
    pub enabled: bool,
    pub top_k: usize,
    pub lambda: f32,
    pub roi_size: usize,
    pub sampling_ratio: usize,
    /// When set, the selection-net loss also backpropagates into the pyramid
    /// features instead of stopping at the RoIAligned block.
    pub feature_grad: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Epoch at which training switches from hard to soft level selection.
    /// Resolved to `epochs / 2` when absent from the config file.
    pub phase_switch_epoch: Option<usize>,
    /// Learning-rate drop points as fractions of the total iteration count.
    pub lr_drop1: f32,
    pub lr_drop2: f32,
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferSection {
    pub score_threshold: f32,
    pub topk_per_level: usize,
    pub nms_iou: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpSection {
    pub scenes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSection {
    pub sw: Vec<bool>,
    pub ss: Vec<bool>,
    pub etas: Vec<f32>,
    pub topks: Vec<usize>,
    pub modes: Vec<WeightMode>,
    pub seeds: Vec<u64>,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub epochs: usize,
}

/// The complete run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub pyramid_min_level: u32,
    pub pyramid_max_level: u32,
    pub model: ModelSection,
    pub assign: AssignSection,
    pub weighting: WeightingSection,
    pub select: SelectSection,
    pub loss: FocalSection,
    pub train: TrainSection,
    pub infer: InferSection,
    pub dump: DumpSection,
    pub ablate: AblateSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalSection {
    pub alpha: f32,
    pub gamma: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                width: 64,
                height: 64,
                classes: 3,
                train_scenes: 2000,
                eval_scenes: 200,
                min_size: 20.0,
                max_size: 56.0,
                max_instances: 4,
                noise: 0.3,
                seed: 1,
                eval_seed: 2,
                dir: "data/train".into(),
                eval_dir: "data/eval".into(),
            },
            pyramid_min_level: 2,
            pyramid_max_level: 5,
            model: ModelSection {
                channels: 32,
                head_layers: 2,
                select_channels: 32,
            },
            assign: AssignSection {
                epsilon: 0.2,
                z: 4.0,
            },
            weighting: WeightingSection {
                eta: 1.0,
                mode: WeightMode::Both,
            },
            select: SelectSection {
                enabled: true,
                top_k: 3,
                lambda: 0.1,
                roi_size: 7,
                sampling_ratio: 2,
                feature_grad: false,
            },
            loss: FocalSection {
                alpha: 0.25,
                gamma: 2.0,
            },
            train: TrainSection {
                seed: 7,
                epochs: 2,
                batch_size: 2,
                lr: 0.01,
                momentum: 0.9,
                weight_decay: 1e-4,
                phase_switch_epoch: None,
                lr_drop1: 0.75,
                lr_drop2: 0.9167,
                flip: true,
            },
            infer: InferSection {
                score_threshold: 0.05,
                topk_per_level: 1000,
                nms_iou: 0.5,
            },
            dump: DumpSection { scenes: 4 },
            ablate: AblateSection {
                sw: vec![true, false],
                ss: vec![true, false],
                etas: vec![0.1, 0.5, 1.0, 2.0],
                topks: vec![1, 2, 3, 4, 5],
                modes: vec![
                    WeightMode::Both,
                    WeightMode::ClsOnly,
                    WeightMode::LocOnly,
                    WeightMode::Off,
                ],
                seeds: vec![7],
                train_scenes: 400,
                eval_scenes: 100,
                epochs: 2,
            },
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| parse_scalar(key, item.trim()))
        .collect()
}

fn parse_on_off_list(key: &str, value: &str) -> Result<Vec<bool>> {
    value
        .split(',')
        .map(|item| match item.trim() {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(Error::Config(format!(
                "invalid value '{other}' for key '{key}' (expected on|off)"
            ))),
        })
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Applies one dotted-key assignment; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data.width" => self.data.width = parse_scalar(key, value)?,
            "data.height" => self.data.height = parse_scalar(key, value)?,
            "data.classes" => self.data.classes = parse_scalar(key, value)?,
            "data.train_scenes" => self.data.train_scenes = parse_scalar(key, value)?,
            "data.eval_scenes" => self.data.eval_scenes = parse_scalar(key, value)?,
            "data.min_size" => self.data.min_size = parse_scalar(key, value)?,
            "data.max_size" => self.data.max_size = parse_scalar(key, value)?,
            "data.max_instances" => self.data.max_instances = parse_scalar(key, value)?,
            "data.noise" => self.data.noise = parse_scalar(key, value)?,
            "data.seed" => self.data.seed = parse_scalar(key, value)?,
            "data.eval_seed" => self.data.eval_seed = parse_scalar(key, value)?,
            "data.dir" => self.data.dir = value.to_string(),
            "data.eval_dir" => self.data.eval_dir = value.to_string(),
            "pyramid.min_level" => self.pyramid_min_level = parse_scalar(key, value)?,
            "pyramid.max_level" => self.pyramid_max_level = parse_scalar(key, value)?,
            "model.channels" => self.model.channels = parse_scalar(key, value)?,
            "model.head_layers" => self.model.head_layers = parse_scalar(key, value)?,
            "model.select_channels" => self.model.select_channels = parse_scalar(key, value)?,
            "assign.epsilon" => self.assign.epsilon = parse_scalar(key, value)?,
            "assign.z" => self.assign.z = parse_scalar(key, value)?,
            "weighting.eta" => self.weighting.eta = parse_scalar(key, value)?,
            "weighting.mode" => self.weighting.mode = value.parse()?,
            "select.enabled" => self.select.enabled = parse_scalar(key, value)?,
            "select.top_k" => self.select.top_k = parse_scalar(key, value)?,
            "select.lambda" => self.select.lambda = parse_scalar(key, value)?,
            "select.roi_size" => self.select.roi_size = parse_scalar(key, value)?,
            "select.sampling_ratio" => self.select.sampling_ratio = parse_scalar(key, value)?,
            "select.feature_grad" => self.select.feature_grad = parse_scalar(key, value)?,
            "loss.alpha" => self.loss.alpha = parse_scalar(key, value)?,
            "loss.gamma" => self.loss.gamma = parse_scalar(key, value)?,
            "train.seed" => self.train.seed = parse_scalar(key, value)?,
            "train.epochs" => self.train.epochs = parse_scalar(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_scalar(key, value)?,
            "train.lr" => self.train.lr = parse_scalar(key, value)?,
            "train.momentum" => self.train.momentum = parse_scalar(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse_scalar(key, value)?,
            "train.phase_switch_epoch" => {
                self.train.phase_switch_epoch = Some(parse_scalar(key, value)?)
            }
            "train.lr_drop1" => self.train.lr_drop1 = parse_scalar(key, value)?,
            "train.lr_drop2" => self.train.lr_drop2 = parse_scalar(key, value)?,
            "train.flip" => self.train.flip = parse_scalar(key, value)?,
            "infer.score_threshold" => self.infer.score_threshold = parse_scalar(key, value)?,
            "infer.topk_per_level" => self.infer.topk_per_level = parse_scalar(key, value)?,
            "infer.nms_iou" => self.infer.nms_iou = parse_scalar(key, value)?,
            "dump.scenes" => self.dump.scenes = parse_scalar(key, value)?,
            "ablate.sw" => self.ablate.sw = parse_on_off_list(key, value)?,
            "ablate.ss" => self.ablate.ss = parse_on_off_list(key, value)?,
            "ablate.etas" => self.ablate.etas = parse_list(key, value)?,
            "ablate.topks" => self.ablate.topks = parse_list(key, value)?,
            "ablate.modes" => {
                self.ablate.modes = value
                    .split(',')
                    .map(|m| m.trim().parse())
                    .collect::<Result<Vec<WeightMode>>>()?
            }
            "ablate.seeds" => self.ablate.seeds = parse_list(key, value)?,
            "ablate.train_scenes" => self.ablate.train_scenes = parse_scalar(key, value)?,
            "ablate.eval_scenes" => self.ablate.eval_scenes = parse_scalar(key, value)?,
            "ablate.epochs" => self.ablate.epochs = parse_scalar(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped. Starts from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Serializes the fully resolved configuration (defaults applied,
    /// phase switch concrete) so that reloading it reproduces the run.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv(&mut s, "data.width", self.data.width.to_string());
        kv(&mut s, "data.height", self.data.height.to_string());
        kv(&mut s, "data.classes", self.data.classes.to_string());
        kv(&mut s, "data.train_scenes", self.data.train_scenes.to_string());
        kv(&mut s, "data.eval_scenes", self.data.eval_scenes.to_string());
        kv(&mut s, "data.min_size", self.data.min_size.to_string());
        kv(&mut s, "data.max_size", self.data.max_size.to_string());
        kv(&mut s, "data.max_instances", self.data.max_instances.to_string());
        kv(&mut s, "data.noise", self.data.noise.to_string());
        kv(&mut s, "data.seed", self.data.seed.to_string());
        kv(&mut s, "data.eval_seed", self.data.eval_seed.to_string());
        kv(&mut s, "data.dir", self.data.dir.clone());
        kv(&mut s, "data.eval_dir", self.data.eval_dir.clone());
        kv(&mut s, "pyramid.min_level", self.pyramid_min_level.to_string());
        kv(&mut s, "pyramid.max_level", self.pyramid_max_level.to_string());
        kv(&mut s, "model.channels", self.model.channels.to_string());
        kv(&mut s, "model.head_layers", self.model.head_layers.to_string());
        kv(&mut s, "model.select_channels", self.model.select_channels.to_string());
        kv(&mut s, "assign.epsilon", self.assign.epsilon.to_string());
        kv(&mut s, "assign.z", self.assign.z.to_string());
        kv(&mut s, "weighting.eta", self.weighting.eta.to_string());
        kv(&mut s, "weighting.mode", self.weighting.mode.to_string());
        kv(&mut s, "select.enabled", self.select.enabled.to_string());
        kv(&mut s, "select.top_k", self.select.top_k.to_string());
        kv(&mut s, "select.lambda", self.select.lambda.to_string());
        kv(&mut s, "select.roi_size", self.select.roi_size.to_string());
        kv(&mut s, "select.sampling_ratio", self.select.sampling_ratio.to_string());
        kv(&mut s, "select.feature_grad", self.select.feature_grad.to_string());
        kv(&mut s, "loss.alpha", self.loss.alpha.to_string());
        kv(&mut s, "loss.gamma", self.loss.gamma.to_string());
        kv(&mut s, "train.seed", self.train.seed.to_string());
        kv(&mut s, "train.epochs", self.train.epochs.to_string());
        kv(&mut s, "train.batch_size", self.train.batch_size.to_string());
        kv(&mut s, "train.lr", self.train.lr.to_string());
        kv(&mut s, "train.momentum", self.train.momentum.to_string());
        kv(&mut s, "train.weight_decay", self.train.weight_decay.to_string());
        kv(
            &mut s,
            "train.phase_switch_epoch",
            self.phase_switch_epoch().to_string(),
        );
        kv(&mut s, "train.lr_drop1", self.train.lr_drop1.to_string());
        kv(&mut s, "train.lr_drop2", self.train.lr_drop2.to_string());
        kv(&mut s, "train.flip", self.train.flip.to_string());
        kv(&mut s, "infer.score_threshold", self.infer.score_threshold.to_string());
        kv(&mut s, "infer.topk_per_level", self.infer.topk_per_level.to_string());
        kv(&mut s, "infer.nms_iou", self.infer.nms_iou.to_string());
        kv(&mut s, "dump.scenes", self.dump.scenes.to_string());
        let onoff = |v: &[bool]| {
            v.iter()
                .map(|&b| if b { "on" } else { "off" })
                .collect::<Vec<_>>()
                .join(",")
        };
        kv(&mut s, "ablate.sw", onoff(&self.ablate.sw));
        kv(&mut s, "ablate.ss", onoff(&self.ablate.ss));
        kv(&mut s, "ablate.etas", join(&self.ablate.etas));
        kv(&mut s, "ablate.topks", join(&self.ablate.topks));
        kv(&mut s, "ablate.modes", join(&self.ablate.modes));
        kv(&mut s, "ablate.seeds", join(&self.ablate.seeds));
        kv(&mut s, "ablate.train_scenes", self.ablate.train_scenes.to_string());
        kv(&mut s, "ablate.eval_scenes", self.ablate.eval_scenes.to_string());
        kv(&mut s, "ablate.epochs", self.ablate.epochs.to_string());
        s
    }

    /// Phase-switch epoch with the `epochs / 2` default applied.
    pub fn phase_switch_epoch(&self) -> usize {
        self.train
            .phase_switch_epoch
            .unwrap_or(self.train.epochs / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.pyramid_spec()?;
        if self.assign.epsilon <= 0.0 || self.assign.epsilon > 1.0 {
            return Err(Error::Config(format!(
                "assign.epsilon must be in (0, 1], got {}",
                self.assign.epsilon
            )));
        }
        if self.assign.z <= 0.0 {
            return Err(Error::Config("assign.z must be positive".into()));
        }
        if self.weighting.eta < 0.0 {
            return Err(Error::Config("weighting.eta must be non-negative".into()));
        }
        if self.select.top_k == 0 || self.select.top_k > spec.num_levels() {
            return Err(Error::Config(format!(
                "select.top_k must be in [1, {}], got {}",
                spec.num_levels(),
                self.select.top_k
            )));
        }
        if self.select.roi_size < 7 {
            return Err(Error::Config("select.roi_size must be at least 7".into()));
        }
        if self.select.sampling_ratio == 0 {
            return Err(Error::Config("select.sampling_ratio must be positive".into()));
        }
        if self.data.classes == 0 || self.data.classes > 3 {
            return Err(Error::Config(
                "data.classes must be between 1 and 3 (rectangle, ellipse, triangle)".into(),
            ));
        }
        if self.data.min_size <= 0.0 || self.data.min_size > self.data.max_size {
            return Err(Error::Config("invalid data.min_size/max_size range".into()));
        }
        if self.data.max_instances == 0 || self.data.max_instances > 8 {
            return Err(Error::Config("data.max_instances must be in [1, 8]".into()));
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return Err(Error::Config("train.batch_size and train.epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn pyramid_spec(&self) -> Result<PyramidSpec> {
        PyramidSpec::new(
            self.pyramid_min_level,
            self.pyramid_max_level,
            self.data.width,
            self.data.height,
        )
    }

    pub fn soft_weight_config(&self) -> SoftWeightConfig {
        SoftWeightConfig {
            eta: self.weighting.eta,
            epsilon: self.assign.epsilon,
            mode: self.weighting.mode,
        }
    }

    pub fn focal_config(&self) -> FocalConfig {
        FocalConfig {
            alpha: self.loss.alpha,
            gamma: self.loss.gamma,
        }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            top_k: self.select.top_k,
            lambda: self.select.lambda,
            roi_size: self.select.roi_size,
            sampling_ratio: self.select.sampling_ratio,
        }
    }
}
