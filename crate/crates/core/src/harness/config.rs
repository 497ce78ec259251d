//! Run configuration: one `key = value` file for every module, with
//! command-line overrides. Unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use super::timing::TimingOptions;
use crate::error::{Error, Result};
use crate::eventconv::MessageConfig;
use crate::filters::FilterConfig;
use crate::graph::VolumeSpec;
use crate::kogtl::LabelingConfig;
use crate::transformer::{TrainConfig, TransformerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub volume: VolumeSpec,
    pub message: MessageConfig,
    pub transformer: TransformerConfig,
    pub train: TrainConfig,
    /// Graphs sampled per class when building a training set.
    pub per_class: usize,
    /// Fraction of the sampled graphs used for training.
    pub train_split: f64,
    pub filters: FilterConfig,
    pub labeling: LabelingConfig,
    pub eval_window_us: i64,
    pub timing: TimingOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            volume: VolumeSpec::default(),
            message: MessageConfig::default(),
            transformer: TransformerConfig::default(),
            train: TrainConfig::default(),
            per_class: 4000,
            train_split: 0.8,
            filters: FilterConfig::default(),
            labeling: LabelingConfig::default(),
            eval_window_us: 10_000,
            timing: TimingOptions::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}` (expected true/false)"))),
    }
}

impl RunConfig {
    /// Every accepted key, in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "volume.L",
        "volume.T_us",
        "volume.N_max",
        "msg.variant",
        "msg.width",
        "msg.reference",
        "transformer.heads",
        "transformer.enc_layers",
        "transformer.dec_layers",
        "transformer.ff_dim",
        "transformer.single_token",
        "train.lr",
        "train.epochs",
        "train.batch_size",
        "train.per_class",
        "train.split",
        "ba.L",
        "ba.T_us",
        "ba.k",
        "nnb.T_us",
        "liu.T_us",
        "khodamoradi.T_us",
        "khodamoradi.match_polarity",
        "yang.L",
        "yang.T_us",
        "yang.density",
        "yang.hot_window_us",
        "yang.hot_count",
        "yang.hot_support",
        "kogtl.B",
        "kogtl.sigma",
        "kogtl.low",
        "kogtl.high",
        "kogtl.icp_max_iterations",
        "kogtl.icp_tolerance",
        "kogtl.icp_max_distance",
        "kogtl.start_offset_us",
        "eval.window_us",
        "bench.warmup",
        "bench.repetitions",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = &mut self.filters;
        let l = &mut self.labeling;
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "volume.L" => self.volume.half_extent = parse(key, v)?,
            "volume.T_us" => self.volume.depth_us = parse(key, v)?,
            "volume.N_max" => self.volume.max_neighbors = parse(key, v)?,
            "msg.variant" => self.message.quantities = v.parse()?,
            "msg.width" => self.message.width = parse(key, v)?,
            "msg.reference" => self.message.reference = v.parse()?,
            "transformer.heads" => self.transformer.heads = parse(key, v)?,
            "transformer.enc_layers" => self.transformer.encoder_layers = parse(key, v)?,
            "transformer.dec_layers" => self.transformer.decoder_layers = parse(key, v)?,
            "transformer.ff_dim" => {
                self.transformer.ff_dim = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "transformer.single_token" => self.transformer.single_token = parse_bool(key, v)?,
            "train.lr" => self.train.learning_rate = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.per_class" => self.per_class = parse(key, v)?,
            "train.split" => self.train_split = parse(key, v)?,
            "ba.L" => f.ba_half_extent = parse(key, v)?,
            "ba.T_us" => f.ba_window_us = parse(key, v)?,
            "ba.k" => f.ba_min_support = parse(key, v)?,
            "nnb.T_us" => f.nnb_window_us = parse(key, v)?,
            "liu.T_us" => f.liu_window_us = parse(key, v)?,
            "khodamoradi.T_us" => f.khodamoradi_window_us = parse(key, v)?,
            "khodamoradi.match_polarity" => f.khodamoradi_match_polarity = parse_bool(key, v)?,
            "yang.L" => f.yang_half_extent = parse(key, v)?,
            "yang.T_us" => f.yang_window_us = parse(key, v)?,
            "yang.density" => f.yang_density = parse(key, v)?,
            "yang.hot_window_us" => f.yang_hot_window_us = parse(key, v)?,
            "yang.hot_count" => f.yang_hot_count = parse(key, v)?,
            "yang.hot_support" => f.yang_hot_support = parse(key, v)?,
            "kogtl.B" => l.proximity = parse(key, v)?,
            "kogtl.sigma" => l.canny_sigma = parse(key, v)?,
            "kogtl.low" => l.canny_low = parse(key, v)?,
            "kogtl.high" => l.canny_high = parse(key, v)?,
            "kogtl.icp_max_iterations" => l.icp_max_iterations = parse(key, v)?,
            "kogtl.icp_tolerance" => l.icp_tolerance = parse(key, v)?,
            "kogtl.icp_max_distance" => l.icp_max_distance = parse(key, v)?,
            "kogtl.start_offset_us" => l.start_offset_us = parse(key, v)?,
            "eval.window_us" => self.eval_window_us = parse(key, v)?,
            "bench.warmup" => self.timing.warmup = parse(key, v)?,
            "bench.repetitions" => self.timing.repetitions = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let f = &self.filters;
        let l = &self.labeling;
        Ok(match key {
            "seed" => self.seed.to_string(),
            "volume.L" => self.volume.half_extent.to_string(),
            "volume.T_us" => self.volume.depth_us.to_string(),
            "volume.N_max" => self.volume.max_neighbors.to_string(),
            "msg.variant" => self.message.quantities.to_string(),
            "msg.width" => self.message.width.to_string(),
            "msg.reference" => self.message.reference.to_string(),
            "transformer.heads" => self.transformer.heads.to_string(),
            "transformer.enc_layers" => self.transformer.encoder_layers.to_string(),
            "transformer.dec_layers" => self.transformer.decoder_layers.to_string(),
            "transformer.ff_dim" => self.transformer.ff_dim.map_or("auto".to_string(), |d| d.to_string()),
            "transformer.single_token" => self.transformer.single_token.to_string(),
            "train.lr" => self.train.learning_rate.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.per_class" => self.per_class.to_string(),
            "train.split" => self.train_split.to_string(),
            "ba.L" => f.ba_half_extent.to_string(),
            "ba.T_us" => f.ba_window_us.to_string(),
            "ba.k" => f.ba_min_support.to_string(),
            "nnb.T_us" => f.nnb_window_us.to_string(),
            "liu.T_us" => f.liu_window_us.to_string(),
            "khodamoradi.T_us" => f.khodamoradi_window_us.to_string(),
            "khodamoradi.match_polarity" => f.khodamoradi_match_polarity.to_string(),
            "yang.L" => f.yang_half_extent.to_string(),
            "yang.T_us" => f.yang_window_us.to_string(),
            "yang.density" => f.yang_density.to_string(),
            "yang.hot_window_us" => f.yang_hot_window_us.to_string(),
            "yang.hot_count" => f.yang_hot_count.to_string(),
            "yang.hot_support" => f.yang_hot_support.to_string(),
            "kogtl.B" => l.proximity.to_string(),
            "kogtl.sigma" => l.canny_sigma.to_string(),
            "kogtl.low" => l.canny_low.to_string(),
            "kogtl.high" => l.canny_high.to_string(),
            "kogtl.icp_max_iterations" => l.icp_max_iterations.to_string(),
            "kogtl.icp_tolerance" => l.icp_tolerance.to_string(),
            "kogtl.icp_max_distance" => l.icp_max_distance.to_string(),
            "kogtl.start_offset_us" => l.start_offset_us.to_string(),
            "eval.window_us" => self.eval_window_us.to_string(),
            "bench.warmup" => self.timing.warmup.to_string(),
            "bench.repetitions" => self.timing.repetitions.to_string(),
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        })
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` must look like key=value")))?;
        self.set(k.trim(), v)
    }

    /// Applies a configuration file on top of the current values. Blank
    /// lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        VolumeSpec::new(self.volume.half_extent, self.volume.depth_us, self.volume.max_neighbors)?;
        if !(0.0 < self.train_split && self.train_split < 1.0) {
            return Err(Error::Config(format!("train.split must lie in (0, 1), got {}", self.train_split)));
        }
        if self.eval_window_us <= 0 {
            return Err(Error::Config("eval.window_us must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text with every key, used for hashing and manifests.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }
}
