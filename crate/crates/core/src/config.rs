//! Run configuration files.
//!
//! One `key = value` per line; `#` starts a comment. Keys are dotted
//! (`nonlocal.window`, `train.epochs`). Unknown keys and malformed values are
//! errors carrying the 1-based line number.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{EvalOptions, LumaRange};
use crate::pipeline::{PipelineConfig, TrainInput};
use crate::srnet::{arch_id, parse_arch, LayerSpec, TrainConfig, DEFAULT_ARCH};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub arch: [LayerSpec; 3],
    pub train: TrainConfig,
    pub train_input: TrainInput,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            arch: DEFAULT_ARCH,
            train: TrainConfig::default(),
            train_input: TrainInput::Enhanced,
            eval: EvalOptions::default(),
        }
    }
}

fn value<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

fn switch(v: &str) -> std::result::Result<bool, String> {
    match v {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on/off, got {v:?}")),
    }
}

fn rates(v: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated rates, got {v:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = value(p)?;
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { line: i + 1, reason };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            cfg.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Set one key; the error is a human-readable reason.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let p = &mut self.pipeline;
        let nl = &mut p.nonlocal;
        let t = &mut self.train;
        match key {
            "scale" => p.scale = value(v)?,
            "upsample_kernel" => p.upsample_kernel = value(v)?,
            "stages" => p.stages = value(v)?,
            "stencil_bank_path" => p.stencil_bank_path = Some(PathBuf::from(v)),
            "model_path" => p.model_path = Some(PathBuf::from(v)),
            "nonlocal.patch_size" => nl.patch_size = value(v)?,
            "nonlocal.window" => nl.window = value(v)?,
            "nonlocal.mm" => nl.mm = value(v)?,
            "nonlocal.sigma" => nl.sigma = value(v)?,
            "nonlocal.blend" => nl.blend = value(v)?,
            "net.final_relu" => p.final_relu = switch(v)?,
            "net.arch" => self.arch = parse_arch(v).map_err(|e| e.to_string())?,
            "train.learning_rates" => t.learning_rates = rates(v)?,
            "train.epochs" => t.epochs = value(v)?,
            "train.batch_size" => t.batch_size = value(v)?,
            "train.sub_image" => t.sub_image = value(v)?,
            "train.stride" => t.stride = value(v)?,
            "train.seed" => t.seed = value(v)?,
            "train.init_std" => t.init_std = value(v)?,
            "train.input" => self.train_input = value(v)?,
            "eval.shave" => self.eval.shave = Some(value(v)?),
            "eval.luma" => self.eval.luma = value::<LumaRange>(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Short description of the settings that affect results.
    pub fn summary(&self) -> String {
        let p = &self.pipeline;
        let nl = &p.nonlocal;
        format!(
            "scale={} kernel={} stages={} patch={} window={} mm={} sigma={} blend={} arch={} final_relu={}",
            p.scale,
            p.upsample_kernel,
            p.stages,
            nl.patch_size,
            nl.window,
            nl.mm,
            nl.sigma,
            nl.blend,
            arch_id(&self.arch),
            if p.final_relu { "on" } else { "off" }
        )
    }
}
