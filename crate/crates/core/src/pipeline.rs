//! Upscaling pipeline: upsample -> non-local enhancement -> network refinement.
//!
//! Stage boundaries are 8-bit RGB images, so running the stages one at a time
//! through image files gives the same bytes as running them fused.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_image, luma_to_rgb, rgb_to_luma, Luma, RgbImage};
use crate::nonlocal::{enhance_image, NonlocalParams};
use crate::resample::{resample, KernelKind, ResampleKernel};
use crate::srnet::{forward, load_model, SrNetwork};
use crate::stencil::StencilBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Upsample,
    Enhance,
    Refine,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Upsample, Stage::Enhance, Stage::Refine];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Upsample => "upsample",
            Stage::Enhance => "enhance",
            Stage::Refine => "refine",
        }
    }
}

/// A subset of the stages; always iterated in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stages {
    pub upsample: bool,
    pub enhance: bool,
    pub refine: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        upsample: true,
        enhance: true,
        refine: true,
    };
    pub const UPSAMPLE: Stages = Stages {
        upsample: true,
        enhance: false,
        refine: false,
    };
    pub const UPSAMPLE_ENHANCE: Stages = Stages {
        upsample: true,
        enhance: true,
        refine: false,
    };

    pub fn contains(&self, s: Stage) -> bool {
        match s {
            Stage::Upsample => self.upsample,
            Stage::Enhance => self.enhance,
            Stage::Refine => self.refine,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Stage> + '_ {
        Stage::ALL.into_iter().filter(|s| self.contains(*s))
    }

    pub fn is_empty(&self) -> bool {
        !(self.upsample || self.enhance || self.refine)
    }
}

impl std::str::FromStr for Stages {
    type Err = Error;

    /// Comma-separated stage names, listed in pipeline order.
    fn from_str(s: &str) -> Result<Self> {
        let mut out = Stages {
            upsample: false,
            enhance: false,
            refine: false,
        };
        let mut last: Option<Stage> = None;
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let stage = match name {
                "upsample" => Stage::Upsample,
                "enhance" => Stage::Enhance,
                "refine" => Stage::Refine,
                "all" => {
                    out = Stages::ALL;
                    continue;
                }
                other => return Err(Error::InvalidArgument(format!("unknown stage {other:?}"))),
            };
            if last.is_some_and(|l| l >= stage) {
                return Err(Error::InvalidArgument(format!(
                    "stages must be listed once each, in pipeline order: {s:?}"
                )));
            }
            last = Some(stage);
            match stage {
                Stage::Upsample => out.upsample = true,
                Stage::Enhance => out.enhance = true,
                Stage::Refine => out.refine = true,
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("no stages selected".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Stages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Stage::name).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Integer magnification; 1 is an identity test mode.
    pub scale: usize,
    pub upsample_kernel: KernelKind,
    pub nonlocal: NonlocalParams,
    /// `None` uses the shipped bank.
    pub stencil_bank_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub stages: Stages,
    /// Train/run the last network layer with ReLU.
    pub final_relu: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            upsample_kernel: KernelKind::CubicBspline,
            nonlocal: NonlocalParams::default(),
            stencil_bank_path: None,
            model_path: None,
            stages: Stages::ALL,
            final_relu: true,
        }
    }
}

impl PipelineConfig {
    /// Plain bicubic upsampling, the reference baseline.
    pub fn bicubic_baseline(scale: usize) -> Self {
        Self {
            scale,
            upsample_kernel: KernelKind::BicubicKeys,
            stages: Stages::UPSAMPLE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::InvalidArgument("scale must be >= 1".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("no stages selected".into()));
        }
        if self.stages.refine && self.model_path.is_none() {
            return Err(Error::ModelMissing);
        }
        self.nonlocal.validate()
    }
}

fn load_bank(config: &PipelineConfig) -> Result<StencilBank> {
    match &config.stencil_bank_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            StencilBank::parse(&text)
        }
        None => Ok(StencilBank::default_bank()),
    }
}

/// A configured pipeline with its bank and model loaded.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    bank: StencilBank,
    model: Option<SrNetwork>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let bank = load_bank(&config)?;
        let model = if config.stages.refine {
            let path = config.model_path.as_ref().ok_or(Error::ModelMissing)?;
            let mut net = load_model(path).map_err(|e| e.in_stage("refine"))?;
            net.final_relu = config.final_relu;
            Some(net)
        } else {
            None
        };
        Ok(Self {
            config,
            bank,
            model,
        })
    }

    /// Use an in-memory network for the refine stage; `model_path` is ignored.
    pub fn with_model(config: PipelineConfig, mut net: SrNetwork) -> Result<Self> {
        if config.scale == 0 || config.stages.is_empty() {
            return Err(Error::InvalidArgument(
                "scale must be >= 1 and at least one stage selected".into(),
            ));
        }
        config.nonlocal.validate()?;
        let bank = load_bank(&config)?;
        net.final_relu = config.final_relu;
        Ok(Self {
            model: config.stages.refine.then_some(net),
            config,
            bank,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn bank(&self) -> &StencilBank {
        &self.bank
    }

    pub fn model(&self) -> Option<&SrNetwork> {
        self.model.as_ref()
    }

    /// Run the configured stages on an LR image.
    pub fn run(&self, lr: &RgbImage) -> Result<RgbImage> {
        self.run_stages(lr, self.config.stages)
    }

    /// Run a subset of the stages (each still gated by this pipeline's resources).
    pub fn run_stages(&self, lr: &RgbImage, stages: Stages) -> Result<RgbImage> {
        let mut img = lr.clone();
        for stage in stages.iter() {
            img = self
                .run_stage(&img, stage)
                .map_err(|e| e.in_stage(stage.name()))?;
        }
        Ok(img)
    }

    fn run_stage(&self, img: &RgbImage, stage: Stage) -> Result<RgbImage> {
        let (y, chroma) = rgb_to_luma(img);
        match stage {
            Stage::Upsample => {
                let f = self.config.scale as f64;
                let kernel = ResampleKernel::new(self.config.upsample_kernel);
                let y = resample(&y, f, kernel)?;
                let chroma = crate::image::Chroma {
                    cb: resample(&chroma.cb, f, ResampleKernel::BICUBIC)?,
                    cr: resample(&chroma.cr, f, ResampleKernel::BICUBIC)?,
                };
                luma_to_rgb(&y, &chroma)
            }
            Stage::Enhance => {
                let y = enhance_image(&y, &self.bank, &self.config.nonlocal)?;
                luma_to_rgb(&y, &chroma)
            }
            Stage::Refine => {
                let net = self.model.as_ref().ok_or(Error::ModelMissing)?;
                let y = refine_luma(net, &y)?;
                luma_to_rgb(&y, &chroma)
            }
        }
    }
}

/// Network output pasted into the centre of its input; the ring lost to
/// valid convolution keeps the input's pixels.
pub fn refine_luma(net: &SrNetwork, y: &Luma) -> Result<Luma> {
    let inner = forward(net, y)?;
    let mut out = y.clone();
    let off = net.shrink() / 2;
    out.paste(&inner, off, off)?;
    Ok(out)
}

/// Build a pipeline from `cfg` and run it once.
pub fn run_pipeline(lr: &RgbImage, cfg: &PipelineConfig) -> Result<RgbImage> {
    Pipeline::new(cfg.clone())?.run(lr)
}

/// Manufacture the LR observation of an HR image: centre-crop to a multiple of
/// `scale`, then Keys-downsample every colour channel and quantize to 8 bits.
/// Scale 1 is the identity.
pub fn degrade(hr: &RgbImage, scale: usize) -> Result<(RgbImage, RgbImage)> {
    let hr = hr.crop_to_multiple(scale.max(1));
    if scale <= 1 {
        return Ok((hr.clone(), hr));
    }
    let [r, g, b] = hr.to_planes();
    let planes = [
        crate::resample::downsample_lr(&r, scale)?,
        crate::resample::downsample_lr(&g, scale)?,
        crate::resample::downsample_lr(&b, scale)?,
    ];
    Ok((hr, RgbImage::from_planes(&planes)?))
}

/// Sorted image files (png/pgm/ppm) directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(files)
}

/// Which luma plane the network is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainInput {
    /// Output of upsample + enhance.
    Enhanced,
    /// Output of upsample only (ablation).
    Plain,
}

impl std::str::FromStr for TrainInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enhanced" => Ok(TrainInput::Enhanced),
            "plain" => Ok(TrainInput::Plain),
            other => Err(Error::InvalidArgument(format!(
                "train input must be enhanced or plain, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<(Luma, Luma)>,
    pub images_used: usize,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Offsets of `sub`-sized crops at `stride` along an axis of length `n`.
pub fn crop_offsets(n: usize, sub: usize, stride: usize) -> Vec<usize> {
    if n < sub {
        return Vec::new();
    }
    (0..=(n - sub) / stride).map(|i| i * stride).collect()
}

/// Aligned `(network input, HR target)` crops for one HR image.
pub fn training_pairs_for(
    pipeline: &Pipeline,
    hr: &RgbImage,
    input: TrainInput,
    sub_image: usize,
    stride: usize,
) -> Result<Vec<(Luma, Luma)>> {
    let scale = pipeline.config.scale;
    let (hr, lr) = degrade(hr, scale)?;
    let stages = match input {
        TrainInput::Enhanced => Stages {
            refine: false,
            ..Stages::UPSAMPLE_ENHANCE
        },
        TrainInput::Plain => Stages::UPSAMPLE,
    };
    let stages = Stages {
        enhance: stages.enhance && pipeline.config.stages.enhance,
        ..stages
    };
    let x = rgb_to_luma(&pipeline.run_stages(&lr, stages)?).0;
    let y = rgb_to_luma(&hr).0;
    if x.dims() != y.dims() {
        return Err(Error::DimensionMismatch(format!(
            "pipeline output {:?} vs HR {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let mut pairs = Vec::new();
    for &r in &crop_offsets(x.height(), sub_image, stride) {
        for &c in &crop_offsets(x.width(), sub_image, stride) {
            pairs.push((
                x.window(r, c, sub_image, sub_image)?,
                y.window(r, c, sub_image, sub_image)?,
            ));
        }
    }
    Ok(pairs)
}

/// Training crops for every readable image in `hr_dir`, in filename order.
pub fn prepare_training_set(
    hr_dir: &Path,
    pipeline: &Pipeline,
    input: TrainInput,
    sub_image: usize,
    stride: usize,
) -> Result<TrainingSet> {
    let files = list_images(hr_dir)?;
    let mut set = TrainingSet {
        pairs: Vec::new(),
        images_used: 0,
        skipped: Vec::new(),
    };
    for f in files {
        match load_image(&f) {
            Ok(img) => {
                set.pairs
                    .extend(training_pairs_for(pipeline, &img, input, sub_image, stride)?);
                set.images_used += 1;
            }
            Err(e) => set.skipped.push((f, e.to_string())),
        }
    }
    if set.images_used == 0 {
        return Err(Error::EmptyDirectory(hr_dir.to_path_buf()));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_parsing() {
        assert_eq!("upsample".parse::<Stages>().unwrap(), Stages::UPSAMPLE);
        assert_eq!(
            "upsample,enhance,refine".parse::<Stages>().unwrap(),
            Stages::ALL
        );
        assert_eq!("all".parse::<Stages>().unwrap(), Stages::ALL);
        assert!("enhance,upsample".parse::<Stages>().is_err());
        assert!("upsample,upsample".parse::<Stages>().is_err());
        assert!("".parse::<Stages>().is_err());
        assert!("sharpen".parse::<Stages>().is_err());
        assert_eq!(Stages::UPSAMPLE_ENHANCE.to_string(), "upsample,enhance");
    }

    #[test]
    fn refine_requires_model() {
        let cfg = PipelineConfig::default();
        assert!(matches!(cfg.validate(), Err(Error::ModelMissing)));
        assert!(matches!(Pipeline::new(cfg), Err(Error::ModelMissing)));
    }

    #[test]
    fn upsample_constant() {
        let cfg = PipelineConfig {
            stages: Stages::UPSAMPLE,
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&RgbImage::filled(10, 12, [90, 140, 30]), &cfg).unwrap();
        assert_eq!((out.height(), out.width()), (20, 24));
        let first = out.pixel(0, 0);
        assert!(out.data().chunks(3).all(|p| p == first));
    }

    #[test]
    fn enhance_keeps_constant() {
        let cfg = PipelineConfig {
            stages: Stages::UPSAMPLE_ENHANCE,
            ..PipelineConfig::default()
        };
        let lr = RgbImage::filled(16, 16, [100, 100, 100]);
        let up = run_pipeline(
            &lr,
            &PipelineConfig {
                stages: Stages::UPSAMPLE,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(run_pipeline(&lr, &cfg).unwrap(), up);
    }

    #[test]
    fn crop_offset_formula() {
        assert_eq!(crop_offsets(64, 33, 14), vec![0, 14, 28]);
        assert_eq!(crop_offsets(33, 33, 14), vec![0]);
        assert!(crop_offsets(20, 33, 14).is_empty());
    }

    #[test]
    fn degrade_dimensions() {
        let hr = RgbImage::filled(35, 41, [10, 20, 30]);
        let (crop, lr) = degrade(&hr, 2).unwrap();
        assert_eq!((crop.height(), crop.width()), (34, 40));
        assert_eq!((lr.height(), lr.width()), (17, 20));
        assert!(lr.data().chunks(3).all(|p| p == [10, 20, 30]));
    }
}
