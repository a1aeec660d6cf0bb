//! Dataset evaluation and side-by-side benchmarking.
//!
//! Each HR image is centre-cropped to a multiple of the scale, degraded by
//! Keys downsampling, pushed through a pipeline and scored against the
//! cropped HR luma. Images are processed in parallel; rows and aggregates are
//! always in filename order, so reports are byte-identical across runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{load_image, rgb_to_luma, Luma, RgbImage};
use crate::metrics::QualityScore;
use crate::pipeline::{degrade, list_images, Pipeline};

/// Luma convention used for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LumaRange {
    /// Full-range BT.601 `Y` in `[0, 255]`.
    Full,
    /// Studio-swing BT.601 `Y = 16 + 219 * Y_full` (8-bit units), the usual
    /// super-resolution benchmark convention.
    Studio,
}

impl LumaRange {
    pub fn name(self) -> &'static str {
        match self {
            LumaRange::Full => "full",
            LumaRange::Studio => "studio",
        }
    }

    fn apply(self, y: &Luma) -> Luma {
        match self {
            LumaRange::Full => y.clone(),
            LumaRange::Studio => y.map(|v| (16.0 + 219.0 * v) / 255.0),
        }
    }
}

impl std::str::FromStr for LumaRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LumaRange::Full),
            "studio" => Ok(LumaRange::Studio),
            other => Err(Error::InvalidArgument(format!(
                "luma range must be full or studio, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Border excluded from scoring; `None` means the scale factor.
    pub shave: Option<usize>,
    pub luma: LumaRange,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            shave: None,
            luma: LumaRange::Studio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image: String,
    pub score: QualityScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub scale: usize,
    pub shave: usize,
    pub luma: LumaRange,
    pub stages: String,
    pub kernel: String,
    pub bank_version: String,
    pub arch_id: String,
    pub rows: Vec<EvalRow>,
    pub mean: QualityScore,
}

fn mean_score(rows: &[EvalRow]) -> QualityScore {
    let n = rows.len() as f64;
    let avg = |f: fn(&QualityScore) -> f64| rows.iter().map(|r| f(&r.score)).sum::<f64>() / n;
    QualityScore {
        psnr_db: avg(|s| s.psnr_db),
        ssim: avg(|s| s.ssim),
        mse: avg(|s| s.mse),
    }
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    /// Tab-separated records: `image method scale psnr_db ssim mse`.
    pub fn sidecar_lines(&self) -> Vec<String> {
        let rec = |image: &str, s: &QualityScore| {
            format!(
                "{image}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                self.method,
                self.scale,
                fmt_psnr(s.psnr_db),
                s.ssim,
                s.mse
            )
        };
        let mut out: Vec<String> = self.rows.iter().map(|r| rec(&r.image, &r.score)).collect();
        out.push(rec("MEAN", &self.mean));
        out
    }

    pub fn to_sidecar(&self) -> String {
        let mut s = String::from(SIDECAR_HEADER);
        for l in self.sidecar_lines() {
            s.push_str(&l);
            s.push('\n');
        }
        s
    }

    fn header(&self, out: &mut String) {
        let _ = writeln!(out, "# dataset: {}", self.dataset);
        let _ = writeln!(
            out,
            "# scale: x{}  shave: {}  luma: {}",
            self.scale,
            self.shave,
            self.luma.name()
        );
        let _ = writeln!(
            out,
            "# {}: stages={} kernel={} bank={} arch={}",
            self.method, self.stages, self.kernel, self.bank_version, self.arch_id
        );
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        let width = self
            .rows
            .iter()
            .map(|r| r.image.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>7}  {:>12}", "image", "PSNR(dB)", "SSIM", "MSE");
        for r in self.rows.iter().map(|r| (&r.image, &r.score)).chain([(&"mean".to_string(), &self.mean)]) {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>7.4}  {:>12.4}",
                r.0,
                fmt_psnr(r.1.psnr_db),
                r.1.ssim,
                r.1.mse
            );
        }
        out
    }
}

pub const SIDECAR_HEADER: &str = "image\tmethod\tscale\tpsnr_db\tssim\tmse\n";

/// One scored image, with the images when requested.
pub struct ScoredImage {
    pub name: String,
    pub score: QualityScore,
    pub hr: Option<RgbImage>,
    pub sr: Option<RgbImage>,
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Degrade, upscale and score one HR image.
pub fn score_image(
    hr: &RgbImage,
    pipeline: &Pipeline,
    opts: &EvalOptions,
) -> Result<(QualityScore, RgbImage, RgbImage)> {
    let scale = pipeline.config().scale;
    let (hr, lr) = degrade(hr, scale)?;
    let sr = pipeline.run(&lr)?;
    let shave = opts.shave.unwrap_or(scale);
    let y_sr = opts.luma.apply(&rgb_to_luma(&sr).0);
    let y_hr = opts.luma.apply(&rgb_to_luma(&hr).0);
    let score = QualityScore::measure(&y_sr, &y_hr, shave)?;
    Ok((score, hr, sr))
}

fn score_files(
    files: &[PathBuf],
    pipeline: &Pipeline,
    opts: &EvalOptions,
    keep_images: bool,
) -> Result<Vec<ScoredImage>> {
    files
        .par_iter()
        .map(|f| {
            let hr = load_image(f)?;
            let (score, hr, sr) = score_image(&hr, pipeline, opts)?;
            Ok(ScoredImage {
                name: file_name(f),
                score,
                hr: keep_images.then_some(hr),
                sr: keep_images.then_some(sr),
            })
        })
        .collect()
}

fn build_report(dataset: &str, method: &str, pipeline: &Pipeline, opts: &EvalOptions, scored: &[ScoredImage]) -> EvalReport {
    let cfg = pipeline.config();
    let rows: Vec<EvalRow> = scored
        .iter()
        .map(|s| EvalRow {
            image: s.name.clone(),
            score: s.score,
        })
        .collect();
    EvalReport {
        dataset: dataset.to_string(),
        method: method.to_string(),
        scale: cfg.scale,
        shave: opts.shave.unwrap_or(cfg.scale),
        luma: opts.luma,
        stages: cfg.stages.to_string(),
        kernel: cfg.upsample_kernel.to_string(),
        bank_version: pipeline.bank().version().to_string(),
        arch_id: pipeline
            .model()
            .map(|m| m.arch_id())
            .unwrap_or_else(|| "-".to_string()),
        mean: mean_score(&rows),
        rows,
    }
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Score every image in `test_dir` with `pipeline`.
pub fn evaluate_dataset(
    test_dir: &Path,
    pipeline: &Pipeline,
    opts: &EvalOptions,
    method: &str,
) -> Result<EvalReport> {
    let files = list_images(test_dir)?;
    let scored = score_files(&files, pipeline, opts, false)?;
    Ok(build_report(&dataset_name(test_dir), method, pipeline, opts, &scored))
}

/// Baseline and pipeline reports over the same images.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub baseline: EvalReport,
    pub pipeline: EvalReport,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let (b, p) = (&self.baseline, &self.pipeline);
        let mut out = String::new();
        b.header(&mut out);
        let _ = writeln!(out, "# {}: stages={} kernel={} bank={} arch={}", p.method, p.stages, p.kernel, p.bank_version, p.arch_id);
        let width = b.rows.iter().map(|r| r.image.len()).max().unwrap_or(0).max(5);
        let col = |m: &str| format!("{m} PSNR/SSIM");
        let _ = writeln!(out, "{:<width$}  {:>20}  {:>20}", "image", col(&b.method), col(&p.method));
        let pair = |s: &QualityScore| format!("{} / {:.4}", fmt_psnr(s.psnr_db), s.ssim);
        for (rb, rp) in b.rows.iter().zip(&p.rows) {
            let _ = writeln!(out, "{:<width$}  {:>20}  {:>20}", rb.image, pair(&rb.score), pair(&rp.score));
        }
        let _ = writeln!(out, "{:<width$}  {:>20}  {:>20}", "mean", pair(&b.mean), pair(&p.mean));
        out
    }

    pub fn to_sidecar(&self) -> String {
        let mut s = String::from(SIDECAR_HEADER);
        for l in self
            .baseline
            .sidecar_lines()
            .into_iter()
            .chain(self.pipeline.sidecar_lines())
        {
            s.push_str(&l);
            s.push('\n');
        }
        s
    }
}

/// Side-by-side strip: baseline | pipeline | ground truth.
pub fn comparison_strip(baseline: &RgbImage, pipeline: &RgbImage, hr: &RgbImage) -> Result<RgbImage> {
    let (h, w) = (hr.height(), hr.width());
    for img in [baseline, pipeline] {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::DimensionMismatch("comparison images differ in size".into()));
        }
    }
    let mut data = Vec::with_capacity(9 * h * w);
    for r in 0..h {
        for img in [baseline, pipeline, hr] {
            data.extend_from_slice(&img.data()[3 * r * w..3 * (r + 1) * w]);
        }
    }
    RgbImage::new(h, 3 * w, data)
}

/// Run the baseline and the full pipeline over `test_dir`. When `image_dir`
/// is given, a comparison strip per image is written there as PNG.
pub fn bench(
    test_dir: &Path,
    baseline: &Pipeline,
    pipeline: &Pipeline,
    opts: &EvalOptions,
    image_dir: Option<&Path>,
) -> Result<BenchReport> {
    let files = list_images(test_dir)?;
    let keep = image_dir.is_some();
    let sb = score_files(&files, baseline, opts, keep)?;
    let sp = score_files(&files, pipeline, opts, keep)?;
    if let Some(dir) = image_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (b, p) in sb.iter().zip(&sp) {
            let strip = comparison_strip(
                b.sr.as_ref().unwrap(),
                p.sr.as_ref().unwrap(),
                b.hr.as_ref().unwrap(),
            )?;
            let stem = Path::new(&b.name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            crate::image::save_image(&strip, dir.join(format!("{stem}_compare.png")))?;
        }
    }
    let name = dataset_name(test_dir);
    Ok(BenchReport {
        baseline: build_report(&name, "bicubic", baseline, opts, &sb),
        pipeline: build_report(&name, "pipeline", pipeline, opts, &sp),
    })
}
