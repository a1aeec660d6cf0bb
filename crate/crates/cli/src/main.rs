use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvsr::config::RunConfig;
use tvsr::eval::{bench, evaluate_dataset};
use tvsr::image::{load_image, save_image};
use tvsr::pipeline::{prepare_training_set, Pipeline, PipelineConfig, Stages, TrainInput};
use tvsr::srnet::{init_network, save_model, train};
use tvsr::{Error, Result};

#[derive(Parser)]
#[command(name = "tvsr", version, about = "Single-image super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upscale one image.
    Upscale {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the refinement network on a directory of HR images.
    Train {
        hr_dir: PathBuf,
        model_out: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Network input plane: enhanced or plain (upsample only).
        #[arg(long)]
        train_input: Option<TrainInput>,
    },
    /// Score the pipeline on a directory of HR images.
    Eval {
        hr_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare bicubic and the full pipeline side by side.
    Bench {
        hr_dir: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Directory for per-image comparison strips.
        #[arg(long, default_value = "bench-images")]
        images: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scale: Option<usize>,
    /// Configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated subset of upsample,enhance,refine, or "all".
    #[arg(long)]
    stages: Option<Stages>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here; tabular reports also get a `.tsv` sidecar.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.scale {
            cfg.pipeline.scale = s;
        }
        if let Some(m) = &self.model {
            cfg.pipeline.model_path = Some(m.clone());
        }
        if let Some(s) = self.stages {
            cfg.pipeline.stages = s;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        Ok(cfg)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sidecar_path(report: &Path) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".tsv");
    PathBuf::from(s)
}

fn emit(report: Option<&Path>, text: &str, sidecar: Option<&str>) -> Result<()> {
    print!("{text}");
    if let Some(p) = report {
        write_file(p, text)?;
        if let Some(tsv) = sidecar {
            write_file(&sidecar_path(p), tsv)?;
        }
    }
    Ok(())
}

fn upscale(input: &Path, output: &Path, common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let pipeline = Pipeline::new(cfg.pipeline)?;
    let lr = load_image(input)?;
    let sr = pipeline.run(&lr)?;
    save_image(&sr, output)
}

fn train_cmd(hr_dir: &Path, model_out: &Path, common: &Common, input: Option<TrainInput>) -> Result<()> {
    let mut cfg = common.run_config()?;
    if let Some(i) = input {
        cfg.train_input = i;
    }
    let pcfg = PipelineConfig {
        stages: Stages {
            refine: false,
            ..cfg.pipeline.stages
        },
        model_path: None,
        ..cfg.pipeline.clone()
    };
    let pipeline = Pipeline::new(pcfg)?;
    let t = &cfg.train;
    let set = prepare_training_set(hr_dir, &pipeline, cfg.train_input, t.sub_image, t.stride)?;
    for (path, why) in &set.skipped {
        eprintln!("warning: skipped {}: {why}", path.display());
    }
    let net = init_network(&cfg.arch, t.seed, t.init_std)?;
    let out = train(&net, &set.pairs, t)?;
    save_model(&out.net, model_out)?;

    let mut text = String::new();
    let _ = writeln!(text, "# {}", cfg.summary());
    let _ = writeln!(
        text,
        "images: {}  skipped: {}  pairs: {}  steps: {}  seed: {}",
        set.images_used,
        set.skipped.len(),
        set.pairs.len(),
        out.steps,
        t.seed
    );
    let _ = writeln!(text, "initial_loss: {:.8e}", out.initial_loss);
    for (i, l) in out.epoch_losses.iter().enumerate() {
        let _ = writeln!(text, "epoch {}: {:.8e}", i + 1, l);
    }
    emit(common.report.as_deref(), &text, None)
}

fn eval_cmd(hr_dir: &Path, common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let pipeline = Pipeline::new(cfg.pipeline)?;
    let report = evaluate_dataset(hr_dir, &pipeline, &cfg.eval, "pipeline")?;
    emit(common.report.as_deref(), &report.to_text(), Some(&report.to_sidecar()))
}

fn bench_cmd(hr_dir: &Path, common: &Common, images: &Path) -> Result<()> {
    let cfg = common.run_config()?;
    let baseline = Pipeline::new(PipelineConfig {
        stencil_bank_path: cfg.pipeline.stencil_bank_path.clone(),
        ..PipelineConfig::bicubic_baseline(cfg.pipeline.scale)
    })?;
    let pipeline = Pipeline::new(cfg.pipeline)?;
    let report = bench(hr_dir, &baseline, &pipeline, &cfg.eval, Some(images))?;
    emit(common.report.as_deref(), &report.to_text(), Some(&report.to_sidecar()))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Upscale {
            input,
            output,
            common,
        } => upscale(input, output, common),
        Command::Train {
            hr_dir,
            model_out,
            common,
            train_input,
        } => train_cmd(hr_dir, model_out, common, *train_input),
        Command::Eval { hr_dir, common } => eval_cmd(hr_dir, common),
        Command::Bench {
            hr_dir,
            common,
            images,
        } => bench_cmd(hr_dir, common, images),
    }
}

/// `error kind=<kind> [stage=<stage>] message=<text>` on one line.
fn error_line(e: &Error) -> String {
    let mut line = format!("error kind={}", e.kind());
    if let Some(stage) = e.stage() {
        let _ = write!(line, " stage={stage}");
    }
    let msg = e.to_string().replace(['\n', '\r'], " ");
    let _ = write!(line, " message={msg}");
    line
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
