//! Command-line front end: simulate camera-array scenes, reconstruct 3D
//! tool poses from detection streams, evaluate, run view ablations, and
//! augment dataset samples.
//!
//! Exit status: 0 on success, 1 on runtime errors, 2 on usage errors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use toolpose::camera::{load_rig, save_rig};
use toolpose::dataset::{
    augment_sample, image_path, label_path, marker_mask_path, object_mask_path, Mask, MaskPair,
    Raster,
};
use toolpose::metrics::{BpeNorm, EvalTask, OksConfig, OksParams};
use toolpose::pipeline::{
    ablate_views, evaluate_bpe_files, evaluate_detection_files, reconstruct_stream_text,
    PipelineOptions,
};
use toolpose::reconstruct::{ToolClass, DEFAULT_TAU_EPI};
use toolpose::sim::{make_rig, scatter_beans, simulate_stream, MotionScript, NoiseModel, RigSpec};

#[derive(Parser)]
#[command(name = "toolpose", version, about = "Multi-view 3D tool pose reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic detection stream with ground truth.
    Simulate(SimulateArgs),
    /// Reconstruct 3D poses from a detection stream.
    Reconstruct(ReconstructArgs),
    /// Evaluate poses (bpe) or detections (od, pe).
    Evaluate(EvaluateArgs),
    /// Average back-projection error over every camera subset per size.
    Ablate(AblateArgs),
    /// Background/marker substitution over a dataset directory.
    Augment(AugmentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Rig layout as ARRAYSxCAMERAS, e.g. 1x5 or 2x5.
    #[arg(long)]
    rig: String,
    #[arg(long)]
    frames: u64,
    /// Pixel noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Per-keypoint-per-view dropout probability.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory for rig.json, detections.txt, groundtruth.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    beans: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 600.0)]
    focal: f64,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Rig configuration file (JSON).
    #[arg(long)]
    rig: PathBuf,
    /// Detection stream file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Temporal smoothing factor in [0,1]; 0 disables smoothing.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Epipolar gate for bean grouping, pixels.
    #[arg(long = "tau-epi", default_value_t = DEFAULT_TAU_EPI)]
    tau_epi: f64,
    /// Pose stream output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Bpe,
    Od,
    Pe,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions: pose stream (bpe) or detection stream (od, pe).
    #[arg(long)]
    pred: PathBuf,
    /// Reference: detection stream.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum)]
    mode: EvalMode,
    /// Rig configuration file; required for bpe.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Epipolar gate for bean correspondence in bpe mode, pixels.
    #[arg(long = "tau-epi", default_value_t = DEFAULT_TAU_EPI)]
    tau_epi: f64,
    /// OKS keypoint constant applied to every keypoint slot.
    #[arg(long = "oks-k", default_value_t = 0.05)]
    oks_k: f64,
    /// Report mean squared distances instead of mean distances (bpe).
    #[arg(long)]
    squared: bool,
    /// Optional file to write the report to (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    rig: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "k-min", default_value_t = 2)]
    k_min: usize,
    #[arg(long = "k-max")]
    k_max: usize,
    #[arg(long = "tau-epi", default_value_t = DEFAULT_TAU_EPI)]
    tau_epi: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Directory of <stem>.ppm images (and optional <stem>.txt labels).
    #[arg(long)]
    images: PathBuf,
    /// Directory of <stem>.object.pgm / <stem>.marker.pgm masks.
    #[arg(long)]
    masks: PathBuf,
    /// Directory with backgrounds/ and markers/ subdirectories of .ppm
    /// textures.
    #[arg(long)]
    textures: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Reconstruct(args) => reconstruct(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Ablate(args) => ablate(args),
        Command::Augment(args) => augment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_rig_layout(spec: &str) -> Result<(usize, usize)> {
    let (arrays, cams) = spec
        .split_once('x')
        .with_context(|| format!("rig layout {spec:?} is not ARRAYSxCAMERAS"))?;
    Ok((
        arrays
            .parse()
            .with_context(|| format!("bad array count {arrays:?}"))?,
        cams.parse()
            .with_context(|| format!("bad camera count {cams:?}"))?,
    ))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (arrays, cameras_per_array) = parse_rig_layout(&args.rig)?;
    let spec = RigSpec {
        arrays,
        cameras_per_array,
        radius: args.radius,
        target: Vector3::zeros(),
        width: args.width,
        height: args.height,
        focal: args.focal,
        vertical_spacing: args.radius * 0.5,
    };
    let rig = make_rig(&spec)?;
    let script = MotionScript::demo(&spec.target);
    let beans = scatter_beans(args.beans, &Vector3::new(0.0, 0.0, -0.02), 0.04, args.seed);
    let noise = NoiseModel {
        sigma_px: args.sigma,
        dropout_prob: args.dropout,
        seed: args.seed,
    };
    let products = simulate_stream(&rig, &script, &beans, &noise, args.frames)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    save_rig(&rig, &args.out.join("rig.json"))?;
    write(&args.out.join("detections.txt"), &products.detections)?;
    write(&args.out.join("groundtruth.txt"), &products.ground_truth)?;
    println!(
        "simulated {} frames, {} cameras, {} beans -> {}",
        args.frames,
        rig.len(),
        args.beans,
        args.out.display()
    );
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let rig = load_rig(&args.rig)?;
    let text = read(&args.input)?;
    let options = PipelineOptions {
        smoothing_alpha: args.alpha,
        tau_epi: args.tau_epi,
    };
    let output = reconstruct_stream_text(&text, &rig, &options)?;
    write(&args.out, &output.pose_stream)?;
    for skip in &output.skipped {
        eprintln!("skipped frame: {}", skip.reason);
    }
    print!("{}", output.timing.summary());
    println!("skipped {}", output.skipped.len());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let pred = read(&args.pred)?;
    let gt = read(&args.gt)?;
    let table = match args.mode {
        EvalMode::Bpe => {
            let rig_path = args
                .rig
                .as_ref()
                .context("--rig is required for --mode bpe")?;
            let rig = load_rig(rig_path)?;
            let norm = if args.squared {
                BpeNorm::MeanSquaredDistance
            } else {
                BpeNorm::MeanDistance
            };
            evaluate_bpe_files(&pred, &gt, &rig, norm, args.tau_epi)?.to_table_string()
        }
        EvalMode::Od | EvalMode::Pe => {
            let task = match args.mode {
                EvalMode::Od => EvalTask::ObjectDetection,
                _ => EvalTask::PoseEstimation,
            };
            let oks_cfg = OksConfig {
                grasper: OksParams::uniform(ToolClass::Grasper.keypoint_count(), args.oks_k),
                bean: OksParams::uniform(ToolClass::Bean.keypoint_count(), args.oks_k),
            };
            evaluate_detection_files(&pred, &gt, task, &oks_cfg)?.to_table_string()
        }
    };
    print!("{table}");
    if let Some(out) = &args.out {
        write(out, &table)?;
    }
    Ok(())
}

fn ablate(args: AblateArgs) -> Result<()> {
    let rig = load_rig(&args.rig)?;
    let text = read(&args.input)?;
    let frames = toolpose::stream::parse_detection_stream(&text)?;
    let options = PipelineOptions {
        smoothing_alpha: 0.0,
        tau_epi: args.tau_epi,
    };
    let table = ablate_views(
        &frames,
        &rig,
        args.k_min,
        args.k_max,
        &options,
        BpeNorm::MeanDistance,
    )?;
    write(&args.out, &table.to_table_string())?;
    print!("{}", table.to_table_string());
    Ok(())
}

fn fnv1a(seed: u64, text: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ seed;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn texture_dir(dir: &Path) -> Result<Vec<Raster>> {
    let mut stems: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    stems.sort();
    if stems.is_empty() {
        bail!("no .ppm textures in {}", dir.display());
    }
    stems.iter().map(|p| Ok(Raster::load(p)?)).collect()
}

fn augment(args: AugmentArgs) -> Result<()> {
    let backgrounds = texture_dir(&args.textures.join("backgrounds"))?;
    let markers = texture_dir(&args.textures.join("markers"))?;

    let mut stems: Vec<String> = std::fs::read_dir(&args.images)
        .with_context(|| format!("reading {}", args.images.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();
    if stems.is_empty() {
        bail!("no .ppm images in {}", args.images.display());
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for stem in &stems {
        let img = Raster::load(&image_path(&args.images, stem))?;
        let object = Mask::load(&object_mask_path(&args.masks, stem))?;
        let marker = Mask::load(&marker_mask_path(&args.masks, stem))?;
        let masks = MaskPair::new(object, marker)?;
        let sample_seed = fnv1a(args.seed, stem);
        let background = &backgrounds[(sample_seed % backgrounds.len() as u64) as usize];
        let marker_tex = &markers[((sample_seed >> 16) % markers.len() as u64) as usize];
        let out = augment_sample(&img, &masks, background, marker_tex, sample_seed)?;
        out.save(&image_path(&args.out, stem))?;
        let labels = label_path(&args.images, stem);
        if labels.exists() {
            std::fs::copy(&labels, label_path(&args.out, stem))
                .with_context(|| format!("copying {}", labels.display()))?;
        }
    }
    println!("augmented {} samples -> {}", stems.len(), args.out.display());
    Ok(())
}
