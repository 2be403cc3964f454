use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use facecap::config::{
    cascade_config_text, load_cascade_config, load_pipeline_config, load_train_config,
    pipeline_config_text, train_config_text,
};
use facecap::dataset::{load_dataset, params_text, parse_params, save_dataset};
use facecap::imageio::{read_prob, read_rgb, write_mask, write_prob};
use facecap::model_file::{load_model, save_model};
use facecap::plot::plot_sweep;
use facecap::rig_file::{load_rig, save_rig};
use facecap::segnet_file::{load_checkpoint, save_checkpoint};
use facecap::sources::DirSource;
use facecap::threaded::{InstantClock, ThreadScheduler};
use facecap::{Error, Result};
use facecap_core::augment::{
    gen_synthetic_dataset, regression_training_set, CropConfig, PerturbRanges, RenderConfig,
};
use facecap_core::facemodel::toy::{default_focal, toy_rig, ToyRigConfig, DEFAULT_DEPTH};
use facecap_core::facemodel::ShapeParams;
use facecap_core::image::{BinaryMask, PixelRect, RgbImage};
use facecap_core::maskrefine::{refine, upsample_mask, Connectivity, RefineConfig};
use facecap_core::neuralseg::{
    blob_dataset, build_two_stream_net, image_tensor, infer_probability_map, train, Init, Tensor,
};
use facecap_core::pipeline::{
    evaluate_occlusion_sweep, synthetic_sequence, AllFaceSource, NetSource, PipelineConfig,
    ProbSource, SequenceConfig, SweepConfig, Tracker, TrackerState,
};
use facecap_core::regressor::{train_cascade, CascadeConfig};
use facecap_core::rng::seeded;

#[derive(Parser)]
#[command(
    name = "facecap",
    version,
    about = "Segmentation-aware facial tracking tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a probability map into a binary face mask by graph cut.
    Refine(RefineArgs),
    /// Train the two-stream segmentation network.
    TrainSegnet(TrainSegnetArgs),
    /// Run a trained network on one image.
    InferSegnet(InferSegnetArgs),
    /// Train the cascade shape regressor on a synthetic dataset.
    TrainRegressor(TrainRegressorArgs),
    /// Render a synthetic face dataset.
    SynthData(SynthDataArgs),
    /// Track a frame sequence.
    Track(TrackArgs),
    /// Sweep occluder size on synthetic sequences, masked against unmasked.
    EvalOcclusion(EvalOcclusionArgs),
    /// Write a procedurally generated rig.
    GenRig(GenRigArgs),
    /// Print a configuration file holding every default.
    DumpConfig {
        #[arg(value_enum)]
        which: ConfigKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Pipeline,
    Segnet,
    Regressor,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    prob: PathBuf,
    /// Intensity image; resampled to the map size for the energy, and the mask
    /// is upsampled back to its size.
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma: f64,
    /// Neighborhood, 4 or 8.
    #[arg(long, default_value_t = 4)]
    connectivity: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainSegnetArgs {
    /// Dataset directory from `synth-data`. Without it, a blob dataset is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Blob images to generate when no dataset is given.
    #[arg(long, default_value_t = 200)]
    blobs: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel width multiplier relative to VGG-16.
    #[arg(long, default_value_t = 1.0 / 16.0)]
    scale: f64,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferSegnetArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Probability map (PFM, or 16-bit PGM/PNG).
    #[arg(long)]
    out: PathBuf,
    /// Also write the thresholded mask at image resolution.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct TrainRegressorArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    rig: PathBuf,
    /// Cascade stages.
    #[arg(long = "T", default_value_t = 10)]
    stages: usize,
    /// Ferns per stage.
    #[arg(long = "K", default_value_t = 300)]
    ferns: usize,
    /// Fern depth.
    #[arg(long = "F", default_value_t = 5)]
    depth: usize,
    /// Overrides the four options above when given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Expression perturbations per face; other groups get `--other-perturbations`.
    #[arg(long, default_value_t = 15)]
    expression_perturbations: usize,
    #[arg(long, default_value_t = 5)]
    other_perturbations: usize,
    /// Add one randomly cropped copy of every training pair.
    #[arg(long)]
    occlusion_augment: bool,
    /// Ignore the masks: train on full images as if everything were face.
    #[arg(long)]
    unmasked: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthDataArgs {
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbKind {
    Net,
    Dir,
    AllFace,
}

#[derive(Args)]
struct TrackArgs {
    /// A directory of images (sorted by name) or a pattern such as `f/%04d.png`.
    #[arg(long)]
    frames: String,
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = ProbKind::AllFace)]
    prob_source: ProbKind,
    /// Segmentation checkpoint for `--prob-source net`.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Directory of per-frame maps for `--prob-source dir`.
    #[arg(long)]
    prob_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting shape parameters; a frontal neutral face otherwise.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Solve identity on the tracking thread instead of a worker.
    #[arg(long)]
    sync: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalOcclusionArgs {
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    masked_model: PathBuf,
    #[arg(long)]
    unmasked_model: PathBuf,
    #[arg(long, default_value_t = 3)]
    sequences: usize,
    #[arg(long, default_value_t = 180)]
    frames: usize,
    #[arg(long, default_value_t = 100)]
    seed: u64,
    /// Writes `sweep.csv` and `sweep.png` here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenRigArgs {
    #[arg(long, default_value_t = ToyRigConfig::default().grid)]
    grid: usize,
    #[arg(long, default_value_t = ToyRigConfig::default().expressions)]
    expressions: usize,
    #[arg(long, default_value_t = ToyRigConfig::default().identities)]
    identities: usize,
    #[arg(long, default_value_t = ToyRigConfig::default().landmarks)]
    landmarks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Refine(a) => cmd_refine(a),
        Command::TrainSegnet(a) => cmd_train_segnet(a),
        Command::InferSegnet(a) => cmd_infer_segnet(a),
        Command::TrainRegressor(a) => cmd_train_regressor(a),
        Command::SynthData(a) => cmd_synth_data(a),
        Command::Track(a) => cmd_track(a),
        Command::EvalOcclusion(a) => cmd_eval_occlusion(a),
        Command::GenRig(a) => cmd_gen_rig(a),
        Command::DumpConfig { which } => {
            print!(
                "{}",
                match which {
                    ConfigKind::Pipeline => pipeline_config_text(&PipelineConfig::default()),
                    ConfigKind::Segnet => train_config_text(&Default::default()),
                    ConfigKind::Regressor => cascade_config_text(&CascadeConfig::default()),
                }
            );
            Ok(())
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|source| Error::Io {
        path: p.into(),
        source,
    })
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|source| Error::Io {
        path: p.into(),
        source,
    })
}

fn cmd_refine(a: RefineArgs) -> Result<()> {
    let prob = read_prob(&a.prob)?;
    let image = read_rgb(&a.image)?;
    let (w, h) = image.dims();
    let (pw, ph) = prob.dims();
    let small = image.crop_resize(PixelRect::new(0, 0, w, h), pw, ph);
    let connectivity = match a.connectivity {
        4 => Connectivity::Four,
        8 => Connectivity::Eight,
        c => {
            return Err(Error::Usage(format!(
                "connectivity must be 4 or 8, not {c}"
            )))
        }
    };
    let cfg = RefineConfig {
        lambda: a.lambda,
        sigma: a.sigma,
        connectivity,
    };
    let mask = refine(&prob, &small.luma(), &cfg)?;
    let mask = if (pw, ph) == (w, h) {
        mask
    } else {
        upsample_mask(&mask, w, h)?
    };
    log::info!("{} of {} pixels are face", mask.face_count(), w * h);
    write_mask(&a.out, &mask)
}

fn as_rgb_sample(
    image: &facecap_core::image::GrayImage,
    mask: &BinaryMask,
    size: usize,
) -> Result<(Tensor, BinaryMask)> {
    let (w, h) = image.dims();
    if (w, h) != (size, size) {
        return Err(Error::Usage(format!(
            "dataset images are {w}x{h}; the network takes {size}x{size}"
        )));
    }
    Ok((image_tensor(&RgbImage::from_gray(image)), mask.clone()))
}

fn cmd_train_segnet(a: TrainSegnetArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => load_train_config(p)?,
        None => Default::default(),
    };
    let data = match &a.data {
        Some(dir) => load_dataset(dir)?
            .iter()
            .map(|s| as_rgb_sample(&s.image, &s.mask, a.size))
            .collect::<Result<Vec<_>>>()?,
        None => blob_dataset(a.blobs, a.size, a.seed),
    };
    let mut net = build_two_stream_net(a.scale, a.size)?;
    let mut rng = seeded(a.seed);
    net.init_weights(Init::He, &mut rng);
    log::info!(
        "{} parameters, {} training images",
        net.parameter_count(),
        data.len()
    );
    let report = train(&mut net, &data, &cfg, &mut rng, |it, _| {
        if it % 100 == 0 {
            log::info!("iteration {it}");
        }
        false
    })?;
    if let Some(l) = report.losses.last() {
        log::info!("final batch loss {l:.4}");
    }
    save_checkpoint(&net, &a.out)
}

fn cmd_infer_segnet(a: InferSegnetArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let image = read_rgb(&a.image)?;
    let (w, h) = image.dims();
    let n = net.input_size;
    let crop = image.crop_resize(PixelRect::new(0, 0, w, h), n, n);
    let p = infer_probability_map(&net, &crop)?;
    write_prob(&a.out, &p)?;
    if let Some(m) = &a.mask {
        write_mask(m, &upsample_mask(&p.threshold(), w, h)?)?;
    }
    Ok(())
}

fn cmd_train_regressor(a: TrainRegressorArgs) -> Result<()> {
    let rig = load_rig(&a.rig)?;
    let cfg = match &a.config {
        Some(p) => load_cascade_config(p)?,
        None => CascadeConfig {
            stages: a.stages,
            ferns: a.ferns,
            depth: a.depth,
            seed: a.seed,
            exclude_offface_pairs: a.occlusion_augment,
            ..CascadeConfig::default()
        },
    };
    let faces = load_dataset(&a.data)?;
    let ranges =
        PerturbRanges::default().with_counts(a.expression_perturbations, a.other_perturbations);
    let crop = a.occlusion_augment.then(CropConfig::default);
    let mut set = regression_training_set(&faces, &rig, &ranges, crop.as_ref(), a.seed)?;
    if a.unmasked {
        for s in &mut set {
            s.mask = BinaryMask::new(s.mask.width(), s.mask.height(), true);
        }
    }
    log::info!("{} training pairs from {} faces", set.len(), faces.len());
    let (model, report) = train_cascade(&set, &rig, &cfg)?;
    log::info!("training error per stage: {:?}", report.stage_errors);
    save_model(&model, &a.out)
}

fn cmd_synth_data(a: SynthDataArgs) -> Result<()> {
    let rig = load_rig(&a.rig)?;
    let cfg = RenderConfig {
        width: a.size,
        height: a.size,
        ..RenderConfig::default()
    };
    let faces = gen_synthetic_dataset(&rig, a.count, &cfg, a.seed)?;
    save_dataset(&a.out, &faces, a.seed)
}

/// Frame files: the sorted images of a directory, or `%0Nd` pattern
/// substitutions from 0 until the first missing file.
fn frame_paths(spec: &str) -> Result<Vec<PathBuf>> {
    let p = Path::new(spec);
    if p.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|source| Error::Io {
                path: p.into(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|f| {
                f.extension().and_then(|e| e.to_str()).is_some_and(|e| {
                    ["png", "ppm", "pgm", "pnm"].contains(&e.to_ascii_lowercase().as_str())
                })
            })
            .collect();
        v.sort();
        return Ok(v);
    }
    let (pre, rest) = spec
        .split_once('%')
        .ok_or_else(|| Error::Usage(format!("{spec} is neither a directory nor a %d pattern")))?;
    let d = rest
        .find('d')
        .ok_or_else(|| Error::Usage(format!("bad frame pattern {spec}")))?;
    let width: usize = rest[..d].trim_start_matches('0').parse().unwrap_or(0);
    let post = &rest[d + 1..];
    Ok((0..)
        .map(|i| PathBuf::from(format!("{pre}{i:0width$}{post}")))
        .take_while(|f| f.exists())
        .collect())
}

fn cmd_track(a: TrackArgs) -> Result<()> {
    let frames = frame_paths(&a.frames)?;
    if frames.is_empty() {
        return Err(Error::Usage(format!("no frames found at {}", a.frames)));
    }
    let rig = Arc::new(load_rig(&a.rig)?);
    let model = Arc::new(load_model(&a.model)?);
    let config = match &a.config {
        Some(p) => load_pipeline_config(p)?,
        None => PipelineConfig::default(),
    };
    let mut source: Box<dyn ProbSource> = match a.prob_source {
        ProbKind::AllFace => Box::new(AllFaceSource),
        ProbKind::Net => {
            let p = a
                .net
                .as_ref()
                .ok_or_else(|| Error::Usage("--prob-source net needs --net".into()))?;
            Box::new(NetSource {
                net: Arc::new(load_checkpoint(p)?),
            })
        }
        ProbKind::Dir => {
            let p = a
                .prob_dir
                .clone()
                .ok_or_else(|| Error::Usage("--prob-source dir needs --prob-dir".into()))?;
            Box::new(DirSource { dir: p })
        }
    };
    let first = read_rgb(&frames[0])?;
    let (w, h) = first.dims();
    let params = match &a.init {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            parse_params(&text, &p.display().to_string())?
        }
        None => {
            let d = rig.dims();
            ShapeParams::neutral(
                d.expressions,
                d.landmarks,
                d.identities,
                DEFAULT_DEPTH,
                default_focal(w.max(h) as f64),
            )
        }
    };
    let mut state = TrackerState::new(params, &rig, w, h)?;
    for sub in ["params", "masks"] {
        mkdir(&a.out.join(sub))?;
    }
    let mut timing = String::from("frame,segment_ns,refine_ns,regress_ns,total_ns,segmentation_fallback,regression_failed,keyframe,identity_merged\n");
    let mut step = |t: &mut dyn FnMut(
        &RgbImage,
        &mut TrackerState,
    ) -> facecap_core::Result<
        facecap_core::pipeline::FrameResult,
    >|
     -> Result<()> {
        for (i, path) in frames.iter().enumerate() {
            let img = if i == 0 {
                first.clone()
            } else {
                read_rgb(path)?
            };
            if img.dims() != (w, h) {
                return Err(Error::Usage(format!("{} is not {w}x{h}", path.display())));
            }
            let r = t(&img, &mut state)?;
            let stem = format!("{:04}", r.frame);
            write_text(
                &a.out.join("params").join(format!("{stem}.txt")),
                &params_text(&r.params),
            )?;
            write_mask(
                &a.out.join("masks").join(format!("{stem}.pbm")),
                &r.frame_mask,
            )?;
            let s = r.timings;
            timing.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.frame,
                s.segment_ns,
                s.refine_ns,
                s.regress_ns,
                s.total_ns,
                r.segmentation_fallback as u8,
                r.regression_failed as u8,
                r.keyframe_admitted as u8,
                r.identity_merged as u8
            ));
        }
        Ok(())
    };
    if a.sync {
        let mut tracker = Tracker::new(
            rig.clone(),
            model,
            config,
            facecap_core::pipeline::SyncScheduler::default(),
            InstantClock::default(),
        );
        step(&mut |img, st| tracker.track_frame(img, source.as_mut(), st))?;
    } else {
        let mut tracker = Tracker::new(
            rig.clone(),
            model,
            config,
            ThreadScheduler::new(),
            InstantClock::default(),
        );
        step(&mut |img, st| tracker.track_frame(img, source.as_mut(), st))?;
    }
    write_text(&a.out.join("timing.csv"), &timing)?;
    log::info!("tracked {} frames into {}", frames.len(), a.out.display());
    Ok(())
}

fn cmd_eval_occlusion(a: EvalOcclusionArgs) -> Result<()> {
    let rig = Arc::new(load_rig(&a.rig)?);
    let masked = Arc::new(load_model(&a.masked_model)?);
    let unmasked = Arc::new(load_model(&a.unmasked_model)?);
    let seq_cfg = SequenceConfig {
        frames: a.frames,
        ..SequenceConfig::default()
    };
    let seqs = (0..a.sequences as u64)
        .map(|i| synthetic_sequence(&rig, &seq_cfg, a.seed + i))
        .collect::<facecap_core::Result<Vec<_>>>()?;
    let result = evaluate_occlusion_sweep(masked, unmasked, rig, &seqs, &SweepConfig::default())?;
    mkdir(&a.out)?;
    write_text(&a.out.join("sweep.csv"), &result.to_csv())?;
    plot_sweep(&result, &a.out.join("sweep.png"))?;
    print!("{}", result.to_csv());
    Ok(())
}

fn cmd_gen_rig(a: GenRigArgs) -> Result<()> {
    let rig = toy_rig(&ToyRigConfig {
        grid: a.grid,
        expressions: a.expressions,
        identities: a.identities,
        landmarks: a.landmarks,
        seed: a.seed,
    })?;
    save_rig(&rig, &a.out)
}
