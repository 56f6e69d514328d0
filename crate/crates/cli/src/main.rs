use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blendforge_core::camgen::write_poses;
use blendforge_core::embfile::{read_aesthetic, read_embeddings};
use blendforge_core::pipeline::config::VlmStageConfig;
use blendforge_core::pipeline::stages::{
    baseline_poses, caption_stage, heuristic_stage, object_poses, quality_stage, render_stage, sample_stage,
    score_stage, vlm_stage, write_splits, ScoreInputs, StageReport, VlmStage,
};
use blendforge_core::pipeline::{
    ablation_report, format_ablation_table, format_stats_table, read_manifest, run_ablation, run_pipeline, scene_stats,
    write_manifest, PipelineConfig, RunStage,
};
use blendforge_core::{load_scene, PipelineError, Scene};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blendforge", version, about = "Curate image-caption datasets from 3D scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate camera poses (object-centric by default).
    Poses(PosesArgs),
    /// Render RGB images and segmentation maps for a pose file.
    Render(RenderArgs),
    /// Apply zero-fill, brightness, variance and dark-fraction checks.
    FilterHeuristic(HeuristicArgs),
    /// Ask a vision-language model whether each image is captionable.
    FilterVlm(VlmArgs),
    /// Caption VLM-approved images.
    Caption(VlmArgs),
    /// Attach CLIPScore and aesthetic scores from embedding files.
    Score(ScoreArgs),
    /// Drop images below the CLIP or aesthetic threshold.
    FilterQuality(QualityArgs),
    /// Pick diverse train/val/test splits.
    Sample(SampleArgs),
    /// Per-scene funnel statistics.
    Stats(StatsArgs),
    /// Compare camera placement strategies.
    Ablate(AblateArgs),
    /// Run the whole pipeline from a config file, resuming finished stages.
    Run(RunArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML pipeline config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        match &self.config {
            Some(p) => PipelineConfig::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Args)]
struct PosesArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// random_view or anchor_sweep.
    #[arg(long)]
    baseline: Option<String>,
    /// uniform or grid.
    #[arg(long)]
    spatial: Option<String>,
    #[arg(long)]
    grid_n: Option<u32>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fov_y_deg: Option<f64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Manifest to write; defaults to `<out-dir>/render.jsonl`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct HeuristicArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    segmaps: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_brightness: Option<f64>,
    #[arg(long)]
    min_variance: Option<f64>,
    #[arg(long)]
    max_dark_fraction: Option<f64>,
    #[arg(long)]
    black_level: Option<f64>,
}

#[derive(Args)]
struct VlmArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// JSON file of scripted responses, used instead of a server.
    #[arg(long)]
    stub: Option<PathBuf>,
    #[arg(long)]
    vlm_endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
}

impl VlmArgs {
    fn apply(&self, base: &VlmStageConfig) -> VlmStageConfig {
        let mut c = base.clone();
        if let Some(p) = &self.prompt_file {
            c.prompt_file = Some(p.clone());
        }
        if let Some(n) = self.max_in_flight {
            c.max_in_flight = n;
        }
        if let Some(s) = &self.stub {
            c.stub = Some(s.clone());
        }
        if let Some(e) = &self.vlm_endpoint {
            c.endpoint = Some(e.clone());
            if self.stub.is_none() {
                c.stub = None;
            }
        }
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(t) = self.timeout_secs {
            c.timeout_secs = t;
        }
        c
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    manifest: PathBuf,
    /// Embedding prefix: reads `<pfx>.json` and `<pfx>.bin`.
    #[arg(long)]
    image_emb: Option<PathBuf>,
    #[arg(long)]
    text_emb: Option<PathBuf>,
    #[arg(long)]
    aesthetic: Option<PathBuf>,
    #[arg(long)]
    clip_scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QualityArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_clip: Option<f64>,
    #[arg(long)]
    min_aesthetic: Option<f64>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    emb: Option<PathBuf>,
    /// For example `train:0.6,val:0.2,test:0.2`.
    #[arg(long)]
    splits: Option<String>,
    #[arg(long)]
    total: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, required = true, num_args = 1..)]
    manifest: Vec<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Report on existing per-method manifests instead of rendering.
    #[arg(long, num_args = 1.., conflicts_with = "scene")]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Images per baseline; defaults to the object-centric count.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_n: Option<u32>,
    #[arg(long)]
    stub: Option<PathBuf>,
    #[arg(long)]
    vlm_endpoint: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Stop after this stage.
    #[arg(long)]
    until: Option<String>,
}

fn scene(path: &Path) -> Result<Scene, PipelineError> {
    load_scene(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn report(stage: &str, r: StageReport) {
    eprintln!("{stage}: {} processed, {} passed, {} rejected, {} errors", r.processed, r.passed, r.rejected, r.errors);
}

fn poses(a: PosesArgs) -> Result<(), PipelineError> {
    let cfg = a.config.load()?;
    let mut p = cfg.stage.poses.clone();
    if let Some(b) = a.baseline {
        p.baseline = Some(b);
    }
    if let Some(s) = a.spatial {
        p.spatial = s;
    }
    p.grid_n = a.grid_n.unwrap_or(p.grid_n);
    p.count = a.count.unwrap_or(p.count);
    p.seed = a.seed.unwrap_or(p.seed);
    p.fov_y_deg = a.fov_y_deg.unwrap_or(p.fov_y_deg);
    p.width = a.width.unwrap_or(p.width);
    p.height = a.height.unwrap_or(p.height);
    let path = a.scene.or(cfg.scene).ok_or_else(|| PipelineError::Config("--scene is required".into()))?;
    let scene = scene(&path)?;
    let records = match p.baseline_spec()? {
        Some(spec) => baseline_poses(&scene, &spec, &p.camera())?,
        None => object_poses(&scene, &p.camera())?,
    };
    write_poses(&a.out, &records)?;
    eprintln!("poses: {} written to {}", records.len(), a.out.display());
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), PipelineError> {
    let scene = scene(&a.scene)?;
    let poses = blendforge_core::camgen::read_poses(&a.poses)?;
    let records = render_stage(&scene, &poses, &a.out_dir)?;
    let out = a.manifest.unwrap_or_else(|| a.out_dir.join("render.jsonl"));
    write_manifest(&out, &records)?;
    eprintln!("render: {} images, manifest {}", records.len(), out.display());
    Ok(())
}

fn filter_heuristic(a: HeuristicArgs) -> Result<(), PipelineError> {
    let mut t = a.config.load()?.stage.filter_heuristic;
    t.min_brightness = a.min_brightness.unwrap_or(t.min_brightness);
    t.min_variance = a.min_variance.unwrap_or(t.min_variance);
    t.max_dark_fraction = a.max_dark_fraction.unwrap_or(t.max_dark_fraction);
    t.black_level = a.black_level.unwrap_or(t.black_level);
    t.validate().map_err(PipelineError::Config)?;
    let mut records = read_manifest(&a.manifest)?;
    let r = heuristic_stage(&mut records, &a.images, a.segmaps.as_deref(), &t);
    write_manifest(&a.out, &records)?;
    report("filter-heuristic", r);
    Ok(())
}

fn vlm(a: VlmArgs, captioning: bool) -> Result<(), PipelineError> {
    let cfg = a.config.load()?;
    let vc = a.apply(if captioning { &cfg.stage.caption } else { &cfg.stage.filter_vlm });
    let gateway = vc.gateway()?;
    let prompt = if captioning { vc.caption_prompt()? } else { vc.filter_prompt()? };
    let options = vc.options();
    let stage = VlmStage { gateway: &*gateway, prompt: &prompt, options: &options, max_in_flight: vc.max_in_flight };
    let mut records = read_manifest(&a.manifest)?;
    let r = if captioning {
        caption_stage(&mut records, &a.images, &stage)
    } else {
        vlm_stage(&mut records, &a.images, &stage)
    };
    write_manifest(&a.out, &records)?;
    report(if captioning { "caption" } else { "filter-vlm" }, r);
    Ok(())
}

fn score(a: ScoreArgs) -> Result<(), PipelineError> {
    let s = a.config.load()?.stage.score;
    let need = |flag: Option<PathBuf>, cfg: Option<PathBuf>, name: &str| {
        flag.or(cfg).ok_or_else(|| PipelineError::Config(format!("--{name} is required")))
    };
    let image_emb = need(a.image_emb, s.image_emb, "image-emb")?;
    let text_emb = need(a.text_emb, s.text_emb, "text-emb")?;
    let aesthetic = need(a.aesthetic, s.aesthetic, "aesthetic")?;
    let clip_scale = a.clip_scale.unwrap_or(s.clip_scale);
    if !(clip_scale.is_finite() && clip_scale > 0.0) {
        return Err(PipelineError::Config("--clip-scale must be positive".into()));
    }
    let stage_err = |e| PipelineError::stage("score", e);
    let image_emb = read_embeddings(&image_emb).map_err(stage_err)?;
    let text_emb = read_embeddings(&text_emb).map_err(stage_err)?;
    let aesthetic = read_aesthetic(&aesthetic).map_err(stage_err)?;
    let mut records = read_manifest(&a.manifest)?;
    let inputs = ScoreInputs { image_emb: &image_emb, text_emb: &text_emb, aesthetic: &aesthetic, clip_scale };
    let r = score_stage(&mut records, &inputs);
    write_manifest(&a.out, &records)?;
    report("score", r);
    Ok(())
}

fn filter_quality(a: QualityArgs) -> Result<(), PipelineError> {
    let mut t = a.config.load()?.stage.filter_quality;
    t.min_clip = a.min_clip.unwrap_or(t.min_clip);
    t.min_aesthetic = a.min_aesthetic.unwrap_or(t.min_aesthetic);
    let mut records = read_manifest(&a.manifest)?;
    let r = quality_stage(&mut records, &t);
    write_manifest(&a.out, &records)?;
    report("filter-quality", r);
    Ok(())
}

fn sample(a: SampleArgs) -> Result<(), PipelineError> {
    let cfg = a.config.load()?;
    let s = &cfg.stage.sample;
    let emb = a
        .emb
        .or_else(|| s.emb.clone())
        .or_else(|| cfg.stage.score.image_emb.clone())
        .ok_or_else(|| PipelineError::Config("--emb is required".into()))?;
    let splits = a.splits.unwrap_or_else(|| s.splits.clone());
    let emb = read_embeddings(&emb).map_err(|e| PipelineError::stage("sample", e))?;
    let records = read_manifest(&a.manifest)?;
    let out = sample_stage(&records, &emb, &splits, a.total.or(s.total))?;
    write_splits(&a.out_dir, &out)?;
    for s in &out {
        eprintln!("sample: {} = {} images", s.name, s.records.len());
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), PipelineError> {
    let mut records = Vec::new();
    for m in &a.manifest {
        records.extend(read_manifest(m)?);
    }
    if records.is_empty() {
        return Err(PipelineError::InvalidInput("manifest is empty".into()));
    }
    let stats = scene_stats(&records);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    } else {
        print!("{}", format_stats_table(&stats));
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<(), PipelineError> {
    let report = if !a.manifests.is_empty() {
        let manifests = a.manifests.iter().map(read_manifest).collect::<Result<Vec<_>, _>>()?;
        ablation_report(&manifests)?
    } else {
        let mut cfg = a.config.load()?;
        let path = a
            .scene
            .or(cfg.scene.clone())
            .ok_or_else(|| PipelineError::Config("--scene or --manifests is required".into()))?;
        let out_dir =
            a.out_dir.or(cfg.out_dir.clone()).ok_or_else(|| PipelineError::Config("--out-dir is required".into()))?;
        let p = &mut cfg.stage.poses;
        p.seed = a.seed.unwrap_or(p.seed);
        p.grid_n = a.grid_n.unwrap_or(p.grid_n);
        let v = &mut cfg.stage.filter_vlm;
        if let Some(s) = a.stub {
            v.stub = Some(s);
        }
        if let Some(e) = a.vlm_endpoint {
            v.endpoint = Some(e);
        }
        cfg.validate()?;
        run_ablation(&scene(&path)?, &cfg, &out_dir, a.count)?
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialize"));
    } else {
        print!("{}", format_ablation_table(&report));
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<(), PipelineError> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.scene {
        cfg.scene = Some(s);
    }
    if let Some(o) = a.out_dir {
        cfg.out_dir = Some(o);
    }
    let until = a.until.map(|u| u.parse::<RunStage>()).transpose().map_err(PipelineError::Config)?;
    let summary = run_pipeline(&cfg, until)?;
    for (stage, r) in &summary.reports {
        match r {
            Some(r) => report(stage.as_str(), *r),
            None => eprintln!("{stage}: reused existing output"),
        }
    }
    print!("{}", format_stats_table(&summary.stats));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Poses(a) => poses(a),
        Command::Render(a) => render(a),
        Command::FilterHeuristic(a) => filter_heuristic(a),
        Command::FilterVlm(a) => vlm(a, false),
        Command::Caption(a) => vlm(a, true),
        Command::Score(a) => score(a),
        Command::FilterQuality(a) => filter_quality(a),
        Command::Sample(a) => sample(a),
        Command::Stats(a) => stats(a),
        Command::Ablate(a) => ablate(a),
        Command::Run(a) => run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
