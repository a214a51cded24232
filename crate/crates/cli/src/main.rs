use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tissuesplat_core::dataio::png::{write_png_depth, write_png_rgb};
use tissuesplat_core::dataio::{
    initial_state, load_checkpoint, state_model, synth_generate, train_dataset, write_pfm, Dataset, PriorSpecs, Split,
    SynthParams,
};
use tissuesplat_core::eval::{ablation_table, evaluate, MetricReport, SceneModel};
use tissuesplat_core::priors::ProviderSpec;
use tissuesplat_core::train::TrainConfig;
use tissuesplat_core::CameraView;

#[derive(Parser)]
#[command(name = "tissuesplat", version, about = "Sparse-view Gaussian splatting for deformable tissue")]
struct Cli {
    /// Worker threads for the renderer and trainer.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train on a dataset.
    Train(TrainArgs),
    /// Render one view of a checkpoint.
    Render(RenderArgs),
    /// Evaluate a checkpoint or the untrained initialization.
    Eval(EvalArgs),
    /// Train and evaluate all four prior on/off combinations.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    gaussians: usize,
    /// Training views.
    #[arg(long, default_value_t = 12)]
    views: usize,
    #[arg(long, default_value_t = 2)]
    held_out: usize,
    /// Plant a rigid sinusoidal motion.
    #[arg(long)]
    deform: bool,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PriorArgs {
    /// Noise predictor: oracle, zero, file:<dir> or subprocess:<command>.
    #[arg(long, default_value = "oracle")]
    denoiser: ProviderSpec,
    /// Depth predictor: oracle, file:<dir> or subprocess:<command>.
    #[arg(long, default_value = "oracle")]
    depth_prior: ProviderSpec,
}

#[derive(Args)]
struct ScheduleArgs {
    /// TOML training configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    warmup_iters: Option<usize>,
    #[arg(long)]
    extra_iters: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = parse_views)]
    views: usize,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    prior_diff: Toggle,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    prior_geo: Toggle,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    priors: PriorArgs,
}

fn parse_views(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v @ (3 | 6 | 9 | 12)) => Ok(v),
        _ => Err(format!("view budget must be 3, 6, 9 or 12, got {s}")),
    }
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset providing the camera.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    view_id: String,
    /// Time to render at; defaults to the view's own time.
    #[arg(long)]
    time: Option<f64>,
    /// Output image; `.pfm` writes floats, anything else PNG.
    #[arg(long)]
    out: PathBuf,
    /// Also write the normalized depth.
    #[arg(long)]
    depth_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Test,
    Train,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "init", required_unless_present = "init")]
    ckpt: Option<PathBuf>,
    /// Evaluate the untrained initialization instead of a checkpoint.
    #[arg(long)]
    init: bool,
    #[arg(long)]
    data: PathBuf,
    /// JSON report path; the text table goes to stdout.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Time renders over this many passes.
    #[arg(long)]
    fps: Option<usize>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = parse_views)]
    views: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    priors: PriorArgs,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn error_code(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<tissuesplat_core::Error>())
        .map_or("cli", |e| e.code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = ErrorReport {
                error: "usage",
                message: e.render().to_string(),
            };
            eprintln!("{}", serde_json::to_string(&report).expect("serializable"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport {
                error: error_code(&e),
                message: format!("{e:#}"),
            };
            eprintln!("{}", serde_json::to_string(&report).expect("serializable"));
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads == 0 {
        bail!("--threads must be positive");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring worker threads")?;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let params = SynthParams {
        seed: a.seed,
        n_gaussians: a.gaussians,
        n_views: a.views,
        held_out: a.held_out,
        deform: a.deform,
        width: a.width,
        height: a.height,
        ..SynthParams::default()
    };
    let scene = synth_generate(&params)?;
    let manifest = scene.write(&a.out)?;
    println!("wrote {} views to {}", manifest.views.len(), a.out.display());
    Ok(())
}

fn load_config(s: &ScheduleArgs) -> anyhow::Result<TrainConfig> {
    let mut config = match &s.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = s.warmup_iters {
        config.warmup_iters = v;
    }
    if let Some(v) = s.extra_iters {
        config.extra_iters = v;
    }
    Ok(config)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    std::fs::write(path, s + "\n").with_context(|| format!("writing {}", path.display()))
}

fn prior_specs(p: &PriorArgs) -> PriorSpecs {
    PriorSpecs {
        denoiser: p.denoiser.clone(),
        depth: p.depth_prior.clone(),
    }
}

fn train_and_evaluate(ds: &Dataset, config: &TrainConfig, specs: &PriorSpecs, out: &Path) -> anyhow::Result<MetricReport> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), config)?;
    let run = train_dataset(ds, config, specs, Some(out))?;
    let report = evaluate(&state_model(&run.state), &eval_views(ds, SplitArg::Test), None)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let ds = Dataset::load(&a.data)?;
    let mut config = load_config(&a.schedule)?;
    config.views = a.views;
    config.seed = a.seed;
    config.prior_diff = a.prior_diff.on();
    config.prior_geo = a.prior_geo.on();
    let report = train_and_evaluate(&ds, &config, &prior_specs(&a.priors), &a.out)?;
    print!("{}", report.to_table());
    Ok(())
}

fn render(a: RenderArgs) -> anyhow::Result<()> {
    let model = load_checkpoint(&a.ckpt)?.to_model()?;
    let ds = Dataset::load(&a.data)?;
    let mut view: CameraView = ds.view(&a.view_id)?.clone();
    if let Some(t) = a.time {
        if !(0.0..=1.0).contains(&t) {
            bail!("--time must lie in [0, 1]");
        }
        view.time = t;
    }
    let out = model.render(&view)?;
    if a.out.extension().is_some_and(|e| e == "pfm") {
        write_pfm(&a.out, &out.color)?;
    } else {
        write_png_rgb(&a.out, &out.color)?;
    }
    if let Some(p) = &a.depth_out {
        let depth = out.normalized_depth();
        if p.extension().is_some_and(|e| e == "pfm") {
            write_pfm(p, &depth)?;
        } else {
            write_png_depth(p, &depth)?;
        }
    }
    Ok(())
}

fn eval_views(ds: &Dataset, split: SplitArg) -> Vec<CameraView> {
    match split {
        SplitArg::All => ds.views.clone(),
        SplitArg::Train => ds.split_views(Split::Train),
        SplitArg::Test => {
            let v = ds.split_views(Split::Test);
            if v.is_empty() {
                log::warn!("dataset has no held-out views; evaluating the training split");
                ds.split_views(Split::Train)
            } else {
                v
            }
        }
    }
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let ds = Dataset::load(&a.data)?;
    let model: SceneModel<f32> = match &a.ckpt {
        Some(p) => load_checkpoint(p)?.to_model()?,
        None => {
            let config = TrainConfig::default();
            let train = ds.split_views(Split::Train);
            SceneModel::static_cloud(initial_state(&ds, &train, &config)?.cloud)
        }
    };
    let report = evaluate(&model, &eval_views(&ds, a.split), a.fps)?;
    write_json(&a.report, &report)?;
    print!("{}", report.to_table());
    Ok(())
}

fn ablate(a: AblateArgs) -> anyhow::Result<()> {
    let ds = Dataset::load(&a.data)?;
    let base = load_config(&a.schedule)?;
    let specs = prior_specs(&a.priors);
    let mut rows = Vec::new();
    for (diff, geo) in [(false, false), (true, false), (false, true), (true, true)] {
        let label = format!("diff-{}_geo-{}", on_off(diff), on_off(geo));
        let config = TrainConfig {
            views: a.views,
            seed: a.seed,
            prior_diff: diff,
            prior_geo: geo,
            ..base.clone()
        };
        log::info!("ablation run {label}");
        let report = train_and_evaluate(&ds, &config, &specs, &a.out.join(&label))?;
        rows.push((label, report));
    }
    let table = ablation_table(&rows);
    std::fs::write(a.out.join("ablation.txt"), &table).context("writing ablation table")?;
    let json: serde_json::Map<String, serde_json::Value> = rows
        .iter()
        .map(|(l, r)| Ok((l.clone(), serde_json::to_value(r)?)))
        .collect::<anyhow::Result<_>>()?;
    write_json(&a.out.join("ablation.json"), &json)?;
    print!("{table}");
    Ok(())
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}
