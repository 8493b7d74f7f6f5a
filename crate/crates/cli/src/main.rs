//! `clipfit`: summarize a video locally, score summaries and crops against
//! annotations, or run the HTTP service.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use clipfit_core::eval::{self, Aggregation, FscoreRow, IouReport};
use clipfit_core::pipeline::{self, PipelineInput, Sidecars, Stage};
use clipfit_core::{AspectRatio, SummarySpec};
use clipfit_service::ServiceConfig;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "clipfit", version, about = "Duration- and aspect-constrained video summaries")]
struct Cli {
    /// Verbose logging (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize one video without the service.
    Summarize(SummarizeArgs),
    /// Score machine output against annotations.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Run the HTTP job service.
    Serve(ServeArgs),
    /// List the known presets.
    Presets {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SummarizeArgs {
    /// Local file or http(s) URL.
    input: String,
    /// Platform preset id (see `clipfit presets`).
    #[arg(long, conflicts_with_all = ["duration", "aspect"], required_unless_present_all = ["duration", "aspect"])]
    preset: Option<String>,
    /// Target duration in seconds.
    #[arg(long, requires = "aspect")]
    duration: Option<f64>,
    /// Target aspect ratio, `W:H`.
    #[arg(long, requires = "duration")]
    aspect: Option<AspectRatio>,
    /// Per-frame importance scores (one value per line, or a JSON array).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Per-frame saliency maps (SALM file or directory of PNGs).
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// Shot boundaries as JSON `[[start, end], ...]`.
    #[arg(long)]
    shots: Option<PathBuf>,
    /// Output video.
    #[arg(short, long)]
    output: PathBuf,
    /// Result document; defaults to the output path with a .json extension.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Config file for transcoder settings, tunables and extra presets.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep intermediate files here instead of a temporary directory.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// No progress output.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum EvaluateCommand {
    /// Keyframe F-score against annotator summaries.
    Fscore(FscoreArgs),
    /// Crop-window IoU against annotator windows.
    Iou(IouArgs),
}

#[derive(Args)]
struct FscoreArgs {
    /// Machine summary: 0/1 array, or a result document. Repeat to score
    /// several videos; pairs with --annotations in order.
    #[arg(long, required = true)]
    machine: Vec<PathBuf>,
    /// `{frame_count, users: [{summary: [0/1, ...]}, ...]}`.
    #[arg(long, required = true)]
    annotations: Vec<PathBuf>,
    /// How per-annotator scores combine: max or mean.
    #[arg(long, default_value = "max")]
    mode: Aggregation,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IouArgs {
    /// Crop trace or result document. Repeat for several videos.
    #[arg(long, required = true)]
    machine: Vec<PathBuf>,
    /// `{frames: [{user_windows: [[x, y, w, h], ...]}, ...]}`.
    #[arg(long, required = true)]
    annotations: Vec<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `listen_addr`.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
    /// Overrides `data_dir`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides `ui_dir`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let default = if matches!(cli.command, Command::Serve(_)) && cli.verbose == 0 { "info" } else { level };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)))
        .with_writer(std::io::stderr)
        .init();

    match cli.command {
        Command::Summarize(args) => summarize(args),
        Command::Evaluate(EvaluateCommand::Fscore(args)) => fscore(args),
        Command::Evaluate(EvaluateCommand::Iou(args)) => iou(args),
        Command::Serve(args) => serve(args),
        Command::Presets { config } => {
            let cfg = load_config(config.as_deref())?;
            for p in cfg.presets.all() {
                println!("{:<20} {:>6.1} s  {:<6} {}", p.id, p.max_duration, p.aspect.to_string(), p.label);
            }
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig> {
    match path {
        Some(p) => ServiceConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ServiceConfig::default()),
    }
}

struct Progress {
    enabled: bool,
    tty: bool,
    stage: Option<Stage>,
    shown: f64,
}

impl Progress {
    fn update(&mut self, stage: Stage, fraction: f64) {
        if !self.enabled {
            return;
        }
        let overall = stage.overall_progress(fraction) * 100.0;
        let changed = self.stage != Some(stage);
        if !changed && overall - self.shown < 1.0 {
            return;
        }
        let mut err = std::io::stderr().lock();
        if self.tty {
            let _ = write!(err, "\r{:>3.0}%  {:<10}", overall, stage.as_str());
        } else if changed {
            let _ = writeln!(err, "{:>3.0}%  {}", overall, stage.as_str());
        }
        let _ = err.flush();
        self.stage = Some(stage);
        self.shown = overall;
    }

    fn finish(&self) {
        if self.enabled && self.tty {
            eprintln!();
        }
    }
}

fn summarize(args: SummarizeArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let spec = match (&args.preset, args.duration, args.aspect) {
        (Some(id), _, _) => cfg.presets.resolve(id)?,
        (None, Some(d), Some(a)) => SummarySpec::custom(d, a)?,
        _ => bail!("give --preset or both --duration and --aspect"),
    };
    let temp;
    let work_dir = match &args.work_dir {
        Some(d) => {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            d.clone()
        }
        None => {
            temp = tempfile::Builder::new().prefix("clipfit-").tempdir()?;
            temp.path().to_path_buf()
        }
    };
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let input = PipelineInput {
        source: args.input.clone(),
        spec,
        sidecars: Sidecars {
            shots: args.shots.clone(),
            scores: args.scores.clone(),
            saliency: args.saliency.clone(),
        },
        work_dir,
        output: Some(args.output.clone()),
    };
    let mut progress = Progress {
        enabled: !args.quiet,
        tty: std::io::stderr().is_terminal(),
        stage: None,
        shown: 0.0,
    };
    let out = pipeline::run(&input, &cfg.params, &cfg.media, &mut |s: Stage, f: f64| {
        progress.update(s, f);
        true
    });
    progress.finish();
    let out = out?;

    let result_path = args.result.unwrap_or_else(|| args.output.with_extension("json"));
    pipeline::write_result(&result_path, &out).with_context(|| format!("writing {}", result_path.display()))?;
    println!(
        "{}: {:.2} s of {:.2} s ({} of {} shots) at {}x{}",
        out.output_path.display(),
        out.summary_duration,
        out.source_duration,
        out.selection.selected().len(),
        out.shots.len(),
        out.output_width,
        out.output_height
    );
    println!("result: {}", result_path.display());
    Ok(())
}

fn video_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn fscore(args: FscoreArgs) -> Result<()> {
    ensure!(
        args.machine.len() == args.annotations.len(),
        "{} --machine files but {} --annotations files",
        args.machine.len(),
        args.annotations.len()
    );
    let mut rows = Vec::new();
    for (m, a) in args.machine.iter().zip(&args.annotations) {
        let users = eval::load_summary_annotations(a).with_context(|| format!("reading {}", a.display()))?;
        let machine = eval::parse_machine_summary(&read(m)?, users.frame_count())
            .with_context(|| format!("reading {}", m.display()))?;
        let per_user = users
            .users()
            .iter()
            .map(|u| eval::fscore(&machine, u))
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} vs {}", m.display(), a.display()))?;
        let (precision, recall) = match args.mode {
            Aggregation::Max => {
                let best = per_user.iter().max_by(|x, y| x.f1.total_cmp(&y.f1)).expect("at least one annotator");
                (best.precision, best.recall)
            }
            Aggregation::Mean => {
                let n = per_user.len() as f64;
                (
                    per_user.iter().map(|p| p.precision).sum::<f64>() / n,
                    per_user.iter().map(|p| p.recall).sum::<f64>() / n,
                )
            }
        };
        let f1 = eval::fscore_protocol(&machine, &users, args.mode)?;
        rows.push(FscoreRow {
            video: video_name(m),
            mode: args.mode,
            precision,
            recall,
            f_score: f1 * 100.0,
        });
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", eval::fscore_table(&rows));
    }
    Ok(())
}

fn iou(args: IouArgs) -> Result<()> {
    ensure!(
        args.machine.len() == args.annotations.len(),
        "{} --machine files but {} --annotations files",
        args.machine.len(),
        args.annotations.len()
    );
    let mut rows: Vec<(String, IouReport)> = Vec::new();
    for (m, a) in args.machine.iter().zip(&args.annotations) {
        let gt = eval::load_crop_annotations(a).with_context(|| format!("reading {}", a.display()))?;
        let trace = eval::parse_crop_trace(&read(m)?).with_context(|| format!("reading {}", m.display()))?;
        let report = eval::iou_report(&trace, &gt).with_context(|| format!("{} vs {}", m.display(), a.display()))?;
        rows.push((video_name(m), report));
    }
    if args.json {
        let doc: Vec<serde_json::Value> = rows
            .iter()
            .map(|(name, r)| serde_json::json!({"video": name, "worst": r.worst, "best": r.best, "mean": r.mean}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}", eval::iou_table(&rows));
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(addr) = args.listen {
        cfg.listen_addr = addr;
    }
    if let Some(d) = args.data_dir {
        cfg.data_dir = d;
    }
    if let Some(d) = args.ui_dir {
        cfg.ui_dir = Some(d);
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(clipfit_service::serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    }))?;
    Ok(())
}
