//! Command-line entry point.
//!
//! Exit codes: 0 on success (and for `validate`, only when the document is
//! valid), 1 for startup or configuration problems, 2 for evaluation input
//! problems.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};

use infragpt::canonical::to_canonical_string;
use infragpt::domain::Frame;
use infragpt::eval::{run_eval, DEFAULT_SUBSETS};
use infragpt::pipeline::{run_batch, run_watch, Mode, PipelineConfig, PipelineContext};
use infragpt::schema::validate_plan;
use infragpt::{Error, Result};

#[derive(Parser)]
#[command(
    name = "infragpt",
    version,
    about = "Infrastructure-defect monitoring: screen frames, detect defects, emit maintenance plans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a frame manifest in batch mode and write a record log
    Run {
        /// Pipeline configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Frame manifest (JSON lines)
        #[arg(long)]
        manifest: PathBuf,
        /// Record log destination; falls back to output_path in the config
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force reproducible output (requires fully mocked endpoints)
        #[arg(long)]
        deterministic: bool,
        /// Overwrite an existing record log
        #[arg(long)]
        force: bool,
    },
    /// Follow a growing manifest directory and alert on urgent items
    Watch {
        /// Pipeline configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Directory holding manifest.jsonl
        #[arg(long)]
        dir: PathBuf,
        /// Record log destination; falls back to output_path in the config
        #[arg(long)]
        out: Option<PathBuf>,
        /// Alert log receiving records that contain an urgent item
        #[arg(long)]
        alerts: PathBuf,
    },
    /// Check one plan document against the schema and frame bounds
    Validate {
        /// Plan document (JSON)
        #[arg(long)]
        plan: PathBuf,
        /// Frame width in pixels
        #[arg(long)]
        width: u32,
        /// Frame height in pixels
        #[arg(long)]
        height: u32,
    },
    /// Score a record log against ground truth and reference summaries
    Eval {
        /// Record log from a pipeline run (JSON lines)
        #[arg(long)]
        records: PathBuf,
        /// Ground-truth boxes per frame (JSON lines)
        #[arg(long)]
        gt: PathBuf,
        /// Reference summaries per frame (JSON lines)
        #[arg(long)]
        refs: PathBuf,
        /// Directory for the CSVs and summary.json
        #[arg(long)]
        out_dir: PathBuf,
        /// Consecutive subsets for the delta table
        #[arg(long, default_value_t = DEFAULT_SUBSETS)]
        subsets: usize,
    },
}

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn request_stop(_signal: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

fn install_stop_handlers() {
    let handler = request_stop as *const () as libc::sighandler_t;
    unsafe {
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

fn load_context(
    config_path: &Path,
    out: Option<PathBuf>,
    deterministic: bool,
    expected_mode: Mode,
) -> Result<(PipelineContext, PathBuf)> {
    let mut config = PipelineConfig::load(config_path)?;
    if deterministic {
        config.deterministic = true;
        config.validate()?;
    }
    if config.mode != expected_mode {
        log::debug!(
            "config prefers {:?} mode; the subcommand takes precedence",
            config.mode
        );
    }
    let out = out
        .or_else(|| config.output_path.clone())
        .ok_or_else(|| Error::Config("no --out given and the config sets no output_path".into()))?;
    Ok((PipelineContext::from_config(config)?, out))
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, manifest, out, deterministic, force } => {
            let (ctx, out) = load_context(&config, out, deterministic, Mode::Batch)?;
            let summary = run_batch(&manifest, &ctx, &out, force)?;
            println!("{}", to_canonical_string(&summary)?);
            Ok(0)
        }
        Command::Watch { config, dir, out, alerts } => {
            let (ctx, out) = load_context(&config, out, false, Mode::Watch)?;
            install_stop_handlers();
            let stats = run_watch(&dir, &ctx, &out, &alerts, &STOP)?;
            println!("{}", to_canonical_string(&stats)?);
            Ok(0)
        }
        Command::Validate { plan, width, height } => {
            let document = std::fs::read_to_string(&plan).map_err(|e| {
                Error::Config(format!("cannot read plan {}: {e}", plan.display()))
            })?;
            let frame = Frame {
                frame_id: "cli".into(),
                image_path: String::new(),
                width_px: width,
                height_px: height,
                source_id: "cli".into(),
                timestamp: 0,
                location: None,
            };
            let report = validate_plan(&document, &frame);
            println!("{}", to_canonical_string(&report)?);
            Ok(if report.valid { 0 } else { 1 })
        }
        Command::Eval { records, gt, refs, out_dir, subsets } => {
            let summary = run_eval(&records, &gt, &refs, &out_dir, subsets)?;
            println!("{}", to_canonical_string(&summary)?);
            Ok(0)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::EvalInput(_) => 2,
                _ => 1,
            }
        }
    };
    std::process::exit(code);
}
