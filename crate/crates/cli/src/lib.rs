//! `grasplab` command line: training, evaluation, capacity sweeps, the
//! mechanics calculator, dataset augmentation and depth rendering.
//!
//! Exit codes: 0 success, 1 runtime or data fault, 2 usage or
//! configuration fault.

pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use grasplab::config::RunConfig;
use grasplab::learner::train::{success_rate, AgentPolicy};
use grasplab::learner::{evaluate, format_curve, train, Checkpoint, LearnError};
use grasplab::mechanics::{self, DesignSummary, PinchCase};
use grasplab::sim_env::objects::Shape;
use grasplab::vision::augment::{build_augmented_dataset, AugmentationSpec};
use grasplab::vision::dataset::{read_dataset, synthesize_sources, write_sample};
use grasplab::vision::pgm::write_pgm;
use grasplab::vision::SceneSpec;

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "grasplab",
    version,
    about = "Tendon-driven hand mechanics and grasp learning"
)]
pub struct Cli {
    /// Run configuration (TOML with [env] and [train] tables).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the actor-critic; writes checkpoint, curve and manifest.
    Train,
    /// Noise-free per-object evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Train once per replay capacity and compare final success rates.
    Sweep(SweepArgs),
    /// Tendon statics calculator.
    #[command(subcommand)]
    Mech(MechCommand),
    /// Build an augmented grasp-rectangle dataset.
    Augment(AugmentArgs),
    /// Render a scene file to a 16-bit depth PGM.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Comma-separated object shapes; all seven by default.
    #[arg(long, value_delimiter = ',')]
    pub objects: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated replay capacities (at least two).
    #[arg(long, value_delimiter = ',', required = true)]
    pub capacities: Vec<usize>,
}

#[derive(Debug, Subcommand)]
pub enum MechCommand {
    /// Tendon tension needed for a fingertip force.
    Tension {
        /// Fingertip force, N.
        #[arg(long)]
        fg: f64,
        /// Fingertip reach, mm.
        #[arg(long)]
        r: f64,
        /// Joint moment arm, mm.
        #[arg(long)]
        lja: f64,
    },
    /// Servo torque from horn diameter, tension and horn angle.
    Torque {
        /// Horn diameter, mm.
        #[arg(long)]
        d: f64,
        /// Tendon tension, N (signed).
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        /// Horn angle, degrees.
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
    },
    /// Safety factor of a part.
    Sf {
        /// Maximum stress, MPa.
        #[arg(long)]
        stress: f64,
        /// Material strength, MPa.
        #[arg(long)]
        strength: f64,
    },
    /// Full design report with benchmark findings.
    Report {
        /// Total mass, g.
        #[arg(long)]
        mass: f64,
        /// Maximum pinch force, N.
        #[arg(long)]
        pinch: f64,
        /// Maximum joint speed, degrees per second.
        #[arg(long)]
        speed: f64,
        #[arg(long)]
        actuators: u32,
    },
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of `<id>.depth.pgm` / `<id>.cpos.txt` / `<id>.cneg.txt` sources.
    #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize")]
    pub source: Option<PathBuf>,
    /// Generate this many synthetic sources instead of reading a directory.
    #[arg(long)]
    pub synthesize: Option<usize>,
    /// Image side for synthetic sources.
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    #[arg(long, default_value_t = 160)]
    pub multiplier: usize,
    #[arg(long, default_value_t = 0.75)]
    pub crop_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub zoom_min: f64,
    #[arg(long, default_value_t = 1.2)]
    pub zoom_max: f64,
    /// Rotations are drawn from +-this many degrees.
    #[arg(long, default_value_t = 180.0)]
    pub rotation_max: f64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Scene file (TOML: [camera], table_height, [[objects]]).
    #[arg(long)]
    pub scene: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Runtime or data fault: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Configuration faults are usage errors; everything else is a runtime fault.
fn learn_error(e: LearnError) -> CliError {
    match e {
        LearnError::Config(_) => usage(e),
        _ => runtime(e),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train => cmd_train(cli),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Sweep(args) => cmd_sweep(cli, args),
        Command::Mech(m) => cmd_mech(cli, m),
        Command::Augment(args) => cmd_augment(cli, args),
        Command::Render(args) => cmd_render(cli, args),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_toml(&text, &path.display().to_string()).map_err(usage)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn config_json(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default));
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], manifest: &mut RunManifest) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    manifest.record(dir, &path);
    Ok(path)
}

/// Writes the manifest, folding any command error into its outcome.
fn finish(dir: &Path, manifest: RunManifest, result: Result<Value, CliError>) -> Result<(), CliError> {
    let outcome = match &result {
        Ok(v) => json!({ "status": "ok", "summary": v }),
        Err(e) => json!({ "status": "error", "exit_code": e.code(), "message": e.message() }),
    };
    manifest
        .write(dir, outcome)
        .map_err(|e| runtime(format!("cannot write manifest in {}: {e}", dir.display())))?;
    result.map(|_| ())
}

/// Trains one configuration into `dir/prefix*`; returns the final
/// noise-free success rate.
fn train_into(cfg: &RunConfig, dir: &Path, prefix: &str, manifest: &mut RunManifest) -> Result<f64, CliError> {
    let outcome = train(&cfg.env, &cfg.train, cfg.seed, |p| {
        eprintln!(
            "{prefix}step {:>8}  success {:.3}  critic loss {:.5}",
            p.step, p.success_rate, p.critic_loss
        );
    })
    .map_err(learn_error)?;
    write_file(
        dir,
        &format!("{prefix}curve.csv"),
        format_curve(&outcome.curve).as_bytes(),
        manifest,
    )?;
    write_file(
        dir,
        &format!("{prefix}checkpoint.bin"),
        &cfg.checkpoint(&outcome.agent).encode(),
        manifest,
    )?;
    match outcome.curve.last() {
        Some(p) if p.step == cfg.train.total_steps => Ok(p.success_rate),
        _ => {
            let mut policy = AgentPolicy::new(&outcome.agent, &cfg.env).map_err(learn_error)?;
            success_rate(&mut policy, &cfg.env, cfg.train.eval_episodes.max(1)).map_err(learn_error)
        }
    }
}

fn cmd_train(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, "train")?;
    let mut manifest = RunManifest::new("train", config_json(&cfg), Some(cfg.seed));
    let result = train_into(&cfg, &dir, "", &mut manifest).map(|rate| {
        println!("final success rate {rate:.3}");
        json!({ "final_success_rate": rate, "steps": cfg.train.total_steps })
    });
    finish(&dir, manifest, result)
}

fn parse_shapes(names: &[String]) -> Result<Vec<Shape>, CliError> {
    if names.is_empty() {
        return Ok(Shape::ALL.to_vec());
    }
    names.iter().map(|n| n.parse::<Shape>().map_err(usage)).collect()
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<(), CliError> {
    if args.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let shapes = parse_shapes(&args.objects)?;
    let checkpoint =
        Checkpoint::read(&args.checkpoint).map_err(|e| runtime(format!("{}: {e}", args.checkpoint.display())))?;
    let (stored, agent) =
        RunConfig::restore(&checkpoint).map_err(|e| runtime(format!("{}: {e}", args.checkpoint.display())))?;
    let env = match &cli.config {
        Some(_) => load_config(cli)?.env,
        None => stored.env.clone(),
    };
    let dir = out_dir(cli, "eval")?;
    let resolved = RunConfig { env, ..stored };
    let mut manifest = RunManifest::new("eval", config_json(&resolved), None);
    let result = (|| {
        let mut policy = AgentPolicy::new(&agent, &resolved.env)
            .map_err(|e| usage(format!("checkpoint does not fit the environment: {e}")))?;
        let report = evaluate(&mut policy, &resolved.env, args.episodes, &shapes).map_err(learn_error)?;
        let csv = report.to_csv();
        print!("{csv}");
        write_file(&dir, "eval.csv", csv.as_bytes(), &mut manifest)?;
        Ok(json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "episodes": args.episodes,
            "aggregate": report.aggregate(),
        }))
    })();
    finish(&dir, manifest, result)
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<(), CliError> {
    if args.capacities.len() < 2 {
        return Err(usage("a sweep needs at least two capacities"));
    }
    let base = load_config(cli)?;
    let legs = args
        .capacities
        .iter()
        .map(|&cap| {
            let mut cfg = base.clone();
            cfg.train.buffer_capacity = cap;
            cfg.validate().map_err(|e| usage(format!("capacity {cap}: {e}")))?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let dir = out_dir(cli, "sweep")?;
    let mut manifest = RunManifest::new("sweep", config_json(&base), Some(base.seed));
    let result = (|| {
        let mut csv = String::from("capacity,final_success_rate\n");
        let mut rows = Vec::new();
        for cfg in &legs {
            let cap = cfg.train.buffer_capacity;
            let rate = train_into(cfg, &dir, &format!("cap{cap}/"), &mut manifest)?;
            csv.push_str(&format!("{cap},{rate}\n"));
            rows.push(json!({ "capacity": cap, "final_success_rate": rate }));
        }
        print!("{csv}");
        write_file(&dir, "sweep.csv", csv.as_bytes(), &mut manifest)?;
        Ok(Value::Array(rows))
    })();
    finish(&dir, manifest, result)
}

fn cmd_mech(cli: &Cli, m: &MechCommand) -> Result<(), CliError> {
    let (text, summary) = match *m {
        MechCommand::Tension { fg, r, lja } => {
            let t = mechanics::required_tension(fg, r, lja).map_err(usage)?;
            (format!("{t:.1} N"), json!({ "tension_n": t }))
        }
        MechCommand::Torque { d, t, theta } => {
            let tau = mechanics::servo_torque(d, t, theta).map_err(usage)?;
            (format!("{tau:.1} N*mm"), json!({ "torque_nmm": tau }))
        }
        MechCommand::Sf { stress, strength } => {
            let sf = mechanics::safety_factor(stress, strength).map_err(usage)?;
            (format!("{sf:.2}"), json!({ "safety_factor": sf }))
        }
        MechCommand::Report {
            mass,
            pinch,
            speed,
            actuators,
        } => {
            let summary = DesignSummary {
                total_mass: mass,
                max_pinch_force: pinch,
                max_angular_speed: speed,
                actuator_count: actuators,
            };
            let report = mechanics::design_report(&summary, &PinchCase::default()).map_err(usage)?;
            let findings = mechanics::check_benchmarks(&summary);
            (
                report.trim_end().to_string(),
                serde_json::to_value(findings).unwrap_or(Value::Null),
            )
        }
    };
    println!("{text}");
    // The calculator only writes a run directory when asked for one.
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        let mut manifest = RunManifest::new("mech", json!(format!("{m:?}")), None);
        write_file(dir, "mech.txt", format!("{text}\n").as_bytes(), &mut manifest)?;
        finish(dir, manifest, Ok(summary))?;
    }
    Ok(())
}

fn cmd_augment(cli: &Cli, args: &AugmentArgs) -> Result<(), CliError> {
    let spec = AugmentationSpec {
        crop_fraction: [args.crop_min, 1.0],
        zoom: [args.zoom_min, args.zoom_max],
        rotation_deg: [-args.rotation_max, args.rotation_max],
        multiplier: args.multiplier,
        seed: cli.seed.unwrap_or(0),
        ..AugmentationSpec::default()
    };
    spec.validate().map_err(usage)?;
    if args.synthesize == Some(0) || args.image_size == 0 {
        return Err(usage("--synthesize and --image-size must be positive"));
    }
    let sources = match (&args.source, args.synthesize) {
        (Some(dir), _) => read_dataset(dir).map_err(runtime)?,
        (None, Some(n)) => synthesize_sources(n, args.image_size, cli.seed.unwrap_or(0)).map_err(runtime)?,
        (None, None) => return Err(usage("one of --source or --synthesize is required")),
    };
    if sources.is_empty() {
        return Err(runtime("source directory holds no samples"));
    }
    let dir = out_dir(cli, "augment")?;
    let samples_dir = dir.join("samples");
    std::fs::create_dir_all(&samples_dir).map_err(|e| runtime(format!("{}: {e}", samples_dir.display())))?;
    let config = json!({
        "source": args.source.as_ref().map(|p| p.display().to_string()),
        "synthesize": args.synthesize,
        "image_size": args.image_size,
        "spec": spec,
    });
    let mut manifest = RunManifest::new("augment", config, Some(spec.seed));
    let mut written = Vec::new();
    let result = build_augmented_dataset(&sources, &spec, |s| {
        written.extend(write_sample(&samples_dir, &s.sample)?);
        Ok(())
    })
    .map_err(runtime);
    for path in &written {
        manifest.record(&dir, path);
    }
    let result = result.map(|report| {
        println!(
            "{} sources -> {} samples ({} skipped)",
            report.sources, report.samples, report.skipped
        );
        json!({ "sources": report.sources, "samples": report.samples, "skipped": report.skipped })
    });
    finish(&dir, manifest, result)
}

fn cmd_render(cli: &Cli, args: &RenderArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.scene)
        .map_err(|e| usage(format!("cannot read scene {}: {e}", args.scene.display())))?;
    let spec = SceneSpec::from_toml(&text, &args.scene.display().to_string()).map_err(usage)?;
    let image = spec.render().map_err(usage)?;
    let dir = out_dir(cli, "render")?;
    let mut manifest = RunManifest::new("render", serde_json::to_value(&spec).unwrap_or(Value::Null), None);
    let path = dir.join("depth.pgm");
    let result = write_pgm(&path, &image).map_err(runtime).map(|()| {
        manifest.record(&dir, &path);
        println!("{}", path.display());
        json!({ "width": image.width, "height": image.height })
    });
    finish(&dir, manifest, result)
}
