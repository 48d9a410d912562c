//! `pregrasp` command-line driver.
//!
//! Exit codes: 0 on success, 1 on a runtime error, 2 on a configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pregrasp::cloud::{synth_shape, write_xyz};
use pregrasp::document::write_atomic;
use pregrasp::pipeline::{self, RunConfig, Stage};
use pregrasp::scene::export_obj;
use pregrasp::{CloudFormat, Error, Result, RunDocument, Shape};

#[derive(Parser, Debug)]
#[command(
    name = "pregrasp",
    version,
    about = "Pre-grasp generation for three-finger grippers from point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit and split the cloud into a tree of oriented boxes.
    Decompose(RunArgs),
    /// Decompose, then classify every part.
    Classify(RunArgs),
    /// Run through face masks.
    Mask(RunArgs),
    /// Run through pre-grasp pool generation.
    Sample(RunArgs),
    /// Run the full pipeline and rank the pool.
    Rank(RunArgs),
    /// Write a synthetic point cloud as XYZ.
    Synth(SynthArgs),
    /// Write an OBJ wireframe of a run document.
    ExportViz(VizArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Input cloud (.xyz, .ply or .obj); required unless resuming.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<CloudFormat>,
    /// Continue from a saved run document, reusing its configuration.
    #[arg(long, conflicts_with = "input")]
    resume: Option<PathBuf>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    volume_ratio: Option<f64>,
    #[arg(long)]
    planes_per_axis: Option<usize>,
    #[arg(long)]
    tau_long: Option<f64>,
    #[arg(long)]
    tau_flat: Option<f64>,
    #[arg(long)]
    s_small: Option<f64>,
    /// Maximum gripper opening (m).
    #[arg(long)]
    aperture: Option<f64>,
    #[arg(long)]
    finger_length: Option<f64>,
    #[arg(long)]
    standoff: Option<f64>,
    /// Degrees.
    #[arg(long)]
    angular_step: Option<f64>,
    /// Meters.
    #[arg(long)]
    axial_step: Option<f64>,
    /// Friction coefficient.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    cone_edges: Option<usize>,
    #[arg(long)]
    quality_dirs: Option<usize>,
    #[arg(long)]
    tube_radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    /// Flags given with `--resume` would be silently ignored, so reject them.
    fn overrides_present(&self) -> bool {
        self.format.is_some()
            || self.min_points.is_some()
            || self.volume_ratio.is_some()
            || self.planes_per_axis.is_some()
            || self.tau_long.is_some()
            || self.tau_flat.is_some()
            || self.s_small.is_some()
            || self.aperture.is_some()
            || self.finger_length.is_some()
            || self.standoff.is_some()
            || self.angular_step.is_some()
            || self.axial_step.is_some()
            || self.mu.is_some()
            || self.cone_edges.is_some()
            || self.quality_dirs.is_some()
            || self.tube_radius.is_some()
            || self.seed.is_some()
    }

    fn config(&self, input: &Path) -> RunConfig {
        let mut c = RunConfig::new(input);
        c.format = self.format;
        c.output = self.out.clone();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        if let Some(v) = self.min_points {
            c.decomposition.min_points = v;
        }
        set(&mut c.decomposition.volume_ratio, self.volume_ratio);
        if let Some(v) = self.planes_per_axis {
            c.decomposition.planes_per_axis = v;
        }
        set(&mut c.classifier.tau_long, self.tau_long);
        set(&mut c.classifier.tau_flat, self.tau_flat);
        set(&mut c.classifier.s_small, self.s_small);
        set(&mut c.gripper.max_aperture, self.aperture);
        set(&mut c.gripper.finger_length, self.finger_length);
        set(&mut c.gripper.standoff, self.standoff);
        set(&mut c.gripper.friction_mu, self.mu);
        set(&mut c.sampling.angular_step, self.angular_step);
        set(&mut c.sampling.axial_step, self.axial_step);
        if let Some(v) = self.cone_edges {
            c.grasp_eval.cone_edges = v;
        }
        if let Some(v) = self.quality_dirs {
            c.grasp_eval.quality_dirs = v;
        }
        set(&mut c.grasp_eval.tube_radius, self.tube_radius);
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ShapeKind {
    Box,
    Sphere,
    Cylinder,
    Plate,
    Dumbbell,
    Lshape,
}

#[derive(Args, Debug)]
struct SynthArgs {
    kind: ShapeKind,
    /// Comma-separated sizes in meters: box and plate take x,y,z; dumbbell takes
    /// bell,neck_length,neck_width; lshape takes length,width,thickness.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<f64>>,
    /// Radius for spheres and cylinders (m).
    #[arg(long)]
    r: Option<f64>,
    /// Cylinder length (m).
    #[arg(long)]
    length: Option<f64>,
    /// Dumbbell: turn of the second bell about the neck axis (degrees).
    #[arg(long, default_value_t = 45.0)]
    twist: f64,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VizArgs {
    /// Run document to draw.
    run: PathBuf,
    /// Ranked poses to flag as `best`, `top_2`, ...
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn need(v: Option<f64>, flag: &'static str) -> Result<f64> {
    v.ok_or_else(|| Error::BadDimension(format!("--{flag} is required for this shape")))
}

fn shape_of(a: &SynthArgs) -> Result<Shape> {
    let dims = || -> Result<[f64; 3]> {
        let d = a
            .dims
            .as_ref()
            .ok_or_else(|| Error::BadDimension("--dims is required for this shape".into()))?;
        <[f64; 3]>::try_from(d.as_slice())
            .map_err(|_| Error::BadDimension(format!("--dims takes 3 values, got {}", d.len())))
    };
    Ok(match a.kind {
        ShapeKind::Box => Shape::Box { size: dims()? },
        ShapeKind::Plate => Shape::Plate { size: dims()? },
        ShapeKind::Sphere => Shape::Sphere {
            radius: need(a.r, "r")?,
        },
        ShapeKind::Cylinder => Shape::Cylinder {
            length: need(a.length, "length")?,
            radius: need(a.r, "r")?,
        },
        ShapeKind::Dumbbell => {
            let [bell, neck_length, neck_width] = dims()?;
            Shape::Dumbbell {
                bell,
                neck_length,
                neck_width,
                twist: a.twist,
            }
        }
        ShapeKind::Lshape => {
            let [length, width, thickness] = dims()?;
            Shape::LShape {
                length,
                width,
                thickness,
            }
        }
    })
}

fn run_pipeline(args: &RunArgs, until: Stage) -> Result<()> {
    let doc = match (&args.resume, &args.input) {
        (Some(path), _) => {
            if args.overrides_present() {
                return Err(Error::InvalidConfig {
                    field: "resume",
                    reason: "parameters come from the resumed document; only --out may be given"
                        .into(),
                });
            }
            let mut doc = RunDocument::load(path)?;
            doc.config.output = args.out.clone();
            pipeline::resume(doc, until)?
        }
        (None, Some(input)) => pipeline::run(args.config(input), until)?,
        (None, None) => {
            // Report bad parameters before the missing input.
            args.config(Path::new("")).validate()?;
            return Err(Error::config("input", "--input or --resume is required"));
        }
    };
    log::info!("stage timings (ms): {:?}", doc.timings);
    match &args.out {
        Some(path) => doc.save(path),
        None => {
            println!("{}", doc.to_json()?);
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decompose(a) => run_pipeline(&a, Stage::Decompose),
        Command::Classify(a) => run_pipeline(&a, Stage::Classify),
        Command::Mask(a) => run_pipeline(&a, Stage::Mask),
        Command::Sample(a) => run_pipeline(&a, Stage::Sample),
        Command::Rank(a) => run_pipeline(&a, Stage::Rank),
        Command::Synth(a) => {
            let cloud = synth_shape(&shape_of(&a)?, a.n, a.seed)?;
            write_xyz(&a.out, &cloud)
        }
        Command::ExportViz(a) => {
            let doc = RunDocument::load(&a.run)?;
            write_atomic(&a.out, export_obj(&doc, a.top_k)?.as_bytes())
        }
    }
}

fn init_logging(setting: Option<&str>) -> std::result::Result<(), String> {
    let level = match setting {
        None | Some("") => log::LevelFilter::Warn,
        Some("quiet") => log::LevelFilter::Off,
        Some("info") => log::LevelFilter::Info,
        Some("debug") => log::LevelFilter::Debug,
        Some(other) => {
            return Err(format!(
                "PREGRASP_LOG must be quiet, info or debug, got '{other}'"
            ))
        }
    };
    // A second call within one process keeps the first logger.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
    Ok(())
}

/// How a command line ended.
#[derive(Debug)]
enum Outcome {
    Done,
    /// Help or version text for standard output.
    Info(String),
    Failed {
        code: u8,
        message: String,
    },
}

impl Outcome {
    fn code(&self) -> u8 {
        match self {
            Outcome::Done | Outcome::Info(_) => 0,
            Outcome::Failed { code, .. } => *code,
        }
    }
}

fn run<I, T>(args: I, log_setting: Option<&str>) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Err(message) = init_logging(log_setting) {
        return Outcome::Failed {
            code: 2,
            message: format!("error: {message}"),
        };
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            return Outcome::Failed {
                code: 2,
                message: e.render().to_string(),
            }
        }
        Err(e) => return Outcome::Info(e.render().to_string()),
    };
    match execute(cli) {
        Ok(()) => Outcome::Done,
        Err(e) => Outcome::Failed {
            code: if e.is_config_error() { 2 } else { 1 },
            message: format!("error: {}", e.to_string().replace('\n', " ")),
        },
    }
}

fn main() -> ExitCode {
    let outcome = run(
        std::env::args_os(),
        std::env::var("PREGRASP_LOG").ok().as_deref(),
    );
    match &outcome {
        Outcome::Done => {}
        Outcome::Info(text) => print!("{text}"),
        Outcome::Failed { message, .. } => eprintln!("{}", message.trim_end()),
    }
    ExitCode::from(outcome.code())
}

#[cfg(test)]
mod tests;
