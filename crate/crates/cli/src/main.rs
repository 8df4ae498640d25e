//! `polarcube`: every pipeline stage from the command line.
//!
//! Each run loads an optional TOML config, applies flag overrides, prints the
//! resolved config to stderr and a one-line JSON summary to stdout.
//! Exit codes: 0 success, 2 configuration, 3 I/O, 4 numerical failure.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polarcube::Error;

use crate::config::{CameraKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "polarcube", version, about = "Spectro-polarimetric imaging pipeline")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all CPUs).
    #[arg(long, global = true, env = "POLARCUBE_THREADS")]
    threads: Option<usize>,
    /// Primary output path (a directory for sfp-stats).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Scene and camera overrides shared by `simulate` and `roundtrip`.
#[derive(Args, Debug, Clone, Default)]
pub struct SceneArgs {
    #[arg(long, value_enum)]
    pub camera: Option<CameraKind>,
    /// Gaussian read-noise sigma.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Spectral channels of a hyperspectral scene.
    #[arg(long)]
    pub channels: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic scene through the camera model into a raw capture.
    Simulate {
        #[command(flatten)]
        scene: SceneArgs,
        /// Also write the ground-truth Stokes cube.
        #[arg(long)]
        scene_out: Option<PathBuf>,
        /// Also write a synthetic per-channel normal-map stack.
        #[arg(long)]
        normals_out: Option<PathBuf>,
    },
    /// Least-squares Stokes reconstruction of a raw capture.
    Reconstruct {
        input: PathBuf,
        #[arg(long)]
        dop_tol: Option<f64>,
    },
    /// Per-pixel polarimetric features of a cube as CSV.
    Features { input: PathBuf },
    /// Polarized/unpolarized intensity histograms of a cube.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Physical-validity report of a cube.
    Validate {
        input: PathBuf,
        #[arg(long)]
        dop_tol: Option<f64>,
    },
    /// Average a burst of raw captures, optionally median filtered.
    Denoise {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        median: Option<usize>,
    },
    /// Fit a patch PCA codebook to one or more cubes.
    PcaFit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        bases: Option<usize>,
        /// joint, s0, s1, s2 or s3.
        #[arg(long)]
        mode: Option<String>,
        /// CSV of the explained-variance spectrum.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Encode and decode a cube with a PCA codebook.
    PcaCode {
        input: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Keep only the leading bases.
        #[arg(long)]
        bases: Option<usize>,
        /// CSV of bits per pixel against error.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Train a coordinate network on a cube.
    InrFit {
        input: PathBuf,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// CSV of the training loss and learning rate.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Decode a coordinate network back into a cube.
    InrCode {
        model: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        /// Cube to measure the decoded error against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Feature statistics over a set of cubes as CSV.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// A feature (s0..s3, n1..n3, dolp, docp, aolp, cop), `<feature>-gradient`,
        /// pol-unpol, poincare-s1s2 or poincare-s1s3.
        #[arg(long)]
        feature: String,
        #[arg(long)]
        bins: Option<usize>,
        /// Gradient direction: pooled, horizontal or vertical.
        #[arg(long, default_value = "pooled")]
        direction: String,
        #[arg(long)]
        environment: Vec<String>,
        #[arg(long)]
        illumination: Vec<String>,
        #[arg(long)]
        scene_type: Vec<String>,
    },
    /// Spectral spread of surface normals.
    SfpStats {
        input: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Simulate, reconstruct and compare against the ground truth.
    Roundtrip {
        #[command(flatten)]
        scene: SceneArgs,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        3
    } else if e.is_numerical() {
        4
    } else {
        2
    }
}

fn resolve(cli: &Cli) -> polarcube::Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.io.out = Some(o.clone());
    }
    commands::apply_overrides(&mut cfg, &cli.command)?;
    cfg.resolve()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    eprint!("{}", cfg.to_toml());
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    match commands::run(&cfg, &cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
