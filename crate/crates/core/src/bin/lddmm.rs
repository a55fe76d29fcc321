use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lddmm::error::Error;
use lddmm::field::Grid;
use lddmm::io;
use lddmm::optimizer::OptimizerConfig;
use lddmm::pipeline::{
    eval_overlap, overlap_csv, run_registration, IntegratorChoice, ModelConfig, ParameterizationChoice,
    RepresentationChoice, RunConfig,
};
use lddmm::synth;
use lddmm::variants::VariantKind;

#[derive(Parser)]
#[command(name = "lddmm", version, about = "Band-limited PDE-constrained LDDMM registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source image to a target image.
    Register(RegisterArgs),
    /// Score label overlap for a finished registration.
    Evaluate(EvaluateArgs),
    /// Write synthetic fixture images.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, requires = "labels_target")]
    labels_source: Option<PathBuf>,
    #[arg(long, requires = "labels_source")]
    labels_target: Option<PathBuf>,
    /// Spatial velocity field to start from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value = "defstate", value_parser = parse_variant)]
    variant: VariantKind,
    #[arg(long, value_enum, default_value = "sl")]
    integrator: IntegratorChoice,
    #[arg(long = "repr", value_enum, default_value = "bl")]
    representation: RepresentationChoice,
    #[arg(long, value_enum, default_value = "stationary")]
    param: ParameterizationChoice,
    #[arg(long, default_value_t = 32)]
    band: usize,
    /// Defaults to 5 for sl and 25 for rk.
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long, default_value_t = 0.0025)]
    alpha: f64,
    #[arg(long, default_value_t = 2)]
    s: u32,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    #[arg(long, default_value_t = 5)]
    pcg_iter: usize,
    #[arg(long)]
    no_rescale: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Output directory of a `register` run.
    #[arg(long)]
    transform: PathBuf,
    #[arg(long)]
    labels_source: PathBuf,
    #[arg(long)]
    labels_target: PathBuf,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    /// Gaussian blob and a translated copy.
    Blob,
    /// Two labelled discs and a translated copy, with label maps.
    Discs,
    /// Blob deformed by a localized rotation, with the velocity.
    Rotation,
    /// Blob plus a velocity whose explicit CFL number is --cfl at --nt steps.
    Adversarial,
    /// Ten blob/warp pairs.
    Suite,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    fixture: Fixture,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Translation in voxels along the first axis.
    #[arg(long, default_value_t = 6.0)]
    shift: f64,
    #[arg(long, default_value_t = 4.0)]
    cfl: f64,
    #[arg(long, default_value_t = 5)]
    nt: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<VariantKind, String> {
    VariantKind::ALL
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| format!("unknown variant '{s}' (expected original, state or defstate)"))
}

fn register(a: RegisterArgs) -> Result<(), Error> {
    let cfg = RunConfig {
        source: a.source,
        target: a.target,
        labels_source: a.labels_source,
        labels_target: a.labels_target,
        initial_velocity: a.init,
        out: a.out,
        rescale: !a.no_rescale,
        seed: a.seed,
        model: ModelConfig {
            variant: a.variant,
            integrator: a.integrator,
            representation: a.representation,
            parameterization: a.param,
            band: a.band,
            n_t: a.nt,
            alpha: a.alpha,
            s: a.s,
            sigma2: a.sigma2,
            optimizer: OptimizerConfig {
                max_outer: a.max_iter,
                max_pcg: a.pcg_iter,
                ..OptimizerConfig::default()
            },
        },
    };
    let outcome = run_registration(&cfg)?;
    let r = outcome.report();
    println!(
        "{:?} after {} iterations: mse_rel {:.4}, rel_grad {:.4}, jacobian [{:.4}, {:.4}]",
        r.stop_reason,
        r.iterations.len().saturating_sub(1),
        r.mse_rel,
        r.rel_grad,
        r.jacobian_min,
        r.jacobian_max
    );
    if !r.diffeomorphic {
        eprintln!("warning: the registration map folds");
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), Error> {
    let rows = eval_overlap(&a.transform, &a.labels_source, &a.labels_target)?;
    let csv = overlap_csv(&rows);
    match a.out {
        Some(p) => fs::write(&p, csv).map_err(|e| Error::Io { path: p, source: e }),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn synth_cmd(a: SynthArgs) -> Result<(), Error> {
    let grid: Grid = synth::periodic_grid(a.size, a.dim)?;
    let out: &Path = &a.out;
    let c = synth::center(&grid);
    let h = grid.spacing()[0];
    let sigma = 0.1 * grid.extent()[0];
    match a.fixture {
        Fixture::Blob => {
            let mut moved = c.clone();
            moved[0] += a.shift * h;
            io::save_scalar(out.join("source"), &synth::gaussian_blob(&grid, &c, sigma)?)?;
            io::save_scalar(out.join("target"), &synth::gaussian_blob(&grid, &moved, sigma)?)?;
        }
        Fixture::Discs => {
            let f = {
                let mut shift = vec![0.0; grid.ndim()];
                shift[0] = a.shift;
                synth::two_label_fixture(&grid, &shift, 2.0)?
            };
            io::save_scalar(out.join("source"), &f.source)?;
            io::save_scalar(out.join("target"), &f.target)?;
            io::save_labels(out.join("labels_source"), &f.source_labels)?;
            io::save_labels(out.join("labels_target"), &f.target_labels)?;
        }
        Fixture::Rotation => {
            let mut off = c.clone();
            off[0] += 0.08 * grid.extent()[0];
            let src = synth::gaussian_blob(&grid, &off, 0.7 * sigma)?;
            let v = synth::vortex(&grid, &c, 1.0, 0.2 * grid.extent()[0])?;
            io::save_scalar(out.join("target"), &synth::advect(&src, &v, 20)?)?;
            io::save_scalar(out.join("source"), &src)?;
            io::save_vector(out.join("velocity"), &v)?;
        }
        Fixture::Adversarial => {
            let src = synth::gaussian_blob(&grid, &c, 0.5 * sigma)?;
            io::save_scalar(out.join("source"), &src)?;
            io::save_scalar(out.join("target"), &src)?;
            io::save_vector(out.join("velocity"), &synth::adversarial_velocity(&grid, a.cfl, a.nt)?)?;
        }
        Fixture::Suite => {
            for (i, case) in synth::blob_suite(&grid, 10, a.seed)?.iter().enumerate() {
                io::save_scalar(out.join(format!("case{i:02}_source")), &case.source)?;
                io::save_scalar(out.join(format!("case{i:02}_target")), &case.target)?;
            }
        }
    }
    println!("wrote fixture to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Register(a) => register(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
