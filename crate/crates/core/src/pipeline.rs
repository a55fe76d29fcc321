//! File-level registration runs: load, register, write artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Parameterization, ScalarField, TimeVaryingVelocity, VectorField, VelocityField};
use crate::interp::{warp, Interpolator};
use crate::io;
use crate::metrics::{overlap_table, LabelField, LabelOverlap, RegistrationReport};
use crate::optimizer::{optimize, OptimizerConfig, Registration};
use crate::spectral::BandSpec;
use crate::transport::{Integrator, Representation};
use crate::variants::{RegistrationProblem, VariantKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorChoice {
    Rk,
    Sl,
}

impl From<IntegratorChoice> for Integrator {
    fn from(c: IntegratorChoice) -> Self {
        match c {
            IntegratorChoice::Rk => Integrator::Rk4,
            IntegratorChoice::Sl => Integrator::SemiLagrangian,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationChoice {
    Spatial,
    Bl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ParameterizationChoice {
    Stationary,
    Nonstationary,
}

impl From<ParameterizationChoice> for Parameterization {
    fn from(c: ParameterizationChoice) -> Self {
        match c {
            ParameterizationChoice::Stationary => Parameterization::Stationary,
            ParameterizationChoice::Nonstationary => Parameterization::NonStationary,
        }
    }
}

/// Model parameters shared by file runs and in-memory runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: VariantKind,
    pub integrator: IntegratorChoice,
    pub representation: RepresentationChoice,
    pub parameterization: ParameterizationChoice,
    /// Band size per axis, clamped to the grid.
    pub band: usize,
    /// Time steps; 5 for SL and 25 for RK when unset.
    pub n_t: Option<usize>,
    pub alpha: f64,
    pub s: u32,
    pub sigma2: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: VariantKind::DeformationState,
            integrator: IntegratorChoice::Sl,
            representation: RepresentationChoice::Bl,
            parameterization: ParameterizationChoice::Stationary,
            band: 32,
            n_t: None,
            alpha: 0.0025,
            s: 2,
            sigma2: 1.0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn n_t(&self) -> usize {
        self.n_t.unwrap_or(match self.integrator {
            IntegratorChoice::Sl => 5,
            IntegratorChoice::Rk => 25,
        })
    }

    pub fn problem(&self, source: ScalarField, target: ScalarField) -> Result<RegistrationProblem> {
        let grid = source.grid().clone();
        let representation = match self.representation {
            RepresentationChoice::Spatial => Representation::Spatial,
            RepresentationChoice::Bl => {
                let bounds: Vec<usize> = grid.dims().iter().map(|&n| self.band.min(n)).collect();
                Representation::BandLimited(BandSpec::new(&bounds, &grid)?)
            }
        };
        RegistrationProblem::new(
            self.variant,
            self.integrator.into(),
            representation,
            source,
            target,
            self.alpha,
            self.s,
            self.sigma2,
        )
    }

    /// Runs the optimizer from zero or from a spatial warm start.
    pub fn register(&self, problem: &RegistrationProblem, warm_start: Option<&VectorField>) -> Result<Registration> {
        let n_t = self.n_t();
        let param: Parameterization = self.parameterization.into();
        let v0 = match warm_start {
            None => problem.zero_velocity(param, n_t)?,
            Some(f) => TimeVaryingVelocity::filled(param, problem.to_velocity(f)?, n_t)?,
        };
        optimize(problem, v0, &self.optimizer)
    }
}

/// A registration run on files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: PathBuf,
    pub target: PathBuf,
    pub labels_source: Option<PathBuf>,
    pub labels_target: Option<PathBuf>,
    /// Spatial velocity to start from instead of zero.
    pub initial_velocity: Option<PathBuf>,
    pub out: PathBuf,
    /// Min-max scaling of both images to [0, 1] on load.
    pub rescale: bool,
    /// Recorded in the report; the solver itself is deterministic.
    pub seed: u64,
    #[serde(flatten)]
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn new(source: impl Into<PathBuf>, target: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            source: source.into(),
            target: target.into(),
            labels_source: None,
            labels_target: None,
            initial_velocity: None,
            out: out.into(),
            rescale: true,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

/// Everything a run produced, as written to disk.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub registration: Registration,
    /// Displacement of the registration map φ(1) = id - u.
    pub forward: VectorField,
    /// Displacement of its inverse.
    pub inverse: VectorField,
    pub warped: ScalarField,
    pub warped_labels: Option<LabelField>,
}

impl RunOutcome {
    pub fn report(&self) -> &RegistrationReport {
        &self.registration.report
    }
}

/// Registers in memory; labels, when given, are warped and scored.
pub fn run_fields(
    model: &ModelConfig,
    source: ScalarField,
    target: ScalarField,
    labels: Option<(&LabelField, &LabelField)>,
    warm_start: Option<&VectorField>,
) -> Result<RunOutcome> {
    let problem = model.problem(source, target)?;
    let mut registration = model.register(&problem, warm_start)?;
    let (forward, inverse) = problem.registration_transforms(&registration.velocity)?;
    let warped = warp(problem.source(), &forward.displacement_to_map(), Interpolator::CubicBSpline)?;
    let warped_labels = match labels {
        Some((s, t)) => {
            registration.report.overlap = overlap_table(s, t, &forward)?;
            Some(s.warp(&forward)?)
        }
        None => None,
    };
    Ok(RunOutcome {
        registration,
        forward,
        inverse,
        warped,
        warped_labels,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the inputs, registers and writes the artifacts into `cfg.out`:
/// velocity field(s), forward/inverse displacements, warped source and
/// labels, `report.json`, `convergence.csv` and `summary.txt`. A failure
/// is also written to `summary.txt` before it is returned.
pub fn run_registration(cfg: &RunConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let result = run_and_write(cfg);
    if let Err(e) = &result {
        write_text(&cfg.out.join("summary.txt"), &format!("status: failed\nerror: {e}\n"))?;
    }
    result
}

fn run_and_write(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut source = io::load_scalar(&cfg.source)?;
    let mut target = io::load_scalar(&cfg.target)?;
    if cfg.rescale {
        source = source.rescaled_unit();
        target = target.rescaled_unit();
    }
    let labels = match (&cfg.labels_source, &cfg.labels_target) {
        (Some(s), Some(t)) => Some((io::load_labels(s)?, io::load_labels(t)?)),
        (None, None) => None,
        _ => return Err(Error::Config("labels need both a source and a target map".into())),
    };
    let warm = cfg.initial_velocity.as_ref().map(io::load_vector).transpose()?;
    let outcome = run_fields(
        &cfg.model,
        source,
        target,
        labels.as_ref().map(|(s, t)| (s, t)),
        warm.as_ref(),
    )?;
    write_artifacts(cfg, &outcome)?;
    Ok(outcome)
}

fn write_artifacts(cfg: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    let out = &cfg.out;
    let v = &outcome.registration.velocity;
    let sp = crate::spectral::Spectral::new(outcome.forward.grid());
    let lift = |f: &VelocityField| f.lift(&sp);
    if v.is_stationary() {
        io::save_vector(out.join("velocity"), &lift(&v.fields()[0])?)?;
    } else {
        for (i, f) in v.fields().iter().enumerate() {
            io::save_vector(out.join(format!("velocity_{i:03}")), &lift(f)?)?;
        }
    }
    io::save_vector(out.join("displacement_forward"), &outcome.forward)?;
    io::save_vector(out.join("displacement_inverse"), &outcome.inverse)?;
    io::save_scalar(out.join("warped_source"), &outcome.warped)?;
    if let Some(l) = &outcome.warped_labels {
        io::save_labels(out.join("warped_labels"), l)?;
    }

    let report = outcome.report();
    let json = serde_json::json!({ "config": cfg, "report": report });
    write_text(&out.join("report.json"), &serde_json::to_string_pretty(&json).expect("report serializes"))?;
    write_text(&out.join("convergence.csv"), &convergence_csv(report))?;
    write_text(&out.join("summary.txt"), &summary(cfg, report))
}

pub fn convergence_csv(report: &RegistrationReport) -> String {
    let mut s = String::from("iter,energy,mse_rel,rel_grad,pcg_iters,epsilon,wall_ms\n");
    for r in &report.iterations {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{},{},{:.3}",
            r.iter, r.energy, r.mse_rel, r.rel_grad, r.pcg_iters, r.epsilon, r.wall_ms
        );
    }
    s
}

fn summary(cfg: &RunConfig, report: &RegistrationReport) -> String {
    let m = &cfg.model;
    let mut s = String::new();
    let _ = writeln!(s, "status: ok");
    let _ = writeln!(
        s,
        "variant {} / {:?} / {:?} / {:?}, n_t = {}",
        m.variant,
        m.integrator,
        m.representation,
        m.parameterization,
        m.n_t()
    );
    let _ = writeln!(s, "outer iterations: {}", report.iterations.len().saturating_sub(1));
    let _ = writeln!(s, "stop: {:?}", report.stop_reason);
    let _ = writeln!(s, "mse_rel: {:.6}", report.mse_rel);
    let _ = writeln!(s, "rel_grad: {:.6}", report.rel_grad);
    let _ = writeln!(s, "jacobian: [{:.6}, {:.6}]", report.jacobian_min, report.jacobian_max);
    if !report.diffeomorphic {
        let _ = writeln!(s, "warning: the registration map folds (min jacobian <= 0)");
    }
    for o in &report.overlap {
        let _ = writeln!(s, "label {}: dsc {:.4} -> {:.4}", o.label, o.before, o.after);
    }
    s
}

/// Per-label DSC before (identity) and after warping with the forward
/// displacement stored in `transform_dir`.
pub fn eval_overlap(transform_dir: &Path, labels_source: &Path, labels_target: &Path) -> Result<Vec<LabelOverlap>> {
    let u = io::load_vector(transform_dir.join("displacement_forward"))?;
    let s = io::load_labels(labels_source)?;
    let t = io::load_labels(labels_target)?;
    s.grid().check_same(u.grid())?;
    overlap_table(&s, &t, &u)
}

pub fn overlap_csv(rows: &[LabelOverlap]) -> String {
    let mut s = String::from("label,dsc_before,dsc_after\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6},{:.6}", r.label, r.before, r.after);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_configuration() {
        let m = ModelConfig::default();
        assert_eq!((m.alpha, m.s, m.sigma2, m.band), (0.0025, 2, 1.0, 32));
        assert_eq!(m.n_t(), 5);
        let rk = ModelConfig {
            integrator: IntegratorChoice::Rk,
            ..m
        };
        assert_eq!(rk.n_t(), 25);
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut c = RunConfig::new("a.raw", "b.raw", "out");
        c.model.variant = VariantKind::Original;
        c.model.n_t = Some(7);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"variant\":\"original\""));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
