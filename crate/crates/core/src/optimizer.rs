//! Gauss–Newton–Krylov outer loop.
//!
//! Each outer iteration builds the forward/adjoint cache, checks the stopping
//! conditions, solves H dv = -g inexactly with PCG (preconditioned by L⁻¹)
//! and backtracks along dv until the Armijo condition holds.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{axpy, TimeVaryingVelocity, VectorSpace, VelocityField};
use crate::metrics::{jacobian_extrema, mse_rel, rel_gradient, IterationRecord, RegistrationReport, StopReason};
use crate::variants::RegistrationProblem;

type Velocity = TimeVaryingVelocity<VelocityField>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_outer: usize,
    pub max_pcg: usize,
    pub epsilon0: f64,
    pub backtrack: f64,
    pub max_trials: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Preconditioned relative residual at which PCG stops.
    pub pcg_tol: f64,
    /// ‖g_n‖∞ / ‖g_0‖∞ threshold.
    pub grad_tol: f64,
    /// |E_n - E_{n-1}| / E_{n-1} threshold.
    pub energy_tol: f64,
    /// ‖ε dv‖ / ‖v‖ threshold.
    pub step_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_outer: 10,
            max_pcg: 5,
            epsilon0: 1.0,
            backtrack: 0.5,
            max_trials: 10,
            armijo: 1e-4,
            pcg_tol: 0.1,
            grad_tol: 1e-2,
            energy_tol: 1e-4,
            step_tol: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.epsilon0,
            self.backtrack,
            self.armijo,
            self.pcg_tol,
            self.grad_tol,
            self.energy_tol,
            self.step_tol,
        ];
        if self.max_outer == 0 || self.max_pcg == 0 || self.max_trials == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.backtrack >= 1.0 {
            return Err(Error::Config("optimizer tolerances must be positive (backtrack < 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of a PCG solve.
#[derive(Clone, Debug)]
pub struct PcgResult<V> {
    pub solution: V,
    pub iterations: usize,
    /// ‖r_k‖ for k = 0..=iterations.
    pub residuals: Vec<f64>,
    /// The PCG iterate was not a descent direction and was replaced by
    /// the preconditioned right-hand side.
    pub fallback: bool,
}

/// Preconditioned CG for H x = b, started at x = 0.
///
/// Stops after `max_iter` iterations or once sqrt((r, M r) / (b, M b)) ≤ `tol`.
/// If the result has ⟨x, b⟩ ≤ 0 it falls back to x = M b.
pub fn pcg_solve<V: VectorSpace>(
    mut hessvec: impl FnMut(&V) -> Result<V>,
    rhs: &V,
    precond: impl Fn(&V) -> Result<V>,
    max_iter: usize,
    tol: f64,
) -> Result<PcgResult<V>> {
    let mut x = rhs.zeros_like();
    let mut r = rhs.clone();
    let mut z = precond(&r)?;
    let mut rz = r.inner(&z)?;
    let rz0 = rz;
    let mut residuals = vec![r.norm()];
    if rz0 <= 0.0 {
        return Ok(PcgResult {
            solution: x,
            iterations: 0,
            residuals,
            fallback: false,
        });
    }
    let mut p = z.clone();
    let mut iterations = 0;
    while iterations < max_iter {
        if (rz / rz0).max(0.0).sqrt() <= tol {
            break;
        }
        let hp = hessvec(&p)?;
        let php = p.inner(&hp)?;
        if !php.is_finite() {
            return Err(Error::NonFinite("PCG curvature".into()));
        }
        if php <= 0.0 {
            break;
        }
        let alpha = rz / php;
        x.axpy_assign(alpha, &p)?;
        r.axpy_assign(-alpha, &hp)?;
        iterations += 1;
        let rn = r.norm();
        if !rn.is_finite() {
            return Err(Error::NonFinite("PCG residual".into()));
        }
        residuals.push(rn);
        z = precond(&r)?;
        let rz_new = r.inner(&z)?;
        let beta = rz_new / rz;
        rz = rz_new;
        let mut next = z.clone();
        next.axpy_assign(beta, &p)?;
        p = next;
    }
    let mut fallback = false;
    if x.inner(rhs)? <= 0.0 {
        x = precond(rhs)?;
        fallback = true;
    }
    Ok(PcgResult {
        solution: x,
        iterations,
        residuals,
        fallback,
    })
}

/// Outcome of the backtracking search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    /// Accepted step, 0 when stalled.
    pub epsilon: f64,
    /// Energy at the accepted step (the starting energy when stalled).
    pub energy: f64,
    pub trials: usize,
    pub stalled: bool,
}

/// Armijo backtracking on ε ∈ {ε₀, ε₀/2, …}: accepts the first ε with
/// E(ε) ≤ E(0) + c ε ⟨g, dv⟩. `slope` is ⟨g, dv⟩ and must be negative.
/// Trials whose evaluation diverges count as rejections.
pub fn line_search(
    mut energy_at: impl FnMut(f64) -> Result<f64>,
    e0: f64,
    slope: f64,
    cfg: &OptimizerConfig,
) -> Result<LineSearch> {
    let stall = |trials| LineSearch {
        epsilon: 0.0,
        energy: e0,
        trials,
        stalled: true,
    };
    if !(slope < 0.0) {
        return Ok(stall(0));
    }
    let mut eps = cfg.epsilon0;
    for trial in 1..=cfg.max_trials {
        let e = match energy_at(eps) {
            Ok(e) => e,
            Err(err) if err.is_divergence() => f64::INFINITY,
            Err(err) => return Err(err),
        };
        if e.is_finite() && e <= e0 + cfg.armijo * eps * slope {
            return Ok(LineSearch {
                epsilon: eps,
                energy: e,
                trials: trial,
                stalled: false,
            });
        }
        eps *= cfg.backtrack;
    }
    Ok(stall(cfg.max_trials))
}

/// Result of [`optimize`].
#[derive(Clone, Debug)]
pub struct Registration {
    pub velocity: Velocity,
    pub report: RegistrationReport,
}

fn at_iteration(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Optimization {
        iteration,
        source: Box::new(e),
    }
}

/// Runs the Gauss–Newton–Krylov loop from `v0`.
pub fn optimize(problem: &RegistrationProblem, v0: Velocity, cfg: &OptimizerConfig) -> Result<Registration> {
    cfg.validate()?;
    let mut v = v0;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut g0: Option<Velocity> = None;
    let mut prev_energy: Option<f64> = None;
    let mut last_rel_grad;
    let mut last_mse;
    let mut n = 0;
    let stop = loop {
        let started = Instant::now();
        let wrap = at_iteration(n);
        let cache = problem.linearize(&v).map_err(&wrap)?;
        let energy = cache.energy();
        let g = problem.gradient(&cache, &v).map_err(&wrap)?;
        let rel = match &g0 {
            None => {
                let r = if g.max_abs() == 0.0 { 0.0 } else { 1.0 };
                g0 = Some(g.clone());
                r
            }
            Some(first) => rel_gradient(&g, first),
        };
        let mse = mse_rel(cache.m1(), problem.source(), problem.target()).map_err(&wrap)?;
        last_rel_grad = rel;
        last_mse = mse;
        let mut record = IterationRecord {
            iter: n,
            energy,
            mse_rel: mse,
            rel_grad: rel,
            pcg_iters: 0,
            epsilon: 0.0,
            wall_ms: 0.0,
        };
        let finish = |mut record: IterationRecord, records: &mut Vec<IterationRecord>| {
            record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            records.push(record);
        };

        // roundoff in the warp keeps g from being exactly zero at a perfect match
        let target_scale = problem.target().values().iter().map(|x| x * x).sum::<f64>() * problem.target().grid().voxel_volume() / problem.sigma2();
        let matched = cache.regularizer() == 0.0 && cache.data_term() <= 1e-24 * target_scale;
        let reason = if g.max_abs() == 0.0 || matched {
            Some(StopReason::ZeroGradient)
        } else if n > 0 && rel <= cfg.grad_tol {
            Some(StopReason::GradientTolerance)
        } else if prev_energy.is_some_and(|p| (p - energy).abs() <= cfg.energy_tol * p.abs()) {
            Some(StopReason::EnergyChange)
        } else if n >= cfg.max_outer {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(reason) = reason {
            finish(record, &mut records);
            break reason;
        }

        let mut rhs = g.clone();
        rhs.scale_assign(-1.0);
        let pcg = pcg_solve(
            |p| problem.hessvec(&cache, &v, p),
            &rhs,
            |r| problem.apply_inverse_operator(r),
            cfg.max_pcg,
            cfg.pcg_tol,
        )
        .map_err(&wrap)?;
        let dv = pcg.solution;
        let slope = g.inner(&dv).map_err(&wrap)?;
        let ls = line_search(
            |eps| problem.energy(&axpy(eps, &dv, &v)?),
            energy,
            slope,
            cfg,
        )
        .map_err(&wrap)?;
        record.pcg_iters = pcg.iterations;
        record.epsilon = ls.epsilon;
        if ls.stalled {
            finish(record, &mut records);
            break StopReason::LineSearchStall;
        }
        let next = axpy(ls.epsilon, &dv, &v).map_err(&wrap)?;
        let step = ls.epsilon * dv.norm();
        let scale = next.norm();
        finish(record, &mut records);
        prev_energy = Some(energy);
        v = next;
        n += 1;
        if step <= cfg.step_tol * scale {
            // record the final iterate before stopping
            let started = Instant::now();
            let cache = problem.linearize(&v).map_err(at_iteration(n))?;
            let g = problem.gradient(&cache, &v).map_err(at_iteration(n))?;
            last_rel_grad = rel_gradient(&g, g0.as_ref().unwrap());
            last_mse = mse_rel(cache.m1(), problem.source(), problem.target()).map_err(at_iteration(n))?;
            records.push(IterationRecord {
                iter: n,
                energy: cache.energy(),
                mse_rel: last_mse,
                rel_grad: last_rel_grad,
                pcg_iters: 0,
                epsilon: 0.0,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            break StopReason::StepNorm;
        }
    };

    let u1 = problem.registration_displacement(&v).map_err(at_iteration(n))?;
    let (jmin, jmax) = jacobian_extrema(problem.spectral(), &u1)?;
    Ok(Registration {
        velocity: v,
        report: RegistrationReport {
            iterations: records,
            stop_reason: stop,
            mse_rel: last_mse,
            rel_grad: last_rel_grad,
            jacobian_min: jmin,
            jacobian_max: jmax,
            diffeomorphic: jmin > 0.0,
            overlap: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Grid, ScalarField};
    use crate::spectral::{BandSpec, SobolevOperator, Spectral};
    use crate::transport::{Integrator, Representation};
    use crate::variants::VariantKind;
    use crate::field::Parameterization;
    use std::f64::consts::PI;

    fn diag_op(d: &[f64]) -> impl Fn(&ScalarField) -> Result<ScalarField> + '_ {
        move |x: &ScalarField| {
            ScalarField::new(x.grid().clone(), x.values().iter().zip(d).map(|(a, b)| a * b).collect())
        }
    }

    #[test]
    fn zero_rhs_gives_zero_step() {
        let g = Grid::unit(&[4, 4]).unwrap();
        let d = vec![2.0; 16];
        let r = pcg_solve(diag_op(&d), &ScalarField::zeros(&g), |x| Ok(x.clone()), 5, 0.1).unwrap();
        assert_eq!(r.solution.max_abs(), 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn perfect_preconditioner_converges_in_one_iteration() {
        let g = Grid::new(&[16, 16], &[2.0 * PI / 16.0; 2]).unwrap();
        let sp = Spectral::new(&g);
        let band = BandSpec::uniform(8, &g).unwrap();
        let op = SobolevOperator::new(0.05, 2).unwrap();
        let rhs = sp
            .project(
                &crate::field::VectorField::from_fn(&g, |x, out| {
                    out[0] = x[0].sin() + (3.0 * x[1]).cos();
                    out[1] = (2.0 * x[0] + x[1]).sin();
                }),
                &band,
            )
            .unwrap();
        let r = pcg_solve(|x| Ok(op.apply_band(x)), &rhs, |x| Ok(op.apply_inverse_band(x)), 5, 0.1).unwrap();
        assert_eq!(r.iterations, 1);
        let mut d = r.solution.clone();
        d.axpy_assign(-1.0, &op.apply_inverse_band(&rhs)).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn line_search_accepts_newton_step_on_quadratic() {
        // E(ε) = (1 - ε)², slope -2
        let cfg = OptimizerConfig::default();
        let ls = line_search(|e| Ok((1.0 - e) * (1.0 - e)), 1.0, -2.0, &cfg).unwrap();
        assert_eq!(ls.epsilon, 1.0);
        assert_eq!(ls.trials, 1);
    }

    #[test]
    fn line_search_stalls_on_ascent() {
        let cfg = OptimizerConfig::default();
        let ls = line_search(|e| Ok(1.0 + e), 1.0, -1.0, &cfg).unwrap();
        assert!(ls.stalled);
        assert_eq!(ls.epsilon, 0.0);
        assert_eq!(ls.trials, 10);
    }

    #[test]
    fn line_search_backs_off_a_cliff() {
        let cfg = OptimizerConfig::default();
        let e = |eps: f64| if eps > 0.3 { Ok(100.0) } else { Ok(1.0 - eps) };
        let ls = line_search(e, 1.0, -1.0, &cfg).unwrap();
        assert_eq!(ls.epsilon, 0.25);
    }

    #[test]
    fn line_search_treats_divergence_as_rejection() {
        let cfg = OptimizerConfig::default();
        let e = |eps: f64| {
            if eps > 0.6 {
                Err(Error::Diverged {
                    equation: "state",
                    step: 1,
                    n_t: 5,
                    magnitude: f64::INFINITY,
                    cfl: 9.0,
                })
            } else {
                Ok(1.0 - eps)
            }
        };
        assert_eq!(line_search(e, 1.0, -1.0, &cfg).unwrap().epsilon, 0.5);
    }

    #[test]
    fn identical_images_stop_immediately() {
        let g = Grid::new(&[16, 16], &[2.0 * PI / 16.0; 2]).unwrap();
        let img = ScalarField::from_fn(&g, |x| x[0].sin() * x[1].cos());
        let p = RegistrationProblem::new(
            VariantKind::DeformationState,
            Integrator::SemiLagrangian,
            Representation::Spatial,
            img.clone(),
            img,
            0.0025,
            2,
            1.0,
        )
        .unwrap();
        let v0 = p.zero_velocity(Parameterization::Stationary, 5).unwrap();
        let out = optimize(&p, v0, &OptimizerConfig::default()).unwrap();
        assert_eq!(out.report.iterations.len(), 1);
        assert_eq!(out.report.mse_rel, 0.0);
        assert_eq!(out.velocity.max_abs(), 0.0);
        assert_eq!(out.report.stop_reason, StopReason::ZeroGradient);
    }

    #[test]
    fn energy_is_non_increasing() {
        let g = Grid::new(&[32, 32], &[2.0 * PI / 32.0; 2]).unwrap();
        let blob = |c: f64| {
            ScalarField::from_fn(&g, move |x| {
                (-((x[0] - c).powi(2) + (x[1] - PI).powi(2)) / (2.0 * 0.6f64.powi(2))).exp()
            })
        };
        let band = BandSpec::uniform(16, &g).unwrap();
        for variant in VariantKind::ALL {
            let p = RegistrationProblem::new(
                variant,
                Integrator::SemiLagrangian,
                Representation::BandLimited(band.clone()),
                blob(PI - 0.3),
                blob(PI + 0.3),
                0.0025,
                2,
                1.0,
            )
            .unwrap();
            let v0 = p.zero_velocity(Parameterization::Stationary, 5).unwrap();
            let cfg = OptimizerConfig {
                max_outer: 4,
                ..OptimizerConfig::default()
            };
            let out = optimize(&p, v0, &cfg).unwrap();
            let e: Vec<f64> = out.report.iterations.iter().map(|r| r.energy).collect();
            assert!(e.windows(2).all(|w| w[1] <= w[0]), "{variant}: {e:?}");
            assert!(out.report.mse_rel < 1.0);
        }
    }
}
