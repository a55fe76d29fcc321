//! Objective, gradient and Gauss–Newton Hessian-vector product of the three
//! PDE-constrained formulations.
//!
//! All three share the energy
//!
//! ```text
//! E(v) = ½ ∫ ⟨L v_t, v_t⟩ dt + (1/σ²) ‖m(1) - I₁‖²
//! ```
//!
//! and differ in how m(1) is produced and how the adjoint is carried:
//!
//! - `Original`: m is transported, λ solves the continuity equation and the
//!   gradient is L v + λ ∇m;
//! - `StateEquation`: only ũ, ν̃ and Ũ are transported; m(t) = I₀∘φ(t) and
//!   λ(t) = J(t) λ(1)∘ψ(t) are reconstructed by warping;
//! - `DeformationState`: m(1) = I₀∘φ(1), ρ is transported backward and the
//!   gradient is L v + (I - Du)ᵀ ρ.
//!
//! Gradients are taken with respect to the velocity-space inner product
//! (trapezoidal over time nodes for non-stationary flows). A stationary
//! gradient integrates the data term over time with the trapezoidal rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    trapezoid_weights, GridFunction, Parameterization, ScalarField, TimeVaryingVelocity, VectorField, VectorSpace,
    VelocityField,
};
use crate::interp::{warp, warp_vector, Interpolator};
use crate::spectral::{SobolevOperator, Spectral};
use crate::transport::{
    solve_deformation_state, DeformationState, Equation, FieldSeries, Integrator, Representation, SpatialFlow,
    Storage, Transport, TransportProblem,
};

/// Which PDE-constrained formulation to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "state")]
    StateEquation,
    #[serde(rename = "defstate")]
    DeformationState,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [
        VariantKind::Original,
        VariantKind::StateEquation,
        VariantKind::DeformationState,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::StateEquation => "state",
            VariantKind::DeformationState => "defstate",
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

type Velocity = TimeVaryingVelocity<VelocityField>;

/// Images, regularization and discretization of one registration.
#[derive(Clone, Debug)]
pub struct RegistrationProblem {
    variant: VariantKind,
    integrator: Integrator,
    representation: Representation,
    operator: SobolevOperator,
    sigma2: f64,
    i0: ScalarField,
    i1: ScalarField,
    grad_i0: VectorField,
    spectral: Spectral,
}

/// Everything the gradient and Hessian need at one velocity: forward
/// solutions, adjoint solutions and the energy. Tagged with the velocity
/// revision it was built from.
#[derive(Debug)]
pub struct ForwardCache {
    revision: u64,
    transport: Transport,
    m1: ScalarField,
    regularizer: f64,
    data: f64,
    state: VariantState,
}

#[derive(Debug)]
enum VariantState {
    Original {
        m: FieldSeries,
        grad_m: Vec<VectorField>,
        lambda: FieldSeries,
    },
    StateEquation {
        def: DeformationState,
        grad_m: Vec<VectorField>,
        lambda: Vec<ScalarField>,
        /// ∇I₀∘φ(1)
        grad_i0_phi1: VectorField,
    },
    DeformationState {
        u: FieldSeries,
        /// Rows ∇u_k per node.
        jac_u: Vec<Vec<VectorField>>,
        rho: FieldSeries,
        grad_i0_phi1: VectorField,
    },
}

impl ForwardCache {
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn energy(&self) -> f64 {
        self.regularizer + self.data
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    pub fn data_term(&self) -> f64 {
        self.data
    }

    /// Deformed template m(1).
    pub fn m1(&self) -> &ScalarField {
        &self.m1
    }

    pub fn cfl(&self) -> f64 {
        self.transport.flow().cfl()
    }

    fn check(&self, v: &Velocity) -> Result<()> {
        if self.revision != v.revision() {
            return Err(Error::StaleCache {
                cache: self.revision,
                velocity: v.revision(),
            });
        }
        Ok(())
    }
}

fn sub(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    let mut out = a.clone();
    out.axpy_assign(-1.0, b)?;
    Ok(out)
}

/// (I - Du)ᵀ w, with `jac[k]` = ∇u_k: component j is w_j - Σ_k ∂_j u_k w_k.
fn transpose_apply(jac: &[VectorField], w: &VectorField) -> VectorField {
    let mut out = w.clone();
    for (k, row) in jac.iter().enumerate() {
        let wk = w.component(k);
        for j in 0..out.components().len() {
            let dj = row.component(j);
            for ((o, a), b) in out.component_mut(j).iter_mut().zip(dj).zip(wk) {
                *o -= a * b;
            }
        }
    }
    out
}

impl RegistrationProblem {
    /// `alpha`, `s` define L = (Id - αΔ)^s; `sigma2` weighs the data term.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: VariantKind,
        integrator: Integrator,
        representation: Representation,
        i0: ScalarField,
        i1: ScalarField,
        alpha: f64,
        s: u32,
        sigma2: f64,
    ) -> Result<Self> {
        i0.grid().check_same(i1.grid())?;
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Config(format!("sigma2 must be positive, got {sigma2}")));
        }
        if let Some(b) = representation.band() {
            if b.grid() != i0.grid() {
                return Err(Error::InvalidBand("band belongs to a different grid".into()));
            }
        }
        let operator = SobolevOperator::new(alpha, s)?;
        let spectral = Spectral::new(i0.grid());
        let grad_i0 = spectral.gradient(&i0)?;
        Ok(RegistrationProblem {
            variant,
            integrator,
            representation,
            operator,
            sigma2,
            i0,
            i1,
            grad_i0,
            spectral,
        })
    }

    pub fn variant(&self) -> VariantKind {
        self.variant
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn representation(&self) -> &Representation {
        &self.representation
    }

    pub fn operator(&self) -> &SobolevOperator {
        &self.operator
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn source(&self) -> &ScalarField {
        &self.i0
    }

    pub fn target(&self) -> &ScalarField {
        &self.i1
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Zero velocity in this problem's representation.
    pub fn zero_velocity(&self, parameterization: Parameterization, n_t: usize) -> Result<Velocity> {
        let grid = self.i0.grid();
        let field = match &self.representation {
            Representation::Spatial => VelocityField::Spatial(VectorField::zeros(grid)),
            Representation::BandLimited(b) => {
                VelocityField::BandLimited(crate::spectral::BandLimitedField::zeros(b, grid.ndim()))
            }
        };
        TimeVaryingVelocity::filled(parameterization, field, n_t)
    }

    /// Converts a spatial field to this problem's velocity representation.
    pub fn to_velocity(&self, f: &VectorField) -> Result<VelocityField> {
        Ok(match &self.representation {
            Representation::Spatial => VelocityField::Spatial(f.clone()),
            Representation::BandLimited(b) => VelocityField::BandLimited(self.spectral.project(f, b)?),
        })
    }

    fn check_velocity(&self, v: &Velocity) -> Result<()> {
        for f in v.fields() {
            let ok = matches!(
                (f, &self.representation),
                (VelocityField::Spatial(_), Representation::Spatial)
                    | (VelocityField::BandLimited(_), Representation::BandLimited(_))
            );
            if !ok {
                return Err(Error::ShapeMismatch("velocity representation does not match the problem".into()));
            }
            if let (VelocityField::BandLimited(b), Representation::BandLimited(band)) = (f, &self.representation) {
                if b.band() != band {
                    return Err(Error::InvalidBand("velocity band differs from the problem band".into()));
                }
            }
            self.i0.grid().check_same(f.grid())?;
        }
        Ok(())
    }

    fn transport(&self, v: &Velocity) -> Result<Transport> {
        self.check_velocity(v)?;
        Transport::from_velocity(v, self.integrator, &self.spectral)
    }

    fn regularizer(&self, v: &Velocity) -> Result<f64> {
        let lv = self.apply_operator(v)?;
        Ok(0.5 * lv.inner(v)?)
    }

    fn data_term(&self, m1: &ScalarField) -> Result<f64> {
        let r = sub(m1, &self.i1)?;
        Ok(r.inner(&r)? / self.sigma2)
    }

    /// L applied node by node.
    pub fn apply_operator(&self, v: &Velocity) -> Result<Velocity> {
        v.map(|f| self.operator.apply(&self.spectral, f))
    }

    /// L⁻¹ applied node by node (the preconditioner).
    pub fn apply_inverse_operator(&self, v: &Velocity) -> Result<Velocity> {
        v.map(|f| self.operator.apply_inverse(&self.spectral, f))
    }

    fn deformed_template(&self, transport: &Transport) -> Result<(ScalarField, Option<FieldSeries>)> {
        let grid = self.i0.grid();
        match self.variant {
            VariantKind::Original => {
                let sol = transport.solve(
                    &TransportProblem::new(Equation::State, &self.i0).with_storage(Storage::Endpoints),
                )?;
                Ok((sol.series.scalar(sol.series.n_t())?, None))
            }
            _ => {
                let sol = transport.solve(
                    &TransportProblem::zero(Equation::DefState, grid)
                        .with_representation(self.representation.clone()),
                )?;
                let n_t = sol.series.n_t();
                let phi1 = sol.series.vector(n_t)?.displacement_to_map();
                Ok((warp(&self.i0, &phi1, Interpolator::CubicBSpline)?, Some(sol.series)))
            }
        }
    }

    /// E(v), solving only what the energy needs.
    pub fn energy(&self, v: &Velocity) -> Result<f64> {
        let transport = self.transport(v)?;
        let (m1, _) = self.deformed_template(&transport)?;
        Ok(self.regularizer(v)? + self.data_term(&m1)?)
    }

    /// Deformed template m(1) at `v`.
    pub fn deformed(&self, v: &Velocity) -> Result<ScalarField> {
        let transport = self.transport(v)?;
        Ok(self.deformed_template(&transport)?.0)
    }

    /// Displacement u(1) of the registration map φ(1) = id - u(1), the map
    /// with m(1) = I₀∘φ(1).
    pub fn registration_displacement(&self, v: &Velocity) -> Result<VectorField> {
        let transport = self.transport(v)?;
        let sol = transport.solve(
            &TransportProblem::zero(Equation::DefState, self.i0.grid())
                .with_representation(self.representation.clone())
                .with_storage(Storage::Endpoints),
        )?;
        sol.series.vector(sol.series.n_t())
    }

    /// Displacements (u(1), ν(0)) of the registration map φ(1) = id - u(1)
    /// and of its inverse ψ(0) = id - ν(0).
    pub fn registration_transforms(&self, v: &Velocity) -> Result<(VectorField, VectorField)> {
        let transport = self.transport(v)?;
        let run = |eq| {
            transport.solve(
                &TransportProblem::zero(eq, self.i0.grid())
                    .with_representation(self.representation.clone())
                    .with_storage(Storage::Endpoints),
            )
        };
        let u = run(Equation::DefState)?.series;
        let nu = run(Equation::InverseDeformation)?.series;
        Ok((u.vector(u.n_t())?, nu.vector(0)?))
    }

    /// λ(1) = -(2/σ²)(m(1) - I₁).
    fn terminal_adjoint(&self, m1: &ScalarField) -> Result<ScalarField> {
        let mut r = sub(m1, &self.i1)?;
        r.scale_assign(-2.0 / self.sigma2);
        Ok(r)
    }

    fn low_pass_if_band(&self, f: VectorField) -> Result<VectorField> {
        match self.representation.band() {
            Some(b) => self.spectral.low_pass(&f, b),
            None => Ok(f),
        }
    }

    /// Runs every forward and adjoint solve the gradient and Hessian need.
    pub fn linearize(&self, v: &Velocity) -> Result<ForwardCache> {
        let transport = self.transport(v)?;
        let grid = self.i0.grid().clone();
        let n_t = v.n_t();
        let (m1, state) = match self.variant {
            VariantKind::Original => {
                let m = transport.solve(&TransportProblem::new(Equation::State, &self.i0))?.series;
                let m1 = m.scalar(n_t)?;
                let lambda1 = self.terminal_adjoint(&m1)?;
                let lambda = transport.solve(&TransportProblem::new(Equation::Adjoint, &lambda1))?.series;
                let grad_m = (0..=n_t)
                    .map(|i| self.spectral.gradient(&m.scalar(i)?))
                    .collect::<Result<Vec<_>>>()?;
                (m1, VariantState::Original { m, grad_m, lambda })
            }
            VariantKind::StateEquation => {
                let def = solve_deformation_state(&transport, &self.representation)?;
                let mut grad_m = Vec::with_capacity(n_t + 1);
                let mut ms = Vec::with_capacity(n_t + 1);
                for i in 0..=n_t {
                    let m = warp(&self.i0, &def.phi(i)?, Interpolator::CubicBSpline)?;
                    grad_m.push(self.spectral.gradient(&m)?);
                    ms.push(m);
                }
                let m1 = ms.pop().unwrap();
                let lambda1 = self.terminal_adjoint(&m1)?;
                let lambda = (0..=n_t)
                    .map(|i| warp(&lambda1, &def.psi(i)?, Interpolator::CubicBSpline)?.mul(&def.jacobian(i)?))
                    .collect::<Result<Vec<_>>>()?;
                let grad_i0_phi1 = warp_vector(&self.grad_i0, &def.phi(n_t)?, Interpolator::CubicBSpline)?;
                (
                    m1,
                    VariantState::StateEquation {
                        def,
                        grad_m,
                        lambda,
                        grad_i0_phi1,
                    },
                )
            }
            VariantKind::DeformationState => {
                let u = transport
                    .solve(
                        &TransportProblem::zero(Equation::DefState, &grid)
                            .with_representation(self.representation.clone()),
                    )?
                    .series;
                let phi1 = u.vector(n_t)?.displacement_to_map();
                let m1 = warp(&self.i0, &phi1, Interpolator::CubicBSpline)?;
                let grad_i0_phi1 = warp_vector(&self.grad_i0, &phi1, Interpolator::CubicBSpline)?;
                let rho1 = self.low_pass_if_band(grad_i0_phi1.scaled_by(&self.terminal_adjoint(&m1)?)?)?;
                let rho = transport
                    .solve(
                        &TransportProblem::new(Equation::DefAdjoint, &rho1)
                            .with_representation(self.representation.clone()),
                    )?
                    .series;
                let jac_u = (0..=n_t)
                    .map(|i| self.spectral.jacobian(&u.vector(i)?))
                    .collect::<Result<Vec<_>>>()?;
                (
                    m1,
                    VariantState::DeformationState {
                        u,
                        jac_u,
                        rho,
                        grad_i0_phi1,
                    },
                )
            }
        };
        let regularizer = self.regularizer(v)?;
        let data = self.data_term(&m1)?;
        Ok(ForwardCache {
            revision: v.revision(),
            transport,
            m1,
            regularizer,
            data,
            state,
        })
    }

    /// Per-node data terms → velocity-space field(s), plus L applied to `base`.
    fn assemble(&self, base: &Velocity, terms: Vec<VectorField>) -> Result<Velocity> {
        let n_t = base.n_t();
        let nodes = if base.is_stationary() {
            let w = trapezoid_weights(n_t);
            let mut acc = VectorField::zeros(self.i0.grid());
            for (t, wi) in terms.iter().zip(w) {
                acc.axpy_assign(wi, t)?;
            }
            vec![acc]
        } else {
            terms
        };
        let data: Vec<VelocityField> = nodes.iter().map(|f| self.to_velocity(f)).collect::<Result<_>>()?;
        let mut out = self.apply_operator(base)?;
        let data = base.with_fields(data)?;
        out.axpy_assign(1.0, &data)?;
        Ok(out)
    }

    /// ∇E at the velocity the cache was built from.
    pub fn gradient(&self, cache: &ForwardCache, v: &Velocity) -> Result<Velocity> {
        cache.check(v)?;
        let terms = match &cache.state {
            VariantState::Original { grad_m, lambda, .. } => gradient_original(grad_m, lambda)?,
            VariantState::StateEquation { grad_m, lambda, .. } => grad_m
                .iter()
                .zip(lambda)
                .map(|(g, l)| g.scaled_by(l))
                .collect::<Result<Vec<_>>>()?,
            VariantState::DeformationState { jac_u, rho, .. } => (0..=v.n_t())
                .map(|i| Ok(transpose_apply(&jac_u[i], &rho.vector(i)?)))
                .collect::<Result<Vec<_>>>()?,
        };
        self.assemble(v, terms)
    }

    /// Gauss–Newton Hessian applied to `dv`.
    pub fn hessvec(&self, cache: &ForwardCache, v: &Velocity, dv: &Velocity) -> Result<Velocity> {
        cache.check(v)?;
        self.check_velocity(dv)?;
        if dv.n_t() != v.n_t() || dv.parameterization() != v.parameterization() {
            return Err(Error::ShapeMismatch("increment and velocity differ in layout".into()));
        }
        let grid = self.i0.grid();
        let n_t = v.n_t();
        let dv_flow = SpatialFlow::new(dv, &self.spectral)?;
        let transport = &cache.transport;
        let repr = self.representation.clone();
        let gn = -2.0 / self.sigma2;
        let terms = match &cache.state {
            VariantState::Original { m, grad_m, .. } => {
                let dm = transport
                    .solve(
                        &TransportProblem::zero(Equation::IncState { m, dv: &dv_flow }, grid)
                            .with_storage(Storage::Endpoints),
                    )?
                    .series;
                let mut dlambda1 = dm.scalar(n_t)?;
                dlambda1.scale_assign(gn);
                let dlambda = transport.solve(&TransportProblem::new(Equation::IncAdjoint, &dlambda1))?.series;
                (0..=n_t)
                    .map(|i| grad_m[i].scaled_by(&dlambda.scalar(i)?))
                    .collect::<Result<Vec<_>>>()?
            }
            VariantState::StateEquation {
                def,
                grad_m,
                grad_i0_phi1,
                ..
            } => {
                let du1 = self.incremental_displacement(transport, &def.u, &dv_flow)?;
                // δλ(1) = -(2/σ²) δm(1), δm(1) = -∇I₀∘φ(1)·δu(1)
                let mut dlambda1 = grad_i0_phi1.dot(&du1)?;
                dlambda1.scale_assign(-gn);
                (0..=n_t)
                    .map(|i| {
                        let dl = warp(&dlambda1, &def.psi(i)?, Interpolator::CubicBSpline)?.mul(&def.jacobian(i)?)?;
                        grad_m[i].scaled_by(&dl)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            VariantState::DeformationState {
                u,
                jac_u,
                grad_i0_phi1,
                ..
            } => {
                let du1 = self.incremental_displacement(transport, u, &dv_flow)?;
                let mut w = grad_i0_phi1.dot(&du1)?;
                w.scale_assign(-gn);
                let drho1 = self.low_pass_if_band(grad_i0_phi1.scaled_by(&w)?)?;
                let drho = transport
                    .solve(&TransportProblem::new(Equation::IncDefAdjoint, &drho1).with_representation(repr))?
                    .series;
                (0..=n_t)
                    .map(|i| Ok(transpose_apply(&jac_u[i], &drho.vector(i)?)))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        self.assemble(dv, terms)
    }

    fn incremental_displacement(&self, transport: &Transport, u: &FieldSeries, dv: &SpatialFlow) -> Result<VectorField> {
        let sol = transport.solve(
            &TransportProblem::zero(Equation::IncDefState { u, dv }, self.i0.grid())
                .with_representation(self.representation.clone())
                .with_storage(Storage::Endpoints),
        )?;
        sol.series.vector(sol.series.n_t())
    }
}

/// λ(t_i) ∇m(t_i) per node.
fn gradient_original(grad_m: &[VectorField], lambda: &FieldSeries) -> Result<Vec<VectorField>> {
    grad_m
        .iter()
        .enumerate()
        .map(|(i, g)| g.scaled_by(&lambda.scalar(i)?))
        .collect()
}

/// E(v) for a problem; see [`RegistrationProblem::energy`].
pub fn energy(problem: &RegistrationProblem, v: &Velocity) -> Result<f64> {
    problem.energy(v)
}
