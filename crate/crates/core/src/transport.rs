//! Forward and backward transport solvers for every equation of the three
//! variants.
//!
//! Each equation is written as
//!
//! ```text
//! ∂_t q + v·∇q = s(t) - c(t) q        (material form, D_t q = f)
//! ```
//!
//! where `s` is a source that does not depend on `q` and `c` is either zero
//! or ∇·v. The Eulerian RK4 path integrates `∂_t q = f - v·∇q` (the
//! continuity equations use the conservative `-∇·(q v)` instead). The
//! semi-Lagrangian path traces characteristics and integrates `f` along them
//! with the explicit trapezoidal rule.
//!
//! Time runs over the nodes t_i = i / n_t of the velocity flow. Backward
//! equations carry their condition at t = 1 and are integrated towards t = 0.
//! Solutions are always indexed by time node.
//!
//! In band-limited problems, velocity-like quantities (displacements,
//! Jacobian, ρ) are low-pass filtered onto the band after every stage, which
//! is the Galerkin form of the truncated-convolution equations. Image
//! quantities (m, λ and their increments) live on the full grid.

use std::borrow::Cow;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::field::{Grid, GridFunction, ScalarField, TimeVaryingVelocity, VectorField, VelocityField};
use crate::interp::{InterpPlan, Interpolator};
use crate::spectral::{BandSpec, Spectral};

type Comps = Vec<Vec<f64>>;

/// Velocity representation of a problem.
#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Spatial,
    BandLimited(BandSpec),
}

impl Representation {
    pub fn band(&self) -> Option<&BandSpec> {
        match self {
            Representation::Spatial => None,
            Representation::BandLimited(b) => Some(b),
        }
    }
}

/// Time integrator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// Classic explicit RK4 on the Eulerian form.
    Rk4,
    /// Semi-Lagrangian tracing with a 2-stage RK rule along characteristics.
    SemiLagrangian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Storage {
    #[default]
    AllNodes,
    Endpoints,
}

/// The velocity flow sampled on the grid at every time node.
#[derive(Clone, Debug)]
pub struct SpatialFlow {
    grid: Grid,
    n_t: usize,
    /// One field when stationary, n_t + 1 otherwise.
    nodes: Vec<Comps>,
    div: Vec<Vec<f64>>,
    max_speed: f64,
}

impl SpatialFlow {
    /// Lifts a velocity flow to grid samples.
    pub fn new(v: &TimeVaryingVelocity, spectral: &Spectral) -> Result<Self> {
        let fields = v
            .fields()
            .iter()
            .map(|f| f.lift(spectral))
            .collect::<Result<Vec<_>>>()?;
        Self::from_fields(fields, v.n_t(), spectral)
    }

    /// Flow of spatial fields; a single field is stationary, otherwise
    /// `n_t + 1` node fields are expected.
    pub fn from_fields(fields: Vec<VectorField>, n_t: usize, spectral: &Spectral) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::Config("n_t must be at least 1".into()));
        }
        if fields.len() != 1 && fields.len() != n_t + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} velocity fields for n_t = {n_t}",
                fields.len()
            )));
        }
        let grid = fields[0].grid().clone();
        spectral.grid().check_same(&grid)?;
        let mut max_speed = 0.0f64;
        let mut div = Vec::with_capacity(fields.len());
        let mut nodes = Vec::with_capacity(fields.len());
        for f in fields {
            grid.check_same(f.grid())?;
            max_speed = max_speed.max(f.magnitude().max());
            div.push(spectral.divergence_raw(f.components()));
            nodes.push(f.into_components());
        }
        Ok(SpatialFlow {
            grid,
            n_t,
            nodes,
            div,
            max_speed,
        })
    }

    /// Convenience for a stationary spatial velocity.
    pub fn stationary(v: &VectorField, n_t: usize, spectral: &Spectral) -> Result<Self> {
        Self::from_fields(vec![v.clone()], n_t, spectral)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_t as f64
    }

    pub fn is_stationary(&self) -> bool {
        self.nodes.len() == 1
    }

    /// max|v|·δt / min spacing.
    pub fn cfl(&self) -> f64 {
        self.max_speed * self.dt() / self.grid.min_spacing()
    }

    pub fn node(&self, i: usize) -> VectorField {
        VectorField::from_raw(self.grid.clone(), node_ref(&self.nodes, i).to_vec())
    }

    fn comps(&self, i: usize) -> &[Vec<f64>] {
        node_ref(&self.nodes, i)
    }
}

fn node_ref<T>(nodes: &[T], i: usize) -> &T {
    if nodes.len() == 1 {
        &nodes[0]
    } else {
        &nodes[i]
    }
}

/// Linear-in-time value between nodes `i` and `j` (equal for node values,
/// adjacent for RK4 midpoints).
fn blend(nodes: &[Comps], i: usize, j: usize) -> Cow<'_, [Vec<f64>]> {
    if nodes.len() == 1 || i == j {
        return Cow::Borrowed(node_ref(nodes, i).as_slice());
    }
    let a = &nodes[i];
    let b = &nodes[j];
    Cow::Owned(
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect())
            .collect(),
    )
}

fn blend_scalar(nodes: &[Vec<f64>], i: usize, j: usize) -> Cow<'_, [f64]> {
    if nodes.len() == 1 || i == j {
        return Cow::Borrowed(node_ref(nodes, i).as_slice());
    }
    Cow::Owned(nodes[i].iter().zip(&nodes[j]).map(|(p, q)| 0.5 * (p + q)).collect())
}

/// Field values at every time node (or only the endpoints).
#[derive(Clone, Debug)]
pub struct FieldSeries {
    grid: Grid,
    nodes: Vec<Option<Comps>>,
}

impl FieldSeries {
    pub(crate) fn new(grid: Grid, n_t: usize) -> Self {
        FieldSeries {
            grid,
            nodes: vec![None; n_t + 1],
        }
    }

    /// A series that holds the same value at every node.
    pub fn constant(grid: &Grid, value: Comps, n_t: usize) -> Self {
        FieldSeries {
            grid: grid.clone(),
            nodes: vec![Some(value); n_t + 1],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_t(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn has_all_nodes(&self) -> bool {
        self.nodes.iter().all(|n| n.is_some())
    }

    pub fn node(&self, i: usize) -> Option<&[Vec<f64>]> {
        self.nodes.get(i).and_then(|n| n.as_deref())
    }

    fn node_or_err(&self, i: usize) -> Result<&[Vec<f64>]> {
        self.node(i)
            .ok_or_else(|| Error::Config(format!("time node {i} was not stored")))
    }

    pub fn scalar(&self, i: usize) -> Result<ScalarField> {
        ScalarField::from_components(self.grid.clone(), self.node_or_err(i)?.to_vec())
    }

    pub fn vector(&self, i: usize) -> Result<VectorField> {
        VectorField::from_components(self.grid.clone(), self.node_or_err(i)?.to_vec())
    }

    pub fn first(&self) -> Option<&[Vec<f64>]> {
        self.node(0)
    }

    pub fn last(&self) -> Option<&[Vec<f64>]> {
        self.node(self.n_t())
    }

    fn set(&mut self, i: usize, value: Comps) {
        self.nodes[i] = Some(value);
    }

    fn require_all(&self, what: &str) -> Result<()> {
        if self.has_all_nodes() {
            Ok(())
        } else {
            Err(Error::Config(format!("{what} series must store every time node")))
        }
    }
}

/// Transport equations. Incremental forward equations borrow the series and
/// velocity increment they are linearized around.
#[derive(Clone, Copy, Debug)]
pub enum Equation<'a> {
    /// ∂_t m + ∇m·v = 0, m(0) = I₀.
    State,
    /// -∂_t λ - ∇·(λv) = 0, condition at t = 1.
    Adjoint,
    /// ∂_t u + Du·v = v, u(0) = 0.
    DefState,
    /// -∂_t ρ_i - ∇·(ρ_i v) = 0, condition at t = 1.
    DefAdjoint,
    /// ∂_t δm + ∇δm·v + ∇m·δv = 0, δm(0) = 0.
    IncState { m: &'a FieldSeries, dv: &'a SpatialFlow },
    /// Gauss–Newton incremental adjoint: same operator as [`Equation::Adjoint`].
    IncAdjoint,
    /// ∂_t δu + Dδu·v + Du·δv = δv, δu(0) = 0.
    IncDefState { u: &'a FieldSeries, dv: &'a SpatialFlow },
    /// Gauss–Newton incremental ρ equation: same operator as [`Equation::DefAdjoint`].
    IncDefAdjoint,
    /// -∂_t ν - Dν·v = -v, ν(1) = 0.
    InverseDeformation,
    /// -∂_t U - v·∇U = -∇·v + U∇·v, U(1) = 0; J = 1 - U = det Dψ.
    JacobianU,
    /// -∂_t δν - Dδν·v - Dν·δv = -δv, δν(1) = 0.
    IncInverseDeformation { nu: &'a FieldSeries, dv: &'a SpatialFlow },
}

impl Equation<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Equation::State => "state",
            Equation::Adjoint => "adjoint",
            Equation::DefState => "deformation state",
            Equation::DefAdjoint => "deformation adjoint",
            Equation::IncState { .. } => "incremental state",
            Equation::IncAdjoint => "incremental adjoint",
            Equation::IncDefState { .. } => "incremental deformation state",
            Equation::IncDefAdjoint => "incremental deformation adjoint",
            Equation::InverseDeformation => "inverse deformation",
            Equation::JacobianU => "Jacobian",
            Equation::IncInverseDeformation { .. } => "incremental inverse deformation",
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            Equation::State | Equation::DefState | Equation::IncState { .. } | Equation::IncDefState { .. } => {
                Direction::Forward
            }
            _ => Direction::Backward,
        }
    }

    /// True for scalar-valued equations.
    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            Equation::State | Equation::Adjoint | Equation::IncState { .. } | Equation::IncAdjoint | Equation::JacobianU
        )
    }

    /// True for quantities that live in the velocity space (band-limited in
    /// band-limited problems).
    pub fn is_velocity_like(&self) -> bool {
        !matches!(
            self,
            Equation::State | Equation::Adjoint | Equation::IncState { .. } | Equation::IncAdjoint
        )
    }

    fn conservative(&self) -> bool {
        matches!(
            self,
            Equation::Adjoint | Equation::IncAdjoint | Equation::DefAdjoint | Equation::IncDefAdjoint
        )
    }

    fn decays(&self) -> bool {
        self.conservative() || matches!(self, Equation::JacobianU)
    }
}

/// One transport solve: equation, its condition (at t = 0 for forward
/// equations, t = 1 for backward ones), representation and storage mode.
#[derive(Clone, Debug)]
pub struct TransportProblem<'a> {
    pub equation: Equation<'a>,
    pub condition: Comps,
    pub representation: Representation,
    pub storage: Storage,
}

impl<'a> TransportProblem<'a> {
    pub fn new(equation: Equation<'a>, condition: &impl GridFunction) -> Self {
        TransportProblem {
            equation,
            condition: condition.components().to_vec(),
            representation: Representation::Spatial,
            storage: Storage::AllNodes,
        }
    }

    /// Zero condition of the right shape.
    pub fn zero(equation: Equation<'a>, grid: &Grid) -> Self {
        let ncomp = if equation.is_scalar() { 1 } else { grid.ndim() };
        TransportProblem {
            equation,
            condition: vec![vec![0.0; grid.len()]; ncomp],
            representation: Representation::Spatial,
            storage: Storage::AllNodes,
        }
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn with_storage(mut self, storage: Storage) -> Self {
        self.storage = storage;
        self
    }

    pub fn direction(&self) -> Direction {
        self.equation.direction()
    }
}

/// Result of a transport solve.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub series: FieldSeries,
    /// max|v|·δt / min spacing of the flow that was used.
    pub cfl: f64,
}

/// Right-hand side data prepared once per solve.
struct Dynamics<'s> {
    source: Option<Vec<Comps>>,
    decays: bool,
    conservative: bool,
    band: Option<&'s BandSpec>,
}

fn weighted_jacobian_product(spectral: &Spectral, field: &[Vec<f64>], w: &[Vec<f64>]) -> Comps {
    // (D field · w)_k = Σ_j ∂_j field_k w_j
    field
        .iter()
        .map(|fk| {
            let g = spectral.gradient_raw(fk);
            let mut out = vec![0.0; fk.len()];
            for (gj, wj) in g.iter().zip(w) {
                for (o, (a, b)) in out.iter_mut().zip(gj.iter().zip(wj)) {
                    *o += a * b;
                }
            }
            out
        })
        .collect()
}

impl<'a> TransportProblem<'a> {
    fn dynamics(&self, flow: &SpatialFlow, spectral: &Spectral) -> Result<Dynamics<'_>> {
        let n_t = flow.n_t;
        let check = |s: &SpatialFlow| -> Result<()> {
            flow.grid.check_same(&s.grid)?;
            if s.n_t != n_t {
                return Err(Error::ShapeMismatch("velocity increment uses a different n_t".into()));
            }
            Ok(())
        };
        let source = match self.equation {
            Equation::State
            | Equation::Adjoint
            | Equation::DefAdjoint
            | Equation::IncAdjoint
            | Equation::IncDefAdjoint => None,
            Equation::DefState | Equation::InverseDeformation => Some(flow.nodes.clone()),
            Equation::JacobianU => Some(flow.div.iter().map(|d| vec![d.clone()]).collect()),
            Equation::IncState { m, dv } => {
                check(dv)?;
                m.require_all("state")?;
                let src = (0..=n_t)
                    .map(|i| {
                        let g = spectral.gradient_raw(&m.node(i).unwrap()[0]);
                        let w = dv.comps(i);
                        let mut s = vec![0.0; flow.grid.len()];
                        for (gj, wj) in g.iter().zip(w) {
                            for (o, (a, b)) in s.iter_mut().zip(gj.iter().zip(wj)) {
                                *o -= a * b;
                            }
                        }
                        vec![s]
                    })
                    .collect();
                Some(src)
            }
            Equation::IncDefState { u: coeff, dv } | Equation::IncInverseDeformation { nu: coeff, dv } => {
                check(dv)?;
                coeff.require_all("displacement")?;
                let src = (0..=n_t)
                    .map(|i| {
                        let w = dv.comps(i);
                        let prod = weighted_jacobian_product(spectral, coeff.node(i).unwrap(), w);
                        w.iter()
                            .zip(prod)
                            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                            .collect()
                    })
                    .collect();
                Some(src)
            }
        };
        let band = if self.equation.is_velocity_like() {
            self.representation.band()
        } else {
            None
        };
        let source = source.map(|mut s: Vec<Comps>| {
            if let Some(b) = band {
                for node in s.iter_mut() {
                    spectral.low_pass_raw(node, b);
                }
            }
            s
        });
        Ok(Dynamics {
            source,
            decays: self.equation.decays(),
            conservative: self.equation.conservative(),
            band,
        })
    }

    fn validate(&self, flow: &SpatialFlow) -> Result<()> {
        let expect = if self.equation.is_scalar() { 1 } else { flow.grid.ndim() };
        if self.condition.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "{} condition has {} components, expected {expect}",
                self.equation.name(),
                self.condition.len()
            )));
        }
        for c in &self.condition {
            if c.len() != flow.grid.len() {
                return Err(Error::ShapeMismatch("condition does not match the grid".into()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{} condition", self.equation.name())));
            }
        }
        if let Some(b) = self.representation.band() {
            if b.grid() != &flow.grid {
                return Err(Error::InvalidBand("band belongs to a different grid".into()));
            }
        }
        Ok(())
    }
}

fn max_abs(q: &[Vec<f64>]) -> f64 {
    q.iter().flat_map(|c| c.iter()).fold(0.0, |m, v| m.max(v.abs()))
}

struct Guard {
    equation: &'static str,
    n_t: usize,
    limit: f64,
    cfl: f64,
}

impl Guard {
    fn check(&self, q: &[Vec<f64>], step: usize) -> Result<()> {
        let mut worst = 0.0f64;
        for c in q {
            for &v in c {
                if !v.is_finite() {
                    return Err(self.error(step, f64::INFINITY));
                }
                worst = worst.max(v.abs());
            }
        }
        if worst > self.limit {
            return Err(self.error(step, worst));
        }
        Ok(())
    }

    fn error(&self, step: usize, magnitude: f64) -> Error {
        Error::Diverged {
            equation: self.equation,
            step,
            n_t: self.n_t,
            magnitude,
            cfl: self.cfl,
        }
    }
}

fn setup<'p>(
    problem: &'p TransportProblem<'_>,
    flow: &SpatialFlow,
    spectral: &Spectral,
) -> Result<(Dynamics<'p>, Guard, Comps)> {
    problem.validate(flow)?;
    let dynamics = problem.dynamics(flow, spectral)?;
    let mut q = problem.condition.clone();
    if let Some(b) = dynamics.band {
        spectral.low_pass_raw(&mut q, b);
    }
    let scale = dynamics
        .source
        .as_ref()
        .map(|s| s.iter().map(|n| max_abs(n)).fold(0.0, f64::max))
        .unwrap_or(0.0)
        .max(max_abs(&q))
        .max(1.0);
    let guard = Guard {
        equation: problem.equation.name(),
        n_t: flow.n_t,
        limit: 1e12 * scale,
        cfl: flow.cfl(),
    };
    Ok((dynamics, guard, q))
}

/// Step order: (from, to) node pairs.
fn steps(n_t: usize, direction: Direction) -> Vec<(usize, usize)> {
    match direction {
        Direction::Forward => (0..n_t).map(|n| (n, n + 1)).collect(),
        Direction::Backward => (0..n_t).rev().map(|n| (n + 1, n)).collect(),
    }
}

fn store(series: &mut FieldSeries, storage: Storage, node: usize, n_t: usize, q: &Comps) {
    if storage == Storage::AllNodes || node == 0 || node == n_t {
        series.set(node, q.clone());
    }
}

impl Dynamics<'_> {
    /// Eulerian rate at the time between nodes `i` and `j`.
    fn rate(&self, q: &[Vec<f64>], flow: &SpatialFlow, spectral: &Spectral, i: usize, j: usize) -> Comps {
        let v = blend(&flow.nodes, i, j);
        let mut out: Comps = if self.conservative {
            q.iter()
                .map(|qk| {
                    let flux: Comps = v.iter().map(|vj| vj.iter().zip(qk).map(|(a, b)| a * b).collect()).collect();
                    spectral.divergence_raw(&flux).into_iter().map(|x| -x).collect()
                })
                .collect()
        } else {
            let div = if self.decays {
                Some(blend_scalar(&flow.div, i, j))
            } else {
                None
            };
            q.iter()
                .map(|qk| {
                    let g = spectral.gradient_raw(qk);
                    let mut r = vec![0.0; qk.len()];
                    for (gj, vj) in g.iter().zip(v.iter()) {
                        for (o, (a, b)) in r.iter_mut().zip(gj.iter().zip(vj)) {
                            *o -= a * b;
                        }
                    }
                    if let Some(d) = &div {
                        for (o, (a, b)) in r.iter_mut().zip(d.iter().zip(qk)) {
                            *o -= a * b;
                        }
                    }
                    r
                })
                .collect()
        };
        if let Some(src) = &self.source {
            let s = blend(src, i, j);
            for (o, sk) in out.iter_mut().zip(s.iter()) {
                for (a, b) in o.iter_mut().zip(sk) {
                    *a += b;
                }
            }
        }
        if let Some(b) = self.band {
            spectral.low_pass_raw(&mut out, b);
        }
        out
    }

    /// Material-derivative right-hand side f(t_i, q) on the grid.
    fn material(&self, q: &[Vec<f64>], flow: &SpatialFlow, i: usize) -> Option<Comps> {
        if self.source.is_none() && !self.decays {
            return None;
        }
        let mut f: Comps = match &self.source {
            Some(s) => node_ref(s, i).clone(),
            None => vec![vec![0.0; q[0].len()]; q.len()],
        };
        if self.decays {
            let d = node_ref(&flow.div, i);
            for (fk, qk) in f.iter_mut().zip(q) {
                for (o, (a, b)) in fk.iter_mut().zip(d.iter().zip(qk)) {
                    *o -= a * b;
                }
            }
        }
        Some(f)
    }
}

fn axpy_comps(y: &mut [Vec<f64>], a: f64, x: &[Vec<f64>]) {
    for (yk, xk) in y.iter_mut().zip(x) {
        for (p, q) in yk.iter_mut().zip(xk) {
            *p += a * q;
        }
    }
}

fn combo(q: &[Vec<f64>], a: f64, x: &[Vec<f64>]) -> Comps {
    let mut out = q.to_vec();
    axpy_comps(&mut out, a, x);
    out
}

/// Classic explicit RK4 in time with spectral spatial derivatives.
///
/// The solver does not refuse large CFL numbers; it records the CFL number
/// and reports a divergence error if the solution blows up.
pub fn rk4_solve(problem: &TransportProblem<'_>, flow: &SpatialFlow, spectral: &Spectral) -> Result<TransportSolution> {
    let (dynamics, guard, mut q) = setup(problem, flow, spectral)?;
    let n_t = flow.n_t;
    let direction = problem.direction();
    let mut series = FieldSeries::new(flow.grid.clone(), n_t);
    let start = if direction == Direction::Forward { 0 } else { n_t };
    store(&mut series, problem.storage, start, n_t, &q);
    for (step, (a, b)) in steps(n_t, direction).into_iter().enumerate() {
        let h = (b as f64 - a as f64) * flow.dt();
        let k1 = dynamics.rate(&q, flow, spectral, a, a);
        let k2 = dynamics.rate(&combo(&q, 0.5 * h, &k1), flow, spectral, a, b);
        let k3 = dynamics.rate(&combo(&q, 0.5 * h, &k2), flow, spectral, a, b);
        let k4 = dynamics.rate(&combo(&q, h, &k3), flow, spectral, b, b);
        axpy_comps(&mut q, h / 6.0, &k1);
        axpy_comps(&mut q, h / 3.0, &k2);
        axpy_comps(&mut q, h / 3.0, &k3);
        axpy_comps(&mut q, h / 6.0, &k4);
        guard.check(&q, step + 1)?;
        store(&mut series, problem.storage, b, n_t, &q);
    }
    Ok(TransportSolution {
        series,
        cfl: flow.cfl(),
    })
}

/// Departure points of the characteristics arriving at the grid nodes.
#[derive(Clone, Debug)]
pub struct DeparturePoints {
    grid: Grid,
    points: Comps,
}

impl DeparturePoints {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// One unwrapped coordinate array per axis.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn plan(&self, kind: Interpolator) -> Result<InterpPlan> {
        InterpPlan::new(&self.grid, &self.points, kind)
    }

    /// Departure points minus node positions.
    pub fn displacement(&self) -> VectorField {
        let mut id = self.grid.identity_map();
        for (axis, p) in self.points.iter().enumerate() {
            for (x, y) in id.component_mut(axis).iter_mut().zip(p) {
                *x = y - *x;
            }
        }
        id
    }
}

/// Two-step characteristic tracer. With `h` the signed step (positive for
/// forward, negative for backward integration):
///
/// ```text
/// X* = x - h v_arr(x)
/// X  = x - h/2 (v_arr(x) + v_dep(X*))
/// ```
pub fn sl_departure(
    v_arrival: &VectorField,
    v_departure: &VectorField,
    dt: f64,
    direction: Direction,
    kind: Interpolator,
) -> Result<DeparturePoints> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let grid = v_arrival.grid().clone();
    grid.check_same(v_departure.grid())?;
    let h = match direction {
        Direction::Forward => dt,
        Direction::Backward => -dt,
    };
    departure_raw(&grid, v_arrival.components(), v_departure.components(), h, kind)
}

fn departure_raw(
    grid: &Grid,
    v_arr: &[Vec<f64>],
    v_dep: &[Vec<f64>],
    h: f64,
    kind: Interpolator,
) -> Result<DeparturePoints> {
    let id = grid.identity_map();
    let predictor: Comps = id
        .components()
        .iter()
        .zip(v_arr)
        .map(|(x, v)| x.iter().zip(v).map(|(a, b)| a - h * b).collect())
        .collect();
    let plan = InterpPlan::new(grid, &predictor, kind)?;
    let points = id
        .components()
        .iter()
        .zip(v_arr)
        .zip(v_dep)
        .map(|((x, va), vd)| {
            let v_star = plan.apply_raw(&kind.prepare(grid, vd));
            x.iter()
                .zip(va)
                .zip(v_star)
                .map(|((p, a), b)| p - 0.5 * h * (a + b))
                .collect()
        })
        .collect();
    Ok(DeparturePoints {
        grid: grid.clone(),
        points,
    })
}

/// Interpolation plans at the departure points of every step, built on first
/// use and shared by all equations transported by the same flow. A
/// stationary flow needs one plan per direction.
#[derive(Debug)]
pub struct Characteristics {
    flow: SpatialFlow,
    kind: Interpolator,
    forward: Vec<OnceLock<InterpPlan>>,
    backward: Vec<OnceLock<InterpPlan>>,
}

impl Characteristics {
    pub fn new(flow: SpatialFlow, kind: Interpolator) -> Self {
        let n = if flow.is_stationary() { 1 } else { flow.n_t };
        Characteristics {
            flow,
            kind,
            forward: (0..n).map(|_| OnceLock::new()).collect(),
            backward: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn flow(&self) -> &SpatialFlow {
        &self.flow
    }

    pub fn interpolator(&self) -> Interpolator {
        self.kind
    }

    /// Departure points for the step from node `from` to node `to`.
    pub fn departure(&self, from: usize, to: usize) -> Result<DeparturePoints> {
        let h = (to as f64 - from as f64) * self.flow.dt();
        departure_raw(&self.flow.grid, self.flow.comps(to), self.flow.comps(from), h, self.kind)
    }

    fn plan(&self, from: usize, to: usize) -> Result<&InterpPlan> {
        let (slots, n) = if to > from {
            (&self.forward, from)
        } else {
            (&self.backward, to)
        };
        let slot = if slots.len() == 1 { &slots[0] } else { &slots[n] };
        if let Some(p) = slot.get() {
            return Ok(p);
        }
        let plan = self.departure(from, to)?.plan(self.kind)?;
        Ok(slot.get_or_init(|| plan))
    }
}

/// Semi-Lagrangian RK solve. Per step, with X the departure points and
/// f the material right-hand side:
///
/// ```text
/// q̂     = (q + h f(t_a, q))∘X
/// q_new = (q + h/2 f(t_a, q))∘X + h/2 f(t_b, q̂)
/// ```
pub fn sl_rk_solve(
    problem: &TransportProblem<'_>,
    characteristics: &Characteristics,
    spectral: &Spectral,
) -> Result<TransportSolution> {
    let flow = &characteristics.flow;
    let kind = characteristics.kind;
    let (dynamics, guard, mut q) = setup(problem, flow, spectral)?;
    let n_t = flow.n_t;
    let grid = &flow.grid;
    let direction = problem.direction();
    let mut series = FieldSeries::new(grid.clone(), n_t);
    let start = if direction == Direction::Forward { 0 } else { n_t };
    store(&mut series, problem.storage, start, n_t, &q);
    for (step, (a, b)) in steps(n_t, direction).into_iter().enumerate() {
        let h = (b as f64 - a as f64) * flow.dt();
        let plan = characteristics.plan(a, b)?;
        let advect = |x: &[Vec<f64>]| -> Comps { x.iter().map(|c| plan.apply_raw(&kind.prepare(grid, c))).collect() };
        q = match dynamics.material(&q, flow, a) {
            None => {
                let mut out = advect(&q);
                if let Some(s) = dynamics.band {
                    spectral.low_pass_raw(&mut out, s);
                }
                out
            }
            Some(fa) => {
                let half = advect(&combo(&q, 0.5 * h, &fa));
                let mut pred = advect(&combo(&q, h, &fa));
                if let Some(s) = dynamics.band {
                    spectral.low_pass_raw(&mut pred, s);
                }
                let fb = dynamics.material(&pred, flow, b).expect("material term present");
                let mut out = combo(&half, 0.5 * h, &fb);
                if let Some(s) = dynamics.band {
                    spectral.low_pass_raw(&mut out, s);
                }
                out
            }
        };
        guard.check(&q, step + 1)?;
        store(&mut series, problem.storage, b, n_t, &q);
    }
    Ok(TransportSolution {
        series,
        cfl: flow.cfl(),
    })
}

/// A flow bound to an integrator: the object the variants transport with.
#[derive(Debug)]
pub struct Transport {
    spectral: Spectral,
    integrator: Integrator,
    characteristics: Characteristics,
}

impl Transport {
    pub fn new(flow: SpatialFlow, integrator: Integrator, spectral: &Spectral) -> Result<Self> {
        if integrator == Integrator::Rk4 && flow.n_t < 2 {
            return Err(Error::Config("RK4 transport needs n_t >= 2".into()));
        }
        Ok(Transport {
            spectral: spectral.clone(),
            integrator,
            characteristics: Characteristics::new(flow, Interpolator::CubicBSpline),
        })
    }

    /// Lifts `v` and binds it to the integrator.
    pub fn from_velocity(v: &TimeVaryingVelocity<VelocityField>, integrator: Integrator, spectral: &Spectral) -> Result<Self> {
        Self::new(SpatialFlow::new(v, spectral)?, integrator, spectral)
    }

    pub fn flow(&self) -> &SpatialFlow {
        &self.characteristics.flow
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn solve(&self, problem: &TransportProblem<'_>) -> Result<TransportSolution> {
        match self.integrator {
            Integrator::Rk4 => rk4_solve(problem, self.flow(), &self.spectral),
            Integrator::SemiLagrangian => sl_rk_solve(problem, &self.characteristics, &self.spectral),
        }
    }
}

/// Displacement series of the flow and of its inverse, plus the Jacobian
/// series:
/// φ(t) = id - u(t), ψ(t) = id - ν(t), J(t) = 1 - U(t) = det Dψ(t).
#[derive(Clone, Debug)]
pub struct DeformationState {
    pub u: FieldSeries,
    pub nu: FieldSeries,
    pub jac_u: FieldSeries,
}

impl DeformationState {
    fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// φ(t_i): maps a point at time t_i to its origin at time 0.
    pub fn phi(&self, i: usize) -> Result<VectorField> {
        Ok(self.u.vector(i)?.displacement_to_map())
    }

    /// ψ(t_i): maps a point at time t_i to its position at time 1.
    pub fn psi(&self, i: usize) -> Result<VectorField> {
        Ok(self.nu.vector(i)?.displacement_to_map())
    }

    /// J(t_i) = det Dψ(t_i).
    pub fn jacobian(&self, i: usize) -> Result<ScalarField> {
        let u = self.jac_u.scalar(i)?;
        ScalarField::new(self.grid().clone(), u.values().iter().map(|v| 1.0 - v).collect())
    }
}

/// Forward ũ, backward ν̃ and backward Ũ solves.
pub fn solve_deformation_state(transport: &Transport, representation: &Representation) -> Result<DeformationState> {
    let grid = transport.flow().grid().clone();
    let run = |eq: Equation<'_>| {
        transport.solve(&TransportProblem::zero(eq, &grid).with_representation(representation.clone()))
    };
    Ok(DeformationState {
        u: run(Equation::DefState)?.series,
        nu: run(Equation::InverseDeformation)?.series,
        jac_u: run(Equation::JacobianU)?.series,
    })
}
