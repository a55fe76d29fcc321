//! Periodic grids and the real-valued fields sampled on them.
//!
//! Values are stored row-major with the last axis fastest. Vector fields keep
//! one contiguous array per component. Every field type implements
//! [`VectorSpace`], which is all the optimizer needs to know about them.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{BandLimitedField, Spectral};

/// Regular periodic grid in two or three dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(dims: &[usize], spacing: &[f64]) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::InvalidGrid(format!(
                "expected 2 or 3 axes, got {}",
                dims.len()
            )));
        }
        if spacing.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "{} axes but {} spacings",
                dims.len(),
                spacing.len()
            )));
        }
        for (axis, &n) in dims.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {n} samples; need an even count >= 4"
                )));
            }
        }
        for (axis, &h) in spacing.iter().enumerate() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidGrid(format!("axis {axis} spacing {h} is not positive")));
            }
        }
        Ok(Grid {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
        })
    }

    /// Unit-spacing grid.
    pub fn unit(dims: &[usize]) -> Result<Self> {
        Grid::new(dims, &vec![1.0; dims.len()])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Spatial dimension d.
    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Physical period of each axis.
    pub fn extent(&self) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| n as f64 * h)
            .collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for axis in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.dims[axis + 1];
        }
        strides
    }

    /// Multi-index of a linear index; unused trailing entries are zero.
    pub fn multi_index(&self, mut linear: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dims.len()).rev() {
            out[axis] = linear % self.dims[axis];
            linear /= self.dims[axis];
        }
        out
    }

    /// Physical position of a node; unused trailing entries are zero.
    pub fn position(&self, linear: usize) -> [f64; 3] {
        let idx = self.multi_index(linear);
        let mut out = [0.0; 3];
        for axis in 0..self.dims.len() {
            out[axis] = idx[axis] as f64 * self.spacing[axis];
        }
        out
    }

    /// The identity map x -> x, one component per axis.
    pub fn identity_map(&self) -> VectorField {
        let mut comps = vec![vec![0.0; self.len()]; self.ndim()];
        for i in 0..self.len() {
            let x = self.position(i);
            for (axis, comp) in comps.iter_mut().enumerate() {
                comp[i] = x[axis];
            }
        }
        VectorField::from_raw(self.clone(), comps)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch(format!(
                "grid {:?}/{:?} vs {:?}/{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )));
        }
        Ok(())
    }
}

/// Linear structure shared by fields, band-limited fields and velocity series.
pub trait VectorSpace: Clone {
    /// `self += a * x`.
    fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()>;
    fn scale_assign(&mut self, a: f64);
    /// The inner product the gradients are taken with respect to.
    fn inner(&self, other: &Self) -> Result<f64>;
    fn zeros_like(&self) -> Self;
    fn max_abs(&self) -> f64;

    fn norm(&self) -> f64 {
        self.inner(self).map(|s| s.max(0.0).sqrt()).unwrap_or(0.0)
    }
}

/// Returns `a * x + y`.
pub fn axpy<V: VectorSpace>(a: f64, x: &V, y: &V) -> Result<V> {
    let mut out = y.clone();
    out.axpy_assign(a, x)?;
    Ok(out)
}

/// Discrete L² inner product with voxel-volume weighting.
pub fn l2_inner<V: VectorSpace>(x: &V, y: &V) -> Result<f64> {
    x.inner(y)
}

/// Access to the per-component sample arrays of a spatial field.
pub trait GridFunction: Clone {
    fn grid(&self) -> &Grid;
    fn components(&self) -> &[Vec<f64>];
    fn components_mut(&mut self) -> &mut [Vec<f64>];
    fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self>;
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn slices_axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn slices_dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn slices_max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Real scalar field (image, density, Jacobian determinant).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {} nodes",
                data.len(),
                grid.len()
            )));
        }
        check_finite(&data, "scalar field")?;
        Ok(ScalarField { grid, data })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            data: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            data: vec![value; grid.len()],
            grid: grid.clone(),
        }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.ndim();
        let data = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                f(&x[..d])
            })
            .collect();
        ScalarField {
            grid: grid.clone(),
            data,
        }
    }

    pub(crate) fn from_raw(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Domain integral (sum times voxel volume).
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.voxel_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }

    /// Min-max rescale to [0, 1]; constant images map to zero.
    pub fn rescaled_unit(&self) -> ScalarField {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        if span <= 0.0 {
            return ScalarField::zeros(&self.grid);
        }
        self.map(|v| (v - lo) / span)
    }
}

impl GridFunction for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn components(&self) -> &[Vec<f64>] {
        std::slice::from_ref(&self.data)
    }

    fn components_mut(&mut self) -> &mut [Vec<f64>] {
        std::slice::from_mut(&mut self.data)
    }

    fn from_components(grid: Grid, mut comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scalar field needs 1 component, got {}",
                comps.len()
            )));
        }
        ScalarField::new(grid, comps.pop().unwrap())
    }
}

impl VectorSpace for ScalarField {
    fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()> {
        self.grid.check_same(&x.grid)?;
        slices_axpy(&mut self.data, a, &x.data);
        Ok(())
    }

    fn scale_assign(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(slices_dot(&self.data, &other.data) * self.grid.voxel_volume())
    }

    fn zeros_like(&self) -> Self {
        ScalarField::zeros(&self.grid)
    }

    fn max_abs(&self) -> f64 {
        slices_max_abs(&self.data)
    }
}

/// Real vector field with one component per spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.ndim() {
            return Err(Error::ShapeMismatch(format!(
                "{} components on a {}-d grid",
                comps.len(),
                grid.ndim()
            )));
        }
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::ShapeMismatch(format!(
                    "component of {} values for a grid of {} nodes",
                    c.len(),
                    grid.len()
                )));
            }
            check_finite(c, "vector field")?;
        }
        Ok(VectorField { grid, comps })
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            comps: vec![vec![0.0; grid.len()]; grid.ndim()],
            grid: grid.clone(),
        }
    }

    /// Spatially constant field.
    pub fn constant(grid: &Grid, value: &[f64]) -> Result<Self> {
        if value.len() != grid.ndim() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}-d constant",
                value.len(),
                grid.ndim()
            )));
        }
        Ok(VectorField {
            comps: value.iter().map(|&c| vec![c; grid.len()]).collect(),
            grid: grid.clone(),
        })
    }

    /// Samples `f` (writing d values into its output slice) at every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let d = grid.ndim();
        let mut comps = vec![vec![0.0; grid.len()]; d];
        let mut out = [0.0; 3];
        for i in 0..grid.len() {
            let x = grid.position(i);
            f(&x[..d], &mut out[..d]);
            for (axis, comp) in comps.iter_mut().enumerate() {
                comp[i] = out[axis];
            }
        }
        VectorField {
            grid: grid.clone(),
            comps,
        }
    }

    pub(crate) fn from_raw(grid: Grid, comps: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(comps.len(), grid.ndim());
        VectorField { grid, comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let data = (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        ScalarField::from_raw(self.grid.clone(), data)
    }

    /// Pointwise scaling by a scalar field.
    pub fn scaled_by(&self, s: &ScalarField) -> Result<VectorField> {
        self.grid.check_same(s.grid())?;
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(s.values()).map(|(a, b)| a * b).collect())
            .collect();
        Ok(VectorField::from_raw(self.grid.clone(), comps))
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &VectorField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let mut out = vec![0.0; self.grid.len()];
        for (a, b) in self.comps.iter().zip(&other.comps) {
            for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
                *o += x * y;
            }
        }
        Ok(ScalarField::from_raw(self.grid.clone(), out))
    }

    /// The map x -> x - self(x), with self read as a displacement.
    pub fn displacement_to_map(&self) -> VectorField {
        let mut map = self.grid.identity_map();
        for (m, u) in map.comps.iter_mut().zip(&self.comps) {
            slices_axpy(m, -1.0, u);
        }
        map
    }
}

impl GridFunction for VectorField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        VectorField::new(grid, comps)
    }
}

impl VectorSpace for VectorField {
    fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()> {
        self.grid.check_same(&x.grid)?;
        for (y, x) in self.comps.iter_mut().zip(&x.comps) {
            slices_axpy(y, a, x);
        }
        Ok(())
    }

    fn scale_assign(&mut self, a: f64) {
        for c in &mut self.comps {
            c.iter_mut().for_each(|v| *v *= a);
        }
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let sum: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| slices_dot(a, b))
            .sum();
        Ok(sum * self.grid.voxel_volume())
    }

    fn zeros_like(&self) -> Self {
        VectorField::zeros(&self.grid)
    }

    fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| slices_max_abs(c)).fold(0.0, f64::max)
    }
}

/// A velocity in either representation of the velocity space.
#[derive(Clone, Debug, PartialEq)]
pub enum VelocityField {
    Spatial(VectorField),
    BandLimited(BandLimitedField),
}

impl VelocityField {
    pub fn grid(&self) -> &Grid {
        match self {
            VelocityField::Spatial(f) => f.grid(),
            VelocityField::BandLimited(b) => b.band().grid(),
        }
    }

    /// Spatial samples of the velocity (the inclusion for band-limited fields).
    pub fn lift(&self, spectral: &Spectral) -> Result<VectorField> {
        match self {
            VelocityField::Spatial(f) => Ok(f.clone()),
            VelocityField::BandLimited(b) => spectral.include(b),
        }
    }

    pub fn as_spatial(&self) -> Option<&VectorField> {
        match self {
            VelocityField::Spatial(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_band_limited(&self) -> Option<&BandLimitedField> {
        match self {
            VelocityField::BandLimited(b) => Some(b),
            _ => None,
        }
    }
}

fn mismatch() -> Error {
    Error::ShapeMismatch("spatial and band-limited velocities mixed".into())
}

impl VectorSpace for VelocityField {
    fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()> {
        match (self, x) {
            (VelocityField::Spatial(y), VelocityField::Spatial(x)) => y.axpy_assign(a, x),
            (VelocityField::BandLimited(y), VelocityField::BandLimited(x)) => y.axpy_assign(a, x),
            _ => Err(mismatch()),
        }
    }

    fn scale_assign(&mut self, a: f64) {
        match self {
            VelocityField::Spatial(f) => f.scale_assign(a),
            VelocityField::BandLimited(b) => b.scale_assign(a),
        }
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        match (self, other) {
            (VelocityField::Spatial(a), VelocityField::Spatial(b)) => a.inner(b),
            (VelocityField::BandLimited(a), VelocityField::BandLimited(b)) => a.inner(b),
            _ => Err(mismatch()),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            VelocityField::Spatial(f) => VelocityField::Spatial(f.zeros_like()),
            VelocityField::BandLimited(b) => VelocityField::BandLimited(b.zeros_like()),
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            VelocityField::Spatial(f) => f.max_abs(),
            VelocityField::BandLimited(b) => b.max_abs(),
        }
    }
}

/// Stationary or time-varying parameterization of the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Stationary,
    #[serde(rename = "nonstationary")]
    NonStationary,
}

static NEXT_REVISION: AtomicU64 = AtomicU64::new(1);

fn next_revision() -> u64 {
    NEXT_REVISION.fetch_add(1, Ordering::Relaxed)
}

/// A flow of velocity fields on [0, 1].
///
/// Stationary flows hold a single field. Non-stationary flows hold one field
/// per time node t_i = i / n_t and are linear in time between nodes. Every
/// mutation assigns a fresh revision id, which caches use to detect staleness.
#[derive(Clone, Debug)]
pub struct TimeVaryingVelocity<V = VelocityField> {
    parameterization: Parameterization,
    n_t: usize,
    fields: Vec<V>,
    revision: u64,
}

impl<V: VectorSpace> TimeVaryingVelocity<V> {
    pub fn stationary(field: V, n_t: usize) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::Config("n_t must be at least 1".into()));
        }
        Ok(TimeVaryingVelocity {
            parameterization: Parameterization::Stationary,
            n_t,
            fields: vec![field],
            revision: next_revision(),
        })
    }

    pub fn non_stationary(fields: Vec<V>, n_t: usize) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::Config("n_t must be at least 1".into()));
        }
        if fields.len() != n_t + 1 {
            return Err(Error::ShapeMismatch(format!(
                "non-stationary flow with n_t = {n_t} needs {} fields, got {}",
                n_t + 1,
                fields.len()
            )));
        }
        // shape agreement is checked through the inner product
        for f in &fields[1..] {
            fields[0].inner(f)?;
        }
        Ok(TimeVaryingVelocity {
            parameterization: Parameterization::NonStationary,
            n_t,
            fields,
            revision: next_revision(),
        })
    }

    /// Same parameterization with every field replaced by `field`.
    pub fn filled(parameterization: Parameterization, field: V, n_t: usize) -> Result<Self> {
        match parameterization {
            Parameterization::Stationary => Self::stationary(field, n_t),
            Parameterization::NonStationary => Self::non_stationary(vec![field; n_t + 1], n_t),
        }
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn is_stationary(&self) -> bool {
        self.parameterization == Parameterization::Stationary
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_t as f64
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn fields(&self) -> &[V] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [V] {
        self.revision = next_revision();
        &mut self.fields
    }

    /// Field at time node i (the single field when stationary).
    pub fn at_node(&self, i: usize) -> &V {
        match self.parameterization {
            Parameterization::Stationary => &self.fields[0],
            Parameterization::NonStationary => &self.fields[i.min(self.n_t)],
        }
    }

    /// Quadrature weights of the parameter inner product: 1 for a stationary
    /// flow, trapezoidal weights over the nodes otherwise.
    pub fn weights(&self) -> Vec<f64> {
        match self.parameterization {
            Parameterization::Stationary => vec![1.0],
            Parameterization::NonStationary => trapezoid_weights(self.n_t),
        }
    }

    /// Velocity at time t: the field itself when stationary, otherwise linear
    /// interpolation between the bracketing nodes.
    pub fn sample_time(&self, t: f64) -> Result<V> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        if self.is_stationary() {
            return Ok(self.fields[0].clone());
        }
        let s = t * self.n_t as f64;
        let i = (s.floor() as usize).min(self.n_t - 1);
        let w = s - i as f64;
        if w <= 0.0 {
            return Ok(self.fields[i].clone());
        }
        if w >= 1.0 {
            return Ok(self.fields[i + 1].clone());
        }
        let mut out = self.fields[i].clone();
        out.scale_assign(1.0 - w);
        out.axpy_assign(w, &self.fields[i + 1])?;
        Ok(out)
    }

    pub fn map<W: VectorSpace>(&self, mut f: impl FnMut(&V) -> Result<W>) -> Result<TimeVaryingVelocity<W>> {
        let fields = self.fields.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Ok(TimeVaryingVelocity {
            parameterization: self.parameterization,
            n_t: self.n_t,
            fields,
            revision: next_revision(),
        })
    }

    /// Same parameterization and node count with new fields.
    pub fn with_fields<W: VectorSpace>(&self, fields: Vec<W>) -> Result<TimeVaryingVelocity<W>> {
        if fields.len() != self.fields.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} fields, got {}",
                self.fields.len(),
                fields.len()
            )));
        }
        Ok(TimeVaryingVelocity {
            parameterization: self.parameterization,
            n_t: self.n_t,
            fields,
            revision: next_revision(),
        })
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.parameterization != other.parameterization || self.fields.len() != other.fields.len() {
            return Err(Error::ShapeMismatch(
                "velocity flows differ in parameterization or node count".into(),
            ));
        }
        Ok(())
    }
}

impl<V: VectorSpace> VectorSpace for TimeVaryingVelocity<V> {
    fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()> {
        self.check_layout(x)?;
        for (y, x) in self.fields.iter_mut().zip(&x.fields) {
            y.axpy_assign(a, x)?;
        }
        self.revision = next_revision();
        Ok(())
    }

    fn scale_assign(&mut self, a: f64) {
        self.fields.iter_mut().for_each(|f| f.scale_assign(a));
        self.revision = next_revision();
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        let mut sum = 0.0;
        for ((a, b), w) in self.fields.iter().zip(&other.fields).zip(self.weights()) {
            sum += w * a.inner(b)?;
        }
        Ok(sum)
    }

    fn zeros_like(&self) -> Self {
        TimeVaryingVelocity {
            parameterization: self.parameterization,
            n_t: self.n_t,
            fields: self.fields.iter().map(|f| f.zeros_like()).collect(),
            revision: next_revision(),
        }
    }

    fn max_abs(&self) -> f64 {
        self.fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }
}

/// Trapezoidal weights on n_t + 1 equispaced nodes of [0, 1].
pub fn trapezoid_weights(n_t: usize) -> Vec<f64> {
    let h = 1.0 / n_t as f64;
    let mut w = vec![h; n_t + 1];
    w[0] = 0.5 * h;
    w[n_t] = 0.5 * h;
    w
}
