//! Periodic off-grid interpolation: multilinear and cubic B-spline.
//!
//! Query points are physical coordinates and are wrapped onto the periodic
//! domain. Cubic interpolation works on B-spline coefficients produced by
//! [`prefilter`]; feeding raw samples to it is an error.

use crate::error::{Error, Result};
use crate::field::{Grid, GridFunction, ScalarField, VectorField};

/// Interpolation kernel. The boundary is always periodic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Interpolator {
    Linear,
    #[default]
    CubicBSpline,
}

impl Interpolator {
    fn taps(self) -> usize {
        match self {
            Interpolator::Linear => 2,
            Interpolator::CubicBSpline => 4,
        }
    }

    /// Turns grid samples into whatever this kernel evaluates: the samples
    /// themselves for linear, B-spline coefficients for cubic.
    pub(crate) fn prepare(self, grid: &Grid, values: &[f64]) -> Vec<f64> {
        match self {
            Interpolator::Linear => values.to_vec(),
            Interpolator::CubicBSpline => prefilter_raw(grid, values),
        }
    }
}

/// Cubic B-spline coefficients of a scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineCoefficients {
    grid: Grid,
    data: Vec<f64>,
}

impl SplineCoefficients {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// What an interpolation reads from.
#[derive(Clone, Copy, Debug)]
pub enum Samples<'a> {
    Values(&'a ScalarField),
    Coefficients(&'a SplineCoefficients),
}

const POLE: f64 = -0.267_949_192_431_122_7; // √3 − 2

fn filter_line(line: &mut [f64]) {
    let n = line.len();
    let z = POLE;
    let zn = z.powi(n as i32);
    // causal pass, periodic initialization
    let mut acc = 0.0;
    let mut zj = 1.0;
    for j in 0..n {
        acc += zj * line[(n - j) % n];
        zj *= z;
        if zj.abs() < 1e-18 {
            break;
        }
    }
    line[0] = acc / (1.0 - zn);
    for k in 1..n {
        line[k] += z * line[k - 1];
    }
    // anticausal pass
    let mut acc = 0.0;
    let mut zj = 1.0;
    for j in 0..n {
        acc += zj * line[(n - 1 + j) % n];
        zj *= z;
        if zj.abs() < 1e-18 {
            break;
        }
    }
    let last = -z / (1.0 - zn) * acc;
    line[n - 1] = last;
    for k in (0..n - 1).rev() {
        line[k] = z * (line[k + 1] - line[k]);
    }
    line.iter_mut().for_each(|c| *c *= 6.0);
}

pub(crate) fn prefilter_raw(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let mut data = values.to_vec();
    let dims = grid.dims();
    let strides = grid.strides();
    let total = data.len();
    let mut line = Vec::new();
    for axis in 0..dims.len() {
        let n = dims[axis];
        let stride = strides[axis];
        let outer = total / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                line.clear();
                line.extend((0..n).map(|j| data[base + j * stride]));
                filter_line(&mut line);
                for (j, &c) in line.iter().enumerate() {
                    data[base + j * stride] = c;
                }
            }
        }
    }
    data
}

/// Cubic B-spline coefficients whose reconstruction reproduces `f` at every node.
pub fn prefilter(f: &ScalarField) -> SplineCoefficients {
    SplineCoefficients {
        grid: f.grid().clone(),
        data: prefilter_raw(f.grid(), f.values()),
    }
}

fn kernel_weights(kind: Interpolator, t: f64, w: &mut [f64; 4]) {
    match kind {
        Interpolator::Linear => {
            w[0] = 1.0 - t;
            w[1] = t;
        }
        Interpolator::CubicBSpline => {
            let t2 = t * t;
            let t3 = t2 * t;
            let s = 1.0 - t;
            w[0] = s * s * s / 6.0;
            w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
            w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
            w[3] = t3 / 6.0;
        }
    }
}

/// Precomputed stencil offsets and weights for a fixed set of query points.
/// Building the plan once lets many fields be sampled at the same points.
#[derive(Clone, Debug)]
pub struct InterpPlan {
    grid: Grid,
    kind: Interpolator,
    npts: usize,
    /// Per axis, `npts * taps` flattened offsets (already multiplied by the stride).
    offsets: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl InterpPlan {
    /// `points` holds one coordinate array per axis, in physical units.
    pub fn new(grid: &Grid, points: &[Vec<f64>], kind: Interpolator) -> Result<Self> {
        let d = grid.ndim();
        if points.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinate arrays for a {d}-d grid",
                points.len()
            )));
        }
        let npts = points[0].len();
        if points.iter().any(|p| p.len() != npts) {
            return Err(Error::ShapeMismatch("coordinate arrays differ in length".into()));
        }
        let taps = kind.taps();
        let shift = match kind {
            Interpolator::Linear => 0,
            Interpolator::CubicBSpline => 1,
        };
        let strides = grid.strides();
        let mut offsets = Vec::with_capacity(d);
        let mut weights = Vec::with_capacity(d);
        let mut w = [0.0; 4];
        for axis in 0..d {
            let n = grid.dims()[axis] as i64;
            let h = grid.spacing()[axis];
            let mut off = Vec::with_capacity(npts * taps);
            let mut wt = Vec::with_capacity(npts * taps);
            for &x in &points[axis] {
                if !x.is_finite() {
                    return Err(Error::NonFinite("interpolation point".into()));
                }
                let s = x / h;
                let base = s.floor();
                kernel_weights(kind, s - base, &mut w);
                let base = base as i64 - shift;
                for (tap, &wk) in w.iter().enumerate().take(taps) {
                    let i = (base + tap as i64).rem_euclid(n) as usize;
                    off.push(i * strides[axis]);
                    wt.push(wk);
                }
            }
            offsets.push(off);
            weights.push(wt);
        }
        Ok(InterpPlan {
            grid: grid.clone(),
            kind,
            npts,
            offsets,
            weights,
        })
    }

    pub fn kind(&self) -> Interpolator {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.npts
    }

    pub fn is_empty(&self) -> bool {
        self.npts == 0
    }

    /// Evaluates prepared data (samples for linear, coefficients for cubic).
    pub(crate) fn apply_raw(&self, data: &[f64]) -> Vec<f64> {
        let taps = self.kind.taps();
        let mut out = vec![0.0; self.npts];
        match self.offsets.len() {
            2 => {
                let (o0, o1) = (&self.offsets[0], &self.offsets[1]);
                let (w0, w1) = (&self.weights[0], &self.weights[1]);
                for (p, val) in out.iter_mut().enumerate() {
                    let r = p * taps;
                    let mut acc = 0.0;
                    for a in r..r + taps {
                        let mut row = 0.0;
                        for b in r..r + taps {
                            row += w1[b] * data[o0[a] + o1[b]];
                        }
                        acc += w0[a] * row;
                    }
                    *val = acc;
                }
            }
            _ => {
                let (o0, o1, o2) = (&self.offsets[0], &self.offsets[1], &self.offsets[2]);
                let (w0, w1, w2) = (&self.weights[0], &self.weights[1], &self.weights[2]);
                for (p, val) in out.iter_mut().enumerate() {
                    let r = p * taps;
                    let mut acc = 0.0;
                    for a in r..r + taps {
                        let mut plane = 0.0;
                        for b in r..r + taps {
                            let base = o0[a] + o1[b];
                            let mut row = 0.0;
                            for c in r..r + taps {
                                row += w2[c] * data[base + o2[c]];
                            }
                            plane += w1[b] * row;
                        }
                        acc += w0[a] * plane;
                    }
                    *val = acc;
                }
            }
        }
        out
    }

    /// Samples a field at the plan's points.
    pub fn apply(&self, samples: Samples<'_>) -> Result<Vec<f64>> {
        let (grid, data) = match (self.kind, samples) {
            (Interpolator::Linear, Samples::Values(f)) => (f.grid(), f.values()),
            (Interpolator::CubicBSpline, Samples::Coefficients(c)) => (&c.grid, c.data.as_slice()),
            (Interpolator::CubicBSpline, Samples::Values(_)) => return Err(Error::NotPrefiltered),
            (Interpolator::Linear, Samples::Coefficients(_)) => {
                return Err(Error::Config("linear interpolation reads raw samples".into()))
            }
        };
        self.grid.check_same(grid)?;
        Ok(self.apply_raw(data))
    }

    /// Interpolates a field given as raw samples, prefiltering when needed.
    pub fn sample(&self, f: &ScalarField) -> Result<Vec<f64>> {
        self.grid.check_same(f.grid())?;
        Ok(self.apply_raw(&self.kind.prepare(f.grid(), f.values())))
    }
}

/// Evaluates `samples` at off-grid `points` (one coordinate array per axis).
pub fn interp(samples: Samples<'_>, points: &[Vec<f64>], kind: Interpolator) -> Result<Vec<f64>> {
    let grid = match samples {
        Samples::Values(f) => f.grid(),
        Samples::Coefficients(c) => c.grid(),
    };
    InterpPlan::new(grid, points, kind)?.apply(samples)
}

/// f∘φ, with φ given as a map sampled on the grid.
pub fn warp(f: &ScalarField, phi: &VectorField, kind: Interpolator) -> Result<ScalarField> {
    f.grid().check_same(phi.grid())?;
    let plan = InterpPlan::new(f.grid(), phi.components(), kind)?;
    ScalarField::new(f.grid().clone(), plan.sample(f)?)
}

/// Componentwise w∘φ.
pub fn warp_vector(w: &VectorField, phi: &VectorField, kind: Interpolator) -> Result<VectorField> {
    w.grid().check_same(phi.grid())?;
    let plan = InterpPlan::new(w.grid(), phi.components(), kind)?;
    let comps = w
        .components()
        .iter()
        .map(|c| plan.apply_raw(&kind.prepare(w.grid(), c)))
        .collect();
    VectorField::new(w.grid().clone(), comps)
}
