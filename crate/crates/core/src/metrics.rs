//! Registration quality measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField, VectorSpace};
use crate::spectral::Spectral;

/// ‖m(1) - I₁‖² / ‖I₀ - I₁‖²; zero when I₀ = I₁.
pub fn mse_rel(m1: &ScalarField, i0: &ScalarField, i1: &ScalarField) -> Result<f64> {
    m1.grid().check_same(i1.grid())?;
    i0.grid().check_same(i1.grid())?;
    let num: f64 = m1.values().iter().zip(i1.values()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = i0.values().iter().zip(i1.values()).map(|(a, b)| (a - b).powi(2)).sum();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// ‖g_n‖∞ / ‖g_0‖∞; zero when the initial gradient vanishes.
pub fn rel_gradient<V: VectorSpace>(g_n: &V, g_0: &V) -> f64 {
    let d = g_0.max_abs();
    if d == 0.0 {
        0.0
    } else {
        g_n.max_abs() / d
    }
}

/// Extrema of det D(id - u), with the Jacobian taken spectrally.
pub fn jacobian_extrema(spectral: &Spectral, displacement: &VectorField) -> Result<(f64, f64)> {
    let det = spectral.map_jacobian_determinant(displacement)?;
    Ok((det.min(), det.max()))
}

/// Integer label image; 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelField {
    grid: Grid,
    labels: Vec<u32>,
}

impl LabelField {
    pub fn new(grid: Grid, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a grid of {} nodes",
                labels.len(),
                grid.len()
            )));
        }
        Ok(LabelField { grid, labels })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> u32) -> Self {
        let d = grid.ndim();
        let labels = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                f(&x[..d])
            })
            .collect();
        LabelField {
            grid: grid.clone(),
            labels,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Sorted distinct foreground labels.
    pub fn foreground(&self) -> Vec<u32> {
        let mut l: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// S∘(id - u) by nearest-neighbour lookup with periodic wrap.
    pub fn warp(&self, displacement: &VectorField) -> Result<LabelField> {
        self.grid.check_same(displacement.grid())?;
        let d = self.grid.ndim();
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        let labels = (0..self.grid.len())
            .map(|i| {
                let x = self.grid.position(i);
                let mut lin = 0;
                for axis in 0..d {
                    let s = (x[axis] - displacement.component(axis)[i]) / self.grid.spacing()[axis];
                    let j = (s.round() as i64).rem_euclid(dims[axis] as i64) as usize;
                    lin += j * strides[axis];
                }
                self.labels[lin]
            })
            .collect();
        Ok(LabelField {
            grid: self.grid.clone(),
            labels,
        })
    }
}

/// Dice overlap of one label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dice {
    pub value: f64,
    /// Both volumes were empty; `value` is 1 by convention.
    pub empty: bool,
}

/// 2|S∩T| / (|S| + |T|) over voxels carrying `label`.
pub fn dsc(s: &LabelField, t: &LabelField, label: u32) -> Result<Dice> {
    s.grid.check_same(&t.grid)?;
    let mut inter = 0usize;
    let mut vs = 0usize;
    let mut vt = 0usize;
    for (&a, &b) in s.labels.iter().zip(&t.labels) {
        let ia = a == label;
        let ib = b == label;
        vs += ia as usize;
        vt += ib as usize;
        inter += (ia && ib) as usize;
    }
    if vs + vt == 0 {
        return Ok(Dice { value: 1.0, empty: true });
    }
    Ok(Dice {
        value: 2.0 * inter as f64 / (vs + vt) as f64,
        empty: false,
    })
}

/// One row of the convergence trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub mse_rel: f64,
    pub rel_grad: f64,
    /// PCG iterations spent on the step taken from this iterate.
    pub pcg_iters: usize,
    /// Accepted step length (0 when no step was taken).
    pub epsilon: f64,
    pub wall_ms: f64,
}

/// Why the outer loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroGradient,
    GradientTolerance,
    EnergyChange,
    StepNorm,
    LineSearchStall,
    MaxIterations,
}

/// Per-label overlap before and after registration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelOverlap {
    pub label: u32,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub mse_rel: f64,
    pub rel_grad: f64,
    /// Extrema of the Jacobian determinant of the registration map.
    pub jacobian_min: f64,
    pub jacobian_max: f64,
    /// False when the map folds (min J ≤ 0).
    pub diffeomorphic: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overlap: Vec<LabelOverlap>,
}

impl RegistrationReport {
    pub fn final_energy(&self) -> f64 {
        self.iterations.last().map(|r| r.energy).unwrap_or(f64::NAN)
    }

    /// Mean wall time per outer iteration that produced a step.
    pub fn mean_iteration_ms(&self) -> f64 {
        let steps: Vec<f64> = self
            .iterations
            .iter()
            .filter(|r| r.epsilon > 0.0)
            .map(|r| r.wall_ms)
            .collect();
        if steps.is_empty() {
            0.0
        } else {
            steps.iter().sum::<f64>() / steps.len() as f64
        }
    }
}

/// DSC per foreground label of the target, before (identity) and after
/// warping the source labels.
pub fn overlap_table(source: &LabelField, target: &LabelField, displacement: &VectorField) -> Result<Vec<LabelOverlap>> {
    let warped = source.warp(displacement)?;
    let mut labels = target.foreground();
    labels.extend(source.foreground());
    labels.sort_unstable();
    labels.dedup();
    labels
        .into_iter()
        .map(|label| {
            Ok(LabelOverlap {
                label,
                before: dsc(source, target, label)?.value,
                after: dsc(&warped, target, label)?.value,
            })
        })
        .collect()
}
