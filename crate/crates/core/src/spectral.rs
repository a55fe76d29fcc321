//! FFT machinery on the periodic grid.
//!
//! Conventions:
//! - grid transforms are forward-unscaled, inverse-scaled by 1/N;
//! - band-limited coefficients are normalized so that a constant field c has
//!   DC coefficient c, i.e. f(x) = Σ_k c_k exp(i ŵ(k)·x);
//! - a band with bounds K keeps frequencies -K/2 < k < K/2 per axis. The
//!   -K/2 slot is stored but always zero, so the retained set is closed under
//!   k -> -k and inclusion yields real fields;
//! - derivative symbols are i ŵ_j(k) with ŵ_j(k) = 2π k / (N_j h_j), zeroed
//!   at the grid Nyquist frequency.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Grid, GridFunction, ScalarField, VectorField, VectorSpace};

/// Spectral operators bound to one grid. FFT plans are shared, immutable and
/// `Send + Sync`, so one instance can serve concurrent registrations.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// Signed integer frequency of each index along each axis.
    freq: Vec<Vec<i64>>,
    /// Angular wavenumber per axis index.
    omega: Vec<Vec<f64>>,
    /// Derivative wavenumber (Nyquist zeroed).
    deriv: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

fn signed_frequency(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let mut forward = Vec::new();
        let mut inverse = Vec::new();
        let mut freq = Vec::new();
        let mut omega = Vec::new();
        let mut deriv = Vec::new();
        for (&n, &h) in grid.dims().iter().zip(grid.spacing()) {
            forward.push(planner.plan_fft_forward(n));
            inverse.push(planner.plan_fft_inverse(n));
            let k: Vec<i64> = (0..n).map(|i| signed_frequency(i, n)).collect();
            let scale = 2.0 * std::f64::consts::PI / (n as f64 * h);
            let w: Vec<f64> = k.iter().map(|&k| k as f64 * scale).collect();
            let dw: Vec<f64> = k
                .iter()
                .zip(&w)
                .map(|(&k, &w)| if k == -(n as i64) / 2 { 0.0 } else { w })
                .collect();
            freq.push(k);
            omega.push(w);
            deriv.push(dw);
        }
        Spectral {
            grid: grid.clone(),
            forward,
            inverse,
            freq,
            omega,
            deriv,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        let total = data.len();
        let mut scratch = Vec::new();
        for axis in 0..dims.len() {
            let plan = if inverse {
                &self.inverse[axis]
            } else {
                &self.forward[axis]
            };
            let n = dims[axis];
            let stride = strides[axis];
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let outer = total / (n * stride);
            scratch.clear();
            scratch.reserve(total);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    scratch.extend((0..n).map(|j| data[base + j * stride]));
                }
            }
            plan.process(&mut scratch);
            let mut it = scratch.iter();
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for j in 0..n {
                        data[base + j * stride] = *it.next().unwrap();
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / total as f64;
            data.iter_mut().for_each(|c| *c *= scale);
        }
    }

    /// Unscaled forward DFT of real samples.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse DFT (scaled by 1/N), real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, true);
        spectrum.into_iter().map(|c| c.re).collect()
    }

    /// Inverse DFT keeping the complex result.
    pub fn inverse_complex(&self, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut spectrum, true);
        spectrum
    }

    /// Visits every spectral index with its per-axis indices.
    fn for_each_index(&self, mut f: impl FnMut(usize, [usize; 3])) {
        let dims = self.grid.dims();
        let d = dims.len();
        let mut idx = [0usize; 3];
        for lin in 0..self.grid.len() {
            f(lin, idx);
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    fn apply_real_symbol(&self, spectrum: &mut [Complex64], symbol: impl Fn([usize; 3]) -> f64) {
        self.for_each_index(|lin, idx| spectrum[lin] *= symbol(idx));
    }

    fn omega_sq(&self, idx: [usize; 3]) -> f64 {
        (0..self.grid.ndim()).map(|a| self.omega[a][idx[a]].powi(2)).sum()
    }

    /// ∂_axis of a real array.
    pub fn partial(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let mut spec = self.forward_real(values);
        self.multiply_derivative(&mut spec, axis);
        self.inverse_real(spec)
    }

    fn multiply_derivative(&self, spec: &mut [Complex64], axis: usize) {
        let w = &self.deriv[axis];
        self.for_each_index(|lin, idx| spec[lin] *= Complex64::new(0.0, w[idx[axis]]));
    }

    pub(crate) fn gradient_raw(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let spec = self.forward_real(values);
        (0..self.grid.ndim())
            .map(|axis| {
                let mut s = spec.clone();
                self.multiply_derivative(&mut s, axis);
                self.inverse_real(s)
            })
            .collect()
    }

    pub(crate) fn divergence_raw(&self, comps: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (axis, c) in comps.iter().enumerate() {
            let mut s = self.forward_real(c);
            self.multiply_derivative(&mut s, axis);
            acc.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        self.inverse_real(acc)
    }

    /// ∇f.
    pub fn gradient(&self, f: &ScalarField) -> Result<VectorField> {
        self.grid.check_same(f.grid())?;
        Ok(VectorField::from_raw(self.grid.clone(), self.gradient_raw(f.values())))
    }

    /// ∇·v.
    pub fn divergence(&self, v: &VectorField) -> Result<ScalarField> {
        self.grid.check_same(v.grid())?;
        Ok(ScalarField::from_raw(self.grid.clone(), self.divergence_raw(v.components())))
    }

    /// Jacobian rows: element i is ∇v_i, so `jac[i].component(j)` = ∂_j v_i.
    pub fn jacobian(&self, v: &VectorField) -> Result<Vec<VectorField>> {
        self.grid.check_same(v.grid())?;
        Ok(v.components()
            .iter()
            .map(|c| VectorField::from_raw(self.grid.clone(), self.gradient_raw(c)))
            .collect())
    }

    /// Pointwise determinant of the Jacobian of the map x -> x - u(x).
    pub fn map_jacobian_determinant(&self, displacement: &VectorField) -> Result<ScalarField> {
        let jac = self.jacobian(displacement)?;
        let d = self.grid.ndim();
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        let entry = |i: usize, j: usize, p: usize| -> f64 {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - jac[i].component(j)[p]
        };
        for (p, o) in out.iter_mut().enumerate() {
            *o = if d == 2 {
                entry(0, 0, p) * entry(1, 1, p) - entry(0, 1, p) * entry(1, 0, p)
            } else {
                entry(0, 0, p) * (entry(1, 1, p) * entry(2, 2, p) - entry(1, 2, p) * entry(2, 1, p))
                    - entry(0, 1, p) * (entry(1, 0, p) * entry(2, 2, p) - entry(1, 2, p) * entry(2, 0, p))
                    + entry(0, 2, p) * (entry(1, 0, p) * entry(2, 1, p) - entry(1, 1, p) * entry(2, 0, p))
            };
        }
        Ok(ScalarField::from_raw(self.grid.clone(), out))
    }

    /// Ideal low-pass filter onto the band (ι∘π), in place.
    pub(crate) fn low_pass_raw(&self, comps: &mut [Vec<f64>], band: &BandSpec) {
        let half: Vec<i64> = band.bounds.iter().map(|&k| k as i64 / 2).collect();
        let d = self.grid.ndim();
        for c in comps.iter_mut() {
            let mut spec = self.forward_real(c);
            self.for_each_index(|lin, idx| {
                let keep = (0..d).all(|a| self.freq[a][idx[a]].abs() < half[a]);
                if !keep {
                    spec[lin] = Complex64::new(0.0, 0.0);
                }
            });
            *c = self.inverse_real(spec);
        }
    }

    /// Ideal low-pass filter of a vector field onto the band (ι∘π).
    pub fn low_pass(&self, f: &VectorField, band: &BandSpec) -> Result<VectorField> {
        self.grid.check_same(f.grid())?;
        band.check_parent(&self.grid)?;
        let mut comps = f.components().to_vec();
        self.low_pass_raw(&mut comps, band);
        Ok(VectorField::from_raw(self.grid.clone(), comps))
    }

    fn project_components(&self, comps: &[Vec<f64>], band: &BandSpec) -> Vec<Vec<Complex64>> {
        let n_total = self.grid.len() as f64;
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        comps
            .iter()
            .map(|c| {
                let spec = self.forward_real(c);
                band.map_indices(|k| {
                    let mut lin = 0;
                    for a in 0..k.len() {
                        let i = k[a].rem_euclid(dims[a] as i64) as usize;
                        lin += i * strides[a];
                    }
                    spec[lin] / n_total
                })
            })
            .collect()
    }

    fn include_components(&self, b: &BandLimitedField) -> Result<Vec<Vec<f64>>> {
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        let n_total = self.grid.len() as f64;
        let mut out = Vec::with_capacity(b.comps.len());
        for coeffs in &b.comps {
            let mut spec = vec![Complex64::new(0.0, 0.0); self.grid.len()];
            b.band.for_each_frequency(|bi, k| {
                let mut lin = 0;
                for a in 0..k.len() {
                    let i = k[a].rem_euclid(dims[a] as i64) as usize;
                    lin += i * strides[a];
                }
                spec[lin] = coeffs[bi] * n_total;
            });
            let values = self.inverse_complex(spec);
            let real = values.iter().fold(0.0f64, |m, c| m.max(c.re.abs()));
            let imag = values.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
            if imag > 1e-9 * real.max(f64::MIN_POSITIVE) && imag > 1e-300 {
                return Err(Error::ConjugateSymmetry { imag, real });
            }
            out.push(values.into_iter().map(|c| c.re).collect());
        }
        Ok(out)
    }

    /// π: forward transform and centered truncation to the band.
    pub fn project(&self, f: &VectorField, band: &BandSpec) -> Result<BandLimitedField> {
        self.grid.check_same(f.grid())?;
        band.check_parent(&self.grid)?;
        Ok(BandLimitedField {
            band: band.clone(),
            comps: self.project_components(f.components(), band),
        })
    }

    /// π for a scalar field (a one-component band-limited field).
    pub fn project_scalar(&self, f: &ScalarField, band: &BandSpec) -> Result<BandLimitedField> {
        self.grid.check_same(f.grid())?;
        band.check_parent(&self.grid)?;
        Ok(BandLimitedField {
            band: band.clone(),
            comps: self.project_components(f.components(), band),
        })
    }

    /// ι: zero-pad to the parent grid and inverse transform.
    pub fn include(&self, b: &BandLimitedField) -> Result<VectorField> {
        b.band.check_parent(&self.grid)?;
        if b.comps.len() != self.grid.ndim() {
            return Err(Error::ShapeMismatch(format!(
                "band-limited field has {} components, expected {}",
                b.comps.len(),
                self.grid.ndim()
            )));
        }
        Ok(VectorField::from_raw(self.grid.clone(), self.include_components(b)?))
    }

    /// ι for a one-component band-limited field.
    pub fn include_scalar(&self, b: &BandLimitedField) -> Result<ScalarField> {
        b.band.check_parent(&self.grid)?;
        if b.comps.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected a scalar band-limited field, got {} components",
                b.comps.len()
            )));
        }
        let mut comps = self.include_components(b)?;
        Ok(ScalarField::from_raw(self.grid.clone(), comps.pop().unwrap()))
    }

    /// ★: π(ι(a)·ι(b)), componentwise; a one-component operand broadcasts.
    ///
    /// The product is formed on the full parent grid, which is alias-free for
    /// bands up to half the grid.
    pub fn truncated_convolution(&self, a: &BandLimitedField, b: &BandLimitedField) -> Result<BandLimitedField> {
        if a.band != b.band {
            return Err(Error::InvalidBand("truncated convolution of different bands".into()));
        }
        a.band.check_parent(&self.grid)?;
        let na = a.comps.len();
        let nb = b.comps.len();
        if na != nb && na != 1 && nb != 1 {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {na}-component and {nb}-component fields"
            )));
        }
        let sa = self.include_components(a)?;
        let sb = self.include_components(b)?;
        let n = na.max(nb);
        let prod: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                let x = &sa[if na == 1 { 0 } else { c }];
                let y = &sb[if nb == 1 { 0 } else { c }];
                x.iter().zip(y).map(|(p, q)| p * q).collect()
            })
            .collect();
        Ok(BandLimitedField {
            band: a.band.clone(),
            comps: self.project_components(&prod, &a.band),
        })
    }

    /// Applies a real radial symbol of ŵ² to every component, in place.
    pub(crate) fn apply_omega_symbol(&self, comps: &mut [Vec<f64>], symbol: impl Fn(f64) -> f64) {
        for c in comps.iter_mut() {
            let mut spec = self.forward_real(c);
            self.apply_real_symbol(&mut spec, |idx| symbol(self.omega_sq(idx)));
            *c = self.inverse_real(spec);
        }
    }
}

/// Frequency bounds K_1..K_d of a truncated Fourier domain.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    bounds: Vec<usize>,
    grid: Grid,
}

impl BandSpec {
    pub fn new(bounds: &[usize], grid: &Grid) -> Result<Self> {
        if bounds.len() != grid.ndim() {
            return Err(Error::InvalidBand(format!(
                "{} bounds for a {}-d grid",
                bounds.len(),
                grid.ndim()
            )));
        }
        for (axis, (&k, &n)) in bounds.iter().zip(grid.dims()).enumerate() {
            if k % 2 != 0 || k < 4 || k > n {
                return Err(Error::InvalidBand(format!(
                    "axis {axis}: bound {k} must be even with 4 <= K <= {n}"
                )));
            }
        }
        Ok(BandSpec {
            bounds: bounds.to_vec(),
            grid: grid.clone(),
        })
    }

    /// The same bound on every axis.
    pub fn uniform(k: usize, grid: &Grid) -> Result<Self> {
        BandSpec::new(&vec![k; grid.ndim()], grid)
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of stored coefficients per component.
    pub fn len(&self) -> usize {
        self.bounds.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_parent(&self, grid: &Grid) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::InvalidBand("band belongs to a different grid".into()));
        }
        Ok(())
    }

    /// Visits every retained frequency with its storage index. The zeroed
    /// -K/2 slots are skipped.
    pub fn for_each_frequency(&self, mut f: impl FnMut(usize, &[i64])) {
        let d = self.bounds.len();
        let mut k = [0i64; 3];
        for lin in 0..self.len() {
            let mut rem = lin;
            let mut skip = false;
            for axis in (0..d).rev() {
                let b = rem % self.bounds[axis];
                rem /= self.bounds[axis];
                if b == 0 {
                    skip = true;
                }
                k[axis] = b as i64 - self.bounds[axis] as i64 / 2;
            }
            if !skip {
                f(lin, &k[..d]);
            }
        }
    }

    fn map_indices(&self, mut f: impl FnMut(&[i64]) -> Complex64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.for_each_frequency(|lin, k| out[lin] = f(k));
        out
    }

    /// Storage index of a frequency, if it is retained.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let mut lin = 0;
        for (axis, &kk) in k.iter().enumerate() {
            let half = self.bounds[axis] as i64 / 2;
            if kk <= -half || kk >= half {
                return None;
            }
            lin = lin * self.bounds[axis] + (kk + half) as usize;
        }
        Some(lin)
    }

    fn omega(&self, axis: usize, k: i64) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / (self.grid.dims()[axis] as f64 * self.grid.spacing()[axis])
    }
}

/// Complex Fourier coefficients on a truncated band, one array per component.
#[derive(Clone, Debug, PartialEq)]
pub struct BandLimitedField {
    band: BandSpec,
    comps: Vec<Vec<Complex64>>,
}

impl BandLimitedField {
    pub fn zeros(band: &BandSpec, ncomp: usize) -> Self {
        BandLimitedField {
            band: band.clone(),
            comps: vec![vec![Complex64::new(0.0, 0.0); band.len()]; ncomp],
        }
    }

    /// Builds a field from explicit coefficients; they must be finite, zero in
    /// the -K/2 slots and conjugate symmetric.
    pub fn new(band: &BandSpec, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        for c in &comps {
            if c.len() != band.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} coefficients for a band of {}",
                    c.len(),
                    band.len()
                )));
            }
            if c.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite("band-limited field".into()));
            }
        }
        let field = BandLimitedField {
            band: band.clone(),
            comps,
        };
        let asym = field.symmetry_defect();
        let scale = field.max_abs().max(f64::MIN_POSITIVE);
        if asym > 1e-12 * scale {
            return Err(Error::ConjugateSymmetry { imag: asym, real: scale });
        }
        Ok(field)
    }

    pub fn band(&self) -> &BandSpec {
        &self.band
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn coefficients(&self, comp: usize) -> &[Complex64] {
        &self.comps[comp]
    }

    /// Largest violation of c(-k) = conj(c(k)), including the zeroed slots.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut retained = vec![false; self.band.len()];
        self.band.for_each_frequency(|lin, _| retained[lin] = true);
        for c in &self.comps {
            self.band.for_each_frequency(|lin, k| {
                let neg: Vec<i64> = k.iter().map(|x| -x).collect();
                let j = self.band.index_of(&neg).expect("band closed under negation");
                worst = worst.max((c[lin] - c[j].conj()).norm());
            });
            for (lin, keep) in retained.iter().enumerate() {
                if !keep {
                    worst = worst.max(c[lin].norm());
                }
            }
        }
        worst
    }

    fn map_symbol(&self, symbol: impl Fn(&[i64]) -> Complex64) -> Vec<Vec<Complex64>> {
        self.comps
            .iter()
            .map(|c| {
                let mut out = vec![Complex64::new(0.0, 0.0); c.len()];
                self.band.for_each_frequency(|lin, k| out[lin] = c[lin] * symbol(k));
                out
            })
            .collect()
    }

    fn derivative_symbol(&self, axis: usize, k: &[i64]) -> Complex64 {
        Complex64::new(0.0, self.band.omega(axis, k[axis]))
    }

    /// ∇̃ of a one-component field.
    pub fn gradient(&self) -> Result<BandLimitedField> {
        if self.comps.len() != 1 {
            return Err(Error::ShapeMismatch("gradient of a multi-component field".into()));
        }
        let d = self.band.bounds.len();
        let comps = (0..d)
            .map(|axis| self.map_symbol(|k| self.derivative_symbol(axis, k)).pop().unwrap())
            .collect();
        Ok(BandLimitedField {
            band: self.band.clone(),
            comps,
        })
    }

    /// ∇̃· of a d-component field.
    pub fn divergence(&self) -> Result<BandLimitedField> {
        let d = self.band.bounds.len();
        if self.comps.len() != d {
            return Err(Error::ShapeMismatch("divergence needs d components".into()));
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); self.band.len()];
        for (axis, c) in self.comps.iter().enumerate() {
            self.band.for_each_frequency(|lin, k| acc[lin] += c[lin] * self.derivative_symbol(axis, k));
        }
        Ok(BandLimitedField {
            band: self.band.clone(),
            comps: vec![acc],
        })
    }

    /// D̃: element i is ∇̃ of component i.
    pub fn jacobian(&self) -> Vec<BandLimitedField> {
        self.comps
            .iter()
            .map(|c| {
                BandLimitedField {
                    band: self.band.clone(),
                    comps: vec![c.clone()],
                }
                .gradient()
                .expect("single component")
            })
            .collect()
    }

    /// Component `i` as a one-component field.
    pub fn component_field(&self, i: usize) -> BandLimitedField {
        BandLimitedField {
            band: self.band.clone(),
            comps: vec![self.comps[i].clone()],
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.band != other.band || self.comps.len() != other.comps.len() {
            return Err(Error::ShapeMismatch("band-limited fields differ in band or components".into()));
        }
        Ok(())
    }
}

impl VectorSpace for BandLimitedField {
    fn axpy_assign(&mut self, a: f64, x: &Self) -> Result<()> {
        self.check_compatible(x)?;
        for (y, x) in self.comps.iter_mut().zip(&x.comps) {
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi += xi * a;
            }
        }
        Ok(())
    }

    fn scale_assign(&mut self, a: f64) {
        for c in &mut self.comps {
            c.iter_mut().for_each(|z| *z *= a);
        }
    }

    /// Domain volume times Σ Re(a conj b), equal to the L² product of the
    /// included fields.
    fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let vol: f64 = self.band.grid.extent().iter().product();
        let sum: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>())
            .sum();
        Ok(vol * sum)
    }

    fn zeros_like(&self) -> Self {
        BandLimitedField::zeros(&self.band, self.comps.len())
    }

    fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// L = (Id - αΔ)^s with spectral symbol (1 + α Σ_j ŵ_j²)^s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevOperator {
    alpha: f64,
    s: u32,
}

impl SobolevOperator {
    pub fn new(alpha: f64, s: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if s == 0 {
            return Err(Error::Config("s must be a positive integer".into()));
        }
        Ok(SobolevOperator { alpha, s })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// L̂ as a function of Σ_j ŵ_j².
    pub fn symbol(&self, omega_sq: f64) -> f64 {
        (1.0 + self.alpha * omega_sq).powi(self.s as i32)
    }

    fn band_symbol(&self, band: &BandSpec, k: &[i64]) -> f64 {
        let w2: f64 = k.iter().enumerate().map(|(a, &kk)| band.omega(a, kk).powi(2)).sum();
        self.symbol(w2)
    }

    pub fn apply_spatial(&self, spectral: &Spectral, f: &VectorField) -> Result<VectorField> {
        spectral.grid.check_same(f.grid())?;
        let mut comps = f.components().to_vec();
        spectral.apply_omega_symbol(&mut comps, |w2| self.symbol(w2));
        Ok(VectorField::from_raw(f.grid().clone(), comps))
    }

    pub fn apply_inverse_spatial(&self, spectral: &Spectral, f: &VectorField) -> Result<VectorField> {
        spectral.grid.check_same(f.grid())?;
        let mut comps = f.components().to_vec();
        spectral.apply_omega_symbol(&mut comps, |w2| 1.0 / self.symbol(w2));
        Ok(VectorField::from_raw(f.grid().clone(), comps))
    }

    pub fn apply_band(&self, g: &BandLimitedField) -> BandLimitedField {
        BandLimitedField {
            band: g.band.clone(),
            comps: g.map_symbol(|k| Complex64::new(self.band_symbol(&g.band, k), 0.0)),
        }
    }

    pub fn apply_inverse_band(&self, g: &BandLimitedField) -> BandLimitedField {
        BandLimitedField {
            band: g.band.clone(),
            comps: g.map_symbol(|k| Complex64::new(1.0 / self.band_symbol(&g.band, k), 0.0)),
        }
    }

    pub fn apply(&self, spectral: &Spectral, v: &crate::field::VelocityField) -> Result<crate::field::VelocityField> {
        use crate::field::VelocityField as V;
        Ok(match v {
            V::Spatial(f) => V::Spatial(self.apply_spatial(spectral, f)?),
            V::BandLimited(b) => V::BandLimited(self.apply_band(b)),
        })
    }

    pub fn apply_inverse(&self, spectral: &Spectral, v: &crate::field::VelocityField) -> Result<crate::field::VelocityField> {
        use crate::field::VelocityField as V;
        Ok(match v {
            V::Spatial(f) => V::Spatial(self.apply_inverse_spatial(spectral, f)?),
            V::BandLimited(b) => V::BandLimited(self.apply_inverse_band(b)),
        })
    }
}
