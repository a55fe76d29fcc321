//! Synthetic fixtures: blobs, discs, label maps and velocity fields.
//!
//! Coordinates are physical positions on the periodic grid. Distances use
//! the minimum-image convention so every fixture is smooth across the
//! boundary.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField, VectorSpace};
use crate::metrics::LabelField;
use crate::spectral::BandSpec;
use crate::transport::{Equation, Integrator, SpatialFlow, Storage, Transport, TransportProblem};

/// The fixtures' standard grid: `n` per axis on [0, 2π)^d.
pub fn periodic_grid(n: usize, ndim: usize) -> Result<Grid> {
    Grid::new(&vec![n; ndim], &vec![2.0 * PI / n as f64; ndim])
}

/// Signed periodic offsets x - c per axis.
fn offset(grid: &Grid, x: &[f64], c: &[f64]) -> Vec<f64> {
    let ext = grid.extent();
    x.iter()
        .zip(c)
        .zip(&ext)
        .map(|((x, c), l)| {
            let d = (x - c).rem_euclid(*l);
            if d > 0.5 * l {
                d - l
            } else {
                d
            }
        })
        .collect()
}

fn dist2(grid: &Grid, x: &[f64], c: &[f64]) -> f64 {
    offset(grid, x, c).iter().map(|d| d * d).sum()
}

fn check_point(grid: &Grid, c: &[f64]) -> Result<()> {
    if c.len() != grid.ndim() {
        return Err(Error::ShapeMismatch(format!(
            "point has {} coordinates on a {}-d grid",
            c.len(),
            grid.ndim()
        )));
    }
    Ok(())
}

/// Center of the domain.
pub fn center(grid: &Grid) -> Vec<f64> {
    grid.extent().iter().map(|l| 0.5 * l).collect()
}

/// exp(-|x - c|² / 2σ²).
pub fn gaussian_blob(grid: &Grid, c: &[f64], sigma: f64) -> Result<ScalarField> {
    check_point(grid, c)?;
    let s2 = 2.0 * sigma * sigma;
    Ok(ScalarField::from_fn(grid, |x| (-dist2(grid, x, c) / s2).exp()))
}

/// Disc of radius r with a tanh edge of width `edge` (hard when 0).
pub fn disc(grid: &Grid, c: &[f64], r: f64, edge: f64) -> Result<ScalarField> {
    check_point(grid, c)?;
    Ok(ScalarField::from_fn(grid, |x| {
        let d = dist2(grid, x, c).sqrt();
        if edge > 0.0 {
            0.5 * (1.0 - ((d - r) / edge).tanh())
        } else {
            (d <= r) as u8 as f64
        }
    }))
}

/// A labelled disc.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDisc {
    pub label: u32,
    pub center: Vec<f64>,
    pub radius: f64,
    pub intensity: f64,
}

/// Image and label map for a set of discs; later discs overwrite earlier ones.
pub fn label_discs(grid: &Grid, discs: &[LabelDisc], edge: f64) -> Result<(ScalarField, LabelField)> {
    for d in discs {
        check_point(grid, &d.center)?;
    }
    let labels = LabelField::from_fn(grid, |x| {
        discs
            .iter()
            .rev()
            .find(|d| dist2(grid, x, &d.center).sqrt() <= d.radius)
            .map(|d| d.label)
            .unwrap_or(0)
    });
    let image = ScalarField::from_fn(grid, |x| {
        let mut v = 0.0;
        for d in discs {
            let r = dist2(grid, x, &d.center).sqrt();
            let w = if edge > 0.0 {
                0.5 * (1.0 - ((r - d.radius) / edge).tanh())
            } else {
                (r <= d.radius) as u8 as f64
            };
            v = v * (1.0 - w) + d.intensity * w;
        }
        v
    });
    Ok((image, labels))
}

/// Source/target pair for the two-label overlap fixture: two discs of
/// different intensity, the target shifted by `shift` voxels.
/// Image edges are tanh ramps `edge` voxels wide.
#[derive(Clone, Debug)]
pub struct TwoLabelFixture {
    pub source: ScalarField,
    pub target: ScalarField,
    pub source_labels: LabelField,
    pub target_labels: LabelField,
}

pub fn two_label_fixture(grid: &Grid, shift: &[f64], edge: f64) -> Result<TwoLabelFixture> {
    check_point(grid, shift)?;
    let c = center(grid);
    let h = grid.spacing()[0];
    let l = grid.extent()[0];
    let discs = |dx: &[f64]| {
        let mut a: Vec<f64> = c.iter().zip(dx).map(|(c, d)| c + d).collect();
        let mut b = a.clone();
        a[0] -= 0.12 * l;
        b[0] += 0.12 * l;
        b[1] += 0.05 * l;
        vec![
            LabelDisc {
                label: 1,
                center: a,
                radius: 0.1 * l,
                intensity: 1.0,
            },
            LabelDisc {
                label: 2,
                center: b,
                radius: 0.08 * l,
                intensity: 0.6,
            },
        ]
    };
    let edge = edge * h;
    let zero = vec![0.0; grid.ndim()];
    let moved: Vec<f64> = shift.iter().map(|s| s * h).collect();
    let (source, source_labels) = label_discs(grid, &discs(&zero), edge)?;
    let (target, target_labels) = label_discs(grid, &discs(&moved), edge)?;
    Ok(TwoLabelFixture {
        source,
        target,
        source_labels,
        target_labels,
    })
}

/// Constant velocity field.
pub fn translation(grid: &Grid, velocity: &[f64]) -> Result<VectorField> {
    VectorField::constant(grid, velocity)
}

/// Localized rotation about `c`: v = ω (-(y - c_y), x - c_x) e^{-r²/2R²},
/// in the first two axes.
pub fn vortex(grid: &Grid, c: &[f64], omega: f64, radius: f64) -> Result<VectorField> {
    check_point(grid, c)?;
    let s2 = 2.0 * radius * radius;
    Ok(VectorField::from_fn(grid, |x, out| {
        let d = offset(grid, x, c);
        let w = omega * (-d.iter().map(|v| v * v).sum::<f64>() / s2).exp();
        out[0] = -w * d[1];
        out[1] = w * d[0];
        for o in out.iter_mut().skip(2) {
            *o = 0.0;
        }
    }))
}

/// Smooth periodic field whose explicit-scheme CFL number at `n_t` steps
/// equals `cfl`: max|v| δt / h = cfl with δt = 1/n_t.
pub fn adversarial_velocity(grid: &Grid, cfl: f64, n_t: usize) -> Result<VectorField> {
    if n_t == 0 || cfl <= 0.0 {
        return Err(Error::Config("adversarial velocity needs n_t ≥ 1 and cfl > 0".into()));
    }
    let amp = cfl * grid.min_spacing() * n_t as f64;
    let ext = grid.extent();
    let v = VectorField::from_fn(grid, |x, out| {
        for (axis, o) in out.iter_mut().enumerate() {
            let other = (axis + 1) % x.len();
            let k = 2.0 * PI / ext[other];
            *o = (k * x[other] + axis as f64).sin();
        }
    });
    let peak = v.magnitude().max();
    Ok(scaled(v, amp / peak))
}

fn scaled(mut v: VectorField, s: f64) -> VectorField {
    v.scale_assign(s);
    v
}

/// Random smooth image: a random band-limited field rescaled to [0, 1].
pub fn random_smooth_image(grid: &Grid, k: usize, seed: u64) -> Result<ScalarField> {
    let mut f = random_band_field(grid, k, 1, seed)?;
    Ok(ScalarField::from_raw(grid.clone(), f.remove(0)).rescaled_unit())
}

/// Random smooth vector field with max magnitude `amplitude`.
pub fn random_smooth_velocity(grid: &Grid, k: usize, amplitude: f64, seed: u64) -> Result<VectorField> {
    let f = VectorField::from_raw(grid.clone(), random_band_field(grid, k, grid.ndim(), seed)?);
    let peak = f.magnitude().max();
    Ok(if peak > 0.0 { scaled(f, amplitude / peak) } else { f })
}

/// Sum of random Fourier modes with |k_i| < k/2 and a 1/(1+|k|²) decay.
fn random_band_field(grid: &Grid, k: usize, ncomp: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let band = BandSpec::uniform(k, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.ndim();
    let ext = grid.extent();
    let mut modes = Vec::new();
    band.for_each_frequency(|_, freq| {
        // one representative per conjugate pair, and no mean or edge mode
        let first = freq.iter().position(|&f| f != 0);
        let Some(i) = first else { return };
        if freq[i] < 0 || freq.iter().any(|&f| f.unsigned_abs() as usize * 2 >= k) {
            return;
        }
        modes.push(freq.to_vec());
    });
    let coeffs: Vec<Vec<(f64, f64)>> = (0..ncomp)
        .map(|_| {
            modes
                .iter()
                .map(|m| {
                    let k2: f64 = m.iter().map(|&f| (f * f) as f64).sum();
                    let a = rng.gen_range(-1.0..1.0) / (1.0 + k2);
                    (a, rng.gen_range(0.0..2.0 * PI))
                })
                .collect()
        })
        .collect();
    let field = VectorField::from_fn(grid, |x, out| {
        for (c, o) in out.iter_mut().enumerate().take(ncomp) {
            *o = modes
                .iter()
                .zip(&coeffs[c])
                .map(|(m, (a, phase))| {
                    let arg: f64 = (0..d).map(|i| 2.0 * PI * m[i] as f64 * x[i] / ext[i]).sum();
                    a * (arg + phase).cos()
                })
                .sum();
        }
    });
    let mut comps = field.into_components();
    comps.truncate(ncomp);
    Ok(comps)
}

/// Image transported by the stationary flow of `v` over unit time with
/// `n_t` semi-Lagrangian steps.
pub fn advect(image: &ScalarField, v: &VectorField, n_t: usize) -> Result<ScalarField> {
    let sp = crate::spectral::Spectral::new(image.grid());
    let flow = SpatialFlow::stationary(v, n_t, &sp)?;
    let t = Transport::new(flow, Integrator::SemiLagrangian, &sp)?;
    let sol = t.solve(&TransportProblem::new(Equation::State, image).with_storage(Storage::Endpoints))?;
    sol.series.scalar(n_t)
}

/// One source/target pair of the blob suite.
#[derive(Clone, Debug)]
pub struct BlobCase {
    pub name: String,
    pub source: ScalarField,
    pub target: ScalarField,
}

/// Deterministic suite of blob registrations: translated blobs, blob pairs
/// and blobs deformed by a smooth random flow.
pub fn blob_suite(grid: &Grid, cases: usize, seed: u64) -> Result<Vec<BlobCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = center(grid);
    let h = grid.spacing()[0];
    let l = grid.extent()[0];
    let d = grid.ndim();
    let mut out = Vec::with_capacity(cases);
    for i in 0..cases {
        let sigma = rng.gen_range(0.07..0.11) * l;
        let case = match i % 3 {
            0 => {
                let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0) * h).collect();
                let moved: Vec<f64> = c.iter().zip(&shift).map(|(a, b)| a + b).collect();
                BlobCase {
                    name: format!("translate-{i}"),
                    source: gaussian_blob(grid, &c, sigma)?,
                    target: gaussian_blob(grid, &moved, sigma)?,
                }
            }
            1 => {
                let jitter = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.gen_range(-3.0..3.0) * h).collect() };
                let a: Vec<f64> = c.iter().enumerate().map(|(k, v)| if k == 0 { v - 0.15 * l } else { *v }).collect();
                let b: Vec<f64> = c.iter().enumerate().map(|(k, v)| if k == 0 { v + 0.15 * l } else { *v }).collect();
                let ja = jitter(&mut rng);
                let jb = jitter(&mut rng);
                let pair = |p: &[f64], q: &[f64]| -> Result<ScalarField> {
                    let x = gaussian_blob(grid, p, sigma)?;
                    let y = gaussian_blob(grid, q, 0.8 * sigma)?;
                    ScalarField::new(
                        grid.clone(),
                        x.values().iter().zip(y.values()).map(|(a, b)| a + 0.7 * b).collect(),
                    )
                };
                let a2: Vec<f64> = a.iter().zip(&ja).map(|(x, y)| x + y).collect();
                let b2: Vec<f64> = b.iter().zip(&jb).map(|(x, y)| x + y).collect();
                BlobCase {
                    name: format!("pair-{i}"),
                    source: pair(&a, &b)?,
                    target: pair(&a2, &b2)?,
                }
            }
            _ => {
                let src = gaussian_blob(grid, &c, 1.3 * sigma)?;
                let u = random_smooth_velocity(grid, 6, rng.gen_range(2.0..4.0) * h, rng.gen())?;
                let target = crate::interp::warp(&src, &u.displacement_to_map(), Default::default())?;
                BlobCase {
                    name: format!("warp-{i}"),
                    source: src,
                    target,
                }
            }
        };
        out.push(case);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Spectral;

    #[test]
    fn blob_peaks_at_center_and_wraps() {
        let g = periodic_grid(32, 2).unwrap();
        let b = gaussian_blob(&g, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(b.values()[0], 1.0);
        // the periodic image of the peak is symmetric across the boundary
        assert!((b.values()[1] - b.values()[31]).abs() < 1e-15);
    }

    #[test]
    fn adversarial_velocity_hits_requested_cfl() {
        let g = periodic_grid(64, 2).unwrap();
        let v = adversarial_velocity(&g, 4.0, 5).unwrap();
        let cfl = v.magnitude().max() / 5.0 / g.min_spacing();
        assert!((cfl - 4.0).abs() < 1e-12);
    }

    #[test]
    fn discs_and_labels_agree() {
        let g = periodic_grid(64, 2).unwrap();
        let f = two_label_fixture(&g, &[6.0, 0.0], 1.0).unwrap();
        assert_eq!(f.source_labels.foreground(), vec![1, 2]);
        assert_eq!(f.source_labels.count(1), f.target_labels.count(1));
        for (img, lab) in f.source.values().iter().zip(f.source_labels.labels()) {
            if *lab == 0 {
                assert!(*img < 0.6);
            }
        }
    }

    #[test]
    fn suites_are_deterministic() {
        let g = periodic_grid(32, 2).unwrap();
        let a = blob_suite(&g, 4, 7).unwrap();
        let b = blob_suite(&g, 4, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.target.values(), y.target.values());
        }
        let r1 = random_smooth_image(&g, 8, 3).unwrap();
        assert!((r1.min()).abs() < 1e-15 && (r1.max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vortex_is_divergence_free() {
        let g = periodic_grid(64, 2).unwrap();
        let v = vortex(&g, &center(&g), 1.0, 0.4).unwrap();
        let div = Spectral::new(&g).divergence(&v).unwrap();
        assert!(div.values().iter().all(|x| x.abs() < 1e-8));
    }
}
