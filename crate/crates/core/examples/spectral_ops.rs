//! Band-limited fields: projection, spectral derivatives, the Sobolev
//! operator and the truncated convolution behind pointwise products.
//!
//! cargo run --release --example spectral_ops

use lddmm::field::{ScalarField, VectorField, VectorSpace};
use lddmm::spectral::{BandSpec, SobolevOperator, Spectral};
use lddmm::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = synth::periodic_grid(32, 2)?;
    let sp = Spectral::new(&grid);
    let band = BandSpec::uniform(12, &grid)?;
    println!("band {:?}: {} coefficients per component", band.bounds(), band.len());

    // derivative of sin(x) cos(2y)
    let f = ScalarField::from_fn(&grid, |x| x[0].sin() * (2.0 * x[1]).cos());
    let g = sp.gradient(&f)?;
    let exact = VectorField::from_fn(&grid, |x, out| {
        out[0] = x[0].cos() * (2.0 * x[1]).cos();
        out[1] = -2.0 * x[0].sin() * (2.0 * x[1]).sin();
    });
    let mut d = g.clone();
    d.axpy_assign(-1.0, &exact)?;
    println!("spectral gradient error {:.1e}", d.max_abs());

    // a rough velocity, low-passed and smoothed by L^-1
    let v = synth::random_smooth_velocity(&grid, 24, 1.0, 7)?;
    let low = sp.low_pass(&v, &band)?;
    let l = SobolevOperator::new(0.0025, 2)?;
    let smooth = l.apply_inverse_spatial(&sp, &v)?;
    println!(
        "|v| {:.3}, after low pass {:.3}, after L^-1 {:.3}",
        v.max_abs(),
        low.max_abs(),
        smooth.max_abs()
    );
    let back = l.apply_spatial(&sp, &smooth)?;
    let mut r = back.clone();
    r.axpy_assign(-1.0, &v)?;
    println!("L L^-1 v - v: {:.1e}", r.max_abs());

    // products of band-limited fields stay in the band by truncation
    let a = sp.project_scalar(&synth::random_smooth_image(&grid, 6, 1)?, &band)?;
    let b = sp.project_scalar(&synth::random_smooth_image(&grid, 6, 2)?, &band)?;
    let ab = sp.truncated_convolution(&a, &b)?;
    println!("conjugate symmetry defect of a*b: {:.1e}", ab.symmetry_defect());
    Ok(())
}
