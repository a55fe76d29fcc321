//! Compares the adjoint gradient of every variant with central finite
//! differences of the energy along a few random directions.
//!
//! cargo run --release --example gradient_check -- [grid size]

use lddmm::field::{axpy, TimeVaryingVelocity, VectorSpace};
use lddmm::spectral::BandSpec;
use lddmm::synth;
use lddmm::transport::{Integrator, Representation};
use lddmm::variants::{RegistrationProblem, VariantKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let grid = synth::periodic_grid(n, 2)?;
    let i0 = synth::random_smooth_image(&grid, 4, 11)?;
    let i1 = synth::random_smooth_image(&grid, 4, 12)?;
    let band = BandSpec::uniform(n / 2, &grid)?;
    let eps = 1e-4;

    for variant in VariantKind::ALL {
        for (integrator, n_t) in [(Integrator::Rk4, 25), (Integrator::SemiLagrangian, 5)] {
            for repr in [Representation::Spatial, Representation::BandLimited(band.clone())] {
                let p =
                    RegistrationProblem::new(variant, integrator, repr.clone(), i0.clone(), i1.clone(), 0.0025, 2, 1.0)?;
                let field = |seed| -> Result<_, lddmm::error::Error> {
                    let f = synth::random_smooth_velocity(&grid, 4, 0.05, seed)?;
                    TimeVaryingVelocity::stationary(p.to_velocity(&f)?, n_t)
                };
                let v = field(1)?;
                let grad = p.gradient(&p.linearize(&v)?, &v)?;
                let mut worst = 0.0f64;
                for seed in 100..103 {
                    let w = field(seed)?;
                    let fd = (p.energy(&axpy(eps, &w, &v)?)? - p.energy(&axpy(-eps, &w, &v)?)?) / (2.0 * eps);
                    worst = worst.max((grad.inner(&w)? - fd).abs() / fd.abs());
                }
                let repr = if repr.band().is_some() { "bl" } else { "spatial" };
                println!("{variant:<9} {:<15} {repr:<8} worst relative error {worst:.2e}", format!("{integrator:?}"));
            }
        }
    }
    Ok(())
}
