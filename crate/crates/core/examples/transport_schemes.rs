//! Advects a blob with a constant velocity using both integrators, then
//! repeats with a velocity whose explicit CFL number is far above one.
//!
//! cargo run --release --example transport_schemes

use std::f64::consts::PI;

use lddmm::spectral::Spectral;
use lddmm::synth;
use lddmm::transport::{Equation, Integrator, SpatialFlow, Transport, TransportProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = synth::periodic_grid(64, 2)?;
    let sp = Spectral::new(&grid);
    let shift = [0.9, -0.6];
    let img = synth::gaussian_blob(&grid, &[PI, PI], 0.5)?;
    let exact = synth::gaussian_blob(&grid, &[PI + shift[0], PI + shift[1]], 0.5)?;
    let v = synth::translation(&grid, &shift)?;

    println!("constant velocity");
    for (integrator, n_t) in [(Integrator::SemiLagrangian, 5), (Integrator::Rk4, 64)] {
        let flow = SpatialFlow::stationary(&v, n_t, &sp)?;
        let cfl = flow.cfl();
        let m1 = Transport::new(flow, integrator, &sp)?
            .solve(&TransportProblem::new(Equation::State, &img))?
            .series
            .scalar(n_t)?;
        let err = m1.values().iter().zip(exact.values()).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        println!("  {integrator:?} n_t={n_t:<3} CFL {cfl:5.2}  max error {err:.2e}");
    }

    println!("CFL 4 at n_t = 5");
    let v = synth::adversarial_velocity(&grid, 4.0, 5)?;
    for integrator in [Integrator::SemiLagrangian, Integrator::Rk4] {
        let t = Transport::new(SpatialFlow::stationary(&v, 5, &sp)?, integrator, &sp)?;
        match t.solve(&TransportProblem::new(Equation::State, &img)) {
            Ok(sol) => println!("  {integrator:?}: max |m(1)| = {:.4}", sol.series.scalar(5)?.max()),
            Err(e) => println!("  {integrator:?}: {e}"),
        }
    }
    Ok(())
}
