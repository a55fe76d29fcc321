//! Wall time per Gauss-Newton iteration with semi-Lagrangian (n_t = 5) and
//! RK4 (n_t = 25) transport, at a fixed number of PCG iterations.
//!
//! cargo run --release --example integrator_cost

use lddmm::optimizer::OptimizerConfig;
use lddmm::pipeline::{run_fields, IntegratorChoice, ModelConfig};
use lddmm::synth;
use lddmm::variants::VariantKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = synth::periodic_grid(64, 2)?;
    let c = synth::center(&grid);
    let h = grid.spacing()[0];
    let sigma = 0.1 * grid.extent()[0];
    let source = synth::gaussian_blob(&grid, &c, sigma)?;
    let target = synth::gaussian_blob(&grid, &[c[0] + 4.0 * h, c[1] - 3.0 * h], sigma)?;
    for variant in VariantKind::ALL {
        let mut ms = Vec::new();
        for integrator in [IntegratorChoice::Sl, IntegratorChoice::Rk] {
            let model = ModelConfig {
                variant,
                integrator,
                band: 16,
                optimizer: OptimizerConfig {
                    max_outer: 3,
                    pcg_tol: 1e-12,
                    ..OptimizerConfig::default()
                },
                ..ModelConfig::default()
            };
            let r = run_fields(&model, source.clone(), target.clone(), None, None)?.registration.report;
            ms.push(r.mean_iteration_ms());
        }
        println!("{variant:<9} SL {:7.1} ms  RK {:7.1} ms  ratio {:.2}", ms[0], ms[1], ms[0] / ms[1]);
    }
    Ok(())
}
