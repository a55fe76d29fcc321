//! Registers the two-disc fixture with every variant and scores the warped
//! label maps against the target labels.
//!
//! cargo run --release --example label_overlap

use lddmm::pipeline::{run_fields, ModelConfig};
use lddmm::synth;
use lddmm::variants::VariantKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = synth::periodic_grid(64, 2)?;
    let fix = synth::two_label_fixture(&grid, &[6.0, 0.0], 2.0)?;
    for variant in VariantKind::ALL {
        let model = ModelConfig {
            variant,
            band: 8,
            ..ModelConfig::default()
        };
        let out = run_fields(
            &model,
            fix.source.clone(),
            fix.target.clone(),
            Some((&fix.source_labels, &fix.target_labels)),
            None,
        )?;
        let r = out.report();
        print!("{variant:<9} mse_rel {:.3}  det [{:.2}, {:.2}]", r.mse_rel, r.jacobian_min, r.jacobian_max);
        for o in &r.overlap {
            print!("  label {}: {:.3} -> {:.3}", o.label, o.before, o.after);
        }
        println!();
    }
    Ok(())
}
