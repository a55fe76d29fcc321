//! Writes the synthetic fixtures as raw+JSON field files and reads them back.
//!
//! cargo run --release --example fixtures_io -- [output dir]

use std::path::PathBuf;

use lddmm::io;
use lddmm::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let grid = synth::periodic_grid(64, 2)?;

    let fix = synth::two_label_fixture(&grid, &[6.0, -2.0], 2.0)?;
    io::save_scalar(out.join("discs_source"), &fix.source)?;
    io::save_scalar(out.join("discs_target"), &fix.target)?;
    io::save_labels(out.join("discs_labels_source"), &fix.source_labels)?;
    io::save_labels(out.join("discs_labels_target"), &fix.target_labels)?;

    for case in synth::blob_suite(&grid, 3, 2024)? {
        io::save_scalar(out.join(format!("{}_source", case.name)), &case.source)?;
        io::save_scalar(out.join(format!("{}_target", case.name)), &case.target)?;
    }
    io::save_vector(out.join("adversarial_velocity"), &synth::adversarial_velocity(&grid, 4.0, 5)?)?;

    let mut names: Vec<_> = std::fs::read_dir(&out)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    for p in names {
        let h = io::read_header(&p)?;
        let field = io::load_field(&p)?;
        let kind = match field {
            io::LoadedField::Scalar(_) => "scalar",
            io::LoadedField::Vector(_) => "vector",
            io::LoadedField::Labels(_) => "labels",
        };
        println!("{:<32} {kind:<6} dims {:?}", p.file_name().unwrap().to_string_lossy(), h.dims);
    }
    Ok(())
}
