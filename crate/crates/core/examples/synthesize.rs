//! Samples the built-in systems, adds seeded noise, and writes the CSV files the
//! command-line tool consumes.
//!
//!     cargo run --example synthesize -- [out_dir]

use std::path::PathBuf;

use koopreg::dynamics::{DynamicalSystem, NoiseSpec, SYSTEM_NAMES};
use koopreg::field::GridSpec;
use koopreg::pipeline::{planar_segment, OrbitSettings};

fn main() -> koopreg::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example_out/synth".into()));
    std::fs::create_dir_all(&out)?;
    let grid = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1)?;
    for name in SYSTEM_NAMES.iter().filter(|n| **n != "lorenz") {
        let clean = DynamicalSystem::named(name)?.sample_grid(&grid)?;
        let noisy = clean.add_noise(&NoiseSpec::new(0.1, 0.0, 7)?);
        clean.write_csv_path(&out.join(format!("{name}_clean.csv")))?;
        noisy.write_csv_path(&out.join(format!("{name}_noisy.csv")))?;
        let peak = clean.vectors().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("{name}: {} samples, largest component {peak:.3}", clean.len());
    }

    let seg = planar_segment(&DynamicalSystem::lorenz(), &OrbitSettings::default())?;
    seg.segment.write_csv_path(&out.join("lorenz_segment.csv"))?;
    println!(
        "lorenz: {} orbit states, most planar window starts at {} (planarity {:.4})",
        seg.orbit.len(),
        seg.start,
        seg.planarity
    );
    println!("files in {}", out.display());
    Ok(())
}
