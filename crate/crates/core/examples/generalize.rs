//! Learns from a 7 x 7 sample lattice and predicts the field on a 61 x 61 lattice,
//! once with a tensor polynomial and once with nodal values.
//!
//!     cargo run --release --example generalize -- [system]

use koopreg::dynamics::DynamicalSystem;
use koopreg::field::{GridSpec, Representation};
use koopreg::pipeline::{generalize, RunSettings};
use koopreg::plot::contour_svg;

fn main() -> koopreg::Result<()> {
    let system = std::env::args().nth(1).unwrap_or_else(|| "nonlinear".into());
    let sys = DynamicalSystem::named(&system)?;
    let dense = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1)?;
    let sparse = sys.sample_grid(&GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 1.0)?)?;
    let reference = sys.sample_grid(&dense)?;

    for representation in [Representation::Legendre { degree: 4 }, Representation::Nodal] {
        let settings = RunSettings { representation, ..RunSettings::generalize() };
        let out = generalize(&sparse, &dense, Some(&reference), &settings, &mut |_| {})?;
        println!(
            "{system} with {representation:?}: {} samples -> {} predictions, relative MSE {:.4}% ({} iterations)",
            sparse.len(),
            out.restored.len(),
            out.report.relative_mse_pct.unwrap(),
            out.result.iterations
        );
        if representation == Representation::Nodal {
            std::fs::create_dir_all("example_out")?;
            for (i, m) in out.result.mset.fields().iter().enumerate() {
                let path = format!("example_out/generalize_m{}.svg", i + 1);
                std::fs::write(&path, contour_svg(&m.to_nodal(&dense)?, 15)?)?;
                println!("  contours of m{}: {path}", i + 1);
            }
        }
    }
    Ok(())
}
