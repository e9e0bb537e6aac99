//! Removes Gaussian noise from a sampled linear system and writes the overlay plot.
//!
//!     cargo run --release --example denoise -- [system] [noise_std]

use koopreg::dynamics::{DynamicalSystem, NoiseSpec};
use koopreg::field::GridSpec;
use koopreg::metrics::{component_errors, error_histogram, HISTOGRAM_BINS};
use koopreg::pipeline::{denoise, RunSettings};
use koopreg::plot::{quiver_svg, QuiverLayer, CLEAN, NOISY, RESTORED};

fn main() -> koopreg::Result<()> {
    let mut args = std::env::args().skip(1);
    let system = args.next().unwrap_or_else(|| "lin-imaginary".into());
    let std_dev: f64 = args.next().map_or(0.1, |s| s.parse().expect("noise std must be a number"));

    let grid = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1)?;
    let clean = DynamicalSystem::named(&system)?.sample_grid(&grid)?;
    let noisy = clean.add_noise(&NoiseSpec::new(std_dev, 0.0, 7)?);

    let mut iters = 0;
    let out = denoise(&noisy, Some(&clean), &RunSettings::denoise(), &mut |r| iters = r.iter)?;
    let r = &out.report;
    println!("{system}: {:?} after {iters} iterations", out.result.termination);
    println!("  noise reduction  {:.1}%", r.noise_reduction_pct.unwrap());
    println!("  relative MSE     {:.3}%", r.relative_mse_pct.unwrap());
    println!("  mean cos^2       {:.2e}", r.mean_cos2.unwrap());

    let h =
        error_histogram(&component_errors(&noisy, &clean)?, &component_errors(&out.restored, &clean)?, HISTOGRAM_BINS)?;
    println!("  error std        {:.4} -> {:.4}", h.std_before(), h.std_after());

    // A coarser subset keeps the plot readable.
    let sub = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.5)?;
    let pick = |s: &koopreg::dynamics::VectorFieldSamples| -> koopreg::Result<_> {
        let idx: Vec<usize> = sub.points().iter().map(|p| grid.locate(p).expect("sub-lattice node")).collect();
        let pts = koopreg::field::PointSet::new(2, idx.iter().flat_map(|&i| s.points().get(i).to_vec()).collect())?;
        koopreg::dynamics::VectorFieldSamples::new(pts, idx.iter().flat_map(|&i| s.vector(i).to_vec()).collect(), None)
    };
    let (n, c, rs) = (pick(&noisy)?, pick(&clean)?, pick(&out.restored)?);
    let svg = quiver_svg(&[
        QuiverLayer { samples: &n, color: NOISY },
        QuiverLayer { samples: &c, color: CLEAN },
        QuiverLayer { samples: &rs, color: RESTORED },
    ])?;
    std::fs::create_dir_all("example_out")?;
    std::fs::write("example_out/denoise_quiver.svg", svg)?;
    println!("  plot: example_out/denoise_quiver.svg");
    Ok(())
}
