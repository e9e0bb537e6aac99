//! Represents a nearly planar piece of a Lorenz orbit with two measurements and
//! coefficient fields, then compares against a full-rank fit.
//!
//!     cargo run --release --example lorenz_reduction

use koopreg::dynamics::DynamicalSystem;
use koopreg::metrics::unit_speeds;
use koopreg::pipeline::{planar_segment, reduce, OrbitSettings, RunSettings};
use koopreg::plot::{trace_svg, Trace};

fn main() -> koopreg::Result<()> {
    let seg = planar_segment(&DynamicalSystem::lorenz(), &OrbitSettings::default())?;
    println!("segment: {} states from index {}, planarity {:.4}", seg.segment.len(), seg.start, seg.planarity);

    for k in [2, 3] {
        let settings = RunSettings { k: Some(k), ..RunSettings::reduce() };
        let out = reduce(&seg.segment, &settings, &mut |_| {})?;
        let r = &out.report;
        println!(
            "K = {k}: relative MSE {:.2e}%, unit residual rms {:.2e}, mean cos^2 {:.2e}, {:?} after {} iterations",
            r.relative_mse_pct.unwrap(),
            r.unit_residual_rms.unwrap(),
            r.mean_cos2.unwrap(),
            out.result.termination,
            out.result.iterations
        );
        if k == 2 {
            let speeds = unit_speeds(&out.result.mset, &seg.segment)?;
            let svg =
                trace_svg(&[Trace { values: &speeds[0], color: "blue" }, Trace { values: &speeds[1], color: "red" }])?;
            std::fs::create_dir_all("example_out")?;
            std::fs::write("example_out/lorenz_unit_speed.svg", svg)?;
            println!("  unit speeds along the segment: example_out/lorenz_unit_speed.svg");
        }
    }
    Ok(())
}
