//! Builds eigenfunctions exp(lambda m) from a learned unit-speed measurement and
//! checks the eigenvalue equation on successively finer lattices.
//!
//!     cargo run --release --example koopman_eigenfunction

use koopreg::dynamics::DynamicalSystem;
use koopreg::field::GridSpec;
use koopreg::pipeline::{denoise, RunSettings};
use koopreg::reconstruct::{kef_synthesize_on, kpde_residual};
use num_complex::Complex64;

fn main() -> koopreg::Result<()> {
    let sys = DynamicalSystem::named("lin-imaginary")?;
    let clean = sys.sample_grid(&GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1)?)?;
    let out = denoise(&clean, None, &RunSettings::denoise(), &mut |_| {})?;
    let m = out.result.mset.field(0);
    println!("learned m1, unit residual rms {:.2e}", out.report.unit_residual_rms.unwrap());

    for lambda in [Complex64::new(0.0, 1.0), Complex64::new(-0.1, 0.5)] {
        for dx in [0.2, 0.1, 0.05] {
            let g = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], dx)?;
            let phi = kef_synthesize_on(m, lambda, &g)?;
            let r = kpde_residual(&phi, lambda, &sys.sample_grid(&g)?)?;
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let modulus =
                phi.values().iter().map(|z| z.norm()).fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
            println!(
                "lambda {lambda}: dx {dx:<5} mean residual {mean:.3e}, |Phi| in [{:.4}, {:.4}]",
                modulus.0, modulus.1
            );
        }
    }
    Ok(())
}
