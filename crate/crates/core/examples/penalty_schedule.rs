//! Starts from a constant first measurement and prints how the penalty weight
//! moves while the optimizer pulls the field out of the collapsed state.
//!
//!     cargo run --release --example penalty_schedule

use koopreg::dynamics::DynamicalSystem;
use koopreg::field::{GridSpec, Representation};
use koopreg::functional::{MeasurementSet, Mode, Objective, ObjectiveOptions};
use koopreg::optimizer::{detect_collapse, minimize_with, OptimConfig};

fn main() -> koopreg::Result<()> {
    let g = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1)?;
    let data = DynamicalSystem::named("lin-imaginary")?.sample_grid(&g)?;
    let t = Representation::Legendre { degree: 4 }.template(&g.domain(), None)?;
    let start =
        MeasurementSet::new(vec![Representation::from_fn(&t, |_| 1.0)?, Representation::from_fn(&t, |x| x[1])?])?;
    let obj = Objective::new(&t, 2, &data, Mode::Standard, &ObjectiveOptions::default())?;
    let cfg = OptimConfig { alpha0: 0.01, alpha_min: 0.01, ..OptimConfig::default() };
    let tol = cfg.collapse_tol(&g.domain());
    println!("collapsed at start: {:?}", detect_collapse(&start, tol)?);

    let mut alpha = cfg.alpha0;
    let r = minimize_with(&obj, &start, None, &cfg, &mut |rec| {
        if rec.loss.alpha != alpha {
            println!("iteration {:>6}: alpha {alpha} -> {} (total {:.3e})", rec.iter, rec.loss.alpha, rec.loss.total);
            alpha = rec.loss.alpha;
        }
    })?;
    println!(
        "{:?} after {} iterations, final loss {:.2e}, collapsed at end: {:?}",
        r.termination,
        r.iterations,
        r.final_loss().total,
        detect_collapse(&r.mset, tol)?
    );
    Ok(())
}
