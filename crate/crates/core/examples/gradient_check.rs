//! Compares analytic loss gradients with central differences on random problems.
//!
//!     cargo run --release --example gradient_check -- [seeds]

use koopreg::field::Representation;
use koopreg::gradients::{gradcheck, gradcheck_cases};

fn main() -> koopreg::Result<()> {
    let n: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count"));
    let seeds: Vec<u64> = (0..n).collect();
    let reps =
        [Representation::Nodal, Representation::Legendre { degree: 3 }, Representation::Rbf { centers_per_axis: 4 }];
    let cases = gradcheck_cases(&seeds, &reps, &[2, 3]);
    let (report, outcomes) = gradcheck(&cases, 1e-6, 1e-5)?;
    for rep in reps {
        let worst = outcomes.iter().filter(|o| o.case.representation == rep).fold(0.0f64, |m, o| m.max(o.max_rel_err));
        println!("{rep:?}: worst relative error {worst:.2e}");
    }
    println!(
        "{} cases, overall {:.2e} -> {}",
        report.cases,
        report.max_rel_err,
        if report.passed { "passed" } else { "FAILED" }
    );
    Ok(())
}
