//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use koopreg::dynamics::{gaussian_stream, DynamicalSystem, NoiseSpec, VectorFieldSamples};
use koopreg::field::{integrate, GridSpec, NodalField, Representation, ScalarField, Sites};
use koopreg::functional::{term_a, term_b, total_loss, EpsilonPolicy, MeasurementSet, Mode};
use koopreg::gradients::{
    continuous_variational_a, continuous_variational_b, grad_total, gradcheck, gradcheck_cases, gradcheck_problem,
    GradcheckCase,
};
use koopreg::metrics::{component_errors, error_histogram, HISTOGRAM_BINS};
use koopreg::optimizer::{detect_collapse, InitStrategy};
use koopreg::pipeline::{self, OrbitSettings, RunSettings};
use koopreg::reconstruct::{kef_synthesize_on, kpde_residual, reconstruct_full};
use koopreg::Error;
use num_complex::Complex64;

const SYSTEMS: [&str; 4] = ["lin-real", "lin-complex", "lin-imaginary", "nonlinear"];

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(limit: Duration, t: Instant) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.1}s", e.as_secs_f64()))
}

fn lattice(dx: f64) -> GridSpec {
    GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], dx).unwrap()
}

fn nodal(g: &GridSpec, f: impl Fn(&[f64]) -> f64) -> ScalarField {
    ScalarField::Nodal(NodalField::from_fn(g.clone(), f).unwrap())
}

fn uniform(g: &GridSpec, p: &[f64]) -> VectorFieldSamples {
    let v = (0..g.node_count()).flat_map(|_| p.to_vec()).collect();
    VectorFieldSamples::new(g.points(), v, Some(g.clone())).unwrap()
}

fn ac1() -> Outcome {
    let t = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let reps =
        [Representation::Nodal, Representation::Legendre { degree: 3 }, Representation::Rbf { centers_per_axis: 4 }];
    let cases = gradcheck_cases(&seeds, &reps, &[2, 3]);
    let (report, _) = gradcheck(&cases, 1e-6, 1e-5).map_err(|e| e.to_string())?;
    let (fast, took) = within(Duration::from_secs(120), t);
    check(
        report.passed && fast,
        format!("{} cases, max relative error {:.2e} (limit 1e-5), {took}", report.cases, report.max_rel_err),
    )
}

fn ac2() -> Outcome {
    let mut notes = Vec::new();
    for n in [2usize, 3] {
        let g = GridSpec::new(vec![-1.0; n], vec![0.25; n], vec![7; n]).unwrap();
        let m = MeasurementSet::new((0..n).map(|a| nodal(&g, move |x| x[a])).collect()).unwrap();
        let data = uniform(&g, &vec![1.0; n]);
        let loss = total_loss(&m, None, &data, 10.0, Mode::Standard, EpsilonPolicy::default()).unwrap();
        let p = reconstruct_full(&m, Sites::Grid(&g)).unwrap();
        if loss.total > 1e-12 || p.vectors().iter().any(|&v| v != 1.0) {
            return Err(format!("N={n}: loss {:.2e}", loss.total));
        }
        notes.push(format!("N={n} loss {:.1e}", loss.total));
    }
    let g = GridSpec::new(vec![0.0, 0.0], vec![0.5, 0.5], vec![5, 5]).unwrap();
    let dependent = MeasurementSet::new(vec![nodal(&g, |x| x[0] + x[1]), nodal(&g, |x| 2.0 * (x[0] + x[1]))]).unwrap();
    let singular = matches!(reconstruct_full(&dependent, Sites::Grid(&g)), Err(Error::SingularJacobian { .. }));
    let flat = MeasurementSet::new(vec![nodal(&g, |_| 3.0), nodal(&g, |x| x[1])]).unwrap();
    let collapsed = detect_collapse(&flat, 1e-4 * g.domain().volume()).unwrap() == vec![true, false];
    check(
        singular && collapsed,
        format!("{}, singular detector {singular}, collapse detector {collapsed}", notes.join(", ")),
    )
}

fn ac3() -> Outcome {
    let g = lattice(0.1);
    let mut ok = true;
    let mut parts = Vec::new();
    for name in SYSTEMS {
        let clean = DynamicalSystem::named(name).unwrap().sample_grid(&g).unwrap();
        let noisy = clean.add_noise(&NoiseSpec::new(0.1, 0.0, 7).unwrap());
        let t = Instant::now();
        let out =
            pipeline::denoise(&noisy, Some(&clean), &RunSettings::denoise(), &mut |_| {}).map_err(|e| e.to_string())?;
        let (fast, took) = within(Duration::from_secs(300), t);
        let nr = out.report.noise_reduction_pct.unwrap();
        let need = if name == "lin-imaginary" { 70.0 } else { 50.0 };
        let mut line = format!("{name} {nr:.1}% (>= {need}) {took}");
        if name == "lin-imaginary" {
            let before = component_errors(&noisy, &clean).unwrap();
            let after = component_errors(&out.restored, &clean).unwrap();
            let h = error_histogram(&before, &after, HISTOGRAM_BINS).unwrap();
            let ratio = h.std_after() / h.std_before();
            ok &= ratio < 0.4;
            line += &format!(", error std ratio {ratio:.2}");
        }
        ok &= nr >= need && fast;
        parts.push(line);
    }
    check(ok, parts.join("; "))
}

fn ac4() -> Outcome {
    let dense = lattice(0.1);
    let sparse_grid = lattice(1.0);
    let limits = [("lin-real", 1.2), ("lin-complex", 16.9), ("lin-imaginary", 1.0), ("nonlinear", 6.02)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, representation) in
        [("legendre", Representation::Legendre { degree: 4 }), ("nodal", Representation::Nodal)]
    {
        for (name, limit) in limits {
            let sys = DynamicalSystem::named(name).unwrap();
            let sparse = sys.sample_grid(&sparse_grid).unwrap();
            let clean = sys.sample_grid(&dense).unwrap();
            let settings = RunSettings { representation, ..RunSettings::generalize() };
            let t = Instant::now();
            let out = pipeline::generalize(&sparse, &dense, Some(&clean), &settings, &mut |_| {})
                .map_err(|e| e.to_string())?;
            let (fast, took) = within(Duration::from_secs(300), t);
            let mse = out.report.relative_mse_pct.unwrap();
            ok &= mse <= limit && fast;
            parts.push(format!("{label}/{name} {mse:.3}% (<= {limit}) {took}"));
        }
    }
    check(ok, parts.join("; "))
}

fn ac5() -> Outcome {
    let t = Instant::now();
    let seg =
        pipeline::planar_segment(&DynamicalSystem::lorenz(), &OrbitSettings::default()).map_err(|e| e.to_string())?;
    let out = pipeline::reduce(&seg.segment, &RunSettings::reduce(), &mut |_| {}).map_err(|e| e.to_string())?;
    let (fast, took) = within(Duration::from_secs(300), t);
    let r = &out.report;
    let (mse, unit, cos2) = (r.relative_mse_pct.unwrap(), r.unit_residual_rms.unwrap(), r.mean_cos2.unwrap());
    check(
        mse <= 5.0 && unit <= 0.1 && cos2 <= 0.02 && fast,
        format!(
            "window at {} (planarity {:.4}), MSE {mse:.2e}% (<= 5), unit rms {unit:.2e} (<= 0.1), mean cos2 {cos2:.2e} (<= 0.02), {took}",
            seg.start, seg.planarity
        ),
    )
}

fn ac6() -> Outcome {
    let eps = EpsilonPolicy::default();
    let mut failures = Vec::new();
    let g = GridSpec::new(vec![-1.0, -1.0], vec![0.1, 0.1], vec![21, 21]).unwrap();
    let f1 = nodal(&g, |x| x[0] + 0.3 * (x[0] * x[1]).sin() + 0.2 * x[1] * x[1]);
    let f2 = nodal(&g, |x| x[1] - 0.4 * x[0] * x[0] + 0.1 * (2.0 * x[0]).cos());

    let base = MeasurementSet::new(vec![f1.clone(), f2.clone()]).unwrap();
    let b0 = term_b(&base, eps).unwrap();
    let mut worst: f64 = 0.0;
    for c in [-50.0, 10.0, 300.0] {
        let scaled = f1.with_params(f1.params().iter().map(|v| c * v).collect()).unwrap();
        let set = MeasurementSet::new(vec![scaled.clone(), f2.clone()]).unwrap();
        worst = worst.max((term_b(&set, eps).unwrap() - b0).abs() / b0);
        let data = DynamicalSystem::named("lin-complex").unwrap().sample_grid(&g).unwrap();
        let a_before = term_a(&MeasurementSet::new(vec![f1.clone()]).unwrap(), &data).unwrap();
        let a_after = term_a(&MeasurementSet::new(vec![scaled]).unwrap(), &data).unwrap();
        if a_before == a_after {
            failures.push("term A unchanged by scaling".to_owned());
        }
    }
    if worst > 1e-6 {
        failures.push(format!("term B scale change {worst:.2e}"));
    }

    let g3 = GridSpec::new(vec![-0.5; 3], vec![0.2; 3], vec![6; 3]).unwrap();
    let f = [
        nodal(&g3, |x| x[0] + 0.3 * (x[1] * x[2]).sin()),
        nodal(&g3, |x| x[2] - 0.5 * x[0] + 0.2 * x[0] * x[0]),
        nodal(&g3, |x| x[0] * x[1] + x[2]),
    ];
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let values: Vec<f64> = orders
        .iter()
        .map(|o| term_b(&MeasurementSet::new(o.iter().map(|&i| f[i].clone()).collect()).unwrap(), eps).unwrap())
        .collect();
    if values.iter().any(|v| *v != values[0]) {
        failures.push(format!("term B not symmetric: {values:?}"));
    }

    let orth = MeasurementSet::new(vec![nodal(&g, |x| x[0]), nodal(&g, |x| x[1])]).unwrap();
    let b_zero =
        (0..2).all(|i| continuous_variational_b(&orth, i, eps).unwrap().values().iter().all(|v| v.abs() < 1e-9));
    let a_zero = continuous_variational_a(&f1, &uniform(&g, &[0.0, 0.0])).unwrap().values().iter().all(|v| *v == 0.0);
    if !(a_zero && b_zero) {
        failures.push(format!("zero cases: A {a_zero}, B {b_zero}"));
    }

    let u = gaussian_stream(1, g.node_count());
    let v = gaussian_stream(2, g.node_count());
    let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| 2.5 * x - 0.75 * y).collect();
    let lin = integrate(&w, &g).unwrap() - (2.5 * integrate(&u, &g).unwrap() - 0.75 * integrate(&v, &g).unwrap());
    if lin.abs() > 1e-12 {
        failures.push(format!("integrate not linear: {lin:.2e}"));
    }

    let mut repeatable = Vec::new();
    let dense = lattice(0.2);
    let clean = DynamicalSystem::named("nonlinear").unwrap().sample_grid(&dense).unwrap();
    let spec = NoiseSpec::new(0.1, 0.0, 11).unwrap();
    repeatable.push(("noise", clean.add_noise(&spec) == clean.add_noise(&spec)));
    let noisy = clean.add_noise(&spec);
    let mut s = RunSettings::denoise();
    s.init = InitStrategy::RandomSmooth;
    s.optim.seed = 9;
    s.optim.max_iters = 300;
    let run = || pipeline::denoise(&noisy, Some(&clean), &s, &mut |_| {}).unwrap();
    repeatable.push(("denoise", run() == run()));
    let sparse = DynamicalSystem::named("lin-real").unwrap().sample_grid(&lattice(1.0)).unwrap();
    let mut gs = RunSettings::generalize();
    gs.optim.max_iters = 300;
    let gen = || pipeline::generalize(&sparse, &dense, None, &gs, &mut |_| {}).unwrap();
    repeatable.push(("generalize", gen() == gen()));
    let seg = pipeline::planar_segment(&DynamicalSystem::lorenz(), &OrbitSettings::default()).unwrap();
    let mut rs = RunSettings::reduce();
    rs.optim.max_iters = 300;
    let red = || pipeline::reduce(&seg.segment, &rs, &mut |_| {}).unwrap();
    repeatable.push(("reduce", red() == red()));
    let case = GradcheckCase { seed: 3, mode: Mode::Reduced, representation: Representation::Nodal, k: 2, n: 3 };
    let (_, p1, a1) = gradcheck_problem(&case).unwrap();
    let (_, p2, a2) = gradcheck_problem(&case).unwrap();
    repeatable.push(("gradcheck problem", p1 == p2 && a1 == a2));
    for (what, same) in &repeatable {
        if !same {
            failures.push(format!("{what} not repeatable"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "B scale change {worst:.1e}, 6 orderings identical, zero cases exact, {} seeded runs bitwise equal",
                repeatable.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

/// Coordinate `axis` plus a seeded smooth perturbation. The ramp keeps the gradient
/// away from zero; at a critical point the direction of the gradient, and with it the
/// cos^2 integrand, is not differentiable.
fn smooth(seed: u64, axis: usize) -> impl Fn(&[f64]) -> f64 {
    let c = gaussian_stream(seed, 6);
    move |x: &[f64]| {
        let bump = c[0] * x[0]
            + c[1] * x[1]
            + 0.5 * c[2] * x[0] * x[1]
            + 0.3 * (c[3] * x[0] + c[4] * x[1]).sin()
            + 0.2 * c[5] * x[1] * x[1];
        x[axis] + 0.15 * bump
    }
}

fn ac7() -> Outcome {
    let eps = EpsilonPolicy::default();
    let sys = DynamicalSystem::linear(vec![vec![0.3, 1.0], vec![-1.0, 0.2]]).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let mut err_a = Vec::new();
        let mut err_b = Vec::new();
        for dx in [0.2, 0.1, 0.05] {
            let g = GridSpec::from_bounds(&[0.5, 0.5], &[2.5, 2.5], dx).unwrap();
            let data = sys.sample_grid(&g).unwrap();
            let m1 = nodal(&g, smooth(10 * seed, 0));
            let m2 = nodal(&g, smooth(10 * seed + 1, 1));
            let set = MeasurementSet::new(vec![m1.clone(), m2]).unwrap();
            let vol = g.cell_volume();
            let interior: Vec<usize> = (0..g.node_count()).filter(|&n| g.boundary_distance(n) >= 2).collect();
            let rel = |discrete: &[f64], cont: &NodalField| {
                let (mut e, mut s): (f64, f64) = (0.0, 0.0);
                for &n in &interior {
                    e = e.max((discrete[n] / vol - cont.values()[n]).abs());
                    s = s.max(cont.values()[n].abs());
                }
                e / s
            };
            let single = MeasurementSet::new(vec![m1.clone()]).unwrap();
            let ga = grad_total(&single, None, &data, 1.0, Mode::Standard, eps).unwrap();
            err_a.push(rel(&ga.fields[0], &continuous_variational_a(&m1, &data).unwrap()));
            let gb = grad_total(&set, None, &data, 0.0, Mode::Standard, eps).unwrap();
            err_b.push(rel(&gb.fields[0], &continuous_variational_b(&set, 0, eps).unwrap()));
        }
        let mono = |e: &[f64]| e[1] < e[0] && e[2] < e[1];
        ok &= mono(&err_a) && mono(&err_b);
        let fmt = |e: &[f64]| e.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(" > ");
        parts.push(format!("seed {seed}: A {} / B {}", fmt(&err_a), fmt(&err_b)));
    }
    check(ok, parts.join("; "))
}

fn ac8() -> Outcome {
    let sys = DynamicalSystem::named("lin-imaginary").unwrap();
    let clean = sys.sample_grid(&lattice(0.1)).unwrap();
    let out = pipeline::denoise(&clean, None, &RunSettings::denoise(), &mut |_| {}).map_err(|e| e.to_string())?;
    let m = out.result.mset.field(0);
    let lambda = Complex64::new(0.0, 1.0);
    let mut means = Vec::new();
    let mut modulus: f64 = 0.0;
    for dx in [0.2, 0.1, 0.05] {
        let g = lattice(dx);
        let phi = kef_synthesize_on(m, lambda, &g).unwrap();
        modulus = phi.values().iter().fold(modulus, |w, z| w.max((z.norm() - 1.0).abs()));
        let r = kpde_residual(&phi, lambda, &sys.sample_grid(&g).unwrap()).unwrap();
        means.push(r.iter().sum::<f64>() / r.len() as f64);
    }
    check(
        means[1] < means[0] && means[2] < means[1] && modulus <= 1e-6,
        format!(
            "unit rms of m {:.1e}, mean residual {:.2e} > {:.2e} > {:.2e}, max ||Phi| - 1| {modulus:.1e}",
            out.report.unit_residual_rms.unwrap(),
            means[0],
            means[1],
            means[2]
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 8] = [
        ("AC1", "gradient check", ac1),
        ("AC2", "trivial minimizer and detectors", ac2),
        ("AC3", "denoising", ac3),
        ("AC4", "generalization", ac4),
        ("AC5", "dimensionality reduction", ac5),
        ("AC6", "invariance suite", ac6),
        ("AC7", "continuum consistency", ac7),
        ("AC8", "eigenfunction PDE link", ac8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, what, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x.eq_ignore_ascii_case(id)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(msg) => println!("{id} PASS {what}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{id} FAIL {what}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
