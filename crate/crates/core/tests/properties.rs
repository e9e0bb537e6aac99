use koopreg::dynamics::{gaussian_stream, DynamicalSystem, NoiseSpec, VectorFieldSamples};
use koopreg::field::{integrate, GridSpec, NodalField, PointSet, ScalarField, Sites};
use koopreg::functional::{term_a, term_b, EpsilonPolicy, MeasurementSet};
use koopreg::metrics::{error_histogram, noise_reduction, orthogonality_stats, relative_mse};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = GridSpec> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.05..0.5f64, 0.05..0.5f64, 3usize..9, 3usize..9)
        .prop_map(|(x0, y0, hx, hy, nx, ny)| GridSpec::new(vec![x0, y0], vec![hx, hy], vec![nx, ny]).unwrap())
}

fn nodal(g: &GridSpec, f: impl Fn(&[f64]) -> f64) -> ScalarField {
    ScalarField::Nodal(NodalField::from_fn(g.clone(), f).unwrap())
}

fn wavy(g: &GridSpec, a: f64, b: f64) -> ScalarField {
    nodal(g, move |x| a * x[0] + b * x[1] + 0.3 * (x[0] * x[1]).sin() + 0.2 * x[1] * x[1])
}

fn samples(points: Vec<[f64; 2]>, vectors: Vec<[f64; 2]>) -> VectorFieldSamples {
    let p = PointSet::new(2, points.concat()).unwrap();
    VectorFieldSamples::new(p, vectors.concat(), None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affine_gradient_is_exact(g in grid_strategy(), c in -3.0..3.0f64, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let f = nodal(&g, |x| c + a * x[0] + b * x[1]);
        let grad = f.gradient(Sites::Grid(&g)).unwrap();
        for v in grad.iter() {
            prop_assert!((v[0] - a).abs() <= 1e-9 * (1.0 + a.abs()));
            prop_assert!((v[1] - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn integrate_is_linear(g in grid_strategy(), a in -5.0..5.0f64, b in -5.0..5.0f64, seed in 0u64..1000) {
        let n = g.node_count();
        let u = gaussian_stream(seed, n);
        let v = gaussian_stream(seed + 1, n);
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = integrate(&w, &g).unwrap();
        let rhs = a * integrate(&u, &g).unwrap() + b * integrate(&v, &g).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn interpolation_hits_nodes(g in grid_strategy(), seed in 0u64..1000) {
        let values = gaussian_stream(seed, g.node_count());
        let f = NodalField::new(g.clone(), values.clone()).unwrap();
        for (i, v) in values.iter().enumerate() {
            let p = g.node(i);
            prop_assert_eq!(f.interpolate(p.as_slice()).unwrap(), *v);
        }
    }

    #[test]
    fn linear_system_is_additive_and_homogeneous(
        m in proptest::array::uniform4(-2.0..2.0f64),
        x in proptest::array::uniform2(-5.0..5.0f64),
        y in proptest::array::uniform2(-5.0..5.0f64),
        s in -3.0..3.0f64,
    ) {
        let sys = DynamicalSystem::linear(vec![vec![m[0], m[1]], vec![m[2], m[3]]]).unwrap();
        let sum = sys.eval(&[x[0] + y[0], x[1] + y[1]]).unwrap();
        let (px, py) = (sys.eval(&x).unwrap(), sys.eval(&y).unwrap());
        let scaled = sys.eval(&[s * x[0], s * x[1]]).unwrap();
        for a in 0..2 {
            prop_assert!((sum[a] - px[a] - py[a]).abs() <= 1e-12 * (1.0 + sum[a].abs()));
            prop_assert!((scaled[a] - s * px[a]).abs() <= 1e-12 * (1.0 + scaled[a].abs()));
        }
    }

    #[test]
    fn noise_is_reproducible_and_centred(seed in any::<u64>(), std in 0.01..2.0f64) {
        let g = GridSpec::new(vec![0.0, 0.0], vec![0.1, 0.1], vec![30, 30]).unwrap();
        let clean = DynamicalSystem::named("lin-real").unwrap().sample_grid(&g).unwrap();
        let spec = NoiseSpec::new(std, 0.0, seed).unwrap();
        let a = clean.add_noise(&spec);
        let b = clean.add_noise(&spec);
        prop_assert_eq!(a.vectors(), b.vectors());
        let count = clean.vectors().len() as f64;
        let mean = a.vectors().iter().zip(clean.vectors()).map(|(x, y)| x - y).sum::<f64>() / count;
        prop_assert!(mean.abs() <= 3.0 * std / count.sqrt() * 1.5);
    }

    #[test]
    fn term_b_ignores_field_scale(g in grid_strategy(), a in 0.5..2.0f64, c in prop_oneof![-1e3..-10.0f64, 10.0..1e3f64]) {
        let eps = EpsilonPolicy::default();
        let m1 = wavy(&g, a, 1.0);
        let m2 = wavy(&g, -1.0, a);
        let set = MeasurementSet::new(vec![m1.clone(), m2.clone()]).unwrap();
        let scaled = MeasurementSet::new(vec![m1.with_params(m1.params().iter().map(|v| c * v).collect()).unwrap(), m2]).unwrap();
        let (b0, b1) = (term_b(&set, eps).unwrap(), term_b(&scaled, eps).unwrap());
        prop_assert!((b0 - b1).abs() <= 1e-6 * b0.abs().max(1e-12), "{} vs {}", b0, b1);

        let data = DynamicalSystem::named("lin-complex").unwrap().sample_grid(&g).unwrap();
        let one = |s: &MeasurementSet| MeasurementSet::new(vec![s.field(0).clone()]).unwrap();
        prop_assert!(term_a(&one(&set), &data).unwrap() != term_a(&one(&scaled), &data).unwrap());
    }

    #[test]
    fn term_b_is_symmetric(h in 0.1..0.4f64, a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let eps = EpsilonPolicy::default();
        let g = GridSpec::new(vec![-0.5; 3], vec![h; 3], vec![5; 3]).unwrap();
        let f = [
            nodal(&g, move |x| x[0] + a * x[1] + 0.3 * (x[1] * x[2]).sin()),
            nodal(&g, move |x| b * x[0] + x[2] + 0.2 * x[0] * x[0]),
            nodal(&g, |x| x[0] * x[1] + x[2]),
        ];
        let sets = [[0, 1, 2], [2, 0, 1], [1, 2, 0], [2, 1, 0]];
        let values: Vec<f64> = sets
            .iter()
            .map(|ix| term_b(&MeasurementSet::new(ix.iter().map(|&i| f[i].clone()).collect()).unwrap(), eps).unwrap())
            .collect();
        let volume = g.cell_volume() * g.node_count() as f64;
        for v in &values {
            prop_assert_eq!(*v, values[0]);
            prop_assert!(*v >= 0.0);
            prop_assert!(*v <= 0.5 * 3.0 * volume);
        }
        let (mean, max) = orthogonality_stats(&MeasurementSet::new(f.to_vec()).unwrap(), eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&mean) && (0.0..=1.0).contains(&max) && mean <= max);
    }

    #[test]
    fn relative_mse_ignores_reindexing(seed in 0u64..1000, n in 2usize..40, shift in 0usize..40) {
        let z = gaussian_stream(seed, 6 * n);
        let pts: Vec<[f64; 2]> = (0..n).map(|i| [z[6 * i], z[6 * i + 1]]).collect();
        let est: Vec<[f64; 2]> = (0..n).map(|i| [z[6 * i + 2], z[6 * i + 3]]).collect();
        let rf: Vec<[f64; 2]> = (0..n).map(|i| [z[6 * i + 4], z[6 * i + 5] + 3.0]).collect();
        let base = relative_mse(&samples(pts.clone(), est.clone()), &samples(pts.clone(), rf.clone())).unwrap();
        let rot = |v: &Vec<[f64; 2]>| { let mut v = v.clone(); v.rotate_left(shift % n); v };
        let moved = relative_mse(&samples(rot(&pts), rot(&est)), &samples(rot(&pts), rot(&rf))).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn noise_reduction_is_monotone(seed in 0u64..1000, t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let n = 30;
        let z = gaussian_stream(seed, 6 * n);
        let pts: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 0.0]).collect();
        let clean: Vec<[f64; 2]> = (0..n).map(|i| [z[2 * i], z[2 * i + 1]]).collect();
        let noisy: Vec<[f64; 2]> = (0..n).map(|i| [clean[i][0] + z[2 * n + 2 * i], clean[i][1] + z[2 * n + 2 * i + 1]]).collect();
        let blend = |t: f64| samples(pts.clone(), (0..n).map(|i| [
            clean[i][0] + t * (noisy[i][0] - clean[i][0]),
            clean[i][1] + t * (noisy[i][1] - clean[i][1]),
        ]).collect());
        let (c, nz) = (samples(pts.clone(), clean.clone()), samples(pts.clone(), noisy.clone()));
        prop_assert_eq!(noise_reduction(&nz, &c, &c).unwrap(), 100.0);
        let (r1, r2) = (noise_reduction(&nz, &c, &blend(t1)).unwrap(), noise_reduction(&nz, &c, &blend(t2)).unwrap());
        if t1 < t2 { prop_assert!(r1 >= r2); } else if t2 < t1 { prop_assert!(r2 >= r1); }
    }

    #[test]
    fn histogram_counts_every_sample(seed in 0u64..1000, n in 1usize..200, bins in 1usize..50) {
        let before = gaussian_stream(seed, n);
        let after: Vec<f64> = gaussian_stream(seed + 7, n).iter().map(|v| 0.3 * v).collect();
        let h = error_histogram(&before, &after, bins).unwrap();
        prop_assert_eq!(h.before.iter().sum::<usize>(), n);
        prop_assert_eq!(h.after.iter().sum::<usize>(), n);
        prop_assert_eq!(h.edges.len(), bins + 1);
    }
}
