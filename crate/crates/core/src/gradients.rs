//! Parameter gradients, a finite-difference oracle, and continuous variational
//! derivatives used as consistency diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorFieldSamples;
use crate::error::{shape, Error, Result};
use crate::field::{DomainBox, GridSpec, NodalField, PointSet, Representation, ScalarField};
use crate::functional::{
    dot, CoefficientFields, EpsilonPolicy, Geometry, MeasurementSet, Mode, Objective, ObjectiveOptions, Smoothness,
};

/// Loss gradient split per field, mirroring the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub fields: Vec<Vec<f64>>,
    pub betas: Option<Vec<Vec<f64>>>,
}

impl ParamGradient {
    pub fn from_packed(packed: &[f64], k: usize, per_field: usize, mode: Mode) -> Self {
        let chunk = |s: &[f64]| s.chunks(per_field).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let (m, b) = packed.split_at(k * per_field);
        ParamGradient {
            fields: chunk(m),
            betas: match mode {
                Mode::Standard => None,
                Mode::Reduced => Some(chunk(b)),
            },
        }
    }

    pub fn packed(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.fields.concat();
        if let Some(b) = &self.betas {
            out.extend(b.concat());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.packed().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exact gradient of the discrete total loss (term B on the data points).
pub fn grad_total(
    mset: &MeasurementSet,
    betas: Option<&CoefficientFields>,
    data: &VectorFieldSamples,
    alpha: f64,
    mode: Mode,
    eps: EpsilonPolicy,
) -> Result<ParamGradient> {
    let options = ObjectiveOptions { eps, ..ObjectiveOptions::default() };
    let obj = Objective::new(mset.field(0), mset.count(), data, mode, &options)?;
    let params = match mode {
        Mode::Standard => mset.params(),
        Mode::Reduced => {
            let b = betas.ok_or_else(|| Error::Config("reduced mode needs beta fields".into()))?;
            if b.count() != mset.count() {
                return Err(shape("beta and measurement counts differ"));
            }
            [mset.params(), b.params()].concat()
        }
    };
    let mut g = vec![0.0; params.len()];
    obj.evaluate(alpha, &params, Some(&mut g));
    Ok(ParamGradient::from_packed(&g, mset.count(), obj.params_per_field(), mode))
}

/// Central differences `(L(p + h e_i) - L(p - h e_i)) / 2h`, in parallel over `i`.
pub fn grad_fd_oracle<F>(loss: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let out: Vec<f64> = (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut p = params.to_vec();
            p[i] = params[i] + h;
            let up = loss(&p);
            p[i] = params[i] - h;
            let down = loss(&p);
            (up - down) / (2.0 * h)
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: 0 });
    }
    Ok(out)
}

/// `max |a - b| / max(max |b|, 1e-12)`, with the index of the worst entry.
pub fn relative_linf(a: &[f64], b: &[f64]) -> (f64, usize) {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut worst = (0.0, 0);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let e = (x - y).abs() / scale;
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

/// Values at half-nodes `n + e_a / 2` of every field's gradient, for each axis `a`.
/// Component `a` is the one-sided difference across the half-node, the others average
/// the central differences of the two neighbouring nodes.
struct Staggered<'a> {
    grid: &'a GridSpec,
    strides: Vec<usize>,
    fields: Vec<&'a [f64]>,
}

impl<'a> Staggered<'a> {
    fn new(grid: &'a GridSpec, fields: Vec<&'a [f64]>) -> Self {
        Staggered { grid, strides: grid.strides(), fields }
    }

    fn central(&self, f: &[f64], n: usize, b: usize) -> f64 {
        let s = self.strides[b];
        (f[n + s] - f[n - s]) / (2.0 * self.grid.spacing()[b])
    }

    /// Gradient of field `i` at the half-node between `n` and `n + e_a`.
    fn grad(&self, i: usize, n: usize, a: usize) -> Vec<f64> {
        let f = self.fields[i];
        let s = self.strides[a];
        (0..self.grid.dim())
            .map(|b| {
                if b == a {
                    (f[n + s] - f[n]) / self.grid.spacing()[a]
                } else {
                    0.5 * (self.central(f, n, b) + self.central(f, n + s, b))
                }
            })
            .collect()
    }

    /// `-div F` at interior node `n`, with `flux(n, a)` the axis-`a` flux at `n + e_a / 2`.
    fn neg_divergence(&self, n: usize, flux: impl Fn(usize, usize) -> f64) -> f64 {
        let mut div = 0.0;
        for a in 0..self.grid.dim() {
            let s = self.strides[a];
            div += (flux(n, a) - flux(n - s, a)) / self.grid.spacing()[a];
        }
        -div
    }
}

fn nodal_on_data_grid<'a>(m: &'a ScalarField, data: &VectorFieldSamples) -> Result<&'a NodalField> {
    match m {
        ScalarField::Nodal(f) if data.layout() == Some(f.grid()) => Ok(f),
        ScalarField::Nodal(_) => Err(shape("data must lie on the field's grid")),
        ScalarField::Basis(_) => Err(shape("continuous derivatives need a nodal field")),
    }
}

/// The continuous variational derivative `-div((grad m . P - 1) P)` of term A for one
/// field, evaluated with a staggered flux-divergence stencil. Boundary nodes are 0.
/// Comparable to the discrete gradient divided by the cell volume.
pub fn continuous_variational_a(m: &ScalarField, data: &VectorFieldSamples) -> Result<NodalField> {
    let f = nodal_on_data_grid(m, data)?;
    let grid = f.grid();
    let dim = grid.dim();
    let st = Staggered::new(grid, vec![f.values()]);
    let p = data.vectors();
    let flux = |n: usize, a: usize| {
        let s = st.strides[a];
        let ph: Vec<f64> = (0..dim).map(|b| 0.5 * (p[n * dim + b] + p[(n + s) * dim + b])).collect();
        let r = dot(&st.grad(0, n, a), &ph) - 1.0;
        r * ph[a]
    };
    interior_map(grid, |n| st.neg_divergence(n, flux))
}

/// The continuous variational derivative of term B with respect to field `i`:
/// `-div( sum_j (g_i . g_j) g_j / (n_i n_j) - (g_i . g_j)^2 g_i / (n_i^2 n_j) )` with
/// `n = |g|^2 + eps`, evaluated like [`continuous_variational_a`].
pub fn continuous_variational_b(mset: &MeasurementSet, i: usize, eps: EpsilonPolicy) -> Result<NodalField> {
    let k = mset.count();
    if k < 2 || i >= k {
        return Err(shape(format!("field index {i} in a set of {k} (need K >= 2)")));
    }
    let fields: Vec<&NodalField> = mset
        .fields()
        .iter()
        .map(|f| match f {
            ScalarField::Nodal(f) => Ok(f),
            ScalarField::Basis(_) => Err(shape("continuous derivatives need nodal fields")),
        })
        .collect::<Result<_>>()?;
    let grid = fields[0].grid();
    let st = Staggered::new(grid, fields.iter().map(|f| f.values()).collect());
    let flux = |n: usize, a: usize| {
        let gi = st.grad(i, n, a);
        let ni = dot(&gi, &gi) + eps.eps;
        let mut out = 0.0;
        for j in (0..k).filter(|&j| j != i) {
            let gj = st.grad(j, n, a);
            let nj = dot(&gj, &gj) + eps.eps;
            let d = dot(&gi, &gj);
            out += d * gj[a] / (ni * nj) - d * d * gi[a] / (ni * ni * nj);
        }
        out
    };
    interior_map(grid, |n| st.neg_divergence(n, flux))
}

fn interior_map(grid: &GridSpec, f: impl Fn(usize) -> f64 + Sync) -> Result<NodalField> {
    let values = (0..grid.node_count())
        .into_par_iter()
        .map(|n| if grid.boundary_distance(n) >= 1 { f(n) } else { 0.0 })
        .collect();
    NodalField::new(grid.clone(), values)
}

/// One randomized gradient-check problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub seed: u64,
    pub mode: Mode,
    pub representation: Representation,
    pub k: usize,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradcheckOutcome {
    pub case: GradcheckCase,
    pub max_rel_err: f64,
    pub argmax_param: usize,
    pub n_params: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub argmax_param: usize,
    pub worst_case: Option<GradcheckCase>,
    pub seeds: Vec<u64>,
    pub cases: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Smooth random function on a box: a random quadratic plus a low-frequency sine.
pub(crate) fn random_smooth_fn(rng: &mut ChaCha8Rng, domain: &DomainBox) -> impl Fn(&[f64]) -> f64 + Sync {
    let dim = domain.dim();
    let lin: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let quad: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let freq: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
    let amp = rng.gen_range(0.05..0.3);
    let c0 = rng.gen_range(-1.0..1.0);
    let center: Vec<f64> = (0..dim).map(|a| domain.center(a)).collect();
    let scale: Vec<f64> = (0..dim).map(|a| domain.half_width(a)).collect();
    move |x: &[f64]| {
        let t: Vec<f64> = (0..dim).map(|a| (x[a] - center[a]) / scale[a]).collect();
        let mut v = c0 + dot(&lin, &t);
        for a in 0..dim {
            for b in 0..dim {
                v += quad[a * dim + b] * t[a] * t[b];
            }
        }
        v + amp * (0..dim).map(|a| (freq[a] * t[a]).sin()).sum::<f64>()
    }
}

fn random_field(rng: &mut ChaCha8Rng, template: &ScalarField) -> Result<ScalarField> {
    let f = random_smooth_fn(rng, &template.domain());
    Representation::from_fn(template, f)
}

/// Builds the objective and parameters of a randomized case.
pub fn gradcheck_problem(case: &GradcheckCase) -> Result<(Objective, Vec<f64>, f64)> {
    let GradcheckCase { seed, mode, representation, k, n } = *case;
    if n < 1 || k < 1 || k > n {
        return Err(shape(format!("gradcheck needs 1 <= K <= N, got K = {k}, N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 40) ^ ((n as u64) << 48));
    let nodes = if n == 2 { 9 } else { 5 };
    let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let spacing: Vec<f64> = (0..n).map(|_| rng.gen_range(0.15..0.3)).collect();
    let grid = GridSpec::new(lo, spacing, vec![nodes; n])?;
    let domain = grid.domain();
    let template = representation.template(&domain, Some(&grid))?;
    // Vector field: random smooth components.
    let comps: Vec<_> = (0..n).map(|_| random_smooth_fn(&mut rng, &domain)).collect();
    let generalize = seed % 2 == 1;
    let points = match (&template, generalize) {
        (ScalarField::Nodal(_), false) => grid.points(),
        (ScalarField::Nodal(_), true) => {
            // Every other node: a sub-lattice.
            let sub = GridSpec::new(
                grid.mins().to_vec(),
                grid.spacing().iter().map(|h| 2.0 * h).collect(),
                vec![nodes.div_ceil(2); n],
            )?;
            sub.points()
        }
        (ScalarField::Basis(_), _) => {
            let count = 40 * n;
            let coords = (0..count * n)
                .map(|i| {
                    let a = i % n;
                    rng.gen_range(domain.lo()[a]..domain.hi()[a])
                })
                .collect();
            PointSet::new(n, coords)?
        }
    };
    let vectors = points.iter().flat_map(|x| comps.iter().map(|c| c(x)).collect::<Vec<_>>()).collect();
    let layout = GridSpec::infer(&points);
    let data = VectorFieldSamples::new(points, vectors, layout)?;
    let options = ObjectiveOptions {
        eps: EpsilonPolicy::default(),
        geometry: if generalize { Geometry::Grid(grid.clone()) } else { Geometry::Data },
        smoothness: if generalize { Some(Smoothness { weight: 0.05 }) } else { None },
    };
    let obj = Objective::new(&template, k, &data, mode, &options)?;
    let mut params = Vec::with_capacity(obj.n_params());
    let n_fields = if mode == Mode::Reduced { 2 * k } else { k };
    for _ in 0..n_fields {
        params.extend_from_slice(random_field(&mut rng, &template)?.params());
    }
    let alpha = rng.gen_range(0.5..5.0);
    Ok((obj, params, alpha))
}

/// Compares the exact gradient with the oracle on one randomized case.
pub fn gradcheck_case(case: &GradcheckCase, h: f64) -> Result<GradcheckOutcome> {
    let (obj, params, alpha) = gradcheck_problem(case)?;
    let mut exact = vec![0.0; params.len()];
    obj.evaluate(alpha, &params, Some(&mut exact));
    let fd = grad_fd_oracle(|p| obj.evaluate(alpha, p, None).total, &params, h)?;
    let (max_rel_err, argmax_param) = relative_linf(&exact, &fd);
    Ok(GradcheckOutcome { case: *case, max_rel_err, argmax_param, n_params: params.len() })
}

/// Every combination of the given seeds, both modes, the given representations,
/// `N in dims` and `1 <= K <= N`.
pub fn gradcheck_cases(seeds: &[u64], reps: &[Representation], dims: &[usize]) -> Vec<GradcheckCase> {
    let mut out = Vec::new();
    for &seed in seeds {
        for mode in [Mode::Standard, Mode::Reduced] {
            for &representation in reps {
                for &n in dims {
                    for k in 1..=n {
                        out.push(GradcheckCase { seed, mode, representation, k, n });
                    }
                }
            }
        }
    }
    out
}

pub fn gradcheck(cases: &[GradcheckCase], h: f64, tolerance: f64) -> Result<(GradcheckReport, Vec<GradcheckOutcome>)> {
    let outcomes = cases.iter().map(|c| gradcheck_case(c, h)).collect::<Result<Vec<_>>>()?;
    let worst = outcomes.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err));
    let mut seeds: Vec<u64> = cases.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let max_rel_err = worst.map_or(0.0, |w| w.max_rel_err);
    let report = GradcheckReport {
        max_rel_err,
        argmax_param: worst.map_or(0, |w| w.argmax_param),
        worst_case: worst.map(|w| w.case),
        seeds,
        cases: outcomes.len(),
        tolerance,
        passed: max_rel_err <= tolerance,
    };
    Ok((report, outcomes))
}
