//! Minimization with an adaptive penalty weight.
//!
//! Descent is L-BFGS (or steepest descent) with Armijo backtracking on the total loss.
//! The fidelity weight `alpha` is raised when progress stalls while some measurement
//! has collapsed to a near-constant, and lowered again once every field has stayed
//! non-constant for a full stall window. In reduced mode each iteration first re-solves
//! the coefficient fields by pointwise least squares, then takes a descent step in the
//! measurement parameters.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorFieldSamples;
use crate::error::{shape, Error, Result};
use crate::field::linear::gradient_map;
use crate::field::linear::{value_map, LinearMap};
use crate::field::{DomainBox, Representation, ScalarField, Sites};
use crate::functional::{fit_values, CoefficientFields, EpsilonPolicy, LossBreakdown, MeasurementSet, Mode, Objective};
use crate::gradients::random_smooth_fn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descent {
    Lbfgs,
    Steepest,
}

/// Optimizer settings. Unset fields take the documented defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub alpha0: f64,
    pub alpha_up: f64,
    pub alpha_down: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// First trial step of a line search along a steepest-descent direction.
    pub step0: f64,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub max_halvings: usize,
    pub max_iters: usize,
    pub stall_window: usize,
    pub rel_tol: f64,
    /// Variance below which a field counts as collapsed; `None` means 1e-4 x domain volume.
    pub collapse_var_tol: Option<f64>,
    pub smoothness_weight: f64,
    pub seed: u64,
    pub descent: Descent,
    pub lbfgs_memory: usize,
    pub log_stride: usize,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            alpha0: 10.0,
            alpha_up: 2.0,
            alpha_down: 0.5,
            alpha_min: 0.1,
            alpha_max: 1e4,
            step0: 1e-2,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_halvings: 30,
            max_iters: 20000,
            stall_window: 200,
            rel_tol: 1e-6,
            collapse_var_tol: None,
            smoothness_weight: 0.0,
            seed: 0,
            descent: Descent::Lbfgs,
            lbfgs_memory: 10,
            log_stride: 10,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if !(self.alpha0 > 0.0) {
            return bad("alpha0 must be positive");
        }
        if !(self.alpha_up > 1.0) {
            return bad("alpha_up must exceed 1");
        }
        if !(self.alpha_down > 0.0 && self.alpha_down < 1.0) {
            return bad("alpha_down must lie in (0, 1)");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha0 && self.alpha0 <= self.alpha_max) {
            return bad("need 0 < alpha_min <= alpha0 <= alpha_max");
        }
        if !(self.step0 > 0.0) {
            return bad("step0 must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return bad("sufficient_decrease must lie in (0, 1)");
        }
        if self.stall_window == 0 || self.max_iters == 0 {
            return bad("stall_window and max_iters must be at least 1");
        }
        if !(self.rel_tol >= 0.0) {
            return bad("rel_tol must be non-negative");
        }
        if matches!(self.collapse_var_tol, Some(t) if !(t >= 0.0)) {
            return bad("collapse_var_tol must be non-negative");
        }
        if !(self.smoothness_weight >= 0.0) {
            return bad("smoothness_weight must be non-negative");
        }
        if self.lbfgs_memory == 0 {
            return bad("lbfgs_memory must be at least 1");
        }
        EpsilonPolicy::new(self.eps)?;
        Ok(())
    }

    pub fn collapse_tol(&self, domain: &DomainBox) -> f64 {
        self.collapse_var_tol.unwrap_or(1e-4 * domain.volume())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `m_i = x_i / s_i` with `s_i` the mean of `P_i` over the data.
    CoordinateRamps,
    /// A seeded random mix of the ramps plus a smooth perturbation.
    RandomSmooth,
    /// Least-squares fit of gradients to an orthogonal frame built around `P`.
    FrameFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged,
}

/// One optimizer iteration, as written to the run log.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterRecord<'a> {
    pub iter: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub step: f64,
    #[serde(skip)]
    pub params: &'a [f64],
    #[serde(skip)]
    pub measurements: &'a MeasurementSet,
}

impl IterRecord<'_> {
    /// The current measurement fields.
    pub fn fields(&self) -> Result<MeasurementSet> {
        let nf = self.measurements.params().len();
        self.measurements.with_params(&self.params[..nf])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub mset: MeasurementSet,
    pub betas: Option<CoefficientFields>,
    pub history: Vec<LossBreakdown>,
    pub alpha_trace: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
}

impl OptResult {
    pub fn final_loss(&self) -> &LossBreakdown {
        self.history.last().expect("history is never empty")
    }
}

/// Per field: variance of its values (nodal values, or basis values on an
/// 11-per-axis lattice) below `tol`.
pub fn detect_collapse(mset: &MeasurementSet, tol: f64) -> Result<Vec<bool>> {
    mset.fields()
        .iter()
        .map(|f| {
            let vals = match f {
                ScalarField::Nodal(n) => n.values().to_vec(),
                ScalarField::Basis(_) => f.values_at(Sites::Grid(&f.sample_sites()))?,
            };
            Ok(variance(&vals) < tol)
        })
        .collect()
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Field values at the collapse-test sites.
struct CollapseProbe {
    map: Option<LinearMap>,
    k: usize,
    np: usize,
    tol: f64,
}

impl CollapseProbe {
    fn new(template: &ScalarField, k: usize, tol: f64) -> Result<Self> {
        let map = match template {
            ScalarField::Nodal(_) => None,
            ScalarField::Basis(_) => Some(value_map(template, Sites::Grid(&template.sample_sites()))?),
        };
        Ok(CollapseProbe { map, k, np: template.n_params(), tol })
    }

    fn collapsed(&self, m: &[f64]) -> bool {
        let mut buf = Vec::new();
        (0..self.k).any(|i| {
            let p = &m[i * self.np..(i + 1) * self.np];
            let v = match &self.map {
                None => p,
                Some(map) => {
                    buf.resize(map.rows(), 0.0);
                    map.apply(p, &mut buf);
                    &buf[..]
                }
            };
            variance(v) < self.tol
        })
    }
}

fn ramp_scales(data: &VectorFieldSamples) -> Vec<f64> {
    let d = data.dim();
    let n = data.len() as f64;
    (0..d)
        .map(|a| {
            let mean = (0..data.len()).map(|j| data.vector(j)[a]).sum::<f64>() / n;
            let rms = ((0..data.len()).map(|j| data.vector(j)[a].powi(2)).sum::<f64>() / n).sqrt();
            if mean.abs() > 0.1 * rms && mean.abs() > 1e-12 {
                mean
            } else {
                1.0
            }
        })
        .collect()
}

/// Initial measurement fields.
pub fn init_fields(
    template: &ScalarField,
    k: usize,
    strategy: InitStrategy,
    data: &VectorFieldSamples,
    seed: u64,
) -> Result<MeasurementSet> {
    let n = template.dim();
    if k == 0 || k > n {
        return Err(shape(format!("K = {k} measurements in {n} dimensions")));
    }
    if data.dim() != n || data.is_empty() {
        return Err(shape("data must be non-empty and match the field dimension"));
    }
    let scales = ramp_scales(data);
    let fields = match strategy {
        InitStrategy::CoordinateRamps => (0..k)
            .map(|i| {
                let s = scales[i];
                Representation::from_fn(template, move |x| x[i] / s)
            })
            .collect::<Result<Vec<_>>>()?,
        InitStrategy::RandomSmooth => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let domain = template.domain();
            (0..k)
                .map(|i| {
                    let mix: Vec<f64> = (0..n).map(|a| if a == i { 1.0 } else { rng.gen_range(-0.3..0.3) }).collect();
                    let bump = random_smooth_fn(&mut rng, &domain);
                    let s = scales.clone();
                    let amp = 0.05 * domain.half_width(i) / s[i].abs();
                    Representation::from_fn(template, move |x| {
                        (0..n).map(|a| mix[a] * x[a] / s[a]).sum::<f64>() + amp * bump(x)
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        InitStrategy::FrameFit => frame_fit(template, k, data)?,
    };
    MeasurementSet::new(fields)
}

/// Orthonormal frame `f_0 = P / |P|, f_1, ..., f_{K-1}` per data point, with the
/// complement directions chosen inside the top-`K` principal subspace of the points.
fn frame(p: &[f64], k: usize, pcs: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = p.len();
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let f0: Vec<f64> = p.iter().map(|v| v / norm).collect();
    let mut out = vec![f0.clone()];
    if k == 1 {
        return out;
    }
    let pc = |c: usize| -> Vec<f64> { (0..n).map(|a| pcs[(a, c)]).collect() };
    if n == 2 && k == 2 {
        out.push(vec![-f0[1], f0[0]]);
        return out;
    }
    if n == 3 && k == 2 {
        let normal = cross(&pc(0), &pc(1));
        let d = crate::functional::dot(&f0, &normal);
        let q: Vec<f64> = (0..3).map(|a| f0[a] - d * normal[a]).collect();
        out.push(unit(&cross(&normal, &q)));
        return out;
    }
    if n == 3 && k == 3 {
        let f1 = unit(&cross(&f0, &pc(2)));
        let f2 = cross(&f0, &f1);
        out.push(f1);
        out.push(f2);
        return out;
    }
    // General case: Gram-Schmidt of the principal directions against the frame so far.
    for c in 0..n {
        if out.len() == k {
            break;
        }
        let mut v = pc(c);
        for f in &out {
            let d = crate::functional::dot(&v, f);
            for a in 0..n {
                v[a] -= d * f[a];
            }
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-6 {
            out.push(v.iter().map(|x| x / len).collect());
        }
    }
    out
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(v: &[f64]) -> Vec<f64> {
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    v.iter().map(|x| x / len).collect()
}

/// Householder reflection whose first column is `1 / sqrt(K)` in every entry.
fn householder_ones(k: usize) -> Vec<f64> {
    let c = 1.0 / (k as f64).sqrt();
    let mut u = vec![-c; k];
    u[0] += 1.0;
    let uu: f64 = u.iter().map(|v| v * v).sum();
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] = if i == j { 1.0 } else { 0.0 } - if uu > 0.0 { 2.0 * u[i] * u[j] / uu } else { 0.0 };
        }
    }
    h
}

/// Target gradients `v_i = sqrt(K) / |P| sum_j H_ij f_j` satisfy `v_i . P = 1` and are
/// mutually orthogonal; each field is fitted to its targets by least squares.
fn frame_fit(template: &ScalarField, k: usize, data: &VectorFieldSamples) -> Result<Vec<ScalarField>> {
    let n = data.dim();
    let pts = data.points();
    let mut mean = vec![0.0; n];
    for p in pts.iter() {
        for a in 0..n {
            mean[a] += p[a] / pts.len() as f64;
        }
    }
    let centred = nalgebra::DMatrix::from_fn(pts.len(), n, |i, a| pts.get(i)[a] - mean[a]);
    let svd = centred.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| shape("principal directions unavailable"))?;
    // Columns sorted by decreasing singular value.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let pcs = nalgebra::DMatrix::from_fn(n, n, |a, c| vt[(order[c], a)]);

    let h = householder_ones(k);
    let sk = (k as f64).sqrt();
    let mut targets = vec![vec![0.0; pts.len() * n]; k];
    for j in 0..data.len() {
        let p = data.vector(j);
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let f = frame(p, k, &pcs);
        for i in 0..k {
            for (l, fl) in f.iter().enumerate() {
                for a in 0..n {
                    targets[i][j * n + a] += sk / norm * h[i * k + l] * fl[a];
                }
            }
        }
    }
    let map = gradient_map(template, Sites::Points(pts))?;
    targets.iter().map(|t| template.with_params(fit_values(&map, t)?)).collect()
}

struct Lbfgs {
    mem: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl Lbfgs {
    fn new(cap: usize) -> Self {
        Lbfgs { mem: VecDeque::with_capacity(cap), cap }
    }

    fn reset(&mut self) {
        self.mem.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.mem.len() == self.cap {
            self.mem.pop_front();
        }
        self.mem.push_back((s, y, 1.0 / sy));
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.mem.len());
        for (s, y, rho) in self.mem.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::functional::dot(a, b)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Minimizes `objective` from `init` (and `betas` in reduced mode; solved pointwise
/// when absent).
pub fn minimize(
    objective: &Objective,
    init: &MeasurementSet,
    betas: Option<&CoefficientFields>,
    config: &OptimConfig,
) -> Result<OptResult> {
    minimize_with(objective, init, betas, config, &mut |_| {})
}

/// As [`minimize`], calling `observer` after every iteration (and once for the start).
pub fn minimize_with(
    objective: &Objective,
    init: &MeasurementSet,
    betas: Option<&CoefficientFields>,
    config: &OptimConfig,
    observer: &mut dyn FnMut(&IterRecord<'_>),
) -> Result<OptResult> {
    config.validate()?;
    if init.count() != objective.k() || !init.field(0).same_layout(objective.template()) {
        return Err(shape("initial fields do not match the objective"));
    }
    let nf = objective.n_field_params();
    let reduced = objective.mode() == Mode::Reduced;
    let mut x = init.params();
    if reduced {
        match betas {
            Some(b) => x.extend(b.params()),
            None => x.extend(objective.project_betas(&objective.pointwise_betas(&x))?),
        }
    }
    if x.len() != objective.n_params() {
        return Err(shape("initial parameters do not match the objective"));
    }

    let probe =
        CollapseProbe::new(objective.template(), objective.k(), config.collapse_tol(&objective.template().domain()))?;
    let mut alpha = config.alpha0;
    let mut grad = vec![0.0; x.len()];
    let mut loss = objective.evaluate(alpha, &x, Some(&mut grad));
    let mut history = vec![loss];
    let mut alpha_trace = vec![alpha];
    observer(&IterRecord { iter: 0, loss, step: 0.0, params: &x, measurements: init });
    if !loss.is_finite() {
        return finish(objective, init, x, history, alpha_trace, Termination::Diverged, 0);
    }

    let mut lbfgs = Lbfgs::new(config.lbfgs_memory);
    let mut best = loss.total;
    let mut best_trace: Vec<f64> = vec![best];
    let mut pending_lowers = 0usize;
    let mut calm = 0usize;
    let mut last_step = config.step0;
    let mut termination = Termination::MaxIters;
    let mut iter = 0;

    while iter < config.max_iters {
        iter += 1;

        if reduced {
            let mut trial = x.clone();
            let b = objective.project_betas(&objective.pointwise_betas(&x[..nf]))?;
            trial[nf..].copy_from_slice(&b);
            let mut g = vec![0.0; x.len()];
            let l = objective.evaluate(alpha, &trial, Some(&mut g));
            if l.total <= loss.total {
                x = trial;
                grad = g;
                loss = l;
            }
        }

        // Descent step in the measurement parameters.
        let g = &grad[..nf];
        let mut dir = match config.descent {
            Descent::Lbfgs => lbfgs.direction(g),
            Descent::Steepest => g.iter().map(|v| -v).collect(),
        };
        let mut slope = dot(&dir, g);
        let mut from_memory = config.descent == Descent::Lbfgs && !lbfgs.mem.is_empty();
        if !(slope < 0.0) {
            lbfgs.reset();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, g);
            from_memory = false;
        }
        let mut accepted = None;
        if slope < 0.0 {
            loop {
                let t0 = match (from_memory, config.descent) {
                    (true, _) => 1.0,
                    (false, Descent::Lbfgs) => config.step0,
                    (false, Descent::Steepest) => (2.0 * last_step).min(1e6 * config.step0),
                };
                accepted = line_search(objective, alpha, &x, nf, &dir, slope, loss.total, t0, config);
                if accepted.is_some() || !from_memory {
                    break;
                }
                lbfgs.reset();
                dir = g.iter().map(|v| -v).collect();
                slope = dot(&dir, g);
                from_memory = false;
            }
        }
        let Some((t, trial, trial_loss, trial_grad)) = accepted else {
            // No decrease possible along the steepest direction.
            history.push(loss);
            alpha_trace.push(alpha);
            observer(&IterRecord { iter, loss, step: 0.0, params: &x, measurements: init });
            termination = Termination::Converged;
            break;
        };
        if !trial_loss.is_finite() {
            termination = Termination::Diverged;
            break;
        }
        let s: Vec<f64> = dir.iter().map(|d| t * d).collect();
        let y: Vec<f64> = trial_grad[..nf].iter().zip(g).map(|(a, b)| a - b).collect();
        lbfgs.push(s, y);
        last_step = t;
        x = trial;
        grad = trial_grad;
        loss = trial_loss;
        history.push(loss);
        alpha_trace.push(alpha);
        observer(&IterRecord { iter, loss, step: t, params: &x, measurements: init });

        best = best.min(loss.total);
        best_trace.push(best);

        let collapsed = probe.collapsed(&x[..nf]);
        if pending_lowers > 0 {
            calm = if collapsed { 0 } else { calm + 1 };
            if calm >= config.stall_window {
                let lowered = (alpha * config.alpha_down).max(config.alpha_min);
                pending_lowers -= 1;
                calm = 0;
                if lowered != alpha {
                    alpha = lowered;
                    reset_after_alpha(
                        objective,
                        alpha,
                        &x,
                        &mut grad,
                        &mut loss,
                        &mut lbfgs,
                        &mut best,
                        &mut best_trace,
                    );
                    continue;
                }
            }
        }

        let w = config.stall_window;
        if best_trace.len() > w {
            let then = best_trace[best_trace.len() - 1 - w];
            let stalled = then - best <= config.rel_tol * then.abs();
            if stalled {
                if collapsed && alpha < config.alpha_max {
                    alpha = (alpha * config.alpha_up).min(config.alpha_max);
                    pending_lowers += 1;
                    calm = 0;
                    reset_after_alpha(
                        objective,
                        alpha,
                        &x,
                        &mut grad,
                        &mut loss,
                        &mut lbfgs,
                        &mut best,
                        &mut best_trace,
                    );
                } else {
                    termination = Termination::Converged;
                    break;
                }
            }
        }
    }
    if !loss.is_finite() {
        termination = Termination::Diverged;
    }
    finish(objective, init, x, history, alpha_trace, termination, iter)
}

#[allow(clippy::too_many_arguments)]
fn reset_after_alpha(
    objective: &Objective,
    alpha: f64,
    x: &[f64],
    grad: &mut [f64],
    loss: &mut LossBreakdown,
    lbfgs: &mut Lbfgs,
    best: &mut f64,
    best_trace: &mut Vec<f64>,
) {
    *loss = objective.evaluate(alpha, x, Some(grad));
    lbfgs.reset();
    *best = loss.total;
    best_trace.clear();
    best_trace.push(*best);
}

type Accepted = (f64, Vec<f64>, LossBreakdown, Vec<f64>);

/// Armijo backtracking along `dir` in the first `nf` parameters.
#[allow(clippy::too_many_arguments)]
fn line_search(
    objective: &Objective,
    alpha: f64,
    x: &[f64],
    nf: usize,
    dir: &[f64],
    slope: f64,
    f0: f64,
    t0: f64,
    config: &OptimConfig,
) -> Option<Accepted> {
    let mut t = t0;
    for _ in 0..=config.max_halvings {
        let mut trial = x.to_vec();
        axpy(t, dir, &mut trial[..nf]);
        let l = objective.evaluate(alpha, &trial, None);
        if l.total.is_finite() && l.total <= f0 + config.sufficient_decrease * t * slope && l.total < f0 {
            let mut g = vec![0.0; x.len()];
            let l = objective.evaluate(alpha, &trial, Some(&mut g));
            return Some((t, trial, l, g));
        }
        t *= config.backtrack_factor;
    }
    None
}

fn finish(
    objective: &Objective,
    init: &MeasurementSet,
    x: Vec<f64>,
    history: Vec<LossBreakdown>,
    alpha_trace: Vec<f64>,
    termination: Termination,
    iterations: usize,
) -> Result<OptResult> {
    let nf = objective.n_field_params();
    let finite = x.iter().all(|v| v.is_finite());
    let (mset, betas) = if finite {
        let mset = init.with_params(&x[..nf])?;
        let betas = match objective.mode() {
            Mode::Standard => None,
            Mode::Reduced => Some(CoefficientFields::zeros_like(&mset).with_params(&x[nf..])?),
        };
        (mset, betas)
    } else {
        (init.clone(), None)
    };
    Ok(OptResult { mset, betas, history, alpha_trace, termination, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DynamicalSystem;
    use crate::field::{GridSpec, NodalField};
    use crate::functional::{term_a, term_b, ObjectiveOptions};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(vec![0.0, 0.0], vec![0.25, 0.25], vec![n, n]).unwrap()
    }

    fn uniform(g: &GridSpec, p: &[f64]) -> VectorFieldSamples {
        let v = (0..g.node_count()).flat_map(|_| p.to_vec()).collect();
        VectorFieldSamples::new(g.points(), v, Some(g.clone())).unwrap()
    }

    fn nodal_template(g: &GridSpec) -> ScalarField {
        ScalarField::Nodal(NodalField::new(g.clone(), vec![0.0; g.node_count()]).unwrap())
    }

    #[test]
    fn ramps_hit_unit_speed() {
        let g = grid(5);
        let data = uniform(&g, &[2.0, 0.0]);
        let m = init_fields(&nodal_template(&g), 1, InitStrategy::CoordinateRamps, &data, 0).unwrap();
        assert_eq!(term_a(&m, &data).unwrap(), 0.0);
        let data = uniform(&g, &[2.0, -1.0]);
        let m = init_fields(&nodal_template(&g), 2, InitStrategy::CoordinateRamps, &data, 0).unwrap();
        assert_eq!(term_b(&m, EpsilonPolicy::default()).unwrap(), 0.0);
        assert!(init_fields(&nodal_template(&g), 3, InitStrategy::CoordinateRamps, &data, 0).is_err());
    }

    #[test]
    fn random_smooth_is_seeded() {
        let g = grid(5);
        let data = uniform(&g, &[1.0, 1.0]);
        let t = nodal_template(&g);
        let a = init_fields(&t, 2, InitStrategy::RandomSmooth, &data, 9).unwrap();
        let b = init_fields(&t, 2, InitStrategy::RandomSmooth, &data, 9).unwrap();
        let c = init_fields(&t, 2, InitStrategy::RandomSmooth, &data, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn frame_fit_builds_orthogonal_unit_fields_for_uniform_flow() {
        let g = grid(5);
        let data = uniform(&g, &[0.6, 0.8]);
        let m = init_fields(&nodal_template(&g), 2, InitStrategy::FrameFit, &data, 0).unwrap();
        assert!(term_a(&m, &data).unwrap() < 1e-12);
        assert!(term_b(&m, EpsilonPolicy::default()).unwrap() < 1e-12);
    }

    #[test]
    fn householder_first_column() {
        for k in 1..=4 {
            let h = householder_ones(k);
            for i in 0..k {
                assert!((h[i * k] - 1.0 / (k as f64).sqrt()).abs() < 1e-15);
                for j in 0..k {
                    let d: f64 = (0..k).map(|l| h[i * k + l] * h[j * k + l]).sum();
                    assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn collapse_detection() {
        let g = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.5).unwrap();
        let constant = ScalarField::Nodal(NodalField::new(g.clone(), vec![2.0; g.node_count()]).unwrap());
        let ramp = ScalarField::Nodal(NodalField::from_fn(g.clone(), |x| x[0]).unwrap());
        let set = MeasurementSet::new(vec![constant, ramp]).unwrap();
        assert_eq!(detect_collapse(&set, 1e-4 * 36.0).unwrap(), vec![true, false]);
    }

    #[test]
    fn exact_start_converges_immediately() {
        let g = grid(5);
        let data = uniform(&g, &[1.0, 1.0]);
        let t = nodal_template(&g);
        let m = init_fields(&t, 2, InitStrategy::CoordinateRamps, &data, 0).unwrap();
        let obj = Objective::new(&t, 2, &data, Mode::Standard, &ObjectiveOptions::default()).unwrap();
        let r = minimize(&obj, &m, None, &OptimConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.iterations <= 200);
        assert!(r.final_loss().total <= 1e-12);
    }

    #[test]
    fn descent_is_monotone_and_deterministic() {
        let g = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.5).unwrap();
        let data = DynamicalSystem::named("lin-complex").unwrap().sample_grid(&g).unwrap();
        let t = Representation::Legendre { degree: 3 }.template(&g.domain(), None).unwrap();
        let m = init_fields(&t, 2, InitStrategy::RandomSmooth, &data, 3).unwrap();
        let obj = Objective::new(&t, 2, &data, Mode::Standard, &ObjectiveOptions::default()).unwrap();
        let cfg = OptimConfig { max_iters: 150, ..OptimConfig::default() };
        let a = minimize(&obj, &m, None, &cfg).unwrap();
        let b = minimize(&obj, &m, None, &cfg).unwrap();
        assert_eq!(a, b);
        for (w, al) in a.history.windows(2).zip(a.alpha_trace.windows(2)) {
            if al[0] == al[1] {
                assert!(w[1].total <= w[0].total);
            }
        }
        assert!(a.final_loss().total < a.history[0].total);
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        assert!(OptimConfig { alpha_up: 1.0, ..OptimConfig::default() }.validate().is_err());
        assert!(OptimConfig { alpha_down: 1.5, ..OptimConfig::default() }.validate().is_err());
        let parsed: OptimConfig = serde_json::from_str(r#"{"alpha0": 3.0}"#).unwrap();
        assert_eq!(parsed.alpha0, 3.0);
        assert_eq!(parsed.stall_window, 200);
        assert!(serde_json::from_str::<OptimConfig>(r#"{"alpha": 3.0}"#).is_err());
    }
}
