//! Discrete loss terms.
//!
//! With `g_i = grad m_i` and data `P`:
//!
//! * `A = 1/2 sum_i  sum_x w (g_i . P - 1)^2` over the data points,
//! * `B = 1/2 sum_{i<j} sum_x w cos^2(g_i, g_j)` over the geometry sites,
//! * `C = 1/2 sum_x w |P - sum_i beta_i g_i|^2` over the data points,
//!
//! where `cos^2 = (g_i . g_j)^2 / ((|g_i|^2 + eps)(|g_j|^2 + eps))`. Grid data use the
//! cell volume as weight `w`; scattered data use domain volume / point count.
//! The total is `alpha A + B (+ C) (+ S)`, with `S` an optional curvature penalty on
//! nodal values away from the data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorFieldSamples;
use crate::error::{shape, Error, Result};
use crate::field::linear::{gradient_map, value_map, LinearMap};
use crate::field::{Factored, GridSpec, ScalarField, Sites};

/// `K` measurement fields sharing one representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    fields: Vec<ScalarField>,
}

impl MeasurementSet {
    pub fn new(fields: Vec<ScalarField>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| shape("a measurement set needs at least one field"))?;
        if fields.len() > first.dim() {
            return Err(shape(format!("{} measurements in {} dimensions", fields.len(), first.dim())));
        }
        if fields.iter().any(|f| !f.same_layout(first)) {
            return Err(shape("measurement fields must share representation and domain"));
        }
        Ok(MeasurementSet { fields })
    }

    pub fn dim(&self) -> usize {
        self.fields[0].dim()
    }

    pub fn count(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &ScalarField {
        &self.fields[i]
    }

    pub fn into_fields(self) -> Vec<ScalarField> {
        self.fields
    }

    /// All parameters, field after field.
    pub fn params(&self) -> Vec<f64> {
        self.fields.iter().flat_map(|f| f.params().iter().copied()).collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Ok(MeasurementSet { fields: split_params(&self.fields[0], self.count(), params)? })
    }
}

/// The `beta_i(x)` of the reduced reconstruction, in the representation of `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFields {
    fields: Vec<ScalarField>,
}

impl CoefficientFields {
    pub fn new(fields: Vec<ScalarField>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| shape("coefficient fields must be non-empty"))?;
        if fields.iter().any(|f| !f.same_layout(first)) {
            return Err(shape("coefficient fields must share representation and domain"));
        }
        Ok(CoefficientFields { fields })
    }

    pub fn count(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn params(&self) -> Vec<f64> {
        self.fields.iter().flat_map(|f| f.params().iter().copied()).collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Ok(CoefficientFields { fields: split_params(&self.fields[0], self.count(), params)? })
    }

    pub fn zeros_like(mset: &MeasurementSet) -> Self {
        let t = mset.field(0);
        let zero = t.with_params(vec![0.0; t.n_params()]).expect("zero parameters are valid");
        CoefficientFields { fields: vec![zero; mset.count()] }
    }

    fn check_pairs(&self, mset: &MeasurementSet) -> Result<()> {
        if self.count() != mset.count() {
            return Err(shape(format!("{} beta fields for {} measurements", self.count(), mset.count())));
        }
        if !self.fields[0].same_layout(mset.field(0)) {
            return Err(shape("beta fields must share the measurements' representation"));
        }
        Ok(())
    }
}

fn split_params(template: &ScalarField, k: usize, params: &[f64]) -> Result<Vec<ScalarField>> {
    let np = template.n_params();
    if params.len() != k * np {
        return Err(shape(format!("{} parameters for {k} fields of {np}", params.len())));
    }
    params.chunks(np).map(|c| template.with_params(c.to_vec())).collect()
}

/// Guard added to squared gradient norms in the cosine denominators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPolicy {
    pub eps: f64,
}

impl EpsilonPolicy {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(EpsilonPolicy { eps })
    }
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        EpsilonPolicy { eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Standard,
    #[serde(alias = "dr")]
    Reduced,
}

/// Loss components at one iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "termA")]
    pub term_a: f64,
    #[serde(rename = "termB")]
    pub term_b: f64,
    #[serde(rename = "termC")]
    pub term_c: f64,
    pub smoothness: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Quadrature weight of a data set: cell volume on a lattice, otherwise
/// `domain volume / count`.
pub fn data_weight(data: &VectorFieldSamples, template: &ScalarField) -> f64 {
    match data.layout() {
        Some(g) => g.cell_volume(),
        None => template.domain().volume() / data.len() as f64,
    }
}

/// Sites where term B is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// The data points, with the data quadrature weight.
    Data,
    /// The nodes of a lattice, with its cell volume.
    Grid(GridSpec),
}

/// Optional curvature penalty on nodal fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Smoothness {
    pub weight: f64,
}

/// A fully assembled loss for fixed data and field layout.
///
/// Parameters are packed as `m_1..m_K` and, in reduced mode, `beta_1..beta_K` after them.
#[derive(Clone, Debug)]
pub struct Objective {
    template: ScalarField,
    k: usize,
    dim: usize,
    mode: Mode,
    eps: f64,
    vectors: Vec<f64>,
    n_data: usize,
    w_data: f64,
    grad_data: LinearMap,
    geometry: Option<(LinearMap, usize, f64)>,
    beta_values: Option<LinearMap>,
    beta_fit: Option<Factored>,
    smooth: Option<(LinearMap, f64)>,
}

#[derive(Clone, Debug)]
pub struct ObjectiveOptions {
    pub eps: EpsilonPolicy,
    pub geometry: Geometry,
    pub smoothness: Option<Smoothness>,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        ObjectiveOptions { eps: EpsilonPolicy::default(), geometry: Geometry::Data, smoothness: None }
    }
}

impl Objective {
    pub fn new(
        template: &ScalarField,
        k: usize,
        data: &VectorFieldSamples,
        mode: Mode,
        options: &ObjectiveOptions,
    ) -> Result<Self> {
        let dim = template.dim();
        if data.dim() != dim {
            return Err(shape("data and fields differ in dimension"));
        }
        if k == 0 || k > dim {
            return Err(shape(format!("K = {k} measurements in {dim} dimensions")));
        }
        if data.is_empty() {
            return Err(shape("no data samples"));
        }
        let sites = Sites::Points(data.points());
        let grad_data = gradient_map(template, sites)?;
        let geometry = match &options.geometry {
            Geometry::Data => None,
            Geometry::Grid(g) => Some((gradient_map(template, Sites::Grid(g))?, g.node_count(), g.cell_volume())),
        };
        let beta_values = match mode {
            Mode::Standard => None,
            Mode::Reduced => Some(value_map(template, sites)?),
        };
        let beta_fit = beta_values.as_ref().and_then(dense_factor);
        let smooth = match (&options.smoothness, template) {
            (Some(s), ScalarField::Nodal(f)) if s.weight > 0.0 => {
                Some((curvature_map(f.grid(), data)?, s.weight * f.grid().cell_volume()))
            }
            _ => None,
        };
        Ok(Objective {
            template: template.clone(),
            k,
            dim,
            mode,
            eps: options.eps.eps,
            vectors: data.vectors().to_vec(),
            n_data: data.len(),
            w_data: data_weight(data, template),
            grad_data,
            geometry,
            beta_values,
            beta_fit,
            smooth,
        })
    }

    pub fn template(&self) -> &ScalarField {
        &self.template
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn data_weight(&self) -> f64 {
        self.w_data
    }

    pub fn params_per_field(&self) -> usize {
        self.template.n_params()
    }

    /// Number of `m` parameters.
    pub fn n_field_params(&self) -> usize {
        self.k * self.params_per_field()
    }

    pub fn n_params(&self) -> usize {
        match self.mode {
            Mode::Standard => self.n_field_params(),
            Mode::Reduced => 2 * self.n_field_params(),
        }
    }

    /// Gradients at the data points, site-major: `[site][field][axis]`.
    pub fn data_gradients(&self, m_params: &[f64]) -> Vec<f64> {
        apply_fields(&self.grad_data, self.k, self.dim, self.n_data, m_params)
    }

    /// Loss and, when `grad` is given, its exact gradient (overwritten).
    pub fn evaluate(&self, alpha: f64, params: &[f64], grad: Option<&mut [f64]>) -> LossBreakdown {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        let (k, dim, np) = (self.k, self.dim, self.params_per_field());
        let nf = self.n_field_params();
        let (m, beta) = params.split_at(nf);
        let want = grad.is_some();

        let gd = self.data_gradients(m);
        let bd = self.beta_values.as_ref().map(|map| apply_values(map, k, self.n_data, beta));
        let w = self.w_data;

        // Per data point: A, C and their derivatives with respect to g and beta values.
        let mut d_gd = if want { vec![0.0; gd.len()] } else { Vec::new() };
        let mut d_bd = if want && bd.is_some() { vec![0.0; k * self.n_data] } else { Vec::new() };
        let per_site: Vec<(f64, f64)> = {
            let vectors = &self.vectors;
            let bd = bd.as_deref();
            let kernel = |j: usize, dg: Option<&mut [f64]>, db: Option<&mut [f64]>| -> (f64, f64) {
                let p = &vectors[j * dim..(j + 1) * dim];
                let g = &gd[j * k * dim..(j + 1) * k * dim];
                let mut a = 0.0;
                let mut dg = dg;
                for i in 0..k {
                    let gi = &g[i * dim..(i + 1) * dim];
                    let r = dot(gi, p) - 1.0;
                    a += r * r;
                    if let Some(dg) = dg.as_deref_mut() {
                        for ax in 0..dim {
                            dg[i * dim + ax] = alpha * w * r * p[ax];
                        }
                    }
                }
                let mut c = 0.0;
                if let Some(b) = bd {
                    let b = &b[j * k..(j + 1) * k];
                    let mut res = p.to_vec();
                    for i in 0..k {
                        for ax in 0..dim {
                            res[ax] -= b[i] * g[i * dim + ax];
                        }
                    }
                    c = dot(&res, &res);
                    if let Some(dg) = dg.as_deref_mut() {
                        for i in 0..k {
                            for ax in 0..dim {
                                dg[i * dim + ax] -= w * b[i] * res[ax];
                            }
                        }
                    }
                    if let Some(db) = db {
                        for i in 0..k {
                            db[i] = -w * dot(&g[i * dim..(i + 1) * dim], &res);
                        }
                    }
                }
                (0.5 * w * a, 0.5 * w * c)
            };
            if want {
                if d_bd.is_empty() {
                    d_gd.par_chunks_mut(k * dim).enumerate().map(|(j, dg)| kernel(j, Some(dg), None)).collect()
                } else {
                    d_gd.par_chunks_mut(k * dim)
                        .zip(d_bd.par_chunks_mut(k))
                        .enumerate()
                        .map(|(j, (dg, db))| kernel(j, Some(dg), Some(db)))
                        .collect()
                }
            } else {
                (0..self.n_data).into_par_iter().map(|j| kernel(j, None, None)).collect()
            }
        };
        let term_a: f64 = per_site.iter().map(|s| s.0).sum();
        let term_c: f64 = per_site.iter().map(|s| s.1).sum();

        // Term B, on the data points or on its own lattice.
        let mut term_b = 0.0;
        let mut d_gg = Vec::new();
        if k >= 2 {
            let (gg_owned, ns, wg) = match &self.geometry {
                None => (None, self.n_data, w),
                Some((map, n, wg)) => (Some(apply_fields(map, k, dim, *n, m)), *n, *wg),
            };
            let gg = gg_owned.as_deref().unwrap_or(&gd);
            let eps = self.eps;
            let kernel = |j: usize, dg: Option<&mut [f64]>| -> f64 {
                let g = &gg[j * k * dim..(j + 1) * k * dim];
                cos2_site(g, k, dim, eps, 0.5 * wg, dg)
            };
            let per: Vec<f64> = if want {
                d_gg = vec![0.0; ns * k * dim];
                d_gg.par_chunks_mut(k * dim).enumerate().map(|(j, dg)| kernel(j, Some(dg))).collect()
            } else {
                (0..ns).into_par_iter().map(|j| kernel(j, None)).collect()
            };
            term_b = 0.5 * wg * per.iter().sum::<f64>();
            if self.geometry.is_none() && want {
                for (a, b) in d_gd.iter_mut().zip(&d_gg) {
                    *a += b;
                }
                d_gg.clear();
            }
        }

        // Curvature penalty.
        let mut smoothness = 0.0;
        let mut smooth_terms = Vec::new();
        if let Some((map, ws)) = &self.smooth {
            let mut tmp = vec![0.0; map.rows()];
            for i in 0..k {
                map.apply(&m[i * np..(i + 1) * np], &mut tmp);
                smoothness += 0.5 * ws * tmp.iter().map(|v| v * v).sum::<f64>();
                if want {
                    smooth_terms.push(tmp.iter().map(|v| ws * v).collect::<Vec<f64>>());
                }
            }
        }

        let total = alpha * term_a + term_b + term_c + smoothness;

        if let Some(grad) = grad {
            grad.fill(0.0);
            let (gm, gbeta) = grad.split_at_mut(nf);
            scatter_fields(&self.grad_data, k, dim, &d_gd, gm);
            if !d_gg.is_empty() {
                let (map, n, _) = self.geometry.as_ref().expect("geometry gradients imply a geometry map");
                debug_assert_eq!(d_gg.len(), n * k * dim);
                scatter_fields(map, k, dim, &d_gg, gm);
            }
            if let Some((map, _)) = &self.smooth {
                for (i, t) in smooth_terms.iter().enumerate() {
                    map.apply_t_add(t, &mut gm[i * np..(i + 1) * np]);
                }
            }
            if let Some(map) = &self.beta_values {
                let mut col = vec![0.0; self.n_data];
                for i in 0..k {
                    for j in 0..self.n_data {
                        col[j] = d_bd[j * k + i];
                    }
                    map.apply_t_add(&col, &mut gbeta[i * np..(i + 1) * np]);
                }
            }
        }

        LossBreakdown { term_a, term_b, term_c, smoothness, alpha, total }
    }

    /// Pointwise ridge least-squares `beta(x) = argmin |P - sum beta_i g_i|^2` at the data
    /// points, returned site-major `[site][field]`.
    pub fn pointwise_betas(&self, m_params: &[f64]) -> Vec<f64> {
        let gd = self.data_gradients(m_params);
        pointwise_betas(&gd, &self.vectors, self.k, self.dim, self.eps)
    }

    /// Beta parameters whose values at the data points best match `values` (site-major).
    pub fn project_betas(&self, values: &[f64]) -> Result<Vec<f64>> {
        let map =
            self.beta_values.as_ref().ok_or_else(|| Error::Config("beta projection requires reduced mode".into()))?;
        let np = self.params_per_field();
        let mut out = vec![0.0; self.k * np];
        for i in 0..self.k {
            let target: Vec<f64> = (0..self.n_data).map(|j| values[j * self.k + i]).collect();
            let q = fit_with(map, self.beta_fit.as_ref(), &target)?;
            out[i * np..(i + 1) * np].copy_from_slice(&q);
        }
        Ok(out)
    }
}

/// Per-site pairwise cos^2 sum; writes `scale * d(sum cos^2)/dg` into `dg` when given.
fn cos2_site(g: &[f64], k: usize, dim: usize, eps: f64, scale: f64, dg: Option<&mut [f64]>) -> f64 {
    let norms: Vec<f64> = (0..k).map(|i| dot(&g[i * dim..(i + 1) * dim], &g[i * dim..(i + 1) * dim]) + eps).collect();
    // Pair terms are summed in sorted order so the result does not depend on field order.
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    let mut dg = dg;
    for i in 0..k {
        for j in i + 1..k {
            let gi = &g[i * dim..(i + 1) * dim];
            let gj = &g[j * dim..(j + 1) * dim];
            let d = dot(gi, gj);
            let (ni, nj) = (norms[i], norms[j]);
            pairs.push(d * d / (ni * nj));
            if let Some(dg) = dg.as_deref_mut() {
                let c1 = 2.0 * d / (ni * nj);
                let ci = 2.0 * d * d / (ni * ni * nj);
                let cj = 2.0 * d * d / (ni * nj * nj);
                for ax in 0..dim {
                    dg[i * dim + ax] += scale * (c1 * gj[ax] - ci * gi[ax]);
                    dg[j * dim + ax] += scale * (c1 * gi[ax] - cj * gj[ax]);
                }
            }
        }
    }
    pairs.sort_unstable_by(f64::total_cmp);
    pairs.iter().sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies `map` to each of `k` fields and interleaves the results site-major.
pub(crate) fn apply_fields(map: &LinearMap, k: usize, dim: usize, n: usize, params: &[f64]) -> Vec<f64> {
    let np = map.cols();
    let mut out = vec![0.0; n * k * dim];
    let mut tmp = vec![0.0; n * dim];
    for i in 0..k {
        map.apply(&params[i * np..(i + 1) * np], &mut tmp);
        for j in 0..n {
            out[(j * k + i) * dim..(j * k + i + 1) * dim].copy_from_slice(&tmp[j * dim..(j + 1) * dim]);
        }
    }
    out
}

fn apply_values(map: &LinearMap, k: usize, n: usize, params: &[f64]) -> Vec<f64> {
    apply_fields(map, k, 1, n, params)
}

/// Adds `map^T` of site-major per-field data into the packed parameter gradient.
fn scatter_fields(map: &LinearMap, k: usize, dim: usize, site_major: &[f64], out: &mut [f64]) {
    let np = map.cols();
    let n = map.rows() / dim;
    let mut tmp = vec![0.0; n * dim];
    for i in 0..k {
        for j in 0..n {
            tmp[j * dim..(j + 1) * dim].copy_from_slice(&site_major[(j * k + i) * dim..(j * k + i + 1) * dim]);
        }
        map.apply_t_add(&tmp, &mut out[i * np..(i + 1) * np]);
    }
}

/// Ridge-regularized normal equations per site.
pub(crate) fn pointwise_betas(g: &[f64], vectors: &[f64], k: usize, dim: usize, eps: f64) -> Vec<f64> {
    let n = vectors.len() / dim;
    let mut out = vec![0.0; n * k];
    out.par_chunks_mut(k).enumerate().for_each(|(j, b)| {
        let gs = &g[j * k * dim..(j + 1) * k * dim];
        let p = &vectors[j * dim..(j + 1) * dim];
        let gram = nalgebra::DMatrix::from_fn(k, k, |a, c| {
            dot(&gs[a * dim..(a + 1) * dim], &gs[c * dim..(c + 1) * dim]) + if a == c { eps } else { 0.0 }
        });
        let rhs = nalgebra::DVector::from_fn(k, |a, _| dot(&gs[a * dim..(a + 1) * dim], p));
        let sol = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .unwrap_or_else(|| nalgebra::DVector::zeros(k));
        b.copy_from_slice(sol.as_slice());
    });
    out
}

/// Parameter counts up to this size use a dense factorization.
const DENSE_FIT_COLS: usize = 2000;

fn dense_matrix(map: &LinearMap) -> nalgebra::DMatrix<f64> {
    let mut a = nalgebra::DMatrix::<f64>::zeros(map.rows(), map.cols());
    for r in 0..map.rows() {
        for (c, v) in map.row(r) {
            a[(r, c)] += v;
        }
    }
    a
}

fn dense_factor(map: &LinearMap) -> Option<Factored> {
    (map.cols() <= DENSE_FIT_COLS).then(|| Factored::new(dense_matrix(map)))
}

fn fit_with(map: &LinearMap, dense: Option<&Factored>, target: &[f64]) -> Result<Vec<f64>> {
    match dense {
        Some(f) => f.solve(&nalgebra::DVector::from_column_slice(target)),
        None => Ok(crate::field::linear::cgls(map, target, 2000, 1e-12)),
    }
}

/// Parameters `q` minimizing `|map q - target|`. Dense least squares for small
/// parameter counts, otherwise CGLS from zero (which tends to the minimum-norm solution).
pub(crate) fn fit_values(map: &LinearMap, target: &[f64]) -> Result<Vec<f64>> {
    fit_with(map, dense_factor(map).as_ref(), target)
}

/// Second differences along every axis at nodes with a full 3-point stencil that are
/// not data points.
fn curvature_map(grid: &GridSpec, data: &VectorFieldSamples) -> Result<LinearMap> {
    let mut is_data = vec![false; grid.node_count()];
    for p in data.points().iter() {
        if let Some(n) = grid.locate(p) {
            is_data[n] = true;
        }
    }
    let strides = grid.strides();
    let mut rows = Vec::new();
    for n in 0..grid.node_count() {
        if is_data[n] {
            continue;
        }
        let idx = grid.multi_index(n);
        for a in 0..grid.dim() {
            if idx[a] == 0 || idx[a] + 1 == grid.counts()[a] {
                continue;
            }
            let h2 = grid.spacing()[a] * grid.spacing()[a];
            let s = strides[a];
            rows.push(vec![(n - s, 1.0 / h2), (n, -2.0 / h2), (n + s, 1.0 / h2)]);
        }
    }
    Ok(LinearMap::from_rows(grid.node_count(), rows))
}

fn default_objective(
    mset: &MeasurementSet,
    data: &VectorFieldSamples,
    mode: Mode,
    eps: EpsilonPolicy,
) -> Result<Objective> {
    let options = ObjectiveOptions { eps, geometry: Geometry::Data, smoothness: None };
    Objective::new(mset.field(0), mset.count(), data, mode, &options)
}

/// Term A of `mset` against `data`.
pub fn term_a(mset: &MeasurementSet, data: &VectorFieldSamples) -> Result<f64> {
    let obj = default_objective(mset, data, Mode::Standard, EpsilonPolicy::default())?;
    Ok(obj.evaluate(1.0, &mset.params(), None).term_a)
}

/// Term B on the field's own sample lattice (the grid of a nodal field, an
/// 11-per-axis lattice for basis fields).
pub fn term_b(mset: &MeasurementSet, eps: EpsilonPolicy) -> Result<f64> {
    let grid = mset.field(0).sample_sites();
    let g = mset.fields().iter().map(|f| f.gradient(Sites::Grid(&grid))).collect::<Result<Vec<_>>>()?;
    let (k, dim) = (mset.count(), mset.dim());
    let mut site = vec![0.0; k * dim];
    let mut sum = 0.0;
    for j in 0..grid.node_count() {
        for i in 0..k {
            site[i * dim..(i + 1) * dim].copy_from_slice(g[i].get(j));
        }
        sum += cos2_site(&site, k, dim, eps.eps, 0.0, None);
    }
    Ok(0.5 * grid.cell_volume() * sum)
}

/// Term C of the reduced reconstruction.
pub fn term_c(
    mset: &MeasurementSet,
    betas: &CoefficientFields,
    data: &VectorFieldSamples,
    eps: EpsilonPolicy,
) -> Result<f64> {
    betas.check_pairs(mset)?;
    let obj = default_objective(mset, data, Mode::Reduced, eps)?;
    let params = [mset.params(), betas.params()].concat();
    Ok(obj.evaluate(1.0, &params, None).term_c)
}

/// All terms with term B on the data points.
pub fn total_loss(
    mset: &MeasurementSet,
    betas: Option<&CoefficientFields>,
    data: &VectorFieldSamples,
    alpha: f64,
    mode: Mode,
    eps: EpsilonPolicy,
) -> Result<LossBreakdown> {
    let obj = default_objective(mset, data, mode, eps)?;
    let params = match mode {
        Mode::Standard => mset.params(),
        Mode::Reduced => {
            let b = betas.ok_or_else(|| Error::Config("reduced mode needs beta fields".into()))?;
            b.check_pairs(mset)?;
            [mset.params(), b.params()].concat()
        }
    };
    Ok(obj.evaluate(alpha, &params, None))
}
