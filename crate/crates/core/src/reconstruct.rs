//! Vector-field reconstruction from learned measurements, and eigenfunction synthesis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorFieldSamples;
use crate::error::{shape, Error, Result};
use crate::field::linear::gradient_map;
use crate::field::{GridSpec, NodalField, Point, PointSet, ScalarField, Sites};
use crate::functional::{
    apply_fields, CoefficientFields, EpsilonPolicy, Geometry, MeasurementSet, Mode, Objective, ObjectiveOptions,
};

/// Jacobian solves above this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e8;

/// Rows are the measurement gradients at `point`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianSample {
    pub point: Point,
    pub matrix: DMatrix<f64>,
}

fn owned_points(at: Sites<'_>) -> PointSet {
    match at {
        Sites::Grid(g) => g.points(),
        Sites::Points(p) => p.clone(),
    }
}

fn layout_of(at: Sites<'_>) -> Option<GridSpec> {
    match at {
        Sites::Grid(g) => Some(g.clone()),
        Sites::Points(_) => None,
    }
}

/// Site-major gradients `[site][field][axis]` of all fields.
fn site_gradients(mset: &MeasurementSet, at: Sites<'_>) -> Result<Vec<f64>> {
    if at.dim() != mset.dim() {
        return Err(shape("sites do not match the field dimension"));
    }
    let map = gradient_map(mset.field(0), at)?;
    Ok(apply_fields(&map, mset.count(), mset.dim(), at.len(), &mset.params()))
}

pub fn jacobian_samples(mset: &MeasurementSet, at: Sites<'_>) -> Result<Vec<JacobianSample>> {
    let (k, n) = (mset.count(), mset.dim());
    let g = site_gradients(mset, at)?;
    let pts = owned_points(at);
    Ok((0..pts.len())
        .map(|j| JacobianSample {
            point: Point::new(pts.get(j).to_vec()).expect("lattice and sample points are finite"),
            matrix: DMatrix::from_row_slice(k, n, &g[j * k * n..(j + 1) * k * n]),
        })
        .collect())
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.singular_values();
    let max = s.max();
    let min = s.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves `J(x) P = 1` at every site.
pub fn reconstruct_full(mset: &MeasurementSet, at: Sites<'_>) -> Result<VectorFieldSamples> {
    Ok(reconstruct_full_with_condition(mset, at)?.0)
}

/// As [`reconstruct_full`], also returning the per-site condition numbers.
pub fn reconstruct_full_with_condition(mset: &MeasurementSet, at: Sites<'_>) -> Result<(VectorFieldSamples, Vec<f64>)> {
    let (k, n) = (mset.count(), mset.dim());
    if k != n {
        return Err(Error::Rank { k, n });
    }
    let g = site_gradients(mset, at)?;
    let pts = owned_points(at);
    let solved: Vec<Result<(Vec<f64>, f64)>> = (0..pts.len())
        .into_par_iter()
        .map(|j| {
            let jac = DMatrix::from_row_slice(n, n, &g[j * n * n..(j + 1) * n * n]);
            let cond = condition_number(&jac);
            let singular = || Error::SingularJacobian { point: pts.get(j).to_vec(), condition: cond };
            if !(cond <= MAX_CONDITION) {
                return Err(singular());
            }
            let p = jac.lu().solve(&DVector::from_element(n, 1.0)).ok_or_else(singular)?;
            Ok((p.as_slice().to_vec(), cond))
        })
        .collect();
    let mut vectors = Vec::with_capacity(pts.len() * n);
    let mut conds = Vec::with_capacity(pts.len());
    for r in solved {
        let (p, c) = r?;
        vectors.extend(p);
        conds.push(c);
    }
    Ok((VectorFieldSamples::new(pts, vectors, layout_of(at))?, conds))
}

/// Pointwise ridge least-squares coefficients at the data points, stored in the
/// representation of `mset`.
pub fn solve_betas(mset: &MeasurementSet, data: &VectorFieldSamples, eps: EpsilonPolicy) -> Result<CoefficientFields> {
    let options = ObjectiveOptions { eps, geometry: Geometry::Data, smoothness: None };
    let obj = Objective::new(mset.field(0), mset.count(), data, Mode::Reduced, &options)?;
    let m = mset.params();
    let b = obj.project_betas(&obj.pointwise_betas(&m))?;
    CoefficientFields::zeros_like(mset).with_params(&b)
}

/// `P(x) = sum_i beta_i(x) grad m_i(x)`.
pub fn reconstruct_reduced(
    mset: &MeasurementSet,
    betas: &CoefficientFields,
    at: Sites<'_>,
) -> Result<VectorFieldSamples> {
    let (k, n) = (mset.count(), mset.dim());
    if betas.count() != k || !betas.fields()[0].same_layout(mset.field(0)) {
        return Err(shape("coefficient fields do not match the measurements"));
    }
    let g = site_gradients(mset, at)?;
    let b: Vec<Vec<f64>> = betas.fields().iter().map(|f| f.values_at(at)).collect::<Result<_>>()?;
    let pts = owned_points(at);
    let mut vectors = vec![0.0; pts.len() * n];
    for j in 0..pts.len() {
        for i in 0..k {
            for a in 0..n {
                vectors[j * n + a] += b[i][j] * g[(j * k + i) * n + a];
            }
        }
    }
    VectorFieldSamples::new(pts, vectors, layout_of(at))
}

/// Eigenvalue and the index of the measurement it is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KefSpec {
    pub lambda: Complex64,
    pub source: usize,
}

/// Complex nodal values on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(shape("one complex value per node expected"));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn re(&self) -> NodalField {
        NodalField::new(self.grid.clone(), self.values.iter().map(|c| c.re).collect()).expect("same grid")
    }

    pub fn im(&self) -> NodalField {
        NodalField::new(self.grid.clone(), self.values.iter().map(|c| c.im).collect()).expect("same grid")
    }
}

/// `exp(lambda m)` on the sample set of `mset.field(spec.source)`.
pub fn kef_synthesize(mset: &MeasurementSet, spec: &KefSpec) -> Result<ComplexField> {
    if spec.source >= mset.count() {
        return Err(shape(format!("no measurement with index {}", spec.source)));
    }
    let m = mset.field(spec.source);
    kef_synthesize_on(m, spec.lambda, &m.sample_sites())
}

/// `exp(lambda m)` at the nodes of `grid`.
pub fn kef_synthesize_on(m: &ScalarField, lambda: Complex64, grid: &GridSpec) -> Result<ComplexField> {
    let vals = m.values_at(Sites::Grid(grid))?;
    ComplexField::new(grid.clone(), vals.into_iter().map(|v| (lambda * v).exp()).collect())
}

/// `|grad Phi . P - lambda Phi|` per data point, with the nodal difference stencils.
/// The data must sit on the lattice of `phi`.
pub fn kpde_residual(phi: &ComplexField, lambda: Complex64, data: &VectorFieldSamples) -> Result<Vec<f64>> {
    let grid = phi.grid();
    if data.dim() != grid.dim() {
        return Err(shape("data dimension does not match the field"));
    }
    let nodes: Vec<usize> = data
        .points()
        .iter()
        .map(|p| grid.locate(p).ok_or_else(|| Error::Domain { point: p.to_vec() }))
        .collect::<Result<_>>()?;
    let re = ScalarField::Nodal(phi.re()).gradient(Sites::Grid(grid))?;
    let im = ScalarField::Nodal(phi.im()).gradient(Sites::Grid(grid))?;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(j, &node)| {
            let p = data.vector(j);
            let dr: f64 = re.get(node).iter().zip(p).map(|(g, v)| g * v).sum();
            let di: f64 = im.get(node).iter().zip(p).map(|(g, v)| g * v).sum();
            (Complex64::new(dr, di) - lambda * phi.values[node]).norm()
        })
        .collect())
}
