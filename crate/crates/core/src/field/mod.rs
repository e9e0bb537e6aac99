//! Scalar fields over axis-aligned boxes.
//!
//! Two representations are supported:
//!
//! * [`NodalField`]: values on a rectangular lattice ([`GridSpec`]). Gradients use
//!   central differences at interior nodes and first-order one-sided differences on
//!   the boundary ring, so they are exact for affine fields.
//! * [`BasisField`]: coefficients over a smooth basis (tensor Legendre polynomials or
//!   Gaussian radial basis functions) with analytic gradients anywhere in the box.
//!
//! Quadrature is a plain node sum times the cell volume.

mod basis;
pub mod io;
pub(crate) mod linear;

pub(crate) use basis::Factored;
pub use basis::{Basis, BasisField};

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

/// Relative slack used when testing whether a point lies inside a box.
const BOX_SLACK: f64 = 1e-9;

/// A state vector `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(shape("a point needs at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(shape(format!("non-finite point coordinates {coords:?}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A flat list of points of a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(shape("point dimension must be at least 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(shape(format!("{} coordinates do not split into {dim}-dimensional points", coords.len())));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(shape("non-finite point coordinates"));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let dim = points.first().map(Point::dim).ok_or_else(|| shape("empty point list"))?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(shape("points of mixed dimension"));
            }
            coords.extend_from_slice(p);
        }
        PointSet::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.iter().map(|p| Point(p.to_vec())).collect()
    }

    /// Smallest axis-aligned box containing every point.
    pub fn bounding_box(&self) -> Result<DomainBox> {
        if self.is_empty() {
            return Err(shape("bounding box of an empty point set"));
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        DomainBox::new(lo, hi)
    }
}

/// An axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBox> for DomainBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        DomainBox::new(raw.lo, raw.hi)
    }
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(shape("box corners must be non-empty and of equal length"));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(shape("box corners must be finite"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| h <= l) {
            return Err(shape(format!("degenerate box {lo:?}..{hi:?}")));
        }
        Ok(DomainBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn center(&self, axis: usize) -> f64 {
        0.5 * (self.lo[axis] + self.hi[axis])
    }

    pub fn half_width(&self, axis: usize) -> f64 {
        0.5 * (self.hi[axis] - self.lo[axis])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|a| {
                let slack = BOX_SLACK * (self.hi[a] - self.lo[a]);
                x[a] >= self.lo[a] - slack && x[a] <= self.hi[a] + slack
            })
    }

    pub(crate) fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(shape(format!("point of dimension {} in a {}-dimensional box", x.len(), self.dim())));
        }
        if !self.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Box grown by `fraction` of its width on every side.
    pub fn padded(&self, fraction: f64) -> DomainBox {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let pad = fraction * (h - l);
                (l - pad, h + pad)
            })
            .unzip();
        DomainBox { lo, hi }
    }
}

/// Rectangular sampling lattice. Nodes are stored row-major: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    mins: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
}

#[derive(Deserialize)]
struct RawGrid {
    mins: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.mins, raw.spacing, raw.counts)
    }
}

impl GridSpec {
    pub fn new(mins: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let dim = mins.len();
        if dim == 0 || spacing.len() != dim || counts.len() != dim {
            return Err(shape("grid mins, spacing and counts must share a non-zero length"));
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(shape(format!("every axis needs at least 2 nodes, got {counts:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(shape(format!("grid spacing must be positive, got {spacing:?}")));
        }
        if mins.iter().any(|m| !m.is_finite()) {
            return Err(shape("grid origin must be finite"));
        }
        counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| shape("grid node count overflows"))?;
        Ok(GridSpec { mins, spacing, counts })
    }

    /// Lattice covering `[lo, hi]` with the same spacing `dx` on every axis.
    pub fn from_bounds(lo: &[f64], hi: &[f64], dx: f64) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(shape("box corners differ in dimension"));
        }
        if !(dx > 0.0) {
            return Err(shape(format!("spacing must be positive, got {dx}")));
        }
        let mut counts = Vec::with_capacity(lo.len());
        for (l, h) in lo.iter().zip(hi) {
            let cells = (h - l) / dx;
            let rounded = cells.round();
            if rounded < 1.0 || (cells - rounded).abs() > 1e-6 * rounded.max(1.0) {
                return Err(shape(format!("extent {l}..{h} is not a multiple of dx = {dx}")));
            }
            counts.push(rounded as usize + 1);
        }
        GridSpec::new(lo.to_vec(), vec![dx; lo.len()], counts)
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn maxs(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.coordinate(a, self.counts[a] - 1)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn domain(&self) -> DomainBox {
        DomainBox { lo: self.mins.clone(), hi: self.maxs() }
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.mins[axis] + i as f64 * self.spacing[axis]
    }

    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.counts[a + 1];
        }
        strides
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn node(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        Point(idx.iter().enumerate().map(|(a, &i)| self.coordinate(a, i)).collect())
    }

    pub fn points(&self) -> PointSet {
        let mut coords = Vec::with_capacity(self.node_count() * self.dim());
        for n in 0..self.node_count() {
            coords.extend_from_slice(&self.node(n));
        }
        PointSet { dim: self.dim(), coords }
    }

    /// Flat index of the node at `x`, if `x` sits on a node.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let t = (x[a] - self.mins[a]) / self.spacing[a];
            let r = t.round();
            if (t - r).abs() > 1e-7 || r < 0.0 || r as usize >= self.counts[a] {
                return None;
            }
            idx.push(r as usize);
        }
        Some(self.flat_index(&idx))
    }

    /// Number of nodes between node `flat` and the nearest face of the lattice.
    pub fn boundary_distance(&self, flat: usize) -> usize {
        self.multi_index(flat).iter().zip(&self.counts).map(|(&i, &c)| i.min(c - 1 - i)).min().unwrap_or(0)
    }

    /// Recognizes a full lattice listed in row-major order.
    pub fn infer(points: &PointSet) -> Option<GridSpec> {
        let dim = points.dim();
        let n = points.len();
        if n < 2 {
            return None;
        }
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for a in 0..dim {
            let mut vals: Vec<f64> = points.iter().map(|p| p[a]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * (1.0 + y.abs()));
            axes.push(vals);
        }
        let counts: Vec<usize> = axes.iter().map(Vec::len).collect();
        if counts.iter().product::<usize>() != n || counts.iter().any(|&c| c < 2) {
            return None;
        }
        let mins: Vec<f64> = axes.iter().map(|v| v[0]).collect();
        let spacing: Vec<f64> = axes.iter().map(|v| (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64).collect();
        let grid = GridSpec::new(mins, spacing, counts).ok()?;
        grid.matches(points).then_some(grid)
    }

    /// True if `points` lists the nodes in row-major order, each within `1e-7` spacings.
    pub fn matches(&self, points: &PointSet) -> bool {
        points.dim() == self.dim()
            && points.len() == self.node_count()
            && points.iter().enumerate().all(|(flat, p)| {
                let idx = self.multi_index(flat);
                (0..self.dim()).all(|a| (self.coordinate(a, idx[a]) - p[a]).abs() <= 1e-7 * self.spacing[a])
            })
    }
}

/// Values of a field on the nodes of a lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNodal")]
pub struct NodalField {
    grid: GridSpec,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNodal {
    grid: GridSpec,
    values: Vec<f64>,
}

impl TryFrom<RawNodal> for NodalField {
    type Error = Error;

    fn try_from(raw: RawNodal) -> Result<Self> {
        NodalField::new(raw.grid, raw.values)
    }
}

impl NodalField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(shape(format!("{} nodal values for a grid of {} nodes", values.len(), grid.node_count())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(shape("nodal values must be finite"));
        }
        Ok(NodalField { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(f).collect();
        NodalField::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multilinear interpolation inside the lattice box.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        self.grid.domain().check(x)?;
        let mut acc = 0.0;
        for (node, w) in linear::multilinear_weights(&self.grid, x) {
            acc += w * self.values[node];
        }
        Ok(acc)
    }
}

/// A scalar field in one of the supported representations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "representation", rename_all = "snake_case")]
pub enum ScalarField {
    Nodal(NodalField),
    Basis(BasisField),
}

/// Where to evaluate a field.
#[derive(Clone, Copy, Debug)]
pub enum Sites<'a> {
    Grid(&'a GridSpec),
    Points(&'a PointSet),
}

impl Sites<'_> {
    pub fn len(&self) -> usize {
        match self {
            Sites::Grid(g) => g.node_count(),
            Sites::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Sites::Grid(g) => g.dim(),
            Sites::Points(p) => p.dim(),
        }
    }

    pub fn to_point_set(&self) -> PointSet {
        match self {
            Sites::Grid(g) => g.points(),
            Sites::Points(p) => (*p).clone(),
        }
    }
}

/// Per-site gradient vectors, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    dim: usize,
    values: Vec<f64>,
}

impl GradientField {
    pub(crate) fn from_flat(dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len() % dim, 0);
        GradientField { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }
}

impl ScalarField {
    pub fn dim(&self) -> usize {
        match self {
            ScalarField::Nodal(f) => f.grid.dim(),
            ScalarField::Basis(f) => f.basis().dim(),
        }
    }

    /// Box on which the field is defined.
    pub fn domain(&self) -> DomainBox {
        match self {
            ScalarField::Nodal(f) => f.grid.domain(),
            ScalarField::Basis(f) => f.basis().domain().clone(),
        }
    }

    /// The optimizable parameters: nodal values or basis coefficients.
    pub fn params(&self) -> &[f64] {
        match self {
            ScalarField::Nodal(f) => &f.values,
            ScalarField::Basis(f) => f.coeffs(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Copy of this field with its parameters replaced.
    pub fn with_params(&self, params: Vec<f64>) -> Result<ScalarField> {
        match self {
            ScalarField::Nodal(f) => Ok(ScalarField::Nodal(NodalField::new(f.grid.clone(), params)?)),
            ScalarField::Basis(f) => Ok(ScalarField::Basis(BasisField::new(f.basis().clone(), params)?)),
        }
    }

    /// True when both fields share representation kind and domain, so their
    /// parameter vectors are interchangeable.
    pub fn same_layout(&self, other: &ScalarField) -> bool {
        match (self, other) {
            (ScalarField::Nodal(a), ScalarField::Nodal(b)) => a.grid == b.grid,
            (ScalarField::Basis(a), ScalarField::Basis(b)) => a.basis() == b.basis(),
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScalarField::Nodal(_) => "nodal",
            ScalarField::Basis(f) => match f.basis() {
                Basis::Legendre { .. } => "legendre",
                Basis::Rbf { .. } => "rbf",
            },
        }
    }

    /// The lattice a nodal field lives on.
    pub fn grid(&self) -> Option<&GridSpec> {
        match self {
            ScalarField::Nodal(f) => Some(&f.grid),
            ScalarField::Basis(_) => None,
        }
    }

    pub fn gradient(&self, at: Sites<'_>) -> Result<GradientField> {
        let map = linear::gradient_map(self, at)?;
        let mut out = vec![0.0; map.rows()];
        map.apply(self.params(), &mut out);
        Ok(GradientField::from_flat(self.dim(), out))
    }

    pub fn values_at(&self, at: Sites<'_>) -> Result<Vec<f64>> {
        if let (ScalarField::Nodal(f), Sites::Grid(g)) = (self, at) {
            if &f.grid == g {
                return Ok(f.values.clone());
            }
        }
        let map = linear::value_map(self, at)?;
        let mut out = vec![0.0; map.rows()];
        map.apply(self.params(), &mut out);
        Ok(out)
    }

    pub fn interpolate(&self, p: &[f64]) -> Result<f64> {
        match self {
            ScalarField::Nodal(f) => f.interpolate(p),
            ScalarField::Basis(f) => f.evaluate(p),
        }
    }

    /// Samples the field on `grid`.
    pub fn to_nodal(&self, grid: &GridSpec) -> Result<NodalField> {
        NodalField::new(grid.clone(), self.values_at(Sites::Grid(grid))?)
    }

    /// Default set of sites for statistics over the field (collapse tests, plots):
    /// the lattice for nodal fields, an 11-per-axis lattice over the box otherwise.
    pub fn sample_sites(&self) -> GridSpec {
        match self {
            ScalarField::Nodal(f) => f.grid.clone(),
            ScalarField::Basis(f) => {
                let d = f.basis().domain();
                let n = 11usize;
                let spacing = (0..d.dim()).map(|a| (d.hi()[a] - d.lo()[a]) / (n - 1) as f64).collect();
                GridSpec::new(d.lo().to_vec(), spacing, vec![n; d.dim()])
                    .expect("a non-degenerate box yields a valid lattice")
            }
        }
    }
}

/// How measurement fields are parametrized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Representation {
    /// Values on a lattice.
    Nodal,
    /// Tensor Legendre polynomials up to `degree` per axis.
    Legendre { degree: usize },
    /// Gaussians on a lattice of `centers_per_axis` centers per axis spanning the box.
    Rbf { centers_per_axis: usize },
}

impl Representation {
    /// A zero field of this kind over `domain`. Nodal fields need `grid`.
    pub fn template(&self, domain: &DomainBox, grid: Option<&GridSpec>) -> Result<ScalarField> {
        match *self {
            Representation::Nodal => {
                let g = grid.ok_or_else(|| Error::Config("a nodal representation needs a grid".into()))?;
                Ok(ScalarField::Nodal(NodalField::new(g.clone(), vec![0.0; g.node_count()])?))
            }
            Representation::Legendre { degree } => {
                Ok(ScalarField::Basis(BasisField::zeros(Basis::legendre(domain.clone(), degree))))
            }
            Representation::Rbf { centers_per_axis } => {
                if centers_per_axis < 2 {
                    return Err(Error::Config("rbf needs at least 2 centers per axis".into()));
                }
                let n = centers_per_axis;
                let spacing = (0..domain.dim()).map(|a| (domain.hi()[a] - domain.lo()[a]) / (n - 1) as f64).collect();
                let centers = GridSpec::new(domain.lo().to_vec(), spacing, vec![n; domain.dim()])?;
                Ok(ScalarField::Basis(BasisField::zeros(Basis::rbf_on_grid(domain.clone(), &centers)?)))
            }
        }
    }

    /// Field of this kind approximating `f` (exact on nodes for nodal fields).
    pub fn from_fn(template: &ScalarField, f: impl Fn(&[f64]) -> f64) -> Result<ScalarField> {
        match template {
            ScalarField::Nodal(n) => Ok(ScalarField::Nodal(NodalField::from_fn(n.grid().clone(), f)?)),
            ScalarField::Basis(b) => Ok(ScalarField::Basis(BasisField::from_fn(b.basis().clone(), f)?)),
        }
    }
}

/// Gradient of `field` at the given sites.
pub fn gradient(field: &ScalarField, at: Sites<'_>) -> Result<GradientField> {
    field.gradient(at)
}

/// Node-sum quadrature: `sum(values) * cell volume`.
pub fn integrate(values: &[f64], grid: &GridSpec) -> Result<f64> {
    if values.len() != grid.node_count() {
        return Err(shape(format!("{} values for a grid of {} nodes", values.len(), grid.node_count())));
    }
    Ok(values.iter().sum::<f64>() * grid.cell_volume())
}

/// Field value at an arbitrary point of its box.
pub fn interpolate(field: &ScalarField, p: &Point) -> Result<f64> {
    field.interpolate(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize, h: f64) -> GridSpec {
        GridSpec::new(vec![0.0, 0.0], vec![h, h], vec![n, n]).unwrap()
    }

    #[test]
    fn linear_field_gradient_is_exact_everywhere() {
        let g = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1).unwrap();
        let f = ScalarField::Nodal(NodalField::from_fn(g.clone(), |x| x[0]).unwrap());
        let grad = f.gradient(Sites::Grid(&g)).unwrap();
        for v in grad.iter() {
            assert!((v[0] - 1.0).abs() < 1e-9, "{v:?}");
            assert!(v[1].abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let g = grid2(4, 0.5);
        let f = ScalarField::Nodal(NodalField::new(g.clone(), vec![3.25; 16]).unwrap());
        let grad = f.gradient(Sites::Grid(&g)).unwrap();
        assert!(grad.as_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_stencils() {
        let g = GridSpec::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let f = ScalarField::Nodal(NodalField::new(g.clone(), vec![0.0, 1.0, 4.0]).unwrap());
        let grad = f.gradient(Sites::Grid(&g)).unwrap();
        assert_eq!(grad.get(0), &[1.0]);
        assert_eq!(grad.get(1), &[2.0]);
        assert_eq!(grad.get(2), &[3.0]);
    }

    #[test]
    fn integrate_examples() {
        let g = grid2(3, 1.0);
        assert_eq!(integrate(&[0.5; 9], &g).unwrap(), 4.5);
        assert_eq!(integrate(&[0.0; 9], &g).unwrap(), 0.0);
        let line = GridSpec::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        assert_eq!(integrate(&[0.0, 1.0, 2.0], &line).unwrap(), 3.0);
        assert!(matches!(integrate(&[1.0; 4], &g), Err(Error::Shape(_))));
    }

    #[test]
    fn interpolation_reproduces_nodes_and_linear_midpoints() {
        let g = grid2(5, 0.25);
        let f = NodalField::from_fn(g.clone(), |x| x[0] * x[0] - 3.0 * x[1]).unwrap();
        for n in 0..g.node_count() {
            let p = g.node(n);
            assert_eq!(f.interpolate(&p).unwrap(), f.values()[n]);
        }
        let lin = NodalField::from_fn(g.clone(), |x| x[0]).unwrap();
        assert!((lin.interpolate(&[0.375, 0.6]).unwrap() - 0.375).abs() < 1e-14);
        assert!(matches!(lin.interpolate(&[1.5, 0.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn grid_geometry() {
        let g = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 0.1).unwrap();
        assert_eq!(g.counts(), &[61, 61]);
        assert_eq!(g.node_count(), 3721);
        let g1 = GridSpec::from_bounds(&[6.0, -3.0], &[12.0, 3.0], 1.0).unwrap();
        assert_eq!(g1.node_count(), 49);
        assert_eq!(g.multi_index(g.flat_index(&[7, 13])), vec![7, 13]);
        assert_eq!(g.locate(&[6.7, -1.7]), Some(g.flat_index(&[7, 13])));
        assert_eq!(g.locate(&[6.75, -1.7]), None);
        assert!(GridSpec::new(vec![0.0], vec![1.0], vec![1]).is_err());
        assert!(GridSpec::new(vec![0.0], vec![0.0], vec![3]).is_err());
        assert_eq!(GridSpec::infer(&g.points()), Some(g.clone()));
    }

    #[test]
    fn infer_rejects_scattered_points() {
        let pts = PointSet::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(GridSpec::infer(&pts), None);
    }

    #[test]
    fn inferred_layout_is_accepted_for_rounded_points() {
        let g = GridSpec::new(vec![-0.37, 0.81], vec![0.23, 0.19], vec![5, 4]).unwrap();
        let pts = g.points();
        let rounded: Vec<f64> = pts.as_flat().iter().map(|v| (v * 1e12).round() / 1e12).collect();
        let pts = PointSet::new(2, rounded).unwrap();
        let inferred = GridSpec::infer(&pts).unwrap();
        assert!(inferred.matches(&pts) && g.matches(&pts));
        assert!(crate::dynamics::VectorFieldSamples::new(pts, vec![0.0; 40], Some(inferred)).is_ok());
    }
}
