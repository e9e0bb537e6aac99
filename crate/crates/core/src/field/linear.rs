//! Sparse linear maps from field parameters to values or gradients at sites.
//!
//! Every differential or interpolation operator used by the loss is linear in the
//! field parameters, so it is assembled once per problem as a CSR matrix together
//! with its transpose. Gradient maps have `sites * dim` rows ordered site-major.

use rayon::prelude::*;

use super::{Basis, GridSpec, ScalarField, Sites};
use crate::error::{shape, Result};

const PAR_NNZ: usize = 1 << 15;

#[derive(Clone, Debug)]
struct Csr {
    rows: usize,
    cols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Csr {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut idx = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        ptr.push(0);
        for row in &rows {
            for &(c, v) in row {
                idx.push(c);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        Csr { rows: rows.len(), cols, ptr, idx, val }
    }

    fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let ptr = counts.clone();
        let mut fill = counts;
        let mut idx = vec![0; self.idx.len()];
        let mut val = vec![0.0; self.val.len()];
        for r in 0..self.rows {
            for k in self.ptr[r]..self.ptr[r + 1] {
                let c = self.idx[k];
                idx[fill[c]] = r;
                val[fill[c]] = self.val[k];
                fill[c] += 1;
            }
        }
        Csr { rows: self.cols, cols: self.rows, ptr, idx, val }
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.ptr[r]..self.ptr[r + 1] {
            acc += self.val[k] * x[self.idx[k]];
        }
        acc
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        if self.val.len() >= PAR_NNZ {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = self.row_dot(r, x));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = self.row_dot(r, x);
            }
        }
    }

    fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        if self.val.len() >= PAR_NNZ {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out += self.row_dot(r, x));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out += self.row_dot(r, x);
            }
        }
    }
}

/// A linear operator `y = M x` with a precomputed transpose.
#[derive(Clone, Debug)]
pub(crate) struct LinearMap {
    fwd: Csr,
    bwd: Csr,
}

impl LinearMap {
    pub(crate) fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> LinearMap {
        let fwd = Csr::from_rows(cols, rows);
        let bwd = fwd.transpose();
        LinearMap { fwd, bwd }
    }

    pub(crate) fn rows(&self) -> usize {
        self.fwd.rows
    }

    pub(crate) fn cols(&self) -> usize {
        self.fwd.cols
    }

    /// `y = M x`
    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.fwd.apply(x, y);
    }

    /// `x += M^T y`
    pub(crate) fn apply_t_add(&self, y: &[f64], x: &mut [f64]) {
        self.bwd.apply_add(y, x);
    }

    /// Entries of row `r`.
    pub(crate) fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let f = &self.fwd;
        (f.ptr[r]..f.ptr[r + 1]).map(move |k| (f.idx[k], f.val[k]))
    }
}

/// CGLS for `min |M x - b|` started from zero.
pub(crate) fn cgls(map: &LinearMap, b: &[f64], max_iter: usize, tol: f64) -> Vec<f64> {
    let mut x = vec![0.0; map.cols()];
    let mut r = b.to_vec();
    let mut s = vec![0.0; map.cols()];
    map.apply_t_add(&r, &mut s);
    let mut p = s.clone();
    let mut gamma: f64 = s.iter().map(|v| v * v).sum();
    let stop = tol * tol * gamma;
    let mut q = vec![0.0; map.rows()];
    for _ in 0..max_iter {
        if gamma <= stop || gamma == 0.0 {
            break;
        }
        map.apply(&p, &mut q);
        let qq: f64 = q.iter().map(|v| v * v).sum();
        if qq == 0.0 {
            break;
        }
        let a = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += a * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= a * qi;
        }
        s.fill(0.0);
        map.apply_t_add(&r, &mut s);
        let next: f64 = s.iter().map(|v| v * v).sum();
        let beta = next / gamma;
        gamma = next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    x
}

/// Stencil coefficients of the nodal derivative along `axis` at node `flat`.
fn stencil(grid: &GridSpec, strides: &[usize], flat: usize, axis: usize, out: &mut Vec<(usize, f64)>, scale: f64) {
    let i = (flat / strides[axis]) % grid.counts()[axis];
    let c = grid.counts()[axis];
    let h = grid.spacing()[axis];
    let s = strides[axis];
    if i == 0 {
        out.push((flat + s, scale / h));
        out.push((flat, -scale / h));
    } else if i == c - 1 {
        out.push((flat, scale / h));
        out.push((flat - s, -scale / h));
    } else {
        out.push((flat + s, scale / (2.0 * h)));
        out.push((flat - s, -scale / (2.0 * h)));
    }
}

/// Nodes and weights of multilinear interpolation at `x` (assumed inside the box).
pub(crate) fn multilinear_weights(grid: &GridSpec, x: &[f64]) -> Vec<(usize, f64)> {
    if let Some(n) = grid.locate(x) {
        return vec![(n, 1.0)];
    }
    let dim = grid.dim();
    let mut base = vec![0usize; dim];
    let mut frac = vec![0.0; dim];
    for a in 0..dim {
        let t = (x[a] - grid.mins()[a]) / grid.spacing()[a];
        let i0 = (t.floor().max(0.0) as usize).min(grid.counts()[a] - 2);
        base[a] = i0;
        frac[a] = (t - i0 as f64).clamp(0.0, 1.0);
    }
    let mut out = Vec::with_capacity(1 << dim);
    let mut idx = vec![0usize; dim];
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        for a in 0..dim {
            let up = (corner >> a) & 1 == 1;
            idx[a] = base[a] + up as usize;
            w *= if up { frac[a] } else { 1.0 - frac[a] };
        }
        if w != 0.0 {
            out.push((grid.flat_index(&idx), w));
        }
    }
    out
}

fn merge(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (c, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out
}

fn check_sites(field: &ScalarField, at: &Sites<'_>) -> Result<()> {
    if at.dim() != field.dim() {
        return Err(shape(format!("{}-dimensional sites for a {}-dimensional field", at.dim(), field.dim())));
    }
    let domain = field.domain();
    match at {
        Sites::Grid(g) => {
            let d = g.domain();
            domain.check(d.lo())?;
            domain.check(d.hi())?;
        }
        Sites::Points(p) => {
            for x in p.iter() {
                domain.check(x)?;
            }
        }
    }
    Ok(())
}

/// Map from the field's parameters to its gradient at `at`.
pub(crate) fn gradient_map(field: &ScalarField, at: Sites<'_>) -> Result<LinearMap> {
    check_sites(field, &at)?;
    let dim = field.dim();
    let cols = field.n_params();
    let rows: Vec<Vec<(usize, f64)>> = match field {
        ScalarField::Nodal(f) => {
            let grid = f.grid();
            let strides = grid.strides();
            let own = matches!(at, Sites::Grid(g) if g == grid);
            let pts = at.to_point_set();
            (0..pts.len())
                .into_par_iter()
                .flat_map_iter(|i| {
                    let corners = if own { vec![(i, 1.0)] } else { multilinear_weights(grid, pts.get(i)) };
                    (0..dim)
                        .map(|a| {
                            let mut row = Vec::with_capacity(2 * corners.len());
                            for &(n, w) in &corners {
                                stencil(grid, &strides, n, a, &mut row, w);
                            }
                            merge(row)
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        ScalarField::Basis(f) => {
            let basis = f.basis();
            let pts = at.to_point_set();
            basis_rows(basis, &pts, true)?
        }
    };
    Ok(LinearMap::from_rows(cols, rows))
}

/// Map from the field's parameters to its values at `at`.
pub(crate) fn value_map(field: &ScalarField, at: Sites<'_>) -> Result<LinearMap> {
    check_sites(field, &at)?;
    let cols = field.n_params();
    let pts = at.to_point_set();
    let rows = match field {
        ScalarField::Nodal(f) => {
            (0..pts.len()).into_par_iter().map(|i| merge(multilinear_weights(f.grid(), pts.get(i)))).collect()
        }
        ScalarField::Basis(f) => basis_rows(f.basis(), &pts, false)?,
    };
    Ok(LinearMap::from_rows(cols, rows))
}

fn basis_rows(basis: &Basis, pts: &super::PointSet, gradient: bool) -> Result<Vec<Vec<(usize, f64)>>> {
    let dim = basis.dim();
    let n = basis.len();
    let per_point: Result<Vec<Vec<Vec<(usize, f64)>>>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let x = pts.get(i);
            if gradient {
                let mut g = vec![0.0; n * dim];
                basis.eval(x, None, Some(&mut g))?;
                Ok((0..dim).map(|a| (0..n).map(|f| (f, g[f * dim + a])).collect()).collect())
            } else {
                let mut v = vec![0.0; n];
                basis.eval(x, Some(&mut v), None)?;
                Ok(vec![v.into_iter().enumerate().collect()])
            }
        })
        .collect();
    Ok(per_point?.into_iter().flatten().collect())
}
