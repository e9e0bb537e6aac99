use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DomainBox, GridSpec, PointSet};
use crate::error::{shape, Error, Result};

/// Smooth function families on a box.
///
/// `Legendre` is the tensor product of Legendre polynomials up to `degree` per axis on
/// the box mapped to `[-1, 1]^N`; functions are ordered row-major over the per-axis
/// degrees. `Rbf` places a Gaussian `exp(-|x - c|^2 / (2 width^2))` at each center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    Legendre { domain: DomainBox, degree: usize },
    Rbf { domain: DomainBox, centers: Vec<Vec<f64>>, width: f64 },
}

impl Basis {
    pub fn legendre(domain: DomainBox, degree: usize) -> Self {
        Basis::Legendre { domain, degree }
    }

    /// Gaussians centred on the nodes of `centers`, with width equal to the mean spacing.
    pub fn rbf_on_grid(domain: DomainBox, centers: &GridSpec) -> Result<Self> {
        if centers.dim() != domain.dim() {
            return Err(shape("rbf centers and domain differ in dimension"));
        }
        let width = centers.spacing().iter().sum::<f64>() / centers.dim() as f64;
        let centers = centers.points().iter().map(<[f64]>::to_vec).collect();
        Basis::rbf(domain, centers, width)
    }

    pub fn rbf(domain: DomainBox, centers: Vec<Vec<f64>>, width: f64) -> Result<Self> {
        if centers.is_empty() || centers.iter().any(|c| c.len() != domain.dim()) {
            return Err(shape("rbf centers must be non-empty and match the domain dimension"));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(shape(format!("rbf width must be positive, got {width}")));
        }
        Ok(Basis::Rbf { domain, centers, width })
    }

    pub fn domain(&self) -> &DomainBox {
        match self {
            Basis::Legendre { domain, .. } | Basis::Rbf { domain, .. } => domain,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Legendre { domain, degree } => (degree + 1).pow(domain.dim() as u32),
            Basis::Rbf { centers, .. } => centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes basis values (length `len()`) and gradients (`len() * dim()`, function-major)
    /// at `x`. Fails if `x` is outside the box.
    pub fn eval(&self, x: &[f64], values: Option<&mut [f64]>, grads: Option<&mut [f64]>) -> Result<()> {
        self.domain().check(x)?;
        match self {
            Basis::Legendre { domain, degree } => legendre_eval(domain, *degree, x, values, grads),
            Basis::Rbf { centers, width, .. } => rbf_eval(centers, *width, x, values, grads),
        }
        Ok(())
    }
}

/// Values and derivatives of `P_0..=P_degree` at `t`.
pub(crate) fn legendre_1d(degree: usize, t: f64, p: &mut [f64], dp: &mut [f64]) {
    p[0] = 1.0;
    dp[0] = 0.0;
    if degree == 0 {
        return;
    }
    p[1] = t;
    dp[1] = 1.0;
    for k in 1..degree {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
}

fn legendre_eval(domain: &DomainBox, degree: usize, x: &[f64], values: Option<&mut [f64]>, grads: Option<&mut [f64]>) {
    let dim = domain.dim();
    let m = degree + 1;
    let mut p = vec![0.0; dim * m];
    let mut dp = vec![0.0; dim * m];
    for a in 0..dim {
        let hw = domain.half_width(a);
        let t = ((x[a] - domain.center(a)) / hw).clamp(-1.0, 1.0);
        legendre_1d(degree, t, &mut p[a * m..(a + 1) * m], &mut dp[a * m..(a + 1) * m]);
        for d in &mut dp[a * m..(a + 1) * m] {
            *d /= hw;
        }
    }
    let total = m.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    let mut values = values;
    let mut grads = grads;
    for f in 0..total {
        let mut rem = f;
        for a in (0..dim).rev() {
            idx[a] = rem % m;
            rem /= m;
        }
        if let Some(v) = values.as_deref_mut() {
            v[f] = (0..dim).map(|a| p[a * m + idx[a]]).product();
        }
        if let Some(g) = grads.as_deref_mut() {
            for b in 0..dim {
                let mut prod = 1.0;
                for a in 0..dim {
                    prod *= if a == b { dp[a * m + idx[a]] } else { p[a * m + idx[a]] };
                }
                g[f * dim + b] = prod;
            }
        }
    }
}

fn rbf_eval(centers: &[Vec<f64>], width: f64, x: &[f64], values: Option<&mut [f64]>, grads: Option<&mut [f64]>) {
    let dim = x.len();
    let inv = 1.0 / (width * width);
    let mut values = values;
    let mut grads = grads;
    for (f, c) in centers.iter().enumerate() {
        let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        let phi = (-0.5 * r2 * inv).exp();
        if let Some(v) = values.as_deref_mut() {
            v[f] = phi;
        }
        if let Some(g) = grads.as_deref_mut() {
            for a in 0..dim {
                g[f * dim + a] = -(x[a] - c[a]) * inv * phi;
            }
        }
    }
}

/// A field `m(x) = sum_k c_k phi_k(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasisField")]
pub struct BasisField {
    #[serde(flatten)]
    basis: Basis,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBasisField {
    #[serde(flatten)]
    basis: Basis,
    coeffs: Vec<f64>,
}

impl TryFrom<RawBasisField> for BasisField {
    type Error = Error;

    fn try_from(raw: RawBasisField) -> Result<Self> {
        BasisField::new(raw.basis, raw.coeffs)
    }
}

impl BasisField {
    pub fn new(basis: Basis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(shape(format!("{} coefficients for a basis of {} functions", coeffs.len(), basis.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(shape("basis coefficients must be finite"));
        }
        Ok(BasisField { basis, coeffs })
    }

    pub fn zeros(basis: Basis) -> Self {
        let n = basis.len();
        BasisField { basis, coeffs: vec![0.0; n] }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let mut v = vec![0.0; self.basis.len()];
        self.basis.eval(x, Some(&mut v), None)?;
        Ok(v.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum())
    }

    pub fn gradient_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dim = self.basis.dim();
        let mut g = vec![0.0; self.basis.len() * dim];
        self.basis.eval(x, None, Some(&mut g))?;
        let mut out = vec![0.0; dim];
        for (f, c) in self.coeffs.iter().enumerate() {
            for a in 0..dim {
                out[a] += c * g[f * dim + a];
            }
        }
        Ok(out)
    }

    /// Least-squares fit of `values` at `points` (minimum-norm when underdetermined).
    pub fn fit(basis: Basis, points: &PointSet, values: &[f64]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(shape("fit needs one value per point"));
        }
        if points.dim() != basis.dim() {
            return Err(shape("fit points and basis differ in dimension"));
        }
        let n = basis.len();
        let mut a = DMatrix::<f64>::zeros(points.len(), n);
        let mut row = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            basis.eval(p, Some(&mut row), None)?;
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        let coeffs = lstsq(a, DVector::from_column_slice(values))?;
        BasisField::new(basis, coeffs)
    }

    /// Projection of an analytic function onto the basis by fitting samples on a
    /// lattice a little finer than the basis resolution.
    pub fn from_fn(basis: Basis, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let per_axis = match &basis {
            Basis::Legendre { degree, .. } => degree + 3,
            Basis::Rbf { centers, .. } => 2 * (centers.len() as f64).powf(1.0 / basis.dim() as f64).ceil() as usize + 1,
        };
        let d = basis.domain();
        let spacing = (0..d.dim()).map(|a| (d.hi()[a] - d.lo()[a]) / (per_axis - 1) as f64).collect();
        let grid = GridSpec::new(d.lo().to_vec(), spacing, vec![per_axis; d.dim()])?;
        let pts = grid.points();
        let values: Vec<f64> = pts.iter().map(&f).collect();
        BasisField::fit(basis, &pts, &values)
    }
}

/// Least squares by Householder QR, falling back to a minimum-norm SVD solve
/// when the system is underdetermined or numerically rank deficient.
pub(crate) fn lstsq(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    Factored::new(a).solve(&b)
}

/// A least-squares factorization kept for repeated right-hand sides. QR with one
/// refinement step when the matrix has full column rank, SVD minimum norm otherwise.
#[derive(Clone, Debug)]
pub(crate) enum Factored {
    Qr { a: DMatrix<f64>, qt: DMatrix<f64>, r: DMatrix<f64> },
    Svd { svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, tol: f64 },
}

impl Factored {
    pub(crate) fn new(a: DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        if m >= n {
            let qr = a.clone().qr();
            let r = qr.r();
            let dmax = r.diagonal().amax();
            if dmax > 0.0 && r.diagonal().iter().all(|d| d.abs() > 1e-10 * dmax) {
                return Factored::Qr { qt: qr.q().transpose(), r, a };
            }
        }
        let svd = a.svd(true, true);
        let tol = svd.singular_values.max() * 1e-12 * (m.max(n)) as f64;
        Factored::Svd { svd, tol }
    }

    pub(crate) fn solve(&self, b: &DVector<f64>) -> Result<Vec<f64>> {
        match self {
            Factored::Qr { a, qt, r } => {
                let mut x = r
                    .solve_upper_triangular(&(qt * b))
                    .ok_or_else(|| shape("least squares failed: singular triangular factor"))?;
                // One round of iterative refinement.
                let res = b - a * &x;
                if let Some(dx) = r.solve_upper_triangular(&(qt * res)) {
                    x += dx;
                }
                Ok(x.iter().copied().collect())
            }
            Factored::Svd { svd, tol } => {
                let x = svd.solve(b, *tol).map_err(|e| shape(format!("least squares failed: {e}")))?;
                Ok(x.iter().copied().collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(dim: usize) -> DomainBox {
        DomainBox::new(vec![-1.0; dim], vec![1.0; dim]).unwrap()
    }

    #[test]
    fn legendre_recurrence_matches_closed_forms() {
        let mut p = [0.0; 4];
        let mut dp = [0.0; 4];
        for &t in &[-1.0, -0.3, 0.0, 0.55, 1.0] {
            legendre_1d(3, t, &mut p, &mut dp);
            let p2 = 0.5 * (3.0 * t * t - 1.0);
            let p3 = 0.5 * (5.0 * t * t * t - 3.0 * t);
            assert!((p[2] - p2).abs() < 1e-14);
            assert!((p[3] - p3).abs() < 1e-14);
            assert!((dp[2] - 3.0 * t).abs() < 1e-14);
            assert!((dp[3] - 0.5 * (15.0 * t * t - 3.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn from_fn_reproduces_polynomials_in_the_space() {
        let d = DomainBox::new(vec![6.0, -3.0], vec![12.0, 3.0]).unwrap();
        let f = BasisField::from_fn(Basis::legendre(d, 3), |x| x[0] * x[1] - 2.0 * x[1] * x[1] + 5.0).unwrap();
        let x = [7.3, 1.1];
        let v = f.evaluate(&x).unwrap();
        assert!((v - (7.3 * 1.1 - 2.0 * 1.21 + 5.0)).abs() < 1e-9, "{v}");
        let g = f.gradient_at(&x).unwrap();
        assert!((g[0] - 1.1).abs() < 1e-9);
        assert!((g[1] - (7.3 - 4.0 * 1.1)).abs() < 1e-9);
    }

    #[test]
    fn basis_gradients_match_finite_differences() {
        let rbf =
            Basis::rbf_on_grid(unit_box(2), &GridSpec::new(vec![-1.0, -1.0], vec![0.5, 0.5], vec![5, 5]).unwrap())
                .unwrap();
        for basis in [Basis::legendre(unit_box(3), 3), rbf] {
            let dim = basis.dim();
            let x: Vec<f64> = (0..dim).map(|a| 0.1 + 0.2 * a as f64).collect();
            let mut g = vec![0.0; basis.len() * dim];
            basis.eval(&x, None, Some(&mut g)).unwrap();
            for a in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += 1e-6;
                xm[a] -= 1e-6;
                let mut vp = vec![0.0; basis.len()];
                let mut vm = vec![0.0; basis.len()];
                basis.eval(&xp, Some(&mut vp), None).unwrap();
                basis.eval(&xm, Some(&mut vm), None).unwrap();
                for f in 0..basis.len() {
                    let fd = (vp[f] - vm[f]) / 2e-6;
                    assert!((fd - g[f * dim + a]).abs() < 1e-6, "f={f} a={a}");
                }
            }
        }
    }

    #[test]
    fn eval_outside_box_fails() {
        let b = Basis::legendre(unit_box(2), 2);
        let mut v = vec![0.0; b.len()];
        assert!(matches!(b.eval(&[1.5, 0.0], Some(&mut v), None), Err(Error::Domain { .. })));
    }

    #[test]
    fn serde_round_trip() {
        let f = BasisField::from_fn(Basis::legendre(unit_box(2), 2), |x| x[0]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: BasisField = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
    }
}
