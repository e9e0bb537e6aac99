//! Built-in dynamical systems, vector-field sampling, noise injection and orbits.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::field::io::{coordinate_header, read_table, write_table};
use crate::field::{GridSpec, Point, PointSet};

/// Names accepted by [`DynamicalSystem::named`].
pub const SYSTEM_NAMES: [&str; 5] = ["lin-real", "lin-complex", "lin-imaginary", "nonlinear", "lorenz"];

/// `x' = P(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicalSystem {
    /// `P(x) = A x` with `A` stored row-major.
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    /// `scale * (-y + x (1 - r^2), x + y (1 - r^2))`, a stable unit limit cycle.
    LimitCycle2D {
        scale: f64,
    },
    Lorenz {
        sigma: f64,
        beta: f64,
        rho: f64,
    },
}

impl DynamicalSystem {
    pub fn linear(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = matrix.len();
        if n == 0 || matrix.iter().any(|r| r.len() != n) {
            return Err(shape("linear system matrix must be square and non-empty"));
        }
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(shape("linear system matrix must be finite"));
        }
        Ok(DynamicalSystem::Linear { matrix })
    }

    pub fn limit_cycle() -> Self {
        DynamicalSystem::LimitCycle2D { scale: 1.0 / 1000.0 }
    }

    pub fn lorenz() -> Self {
        DynamicalSystem::Lorenz { sigma: 10.0, beta: 8.0 / 3.0, rho: 28.0 }
    }

    /// One of [`SYSTEM_NAMES`].
    pub fn named(name: &str) -> Result<Self> {
        let scaled = |s: f64, m: [[f64; 2]; 2]| DynamicalSystem::Linear {
            matrix: m.iter().map(|r| r.iter().map(|v| s * v).collect()).collect(),
        };
        Ok(match name {
            "lin-real" => scaled(1.0 / 200.0, [[11.0, -5.0], [-5.0, 11.0]]),
            "lin-complex" => scaled(1.0 / 10.0, [[-0.4, 0.1], [-0.4, -0.5]]),
            "lin-imaginary" => scaled(1.0 / 10.0, [[0.0, 1.0], [-1.0, 0.0]]),
            "nonlinear" => DynamicalSystem::limit_cycle(),
            "lorenz" => DynamicalSystem::lorenz(),
            other => {
                return Err(Error::Config(format!(
                    "unknown system '{other}', expected one of {}",
                    SYSTEM_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            DynamicalSystem::Linear { matrix } => matrix.len(),
            DynamicalSystem::LimitCycle2D { .. } => 2,
            DynamicalSystem::Lorenz { .. } => 3,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(shape(format!("{}-dimensional state for a {}-dimensional system", x.len(), self.dim())));
        }
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DynamicalSystem::Linear { matrix } => {
                for (o, row) in out.iter_mut().zip(matrix) {
                    *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            DynamicalSystem::LimitCycle2D { scale } => {
                let s = 1.0 - x[0] * x[0] - x[1] * x[1];
                out[0] = scale * (-x[1] + x[0] * s);
                out[1] = scale * (x[0] + x[1] * s);
            }
            DynamicalSystem::Lorenz { sigma, beta, rho } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
        }
    }

    /// `P` at every node of `grid`, in node order.
    pub fn sample_grid(&self, grid: &GridSpec) -> Result<VectorFieldSamples> {
        if grid.dim() != self.dim() {
            return Err(shape("grid and system differ in dimension"));
        }
        let mut samples = self.sample_points(&grid.points())?;
        samples.layout = Some(grid.clone());
        Ok(samples)
    }

    pub fn sample_points(&self, points: &PointSet) -> Result<VectorFieldSamples> {
        if points.dim() != self.dim() {
            return Err(shape("points and system differ in dimension"));
        }
        let dim = self.dim();
        let mut vectors = vec![0.0; points.len() * dim];
        vectors.par_chunks_mut(dim).zip(points.as_flat().par_chunks(dim)).for_each(|(out, x)| self.eval_into(x, out));
        VectorFieldSamples::new(points.clone(), vectors, None)
    }

    /// Classical fourth-order Runge-Kutta; returns `steps + 1` states including `x0`.
    pub fn integrate_orbit(&self, x0: &Point, dt: f64, steps: usize) -> Result<PointSet> {
        if !(dt > 0.0) || steps == 0 {
            return Err(Error::Config(format!("need dt > 0 and steps >= 1, got dt = {dt}, steps = {steps}")));
        }
        let n = self.dim();
        if x0.dim() != n {
            return Err(shape("initial state and system differ in dimension"));
        }
        let mut out = Vec::with_capacity((steps + 1) * n);
        out.extend_from_slice(x0);
        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        for step in 1..=steps {
            self.eval_into(&x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k1[i];
            }
            self.eval_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k2[i];
            }
            self.eval_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + dt * k3[i];
            }
            self.eval_into(&tmp, &mut k4);
            for i in 0..n {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step });
            }
            out.extend_from_slice(&x);
        }
        PointSet::new(n, out)
    }

    /// States `start..end` of a trajectory with `P` evaluated at each.
    pub fn extract_segment(&self, trajectory: &PointSet, start: usize, end: usize) -> Result<VectorFieldSamples> {
        if start >= end || end > trajectory.len() {
            return Err(shape(format!("segment {start}..{end} outside a trajectory of {} states", trajectory.len())));
        }
        let dim = trajectory.dim();
        let pts = PointSet::new(dim, trajectory.as_flat()[start * dim..end * dim].to_vec())?;
        self.sample_points(&pts)
    }
}

/// Ratio of the smallest to the largest singular value of the centred points.
/// Small values mean the points lie close to a hyperplane.
pub fn planarity_ratio(points: &PointSet) -> f64 {
    let n = points.len();
    let dim = points.dim();
    let mut mean = vec![0.0; dim];
    for p in points.iter() {
        for a in 0..dim {
            mean[a] += p[a] / n as f64;
        }
    }
    let m = DMatrix::from_fn(n, dim, |i, a| points.get(i)[a] - mean[a]);
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Start index and ratio of the most planar window of `window` consecutive states.
/// Ties resolve to the earliest start.
pub fn select_planar_segment(trajectory: &PointSet, window: usize) -> Result<(usize, f64)> {
    if window < trajectory.dim() + 1 || window > trajectory.len() {
        return Err(shape(format!("window of {window} states for a trajectory of {}", trajectory.len())));
    }
    let dim = trajectory.dim();
    let ratios: Vec<f64> = (0..=trajectory.len() - window)
        .into_par_iter()
        .map(|s| {
            let pts = PointSet::new(dim, trajectory.as_flat()[s * dim..(s + window) * dim].to_vec())
                .expect("a slice of a valid point set is valid");
            planarity_ratio(&pts)
        })
        .collect();
    let (start, ratio) =
        ratios.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &r)| if r < best.1 { (i, r) } else { best });
    Ok((start, ratio))
}

/// Additive Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub std: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(std: f64, mean: f64, seed: u64) -> Result<Self> {
        if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::Config(format!("noise std must be finite and >= 0, got {std}")));
        }
        Ok(NoiseSpec { std, mean, seed })
    }
}

/// Standard normal draws from ChaCha8 seeded with `seed` via `seed_from_u64`.
///
/// Each pair uses two 53-bit uniforms `u = (next_u64 >> 11) / 2^53`, then
/// Box-Muller with `r = sqrt(-2 ln(1 - u1))`: the cosine draw comes first,
/// the sine draw second.
pub fn gaussian_stream(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + 1);
    let scale = 1.0 / (1u64 << 53) as f64;
    while out.len() < count {
        let u1 = (rng.next_u64() >> 11) as f64 * scale;
        let u2 = (rng.next_u64() >> 11) as f64 * scale;
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        out.push(r * t.cos());
        out.push(r * t.sin());
    }
    out.truncate(count);
    out
}

/// `P(x)` sampled at a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldSamples {
    points: PointSet,
    vectors: Vec<f64>,
    layout: Option<GridSpec>,
}

impl VectorFieldSamples {
    pub fn new(points: PointSet, vectors: Vec<f64>, layout: Option<GridSpec>) -> Result<Self> {
        if vectors.len() != points.as_flat().len() {
            return Err(shape(format!(
                "{} vector components for {} points of dimension {}",
                vectors.len(),
                points.len(),
                points.dim()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(shape("vector samples must be finite"));
        }
        if let Some(g) = &layout {
            if !g.matches(&points) {
                return Err(shape("layout does not match the sample points"));
            }
        }
        Ok(VectorFieldSamples { points, vectors, layout })
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.vectors[i * d..(i + 1) * d]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn layout(&self) -> Option<&GridSpec> {
        self.layout.as_ref()
    }

    /// Same points with new vectors.
    pub fn with_vectors(&self, vectors: Vec<f64>) -> Result<Self> {
        VectorFieldSamples::new(self.points.clone(), vectors, self.layout.clone())
    }

    /// Tries to recognize the points as a full lattice.
    pub fn with_inferred_layout(mut self) -> Self {
        if self.layout.is_none() {
            self.layout = GridSpec::infer(&self.points);
        }
        self
    }

    /// Independent draws added to every component. The input is left untouched.
    pub fn add_noise(&self, spec: &NoiseSpec) -> VectorFieldSamples {
        if spec.std == 0.0 && spec.mean == 0.0 {
            return self.clone();
        }
        let z = gaussian_stream(spec.seed, self.vectors.len());
        let vectors = self.vectors.iter().zip(z).map(|(v, z)| v + spec.mean + spec.std * z).collect();
        VectorFieldSamples { points: self.points.clone(), vectors, layout: self.layout.clone() }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim();
        let mut header = coordinate_header(d, "x");
        header.extend(coordinate_header(d, "p"));
        write_table(
            out,
            &header,
            (0..self.len()).map(|i| {
                let mut row = self.points.get(i).to_vec();
                row.extend_from_slice(self.vector(i));
                row
            }),
        )
    }

    /// Reads `x1..xN,p1..pN`; a lattice layout is inferred when the points form one.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (header, rows) = read_table(input)?;
        if header.len() < 2 || header.len() % 2 != 0 {
            return Err(shape("vector-field CSV needs columns x1..xN,p1..pN"));
        }
        let d = header.len() / 2;
        if header != [coordinate_header(d, "x"), coordinate_header(d, "p")].concat() {
            return Err(shape(format!("unexpected vector-field CSV header {header:?}")));
        }
        if rows.is_empty() {
            return Err(shape("vector-field CSV has no rows"));
        }
        let points = PointSet::new(d, rows.iter().flat_map(|r| r[..d].to_vec()).collect())?;
        let vectors = rows.iter().flat_map(|r| r[d..].to_vec()).collect();
        Ok(VectorFieldSamples::new(points, vectors, None)?.with_inferred_layout())
    }

    pub fn read_csv_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv_path(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplesJson {
    dim: usize,
    points: Vec<Vec<f64>>,
    vectors: Vec<Vec<f64>>,
    layout: Option<GridSpec>,
}

impl Serialize for VectorFieldSamples {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SamplesJson {
            dim: self.dim(),
            points: self.points.iter().map(<[f64]>::to_vec).collect(),
            vectors: (0..self.len()).map(|i| self.vector(i).to_vec()).collect(),
            layout: self.layout.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for VectorFieldSamples {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SamplesJson::deserialize(d)?;
        let flat = |rows: Vec<Vec<f64>>| -> std::result::Result<Vec<f64>, D::Error> {
            if rows.iter().any(|r| r.len() != raw.dim) {
                return Err(serde::de::Error::custom("row length differs from dim"));
            }
            Ok(rows.concat())
        };
        let points = PointSet::new(raw.dim, flat(raw.points)?).map_err(serde::de::Error::custom)?;
        let vectors = flat(raw.vectors)?;
        VectorFieldSamples::new(points, vectors, raw.layout).map_err(serde::de::Error::custom)
    }
}
