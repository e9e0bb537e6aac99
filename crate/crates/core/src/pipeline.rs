//! End-to-end runs: denoising, generalization from sparse samples, and reduction.

use serde::{Deserialize, Serialize};

use crate::dynamics::{select_planar_segment, DynamicalSystem, VectorFieldSamples};
use crate::error::{shape, Error, Result};
use crate::field::{DomainBox, GridSpec, Point, PointSet, Representation, ScalarField, Sites};
use crate::functional::{EpsilonPolicy, Geometry, Mode, Objective, ObjectiveOptions, Smoothness};
use crate::metrics::{orthogonality_stats_at, relative_mse, unit_residual_stats, QualityReport};
use crate::optimizer::{init_fields, minimize_with, InitStrategy, IterRecord, OptResult, OptimConfig};
use crate::reconstruct::{reconstruct_full, reconstruct_reduced};

/// Field parametrization, initialization and optimizer settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_representation")]
    pub representation: Representation,
    pub init: InitStrategy,
    /// Number of measurements; `None` means the state dimension.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub optim: OptimConfig,
}

fn default_representation() -> Representation {
    Representation::Legendre { degree: 4 }
}

impl RunSettings {
    pub fn denoise() -> Self {
        RunSettings {
            representation: default_representation(),
            init: InitStrategy::CoordinateRamps,
            k: None,
            optim: OptimConfig::default(),
        }
    }

    pub fn generalize() -> Self {
        RunSettings {
            optim: OptimConfig { smoothness_weight: 1.0, ..OptimConfig::default() },
            ..RunSettings::denoise()
        }
    }

    pub fn reduce() -> Self {
        RunSettings { init: InitStrategy::FrameFit, k: Some(2), ..RunSettings::denoise() }
    }

    fn eps(&self) -> Result<EpsilonPolicy> {
        EpsilonPolicy::new(self.optim.eps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub result: OptResult,
    /// Reconstructed field at the output sites.
    pub restored: VectorFieldSamples,
    pub report: QualityReport,
}

fn run(
    template: &ScalarField,
    data: &VectorFieldSamples,
    k: usize,
    mode: Mode,
    settings: &RunSettings,
    geometry: Geometry,
    observer: &mut dyn FnMut(&IterRecord<'_>),
) -> Result<OptResult> {
    let smoothness =
        (settings.optim.smoothness_weight > 0.0).then_some(Smoothness { weight: settings.optim.smoothness_weight });
    let options = ObjectiveOptions { eps: settings.eps()?, geometry, smoothness };
    let objective = Objective::new(template, k, data, mode, &options)?;
    let init = init_fields(template, k, settings.init, data, settings.optim.seed)?;
    minimize_with(&objective, &init, None, &settings.optim, observer)
}

/// Learns `N` unit measurements from noisy lattice samples and reconstructs the field
/// on the same lattice. With `clean` given, the report carries the noise reduction.
pub fn denoise(
    noisy: &VectorFieldSamples,
    clean: Option<&VectorFieldSamples>,
    settings: &RunSettings,
    observer: &mut dyn FnMut(&IterRecord<'_>),
) -> Result<RunOutput> {
    let n = noisy.dim();
    let k = settings.k.unwrap_or(n);
    if k != n {
        return Err(Error::Rank { k, n });
    }
    let noisy = noisy.clone().with_inferred_layout();
    let grid = noisy.layout().cloned().ok_or_else(|| shape("samples must form a full lattice"))?;
    let template = settings.representation.template(&grid.domain(), Some(&grid))?;
    let result = run(&template, &noisy, k, Mode::Standard, settings, Geometry::Data, observer)?;
    let restored = reconstruct_full(&result.mset, Sites::Grid(&grid))?;
    let report = match clean {
        Some(c) => QualityReport::denoising(&noisy, c, &restored)?,
        None => QualityReport::default(),
    };
    let report = report.with_measurements(&result.mset, &noisy, settings.eps()?)?;
    Ok(RunOutput { result, restored, report })
}

/// Unknowns and data equations of a generalization problem.
pub fn generalization_counts(sparse: &VectorFieldSamples, representation: &Representation, k: usize) -> (usize, usize) {
    let n = sparse.dim();
    let per_field = match representation {
        // Off-data nodes are fixed by the smoothness penalty; the data must pin down
        // at least an affine field.
        Representation::Nodal => n + 1,
        Representation::Legendre { degree } => (degree + 1).pow(n as u32),
        Representation::Rbf { centers_per_axis } => centers_per_axis.pow(n as u32),
    };
    (k * per_field, sparse.len() * n)
}

/// Learns unit measurements from sparse samples over the domain of `dense` and
/// reconstructs the field on every node of `dense`.
pub fn generalize(
    sparse: &VectorFieldSamples,
    dense: &GridSpec,
    reference: Option<&VectorFieldSamples>,
    settings: &RunSettings,
    observer: &mut dyn FnMut(&IterRecord<'_>),
) -> Result<RunOutput> {
    let n = sparse.dim();
    if dense.dim() != n {
        return Err(shape("output grid and samples differ in dimension"));
    }
    let k = settings.k.unwrap_or(n);
    if k != n {
        return Err(Error::Rank { k, n });
    }
    let (unknowns, equations) = generalization_counts(sparse, &settings.representation, k);
    if equations < unknowns {
        return Err(Error::Underdetermined { unknowns, equations });
    }
    let domain = dense.domain();
    for p in sparse.points().iter() {
        domain.check(p)?;
    }
    let template = settings.representation.template(&domain, Some(dense))?;
    let result = run(&template, sparse, k, Mode::Standard, settings, Geometry::Grid(dense.clone()), observer)?;
    let restored = reconstruct_full(&result.mset, Sites::Grid(dense))?;
    let mut report = QualityReport::default();
    if let Some(r) = reference {
        report.relative_mse_pct = Some(relative_mse(&restored, r)?);
    }
    let report = report.with_measurements(&result.mset, sparse, settings.eps()?)?;
    Ok(RunOutput { result, restored, report })
}

/// Box around scattered samples, widened by 5% per side.
pub fn sample_domain(data: &VectorFieldSamples) -> Result<DomainBox> {
    Ok(data.points().bounding_box()?.padded(0.05))
}

/// Learns `K <= N` measurements and coefficient fields on scattered samples and
/// reconstructs the field at the sample points.
pub fn reduce(
    data: &VectorFieldSamples,
    settings: &RunSettings,
    observer: &mut dyn FnMut(&IterRecord<'_>),
) -> Result<RunOutput> {
    let n = data.dim();
    let k = settings.k.unwrap_or(n);
    if k == 0 || k > n {
        return Err(Error::Config(format!("K must lie in 1..={n}, got {k}")));
    }
    let domain = sample_domain(data)?;
    let template = match (&settings.representation, data.layout()) {
        (Representation::Nodal, Some(g)) => settings.representation.template(&g.domain(), Some(g))?,
        (Representation::Nodal, None) => return Err(Error::Config("nodal fields need lattice samples".into())),
        (r, _) => r.template(&domain, None)?,
    };
    let result = run(&template, data, k, Mode::Reduced, settings, Geometry::Data, observer)?;
    let betas = result.betas.as_ref().expect("reduced runs return coefficient fields");
    let restored = reconstruct_reduced(&result.mset, betas, Sites::Points(data.points()))?;
    let eps = settings.eps()?;
    let mut report = QualityReport {
        relative_mse_pct: Some(relative_mse(&restored, data)?),
        unit_residual_rms: Some(unit_residual_stats(&result.mset, data)?),
        ..QualityReport::default()
    };
    if k >= 2 {
        let (mean, max) = orthogonality_stats_at(&result.mset, Sites::Points(data.points()), eps)?;
        report.mean_cos2 = Some(mean);
        report.max_cos2 = Some(max);
    }
    Ok(RunOutput { result, restored, report })
}

/// Orbit integration and window selection for the reduction experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSettings {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub window: usize,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        OrbitSettings { x0: vec![1.0, 1.0, 1.0], dt: 0.01, steps: 5000, window: 100 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSegment {
    pub orbit: PointSet,
    pub segment: VectorFieldSamples,
    pub start: usize,
    pub planarity: f64,
}

/// Integrates `system` and cuts out its most planar window.
pub fn planar_segment(system: &DynamicalSystem, settings: &OrbitSettings) -> Result<OrbitSegment> {
    if !(settings.dt > 0.0) || settings.steps == 0 {
        return Err(Error::Config("orbit needs dt > 0 and at least one step".into()));
    }
    let orbit = system.integrate_orbit(&Point::new(settings.x0.clone())?, settings.dt, settings.steps)?;
    let (start, planarity) = select_planar_segment(&orbit, settings.window)?;
    let segment = system.extract_segment(&orbit, start, start + settings.window)?;
    Ok(OrbitSegment { orbit, segment, start, planarity })
}
