//! Reconstruction quality measures.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::VectorFieldSamples;
use crate::error::{shape, Error, Result};
use crate::field::Sites;
use crate::functional::{EpsilonPolicy, MeasurementSet};

fn check_matched(a: &VectorFieldSamples, b: &VectorFieldSamples) -> Result<()> {
    if a.dim() != b.dim() || a.len() != b.len() {
        return Err(shape(format!("sample sets differ: {} x {} against {} x {}", a.len(), a.dim(), b.len(), b.dim())));
    }
    let tol = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
    if !a.points().as_flat().iter().zip(b.points().as_flat()).all(|(&x, &y)| tol(x, y)) {
        return Err(shape("sample sets are taken at different points"));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `100 sum |est - ref|^2 / sum |ref|^2`.
pub fn relative_mse(est: &VectorFieldSamples, reference: &VectorFieldSamples) -> Result<f64> {
    check_matched(est, reference)?;
    let energy: f64 = reference.vectors().iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateReference("reference field is identically zero".into()));
    }
    Ok(100.0 * sq_dist(est.vectors(), reference.vectors()) / energy)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (sq_dist(a, b) / a.len() as f64).sqrt()
}

/// `100 (1 - RMSE(restored, clean) / RMSE(noisy, clean))`.
pub fn noise_reduction(
    noisy: &VectorFieldSamples,
    clean: &VectorFieldSamples,
    restored: &VectorFieldSamples,
) -> Result<f64> {
    check_matched(noisy, clean)?;
    check_matched(restored, clean)?;
    let before = rmse(noisy.vectors(), clean.vectors());
    if before == 0.0 {
        return Err(Error::DegenerateReference("noisy samples equal the clean samples".into()));
    }
    Ok(100.0 * (1.0 - rmse(restored.vectors(), clean.vectors()) / before))
}

/// Mean and max of the guarded pairwise cos^2 over the fields' sample sites.
pub fn orthogonality_stats(mset: &MeasurementSet, eps: EpsilonPolicy) -> Result<(f64, f64)> {
    orthogonality_stats_at(mset, Sites::Grid(&mset.field(0).sample_sites()), eps)
}

/// As [`orthogonality_stats`] over the given sites.
pub fn orthogonality_stats_at(mset: &MeasurementSet, sites: Sites<'_>, eps: EpsilonPolicy) -> Result<(f64, f64)> {
    let k = mset.count();
    if k < 2 {
        return Err(shape("orthogonality needs at least two measurements"));
    }
    let grads = mset.fields().iter().map(|f| f.gradient(sites)).collect::<Result<Vec<_>>>()?;
    let (mut sum, mut max, mut count) = (0.0, 0.0f64, 0usize);
    for s in 0..sites.len() {
        for i in 0..k {
            for j in i + 1..k {
                let (gi, gj) = (grads[i].get(s), grads[j].get(s));
                let d: f64 = gi.iter().zip(gj).map(|(a, b)| a * b).sum();
                let ni: f64 = gi.iter().map(|a| a * a).sum::<f64>() + eps.eps;
                let nj: f64 = gj.iter().map(|a| a * a).sum::<f64>() + eps.eps;
                let c = (d * d / (ni * nj)).min(1.0);
                sum += c;
                max = max.max(c);
                count += 1;
            }
        }
    }
    Ok((sum / count as f64, max))
}

/// RMS over points and fields of `grad m_i . P - 1`.
pub fn unit_residual_stats(mset: &MeasurementSet, data: &VectorFieldSamples) -> Result<f64> {
    Ok(unit_residuals(mset, data)?.iter().flatten().map(|r| r * r).sum::<f64>().sqrt()
        / ((data.len() * mset.count()) as f64).sqrt())
}

/// Per field, per data point `grad m_i . P`.
pub fn unit_speeds(mset: &MeasurementSet, data: &VectorFieldSamples) -> Result<Vec<Vec<f64>>> {
    if data.dim() != mset.dim() {
        return Err(shape("data dimension does not match the measurements"));
    }
    mset.fields()
        .iter()
        .map(|f| {
            let g = f.gradient(Sites::Points(data.points()))?;
            Ok((0..data.len()).map(|j| g.get(j).iter().zip(data.vector(j)).map(|(a, b)| a * b).sum()).collect())
        })
        .collect()
}

fn unit_residuals(mset: &MeasurementSet, data: &VectorFieldSamples) -> Result<Vec<Vec<f64>>> {
    Ok(unit_speeds(mset, data)?.into_iter().map(|v| v.into_iter().map(|s| s - 1.0).collect()).collect())
}

/// Counts of two samples over shared bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub edges: Vec<f64>,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
}

impl HistogramPair {
    pub fn bins(&self) -> usize {
        self.before.len()
    }

    fn binned_std(&self, counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let centre = |b: usize| 0.5 * (self.edges[b] + self.edges[b + 1]);
        let mean = counts.iter().enumerate().map(|(b, &c)| c as f64 * centre(b)).sum::<f64>() / n as f64;
        (counts.iter().enumerate().map(|(b, &c)| c as f64 * (centre(b) - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    }

    /// Standard deviation of the binned `before` sample (bin centres).
    pub fn std_before(&self) -> f64 {
        self.binned_std(&self.before)
    }

    pub fn std_after(&self) -> f64 {
        self.binned_std(&self.after)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_left", "bin_right", "count_before", "count_after"])?;
        for b in 0..self.bins() {
            w.write_record([
                format!("{:?}", self.edges[b]),
                format!("{:?}", self.edges[b + 1]),
                self.before[b].to_string(),
                self.after[b].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bins both samples over the range spanned by their union.
pub fn error_histogram(before: &[f64], after: &[f64], bins: usize) -> Result<HistogramPair> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let all = before.iter().chain(after).copied();
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (-0.5, 0.5);
    }
    if hi <= lo {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    let count = |xs: &[f64]| {
        let mut c = vec![0usize; bins];
        for &x in xs {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            c[b] += 1;
        }
        c
    };
    Ok(HistogramPair { edges, before: count(before), after: count(after) })
}

/// Per-component differences `a - b`.
pub fn component_errors(a: &VectorFieldSamples, b: &VectorFieldSamples) -> Result<Vec<f64>> {
    check_matched(a, b)?;
    Ok(a.vectors().iter().zip(b.vectors()).map(|(x, y)| x - y).collect())
}

/// Summary of one run. Metrics that do not apply are omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_mse_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_reduction_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cos2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cos2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit_residual_rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histograms: Option<HistogramPair>,
    pub definitions: Definitions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Definitions {
    pub relative_mse_pct: String,
    pub noise_reduction_pct: String,
}

impl Default for Definitions {
    fn default() -> Self {
        Definitions {
            relative_mse_pct: "100 * sum |est - ref|^2 / sum |ref|^2".into(),
            noise_reduction_pct: "100 * (1 - RMSE(restored, clean) / RMSE(noisy, clean))".into(),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 40;

impl QualityReport {
    /// Noise reduction, relative error of the restoration and both error histograms.
    pub fn denoising(
        noisy: &VectorFieldSamples,
        clean: &VectorFieldSamples,
        restored: &VectorFieldSamples,
    ) -> Result<Self> {
        let before = component_errors(noisy, clean)?;
        let after = component_errors(restored, clean)?;
        Ok(QualityReport {
            relative_mse_pct: Some(relative_mse(restored, clean)?),
            noise_reduction_pct: Some(noise_reduction(noisy, clean, restored)?),
            histograms: Some(error_histogram(&before, &after, HISTOGRAM_BINS)?),
            ..QualityReport::default()
        })
    }

    /// Adds orthogonality and unit-speed statistics of the learned measurements.
    pub fn with_measurements(
        mut self,
        mset: &MeasurementSet,
        data: &VectorFieldSamples,
        eps: EpsilonPolicy,
    ) -> Result<Self> {
        if mset.count() >= 2 {
            let (mean, max) = orthogonality_stats(mset, eps)?;
            self.mean_cos2 = Some(mean);
            self.max_cos2 = Some(max);
        }
        self.unit_residual_rms = Some(unit_residual_stats(mset, data)?);
        Ok(self)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}
