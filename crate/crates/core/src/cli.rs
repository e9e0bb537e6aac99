//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed validation (gradcheck), 2 bad input or
//! configuration, 3 optimizer divergence.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dynamics::{DynamicalSystem, NoiseSpec, VectorFieldSamples, SYSTEM_NAMES};
use crate::error::{Error, Result};
use crate::field::{GridSpec, Representation, ScalarField};
use crate::functional::{EpsilonPolicy, MeasurementSet};
use crate::gradients::{gradcheck, gradcheck_cases};
use crate::metrics::{component_errors, error_histogram, unit_speeds, QualityReport, HISTOGRAM_BINS};
use crate::optimizer::{InitStrategy, IterRecord, OptResult, OptimConfig, Termination};
use crate::pipeline::{self, OrbitSettings, RunOutput, RunSettings};
use crate::plot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "koopreg", version, about = "Learn unit-speed measurements of sampled vector fields")]
pub struct Cli {
    /// JSON or TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to KOOPREG_THREADS.
    #[arg(long, global = true, env = "KOOPREG_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a built-in system; writes clean/noisy CSVs (or orbit and segment) and a manifest.
    Synth(SynthArgs),
    /// Learn measurements from noisy lattice samples and reconstruct the field.
    Denoise(DenoiseArgs),
    /// Learn from sparse samples and reconstruct on a dense lattice.
    Generalize(GeneralizeArgs),
    /// Learn K measurements and coefficient fields on scattered samples.
    Reduce(ReduceArgs),
    /// Compare analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Quality report from existing sample files.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub dx: Option<f64>,
    /// Lower domain corner, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lo: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub hi: Option<Vec<f64>>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub noise_mean: Option<f64>,
    /// Orbit length in steps (Lorenz).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Segment length in states (Lorenz).
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct FitArgs {
    /// nodal, legendre or rbf.
    #[arg(long)]
    pub representation: Option<String>,
    /// Polynomial degree (legendre) or centres per axis (rbf).
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    #[arg(long)]
    pub clean: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Default)]
pub struct GeneralizeArgs {
    #[arg(long)]
    pub sparse: Option<PathBuf>,
    /// Dense clean samples to score the reconstruction against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Spacing of the output lattice.
    #[arg(long)]
    pub dx: Option<f64>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Default)]
pub struct ReduceArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Default)]
pub struct GradcheckArgs {
    /// Number of random seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    /// Estimated (restored) samples.
    #[arg(long)]
    pub est: Option<PathBuf>,
    /// Reference (clean) samples.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Noisy samples; enables noise reduction and histograms.
    #[arg(long)]
    pub noisy: Option<PathBuf>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<String>,
    /// Matrix of a custom linear system; overrides `system`.
    pub matrix: Option<Vec<Vec<f64>>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub dx: Option<f64>,
    pub noise_std: Option<f64>,
    pub noise_mean: Option<f64>,
    pub orbit: Option<OrbitSettings>,
    pub noisy: Option<PathBuf>,
    pub clean: Option<PathBuf>,
    pub sparse: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub est: Option<PathBuf>,
    pub k: Option<usize>,
    pub representation: Option<Representation>,
    pub init: Option<InitStrategy>,
    /// Optimizer keys layered over the command's defaults.
    pub optim: Option<Map<String, Value>>,
    pub plots: Option<bool>,
    /// Write the fields every this many iterations (0 disables).
    pub checkpoint_every: Option<usize>,
    pub gradcheck_seeds: Option<usize>,
    pub gradcheck_tolerance: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn plots(&self) -> bool {
        self.cfg.plots.unwrap_or(true)
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::Config(format!("missing input: --{what}")))
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let quiet = cli.quiet;
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            if !quiet {
                eprintln!("error: {e}");
            }
            EXIT_INPUT
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { cfg, out: cli.out, seed: cli.seed, quiet: cli.quiet };
    match cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Denoise(a) => cmd_denoise(&ctx, a),
        Command::Generalize(a) => cmd_generalize(&ctx, a),
        Command::Reduce(a) => cmd_reduce(&ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
    }
}

fn system_of(ctx: &Ctx, flag: Option<String>) -> Result<(String, DynamicalSystem)> {
    if let Some(m) = &ctx.cfg.matrix {
        return Ok(("linear".into(), DynamicalSystem::linear(m.clone())?));
    }
    let name = pick(flag, ctx.cfg.system.clone())
        .ok_or_else(|| Error::Config(format!("missing --system (one of {})", SYSTEM_NAMES.join(", "))))?;
    let sys = DynamicalSystem::named(&name)?;
    Ok((name, sys))
}

#[derive(Serialize)]
struct Manifest<'a> {
    system: &'a str,
    definition: &'a DynamicalSystem,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<&'a GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<&'a NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    orbit: Option<&'a OrbitSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment_start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    planarity: Option<f64>,
    files: Vec<&'a str>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> Result<i32> {
    let (name, sys) = system_of(ctx, a.system)?;
    if let DynamicalSystem::Lorenz { .. } = sys {
        let mut orbit = ctx.cfg.orbit.clone().unwrap_or_default();
        if let Some(s) = a.steps {
            orbit.steps = s;
        }
        if let Some(w) = a.window {
            orbit.window = w;
        }
        let seg = pipeline::planar_segment(&sys, &orbit)?;
        ctx.create_out()?;
        let mut w = csv::Writer::from_path(ctx.path("orbit.csv"))?;
        w.write_record(crate::field::io::coordinate_header(3, "x"))?;
        for p in seg.orbit.iter() {
            w.write_record(p.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        seg.segment.write_csv_path(&ctx.path("segment.csv"))?;
        let manifest = Manifest {
            system: &name,
            definition: &sys,
            grid: None,
            noise: None,
            orbit: Some(&orbit),
            segment_start: Some(seg.start),
            planarity: Some(seg.planarity),
            files: vec!["orbit.csv", "segment.csv"],
        };
        write_json(&ctx.path("manifest.json"), &manifest)?;
        ctx.say(format!("segment starts at state {} (planarity {:.4})", seg.start, seg.planarity));
        return Ok(EXIT_OK);
    }
    let n = sys.dim();
    let (dlo, dhi) = if n == 2 { (vec![6.0, -3.0], vec![12.0, 3.0]) } else { (vec![-1.0; n], vec![1.0; n]) };
    let lo = pick(a.lo, ctx.cfg.lo.clone()).unwrap_or(dlo);
    let hi = pick(a.hi, ctx.cfg.hi.clone()).unwrap_or(dhi);
    let dx = pick(a.dx, ctx.cfg.dx).unwrap_or(0.1);
    if lo.len() != n || hi.len() != n {
        return Err(Error::Config(format!("domain corners need {n} coordinates")));
    }
    let grid = GridSpec::from_bounds(&lo, &hi, dx)?;
    let std = pick(a.noise_std, ctx.cfg.noise_std).unwrap_or(0.0);
    let mean = pick(a.noise_mean, ctx.cfg.noise_mean).unwrap_or(0.0);
    let noise = NoiseSpec::new(std, mean, ctx.seed.unwrap_or(0))?;
    let clean = sys.sample_grid(&grid)?;
    ctx.create_out()?;
    clean.write_csv_path(&ctx.path("clean.csv"))?;
    let mut files = vec!["clean.csv"];
    let noisy = std > 0.0 || mean != 0.0;
    if noisy {
        clean.add_noise(&noise).write_csv_path(&ctx.path("noisy.csv"))?;
        files.push("noisy.csv");
    }
    let manifest = Manifest {
        system: &name,
        definition: &sys,
        grid: Some(&grid),
        noise: noisy.then_some(&noise),
        orbit: None,
        segment_start: None,
        planarity: None,
        files,
    };
    write_json(&ctx.path("manifest.json"), &manifest)?;
    ctx.say(format!("{} samples written to {}", clean.len(), ctx.out.display()));
    Ok(EXIT_OK)
}

/// Command defaults, then the config file, then flags.
fn settings(ctx: &Ctx, mut base: RunSettings, fit: &FitArgs, k: Option<usize>) -> Result<RunSettings> {
    if let Some(r) = ctx.cfg.representation {
        base.representation = r;
    }
    if let Some(i) = ctx.cfg.init {
        base.init = i;
    }
    if let Some(k) = pick(k, ctx.cfg.k) {
        base.k = Some(k);
    }
    if let Some(patch) = &ctx.cfg.optim {
        let mut merged = match serde_json::to_value(&base.optim)? {
            Value::Object(m) => m,
            _ => unreachable!("optimizer settings serialize to an object"),
        };
        for (key, v) in patch {
            merged.insert(key.clone(), v.clone());
        }
        base.optim = serde_json::from_value::<OptimConfig>(Value::Object(merged))
            .map_err(|e| Error::Config(format!("optim: {e}")))?;
    }
    if let Some(name) = &fit.representation {
        base.representation = match (name.as_str(), fit.degree) {
            ("nodal", _) => Representation::Nodal,
            ("legendre", d) => Representation::Legendre { degree: d.unwrap_or(4) },
            ("rbf", c) => Representation::Rbf { centers_per_axis: c.unwrap_or(6) },
            (other, _) => return Err(Error::Config(format!("unknown representation {other:?}"))),
        };
    } else if let Some(d) = fit.degree {
        base.representation = match base.representation {
            Representation::Legendre { .. } => Representation::Legendre { degree: d },
            Representation::Rbf { .. } => Representation::Rbf { centers_per_axis: d },
            Representation::Nodal => return Err(Error::Config("--degree does not apply to nodal fields".into())),
        };
    }
    if let Some(m) = fit.max_iters {
        base.optim.max_iters = m;
    }
    if let Some(a) = fit.alpha0 {
        base.optim.alpha0 = a;
    }
    if let Some(s) = ctx.seed {
        base.optim.seed = s;
    }
    base.optim.validate()?;
    Ok(base)
}

/// Writes the decimated JSON-lines log and periodic field checkpoints.
struct RunLog {
    log: BufWriter<fs::File>,
    stride: usize,
    checkpoint_every: usize,
    dir: PathBuf,
    error: Option<Error>,
}

impl RunLog {
    fn new(ctx: &Ctx, settings: &RunSettings) -> Result<RunLog> {
        Ok(RunLog {
            log: BufWriter::new(fs::File::create(ctx.path("log.jsonl"))?),
            stride: settings.optim.log_stride.max(1),
            checkpoint_every: ctx.cfg.checkpoint_every.unwrap_or(0),
            dir: ctx.out.clone(),
            error: None,
        })
    }

    fn record(&mut self, r: &IterRecord<'_>) {
        if self.error.is_some() {
            return;
        }
        let res = (|| -> Result<()> {
            if r.iter.is_multiple_of(self.stride) {
                serde_json::to_writer(&mut self.log, r)?;
                writeln!(self.log)?;
            }
            if self.checkpoint_every > 0 && r.iter > 0 && r.iter.is_multiple_of(self.checkpoint_every) {
                let dir = self.dir.join("checkpoints").join(format!("iter_{:06}", r.iter));
                fs::create_dir_all(&dir)?;
                write_fields(&dir, "m", r.fields()?.fields())?;
            }
            Ok(())
        })();
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error {
            return Err(e);
        }
        self.log.flush()?;
        Ok(())
    }
}

fn write_fields(dir: &Path, prefix: &str, fields: &[ScalarField]) -> Result<()> {
    for (i, f) in fields.iter().enumerate() {
        f.write_json(&dir.join(format!("{prefix}_{}.json", i + 1)))?;
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<VectorFieldSamples> {
    Ok(VectorFieldSamples::read_csv_path(path)?.with_inferred_layout())
}

fn write_result(ctx: &Ctx, result: &OptResult) -> Result<()> {
    write_fields(&ctx.out, "m", result.mset.fields())?;
    if let Some(b) = &result.betas {
        write_fields(&ctx.out, "beta", b.fields())?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        termination: Termination,
        iterations: usize,
        final_loss: &'a crate::functional::LossBreakdown,
        alpha_trace_changes: Vec<(usize, f64)>,
    }
    let changes =
        result.alpha_trace.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(i, w)| (i + 1, w[1])).collect();
    write_json(
        &ctx.path("optimizer.json"),
        &Summary {
            termination: result.termination,
            iterations: result.iterations,
            final_loss: result.final_loss(),
            alpha_trace_changes: changes,
        },
    )
}

fn finish_run(ctx: &Ctx, out: &RunOutput, restored_name: &str) -> Result<i32> {
    out.restored.write_csv_path(&ctx.path(restored_name))?;
    out.report.write_json(&ctx.path("report.json"))?;
    if let Some(h) = &out.report.histograms {
        h.write_csv(&ctx.path("histogram.csv"))?;
    }
    let r = &out.report;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    ctx.say(format!(
        "{:?} after {} iterations; relative MSE % {}, noise reduction % {}, mean cos2 {}, unit residual rms {}",
        out.result.termination,
        out.result.iterations,
        fmt(r.relative_mse_pct),
        fmt(r.noise_reduction_pct),
        fmt(r.mean_cos2),
        fmt(r.unit_residual_rms)
    ));
    Ok(if out.result.termination == Termination::Diverged { EXIT_DIVERGED } else { EXIT_OK })
}

fn contour_plots(ctx: &Ctx, mset: &MeasurementSet, grid: &GridSpec) -> Result<()> {
    for (i, f) in mset.fields().iter().enumerate() {
        let nodal = f.to_nodal(grid)?;
        fs::write(ctx.path(&format!("contour_m{}.svg", i + 1)), plot::contour_svg(&nodal, 15)?)?;
    }
    Ok(())
}

/// Runs a pipeline with logging; on divergence the partial artifacts stay on disk.
fn logged<F>(ctx: &Ctx, settings: &RunSettings, f: F) -> Result<RunOutput>
where
    F: FnOnce(&mut dyn FnMut(&IterRecord<'_>)) -> Result<RunOutput>,
{
    ctx.create_out()?;
    let mut log = RunLog::new(ctx, settings)?;
    let out = f(&mut |r| log.record(r));
    log.finish()?;
    let out = out?;
    write_result(ctx, &out.result)?;
    Ok(out)
}

fn cmd_denoise(ctx: &Ctx, a: DenoiseArgs) -> Result<i32> {
    let noisy = read_samples(&required(pick(a.noisy, ctx.cfg.noisy.clone()), "noisy")?)?;
    let clean = pick(a.clean, ctx.cfg.clean.clone()).map(|p| read_samples(&p)).transpose()?;
    let settings = settings(ctx, RunSettings::denoise(), &a.fit, None)?;
    if let Some(c) = &clean {
        // Surface a zero-noise input before spending time on the optimization.
        crate::metrics::noise_reduction(&noisy, c, c)?;
    }
    let out = logged(ctx, &settings, |obs| pipeline::denoise(&noisy, clean.as_ref(), &settings, obs))?;
    if ctx.plots() && noisy.dim() == 2 {
        let mut layers = vec![plot::QuiverLayer { samples: &noisy, color: plot::NOISY }];
        if let Some(c) = &clean {
            layers.push(plot::QuiverLayer { samples: c, color: plot::CLEAN });
        }
        layers.push(plot::QuiverLayer { samples: &out.restored, color: plot::RESTORED });
        fs::write(ctx.path("quiver.svg"), plot::quiver_svg(&layers)?)?;
        contour_plots(ctx, &out.result.mset, out.restored.layout().expect("lattice output"))?;
    }
    finish_run(ctx, &out, "restored.csv")
}

fn cmd_generalize(ctx: &Ctx, a: GeneralizeArgs) -> Result<i32> {
    let sparse = read_samples(&required(pick(a.sparse, ctx.cfg.sparse.clone()), "sparse")?)?;
    let reference = pick(a.reference, ctx.cfg.reference.clone()).map(|p| read_samples(&p)).transpose()?;
    let dx = pick(a.dx, ctx.cfg.dx).unwrap_or(0.1);
    let bbox = sparse.points().bounding_box()?;
    let lo = ctx.cfg.lo.clone().unwrap_or_else(|| bbox.lo().to_vec());
    let hi = ctx.cfg.hi.clone().unwrap_or_else(|| bbox.hi().to_vec());
    let dense = match reference.as_ref().and_then(|r| r.layout()) {
        Some(g) => g.clone(),
        None => GridSpec::from_bounds(&lo, &hi, dx)?,
    };
    let settings = settings(ctx, RunSettings::generalize(), &a.fit, None)?;
    let out = logged(ctx, &settings, |obs| pipeline::generalize(&sparse, &dense, reference.as_ref(), &settings, obs))?;
    if ctx.plots() && sparse.dim() == 2 {
        let mut layers = vec![plot::QuiverLayer { samples: &sparse, color: plot::NOISY }];
        if let Some(r) = &reference {
            layers.push(plot::QuiverLayer { samples: r, color: plot::CLEAN });
        }
        layers.push(plot::QuiverLayer { samples: &out.restored, color: plot::RESTORED });
        fs::write(ctx.path("quiver.svg"), plot::quiver_svg(&layers)?)?;
        contour_plots(ctx, &out.result.mset, &dense)?;
    }
    finish_run(ctx, &out, "generalized.csv")
}

fn cmd_reduce(ctx: &Ctx, a: ReduceArgs) -> Result<i32> {
    let data = VectorFieldSamples::read_csv_path(&required(pick(a.data, ctx.cfg.data.clone()), "data")?)?;
    let settings = settings(ctx, RunSettings::reduce(), &a.fit, a.k)?;
    let k = settings.k.unwrap_or(data.dim());
    if k == 0 || k > data.dim() {
        return Err(Error::Config(format!("K must lie in 1..={}, got {k}", data.dim())));
    }
    let out = logged(ctx, &settings, |obs| pipeline::reduce(&data, &settings, obs))?;
    if ctx.plots() {
        let speeds = unit_speeds(&out.result.mset, &data)?;
        let colors = ["red", "blue", "green", "orange"];
        let traces: Vec<plot::Trace<'_>> = speeds
            .iter()
            .enumerate()
            .map(|(i, s)| plot::Trace { values: s, color: colors[i % colors.len()] })
            .collect();
        fs::write(ctx.path("unit_speed.svg"), plot::trace_svg(&traces)?)?;
        if k >= 2 {
            let cos2 = pointwise_cos2(&out.result.mset, &data)?;
            fs::write(ctx.path("cos2.svg"), plot::trace_svg(&[plot::Trace { values: &cos2, color: "black" }])?)?;
        }
        let clean = plot::project_plane(&data)?;
        let restored = plot::project_plane(&out.restored)?;
        let layers = [
            plot::QuiverLayer { samples: &clean, color: plot::NOISY },
            plot::QuiverLayer { samples: &restored, color: plot::RESTORED },
        ];
        fs::write(ctx.path("quiver.svg"), plot::quiver_svg(&layers)?)?;
    }
    finish_run(ctx, &out, "restored.csv")
}

/// cos^2 of the first two measurement gradients at each sample.
fn pointwise_cos2(mset: &MeasurementSet, data: &VectorFieldSamples) -> Result<Vec<f64>> {
    let sites = crate::field::Sites::Points(data.points());
    let g1 = mset.field(0).gradient(sites)?;
    let g2 = mset.field(1).gradient(sites)?;
    let eps = EpsilonPolicy::default().eps;
    Ok((0..data.len())
        .map(|j| {
            let (a, b) = (g1.get(j), g2.get(j));
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>() + eps;
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>() + eps;
            d * d / (na * nb)
        })
        .collect())
}

fn cmd_gradcheck(ctx: &Ctx, a: GradcheckArgs) -> Result<i32> {
    let n_seeds = pick(a.seeds, ctx.cfg.gradcheck_seeds).unwrap_or(20);
    let tolerance = pick(a.tolerance, ctx.cfg.gradcheck_tolerance).unwrap_or(1e-5);
    let base = ctx.seed.unwrap_or(0);
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|s| base + s).collect();
    let reps =
        [Representation::Nodal, Representation::Legendre { degree: 3 }, Representation::Rbf { centers_per_axis: 4 }];
    let cases = gradcheck_cases(&seeds, &reps, &[2, 3]);
    let (report, outcomes) = gradcheck(&cases, 1e-6, tolerance)?;
    ctx.create_out()?;
    #[derive(Serialize)]
    struct Full<'a> {
        #[serde(flatten)]
        report: &'a crate::gradients::GradcheckReport,
        outcomes: &'a [crate::gradients::GradcheckOutcome],
    }
    write_json(&ctx.path("gradcheck.json"), &Full { report: &report, outcomes: &outcomes })?;
    if report.passed {
        ctx.say(format!("gradcheck passed: {} cases, max relative error {:.3e}", report.cases, report.max_rel_err));
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "gradcheck failed: max relative error {:.3e} > {:.1e} at parameter {} of {:?}",
            report.max_rel_err, tolerance, report.argmax_param, report.worst_case
        );
        Ok(EXIT_VALIDATION)
    }
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<i32> {
    let est = VectorFieldSamples::read_csv_path(&required(pick(a.est, ctx.cfg.est.clone()), "est")?)?;
    let reference = VectorFieldSamples::read_csv_path(&required(pick(a.reference, ctx.cfg.reference.clone()), "ref")?)?;
    let noisy = pick(a.noisy, ctx.cfg.noisy.clone()).map(|p| VectorFieldSamples::read_csv_path(&p)).transpose()?;
    let report = match &noisy {
        Some(n) => QualityReport::denoising(n, &reference, &est)?,
        None => QualityReport {
            relative_mse_pct: Some(crate::metrics::relative_mse(&est, &reference)?),
            ..QualityReport::default()
        },
    };
    ctx.create_out()?;
    report.write_json(&ctx.path("report.json"))?;
    let hist = match (&report.histograms, &noisy) {
        (Some(h), _) => h.clone(),
        (None, _) => {
            let after = component_errors(&est, &reference)?;
            error_histogram(&after, &after, HISTOGRAM_BINS)?
        }
    };
    hist.write_csv(&ctx.path("histogram.csv"))?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    ctx.say(format!(
        "relative MSE % {}, noise reduction % {}",
        fmt(report.relative_mse_pct),
        fmt(report.noise_reduction_pct)
    ));
    Ok(EXIT_OK)
}
