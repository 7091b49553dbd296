//! `geopursuit` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use geopursuit::affine1d::{Affine1D, TauAdicGrid};
use geopursuit::aniso2d::{Aniso2D, Grid2D};
use geopursuit::experiments::{
    self, generate_burst_signal, noise_signal, synthetic_test_image, BurstKind, BurstSignalSpec, EngineSpec,
};
use geopursuit::geometry::{
    affine_probes, aniso_probes, christoffel, condition_bound, density_radius, greedy_factor_surrogate, metric,
    weakness_factors, WeaknessReport,
};
use geopursuit::io::{self, format_f64, to_json_line, FileFormat};
use geopursuit::pursuit::{self, Mode, OptimizeScope, PursuitConfig, SearchGrid};
use geopursuit::{Execution, ParamPoint, Shape, SignalBuffer};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "geopursuit", version, about = "Geometric matching pursuit")]
struct Cli {
    /// Worker threads (0 picks one per core).
    #[arg(long, global = true, env = "GEOPURSUIT_THREADS")]
    threads: Option<usize>,
    /// Where to write the run manifest (stderr when omitted).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random burst signal or the synthetic test image.
    GenSignal(GenSignalArgs),
    /// Run dMP or gMP on a signal.
    Decompose(DecomposeArgs),
    /// Rebuild the approximation from decomposition steps.
    Reconstruct(ReconstructArgs),
    /// Metric, curvature and density diagnostics of a grid.
    Geometry(GeometryArgs),
    /// Mean residual energy against iteration.
    Curve(CurveArgs),
    /// Normalized approximation error of the first selections.
    Nae(NaeArgs),
    /// PSNR of anisotropic decompositions of an image.
    Image(ImageArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SignalClass {
    Gaussian,
    Rectangular,
    Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DictKind {
    Affine1d,
    Aniso2d,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Dmp,
    Gmp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Dmp => Mode::Dmp,
            ModeArg::Gmp => Mode::Gmp,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScopeArg {
    BestOnly,
    AllAtoms,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BurstArg {
    Gaussian,
    Rectangular,
}

impl From<BurstArg> for BurstKind {
    fn from(b: BurstArg) -> BurstKind {
        match b {
            BurstArg::Gaussian => BurstKind::Gaussian,
            BurstArg::Rectangular => BurstKind::Rectangular,
        }
    }
}

#[derive(Args, Debug)]
struct GenSignalArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    class: SignalClass,
    /// Signal length.
    #[arg(long, default_value_t = 8192)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    bursts: usize,
    /// Burst width parameter `L`.
    #[arg(long, default_value_t = 256)]
    l: usize,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DictArgs {
    /// Dictionary; inferred from the grid keys when omitted.
    #[arg(long, value_enum)]
    dict: Option<DictKind>,
    /// Grid JSON: `{b0,a0,tau,jmin,jmax,N}` or `{Nx,Ny,J,K}`.
    #[arg(long)]
    grid: PathBuf,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[command(flatten)]
    dict: DictArgs,
    #[arg(long = "in")]
    input: PathBuf,
    /// Steps as JSONL, or CSV when the extension is `.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Also write the final residual.
    #[arg(long)]
    residual: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gmp")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    kappa: usize,
    #[arg(long, default_value_t = 0.1)]
    chi: f64,
    #[arg(long, default_value_t = 10)]
    max_halvings: usize,
    #[arg(long, default_value_t = 1e-6)]
    grad_stop: f64,
    #[arg(long, default_value_t = 12)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    energy_floor: f64,
    #[arg(long, value_enum, default_value = "best-only")]
    scope: ScopeArg,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[command(flatten)]
    dict: DictArgs,
    #[arg(long)]
    steps: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Original signal, for error reporting.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Residual written by `decompose`, for the round-trip check.
    #[arg(long)]
    residual: Option<PathBuf>,
    /// Peak value for PSNR.
    #[arg(long)]
    peak: Option<f64>,
}

#[derive(Args, Debug)]
struct GeometryArgs {
    #[command(flatten)]
    dict: DictArgs,
    /// Point at which the metric and Christoffel symbols are reported.
    #[arg(long, value_delimiter = ',')]
    point: Option<Vec<f64>>,
    /// Random points for the condition bound.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    /// Probes for the density radius.
    #[arg(long, default_value_t = 64)]
    probes: usize,
    /// Midpoint segments per path length.
    #[arg(long, default_value_t = 8)]
    segments: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Greedy factor; estimated from a noise corpus when omitted.
    #[arg(long)]
    beta: Option<f64>,
    /// Noise signals used to estimate the greedy factor.
    #[arg(long, default_value_t = 8)]
    corpus: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_engine(s: &str) -> std::result::Result<EngineSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> std::result::Result<f64, String> {
        parts
            .get(i)
            .ok_or_else(|| format!("engine `{s}` is missing a field"))?
            .parse::<f64>()
            .map_err(|e| format!("engine `{s}`: {e}"))
    };
    match parts[0] {
        "dmp" if parts.len() == 3 => Ok(EngineSpec::dmp(num(1)?, num(2)?)),
        "gmp" if parts.len() == 4 => {
            let kappa = parts[3].parse::<usize>().map_err(|e| format!("engine `{s}`: {e}"))?;
            Ok(EngineSpec::gmp(num(1)?, num(2)?, kappa))
        }
        _ => Err(format!("engine `{s}` must be dmp:B0:LOG2TAU or gmp:B0:LOG2TAU:KAPPA")),
    }
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    class: BurstArg,
    #[arg(long, default_value_t = 8192)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    bursts: usize,
    #[arg(long, default_value_t = 256)]
    l: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// `dmp:B0:LOG2TAU` or `gmp:B0:LOG2TAU:KAPPA`; repeatable.
    #[arg(long = "engine", value_parser = parse_engine)]
    engines: Vec<EngineSpec>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NaeArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    class: BurstArg,
    #[arg(long, default_value_t = 8192)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    bursts: usize,
    #[arg(long, default_value_t = 256)]
    l: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    at_iteration: usize,
    #[arg(long, default_value_t = 1.0)]
    b0: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1")]
    log2_tau: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dmp,gmp")]
    modes: Vec<ModeArg>,
    #[arg(long, default_value_t = 10)]
    kappa: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ImageArgs {
    /// Image file; the synthetic test image is used when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Side of the synthetic test image.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    j: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    atoms: usize,
    /// gMP budgets to compare against dMP.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    kappa: Vec<usize>,
    #[arg(long, default_value_t = 255.0)]
    peak: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    config: Value,
    seed: Option<u64>,
    version: &'static str,
    threads: usize,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Value>,
}

/// What a subcommand reports back for the manifest.
struct RunRecord {
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: Option<Value>,
}

impl RunRecord {
    fn new(config: Value) -> Self {
        Self {
            config,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: None,
        }
    }
}

enum Setup {
    Line(Affine1D, TauAdicGrid),
    Plane(Aniso2D, Grid2D),
}

impl Setup {
    fn load(args: &DictArgs) -> Result<(Self, Value)> {
        let text = fs::read_to_string(&args.grid).with_context(|| format!("reading {}", args.grid.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.grid.display()))?;
        let inferred = if value.get("tau").is_some() {
            DictKind::Affine1d
        } else if value.get("Nx").is_some() {
            DictKind::Aniso2d
        } else {
            bail!("grid {} is neither a 1-D nor a 2-D grid", args.grid.display());
        };
        if let Some(kind) = args.dict {
            if kind != inferred {
                bail!("--dict {kind:?} does not match the grid in {}", args.grid.display());
            }
        }
        let setup = match inferred {
            DictKind::Affine1d => {
                let grid: TauAdicGrid = serde_json::from_value(value.clone())?;
                let dict = Affine1D::new(grid.n)?;
                grid.validate_for(&dict)?;
                Setup::Line(dict, grid)
            }
            DictKind::Aniso2d => {
                let grid: Grid2D = serde_json::from_value(value.clone())?;
                grid.validate()?;
                Setup::Plane(Aniso2D::new(grid.nx, grid.ny)?, grid)
            }
        };
        Ok((setup, json!({ "dict": inferred, "grid": value })))
    }

    fn shape(&self) -> Shape {
        match self {
            Setup::Line(_, g) => Shape::D1(g.n),
            Setup::Plane(_, g) => Shape::D2 { nx: g.nx, ny: g.ny },
        }
    }

    fn check_signal(&self, f: &SignalBuffer) -> Result<()> {
        if f.shape() != self.shape() {
            bail!("signal shape {:?} does not match grid shape {:?}", f.shape(), self.shape());
        }
        Ok(())
    }
}

fn load_signal(path: &Path) -> Result<SignalBuffer> {
    io::load(path, FileFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))
}

fn save_signal(path: &Path, buf: &SignalBuffer) -> Result<()> {
    io::save(path, FileFormat::from_path(path), buf).with_context(|| format!("writing {}", path.display()))
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn gen_signal(a: &GenSignalArgs) -> Result<RunRecord> {
    let (buf, config) = match a.class {
        SignalClass::Image => (
            synthetic_test_image(a.nx, a.ny),
            json!({ "class": "image", "nx": a.nx, "ny": a.ny }),
        ),
        SignalClass::Gaussian | SignalClass::Rectangular => {
            let kind = if matches!(a.class, SignalClass::Gaussian) {
                BurstKind::Gaussian
            } else {
                BurstKind::Rectangular
            };
            let spec = BurstSignalSpec {
                n: a.n,
                n_bursts: a.bursts,
                kind,
                l: a.l,
                seed: a.seed,
                ..BurstSignalSpec::default()
            };
            (generate_burst_signal(&spec)?, serde_json::to_value(&spec)?)
        }
    };
    save_signal(&a.out, &buf)?;
    let mut rec = RunRecord::new(config);
    rec.seed = Some(a.seed);
    rec.outputs.push(a.out.clone());
    Ok(rec)
}

fn decompose(a: &DecomposeArgs) -> Result<RunRecord> {
    let (setup, grid_config) = Setup::load(&a.dict)?;
    let f = load_signal(&a.input)?;
    setup.check_signal(&f)?;
    let config = PursuitConfig {
        alpha: a.alpha,
        mode: a.mode.into(),
        kappa: a.kappa,
        chi: a.chi,
        max_halvings: a.max_halvings,
        grad_stop_ratio: a.grad_stop,
        max_iterations: a.max_iters,
        optimize_scope: match a.scope {
            ScopeArg::BestOnly => OptimizeScope::BestOnly,
            ScopeArg::AllAtoms => OptimizeScope::AllAtoms,
        },
        energy_floor: a.energy_floor,
        execution: Execution::Parallel,
    };
    config.validate()?;
    let d = match &setup {
        Setup::Line(dict, grid) => pursuit::run(&f, dict, grid, &config)?,
        Setup::Plane(dict, grid) => pursuit::run(&f, dict, grid, &config)?,
    };
    let text = if is_csv(&a.out) { d.to_csv() } else { d.to_jsonl()? };
    write_text(Some(&a.out), &text)?;
    let mut rec = RunRecord::new(json!({ "pursuit": config, "grid": grid_config }));
    rec.inputs = vec![a.dict.grid.clone(), a.input.clone()];
    rec.outputs.push(a.out.clone());
    if let Some(path) = &a.residual {
        save_signal(path, &d.residual)?;
        rec.outputs.push(path.clone());
    }
    Ok(rec)
}

#[derive(Serialize)]
struct ReconstructReport {
    atoms: usize,
    approx_norm: f64,
    /// `‖f − A‖/‖f‖`.
    relative_error: Option<f64>,
    /// `‖f − A − R‖/‖f‖`.
    roundtrip_error: Option<f64>,
    psnr_db: Option<f64>,
}

fn reconstruct(a: &ReconstructArgs) -> Result<RunRecord> {
    let (setup, grid_config) = Setup::load(&a.dict)?;
    let text = fs::read_to_string(&a.steps).with_context(|| format!("reading {}", a.steps.display()))?;
    let steps = if is_csv(&a.steps) {
        pursuit::steps_from_csv(&text)?
    } else {
        pursuit::steps_from_jsonl(&text)?
    };
    let approx = match &setup {
        Setup::Line(dict, _) => pursuit::reconstruct(&steps, dict, setup.shape())?,
        Setup::Plane(dict, _) => pursuit::reconstruct(&steps, dict, setup.shape())?,
    };
    save_signal(&a.out, &approx)?;
    let mut rec = RunRecord::new(json!({ "grid": grid_config, "peak": a.peak }));
    rec.inputs = vec![a.dict.grid.clone(), a.steps.clone()];
    let mut report = ReconstructReport {
        atoms: steps.len(),
        approx_norm: approx.norm(),
        relative_error: None,
        roundtrip_error: None,
        psnr_db: None,
    };
    if let Some(path) = &a.input {
        let f = load_signal(path)?;
        setup.check_signal(&f)?;
        rec.inputs.push(path.clone());
        let norm = f.norm();
        let mut diff = f.clone();
        diff.add_scaled(-1.0, &approx)?;
        report.relative_error = Some(diff.norm() / norm);
        if let Some(peak) = a.peak {
            report.psnr_db = Some(geopursuit::signal::psnr(&f, &approx, peak)?);
        }
        if let Some(rpath) = &a.residual {
            let r = load_signal(rpath)?;
            rec.inputs.push(rpath.clone());
            diff.add_scaled(-1.0, &r)?;
            report.roundtrip_error = Some(diff.norm() / norm);
        }
    } else if a.residual.is_some() {
        bail!("--residual needs --in");
    }
    println!("{}", to_json_line(&report)?);
    rec.outputs.push(a.out.clone());
    Ok(rec)
}

#[derive(Serialize)]
struct GeometryReport {
    dict: DictKind,
    point: ParamPoint,
    metric: Vec<Vec<f64>>,
    christoffel: Vec<Vec<Vec<f64>>>,
    condition_bound: f64,
    density_radius: f64,
    weakness: WeaknessReport,
}

fn geometry(a: &GeometryArgs) -> Result<RunRecord> {
    let (setup, grid_config) = Setup::load(&a.dict)?;
    let exec = Execution::Parallel;
    let noise_seed = experiments::trial_seed(a.seed, 0);
    let corpus: Vec<SignalBuffer> = (0..a.corpus as u64)
        .map(|i| noise_signal(setup.shape(), experiments::trial_seed(noise_seed, i)))
        .collect();
    let beta = |plan: &pursuit::SearchPlan| -> Result<f64> {
        match a.beta {
            Some(b) => Ok(b),
            None => Ok(greedy_factor_surrogate(plan, &corpus, exec)?),
        }
    };
    let (kind, point, metric_rows, gamma, k, rho, beta) = match &setup {
        Setup::Line(dict, grid) => {
            let scales = (grid.scale(grid.jmin) * grid.scale(grid.jmax)).sqrt();
            let p = pick_point(a.point.as_deref(), vec![(grid.n / 2) as f64, scales])?;
            let samples = affine_probes(grid, a.samples, experiments::trial_seed(a.seed, 1));
            let probes = affine_probes(grid, a.probes, experiments::trial_seed(a.seed, 2));
            (
                DictKind::Affine1d,
                p.clone(),
                metric(dict, &p)?.rows(),
                christoffel(dict, &p)?,
                condition_bound(dict, &samples, exec)?,
                density_radius(dict, grid, &probes, a.segments, exec)?,
                beta(&grid.plan(dict)?)?,
            )
        }
        Setup::Plane(dict, grid) => {
            let scales = grid.scales();
            let mid = (scales[0] * scales[scales.len() - 1]).sqrt();
            let default = vec![(grid.nx / 2) as f64, (grid.ny / 2) as f64, 0.25, mid, mid];
            let p = pick_point(a.point.as_deref(), default)?;
            let samples = aniso_probes(grid, a.samples, experiments::trial_seed(a.seed, 1));
            let probes = aniso_probes(grid, a.probes, experiments::trial_seed(a.seed, 2));
            (
                DictKind::Aniso2d,
                p.clone(),
                metric(dict, &p)?.rows(),
                christoffel(dict, &p)?,
                condition_bound(dict, &samples, exec)?,
                density_radius(dict, grid, &probes, a.segments, exec)?,
                beta(&grid.plan(dict)?)?,
            )
        }
    };
    let report = GeometryReport {
        dict: kind,
        point,
        metric: metric_rows,
        christoffel: gamma,
        condition_bound: k,
        density_radius: rho,
        weakness: weakness_factors(a.alpha, beta, k, rho),
    };
    write_text(a.out.as_deref(), &format!("{}\n", to_json_line(&report)?))?;
    let mut rec = RunRecord::new(json!({
        "grid": grid_config,
        "samples": a.samples,
        "probes": a.probes,
        "segments": a.segments,
        "alpha": a.alpha,
        "beta": a.beta,
        "corpus": a.corpus,
    }));
    rec.seed = Some(a.seed);
    rec.inputs.push(a.dict.grid.clone());
    rec.outputs.extend(a.out.clone());
    Ok(rec)
}

fn pick_point(given: Option<&[f64]>, default: Vec<f64>) -> Result<ParamPoint> {
    match given {
        None => Ok(ParamPoint(default)),
        Some(v) if v.len() == default.len() => Ok(ParamPoint(v.to_vec())),
        Some(v) => Err(anyhow!("--point needs {} coordinates, got {}", default.len(), v.len())),
    }
}

fn burst_class(kind: BurstArg, n: usize, bursts: usize, l: usize, seed: u64) -> BurstSignalSpec {
    BurstSignalSpec {
        n,
        n_bursts: bursts,
        kind: kind.into(),
        l,
        seed,
        ..BurstSignalSpec::default()
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Dmp => "dmp",
        Mode::Gmp => "gmp",
    }
}

fn curve(a: &CurveArgs) -> Result<RunRecord> {
    let class = burst_class(a.class, a.n, a.bursts, a.l, a.seed);
    let engines = if a.engines.is_empty() {
        vec![EngineSpec::dmp(1.0, 0.25), EngineSpec::dmp(2.0, 0.5), EngineSpec::gmp(2.0, 0.5, 10)]
    } else {
        a.engines.clone()
    };
    let mut csv = String::from("mode,b0,log2_tau,kappa,N,trials,m,mean_residual_energy\n");
    for e in &engines {
        let grid = e.grid(a.n)?;
        let c = experiments::convergence_curve(&class, &grid, &e.config(a.iters, Execution::Parallel), a.trials, a.iters)?;
        for (m, v) in c.mean.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                mode_name(e.mode),
                format_f64(e.b0),
                format_f64(e.log2_tau),
                e.kappa,
                a.n,
                a.trials,
                m,
                format_f64(*v)
            ));
        }
    }
    write_text(a.out.as_deref(), &csv)?;
    let mut rec = RunRecord::new(json!({
        "class": class,
        "trials": a.trials,
        "iters": a.iters,
        "engines": engines,
    }));
    rec.seed = Some(a.seed);
    rec.outputs.extend(a.out.clone());
    Ok(rec)
}

fn nae(a: &NaeArgs) -> Result<RunRecord> {
    let class = burst_class(a.class, a.n, a.bursts, a.l, a.seed);
    let mut csv = String::from("mode,b0,log2_tau,kappa,N,trials,at_iteration,nae,std_error\n");
    for &log2_tau in &a.log2_tau {
        for &mode in &a.modes {
            let engine = match Mode::from(mode) {
                Mode::Dmp => EngineSpec::dmp(a.b0, log2_tau),
                Mode::Gmp => EngineSpec::gmp(a.b0, log2_tau, a.kappa),
            };
            let grid = engine.grid(a.n)?;
            let r = experiments::nae(&class, &grid, &engine.config(1, Execution::Parallel), a.trials, a.at_iteration)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                mode_name(engine.mode),
                format_f64(a.b0),
                format_f64(log2_tau),
                engine.kappa,
                a.n,
                a.trials,
                a.at_iteration,
                format_f64(r.mean),
                format_f64(r.std_error)
            ));
        }
    }
    write_text(a.out.as_deref(), &csv)?;
    let mut rec = RunRecord::new(json!({
        "class": class,
        "trials": a.trials,
        "at_iteration": a.at_iteration,
        "b0": a.b0,
        "log2_tau": a.log2_tau,
        "modes": a.modes.iter().map(|&m| mode_name(m.into())).collect::<Vec<_>>(),
        "kappa": a.kappa,
    }));
    rec.seed = Some(a.seed);
    rec.outputs.extend(a.out.clone());
    Ok(rec)
}

fn image(a: &ImageArgs) -> Result<RunRecord> {
    let img = match &a.input {
        Some(path) => load_signal(path)?,
        None => synthetic_test_image(a.size, a.size),
    };
    let Shape::D2 { nx, ny } = img.shape() else {
        bail!("image input must be 2-D");
    };
    let mut configs = vec![PursuitConfig::dmp(a.atoms)];
    configs.extend(a.kappa.iter().map(|&k| PursuitConfig::gmp(k, a.atoms)));
    let rows = experiments::image_harness(&img, a.j, a.k, a.atoms, a.peak, &configs)?;
    let mut csv = String::from("mode,kappa,Nx,Ny,J,K,n_atoms,psnr_db\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            mode_name(r.mode),
            r.kappa,
            nx,
            ny,
            a.j,
            a.k,
            r.n_atoms,
            format_f64(r.psnr_db)
        ));
    }
    write_text(a.out.as_deref(), &csv)?;
    let mut rec = RunRecord::new(json!({
        "grid": Grid2D { nx, ny, j: a.j, k: a.k },
        "atoms": a.atoms,
        "kappa": a.kappa,
        "peak": a.peak,
        "synthetic_size": if a.input.is_none() { Some(a.size) } else { None },
    }));
    rec.inputs.extend(a.input.clone());
    rec.outputs.extend(a.out.clone());
    rec.timings = Some(json!(rows
        .iter()
        .map(|r| json!({ "mode": mode_name(r.mode), "kappa": r.kappa, "seconds": r.seconds }))
        .collect::<Vec<_>>()));
    Ok(rec)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenSignal(_) => "gen-signal",
        Command::Decompose(_) => "decompose",
        Command::Reconstruct(_) => "reconstruct",
        Command::Geometry(_) => "geometry",
        Command::Curve(_) => "curve",
        Command::Nae(_) => "nae",
        Command::Image(_) => "image",
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("starting the thread pool")?;
    let start = Instant::now();
    let rec = match &cli.command {
        Command::GenSignal(a) => gen_signal(a),
        Command::Decompose(a) => decompose(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Geometry(a) => geometry(a),
        Command::Curve(a) => curve(a),
        Command::Nae(a) => nae(a),
        Command::Image(a) => image(a),
    }?;
    let manifest = RunManifest {
        command: command_name(&cli.command).to_string(),
        argv: std::env::args().collect(),
        config: rec.config,
        seed: rec.seed,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        inputs: rec.inputs,
        outputs: rec.outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
        timings: rec.timings,
    };
    let line = to_json_line(&manifest)?;
    match &cli.manifest {
        Some(path) => fs::write(path, format!("{line}\n")).with_context(|| format!("writing {}", path.display()))?,
        None => eprintln!("{line}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_specs_parse() {
        assert_eq!(parse_engine("dmp:2:0.5").unwrap(), EngineSpec::dmp(2.0, 0.5));
        assert_eq!(parse_engine("gmp:1:0.25:10").unwrap(), EngineSpec::gmp(1.0, 0.25, 10));
        for bad in ["dmp:2", "gmp:1:0.25", "xmp:1:1", "dmp:a:1", "gmp:1:1:-3"] {
            assert!(parse_engine(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn point_defaults_and_checks_dimension() {
        assert_eq!(pick_point(None, vec![1.0, 2.0]).unwrap().0, vec![1.0, 2.0]);
        assert_eq!(pick_point(Some(&[3.0, 4.0]), vec![1.0, 2.0]).unwrap().0, vec![3.0, 4.0]);
        assert!(pick_point(Some(&[3.0]), vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
