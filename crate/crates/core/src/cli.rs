//! The `strh2` command line.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or parse error,
//! 3 unstable input model, 4 optimizer failure, 5 failed certification.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{default_manifest, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::h2metric::{self, auto_grid, GridOptions};
use crate::optcond::{self, ConditionReport};
use crate::structopt::{self, make_parameterization, MinimizeOptions, Objective, ParamOptions, ReduceOptions, Rom, Structure, Termination};
use crate::sysmodel::{load_model, save_model, Model, StateSpaceFOM, TransferEvaluator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_OPTIMIZER: i32 = 4;
pub const EXIT_CERTIFICATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "strh2", version, about = "Structured H2-optimal model reduction and optimality certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded model, or the whole shipped corpus with --corpus.
    Generate(GenerateArgs),
    /// H2 norm by quadrature and, for rational models, by the Gramian.
    H2norm(H2normArgs),
    /// Reduce a model and certify the result.
    Reduce(ReduceArgs),
    /// Compare analytic parameter gradients with finite differences.
    Gradcheck(PairArgs),
    /// Evaluate the interpolatory optimality conditions of a ROM.
    CheckConditions(CheckArgs),
    /// CSV of the pointwise error |H(iω) − Ĥ(iω)| on the quadrature grid.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub grid_nodes: Option<usize>,
    #[arg(long)]
    pub grid_scale: Option<f64>,
    #[arg(long)]
    pub decay_order: Option<u32>,
}

impl GridArgs {
    fn options(&self) -> GridOptions {
        GridOptions { nodes: self.grid_nodes, scale: self.grid_scale, decay_order: self.decay_order }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, required_unless_present = "corpus")]
    pub kind: Option<ModelKind>,
    #[arg(long, short = 'n', default_value_t = 10)]
    pub n: usize,
    #[arg(long, short = 'm', default_value_t = 1)]
    pub m: usize,
    #[arg(long, short = 'p', default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Write every model of the shipped manifest into this directory.
    #[arg(long, conflicts_with = "kind")]
    pub corpus: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct H2normArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    pub fom: PathBuf,
    #[arg(long, short = 's')]
    pub structure: Structure,
    #[arg(long, short = 'r')]
    pub order: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Certification tolerance; defaults depend on the structure.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Number of conjugate pole pairs (unstructured and delay ROMs).
    #[arg(long)]
    pub pairs: Option<usize>,
    /// ROM delay; taken from the FOM when omitted.
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Reduced model file. The optimizer result and the condition report
    /// go next to it as `<stem>.result.json` and `<stem>.conditions.json`.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    pub fom: PathBuf,
    pub rom: PathBuf,
    /// Inferred from the ROM file when omitted.
    #[arg(long, short = 's')]
    pub structure: Option<Structure>,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub fom: PathBuf,
    pub rom: PathBuf,
    #[arg(long, short = 's')]
    pub structure: Option<Structure>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Fixed Lambert W branch window for delay ROMs instead of the adaptive one.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub fom: PathBuf,
    pub rom: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Everything that determines a run, embedded in its JSON outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub inputs: Vec<String>,
    pub output: Option<String>,
    pub structure: Option<Structure>,
    pub order: Option<usize>,
    pub grid: GridOptions,
    pub tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub version: &'static str,
}

impl RunConfig {
    fn new(subcommand: &'static str, inputs: &[&Path], output: Option<&Path>) -> Self {
        RunConfig {
            subcommand,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            output: output.map(|p| p.display().to_string()),
            structure: None,
            order: None,
            grid: GridOptions::default(),
            tol: None,
            grad_tol: None,
            restarts: None,
            seed: None,
            threads: crate::par::thread_count(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Default certification tolerance per structure.
pub fn default_tolerance(s: Structure) -> f64 {
    match s {
        Structure::Unstructured => 1e-6,
        Structure::SecondOrder | Structure::PortHamiltonian => 1e-5,
        Structure::Delay => 1e-4,
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::InvalidArgument(_) | Error::Dimension(_) | Error::UnsupportedStructure(_) => EXIT_USAGE,
        Error::UnstableSystem(_) | Error::UnstablePole(_) | Error::StabilityCheckFailed { .. } => EXIT_UNSTABLE,
        Error::LineSearchFailure { .. } => EXIT_OPTIMIZER,
        _ => EXIT_INTERNAL,
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err((code, e)) => {
            eprintln!("error: {e}");
            code
        }
    }
}

type Outcome = std::result::Result<i32, (i32, Error)>;

fn fail(e: Error) -> (i32, Error) {
    (exit_code(&e), e)
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Generate(a) => cmd_generate(&a).map_err(fail),
        Command::H2norm(a) => cmd_h2norm(&a),
        Command::Reduce(a) => cmd_reduce(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::CheckConditions(a) => cmd_check_conditions(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// `{"timestamp", "config", ...payload}` as pretty JSON.
fn document(config: &RunConfig, payload: Value) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("timestamp".into(), json!(timestamp()));
    doc.insert("config".into(), serde_json::to_value(config).expect("config serializes"));
    if let Value::Object(map) = payload {
        doc.extend(map);
    }
    serde_json::to_string_pretty(&Value::Object(doc)).expect("document serializes") + "\n"
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "rom".into());
    path.with_file_name(format!("{stem}.{suffix}.json"))
}

fn cmd_generate(a: &GenerateArgs) -> Result<i32> {
    if let Some(dir) = &a.corpus {
        let manifest = default_manifest();
        manifest.write(dir)?;
        println!("wrote {} models to {}", manifest.entries.len(), dir.display());
        return Ok(EXIT_OK);
    }
    let kind = a.kind.ok_or_else(|| Error::InvalidArgument("--kind is required".into()))?;
    let spec = ModelSpec { kind, n: a.n, m: a.m, p: a.p, seed: a.seed, alpha: a.alpha, beta: a.beta, tau: a.tau };
    let model = spec.generate()?;
    match &a.output {
        Some(path) => save_model(&model, path)?,
        None => println!("{}", model.to_json()),
    }
    Ok(EXIT_OK)
}

fn ss(a: crate::linalg::RMat, b: crate::linalg::RMat, c: crate::linalg::RMat) -> Result<StateSpaceFOM> {
    StateSpaceFOM::new(None, a, b, c, None)
}

/// Delay-free state-space form, where one exists.
fn rational_form(model: &Model) -> Result<Option<StateSpaceFOM>> {
    Ok(match model {
        Model::StateSpace(m) if m.delay.is_none() => Some(m.clone()),
        Model::SecondOrder(m) => Some(m.to_state_space()),
        Model::PortHamiltonian(m) => Some(ss(m.system_matrix(), m.b.clone(), m.b.transpose())?),
        _ => None,
    })
}

/// `Ok` iff every pole of the model lies in the open left half-plane.
pub fn check_model_stability(model: &Model) -> Result<()> {
    if let Some(fom) = rational_form(model)? {
        return fom.check_stability();
    }
    match model {
        Model::StateSpace(m) => m.check_stability(),
        Model::Delay(d) => {
            for (mu, sigma) in d.mu.iter().zip(&d.sigma) {
                crate::spectra::delay_poles(*mu, *sigma, d.tau, 0)?;
            }
            Ok(())
        }
        other => match other.poles_hint().into_iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max) {
            x if x >= 0.0 => Err(Error::UnstableSystem(x)),
            _ => Ok(()),
        },
    }
}

fn load_stable(path: &Path) -> std::result::Result<Model, (i32, Error)> {
    let model = load_model(path).map_err(|e| (EXIT_USAGE, e))?;
    check_model_stability(&model).map_err(|e| match e {
        Error::UnstableSystem(_) | Error::UnstablePole(_) => (EXIT_UNSTABLE, e),
        other => (EXIT_INTERNAL, other),
    })?;
    Ok(model)
}

fn usage(msg: String) -> (i32, Error) {
    (EXIT_USAGE, Error::InvalidArgument(msg))
}

fn cmd_h2norm(a: &H2normArgs) -> Outcome {
    let model = load_stable(&a.model)?;
    let mut config = RunConfig::new("h2norm", &[&a.model], a.output.as_deref());
    config.grid = a.grid.options();
    let grid = auto_grid(&[&model], &config.grid).map_err(fail)?;
    let sq = h2metric::h2_norm_sq_quadrature(&model, &grid).map_err(fail)?;
    let quad = sq.value.max(0.0).sqrt();
    let quad_bound = (sq.value + sq.uncertainty).max(0.0).sqrt() - quad;
    let gram = match rational_form(&model).map_err(fail)? {
        Some(fom) => Some(h2metric::h2_norm_gramian(&fom).map_err(fail)?),
        None => None,
    };
    let discrepancy = gram.map(|g| (quad - g).abs() / g.abs().max(1e-300));

    let mut out = String::new();
    let _ = writeln!(out, "model        {} (n = {}, {}x{})", model.kind(), model.order(), model.outputs(), model.inputs());
    let _ = writeln!(out, "grid         {} nodes, scale {:.6e}", grid.len(), grid.half_width);
    let _ = writeln!(out, "quadrature   {quad:.14e}");
    let _ = writeln!(out, "tail bound   {quad_bound:.3e}");
    match (gram, discrepancy) {
        (Some(g), Some(d)) => {
            let _ = writeln!(out, "gramian      {g:.14e}");
            let _ = writeln!(out, "discrepancy  {d:.3e}");
        }
        _ => {
            let _ = writeln!(out, "gramian      n/a (quadrature only)");
        }
    }
    print!("{out}");
    if let Some(path) = &a.output {
        let doc = document(
            &config,
            json!({
                "quadrature": quad,
                "tail_bound": quad_bound,
                "gramian": gram,
                "discrepancy": discrepancy,
                "grid_nodes": grid.len(),
                "grid_scale": grid.half_width,
            }),
        );
        write_text(path, &doc).map_err(fail)?;
    }
    Ok(EXIT_OK)
}

fn cmd_reduce(a: &ReduceArgs) -> Outcome {
    let fom = load_stable(&a.fom)?;
    if a.order == 0 || a.order >= fom.order() {
        return Err(usage(format!("reduced order must satisfy 1 ≤ r < n = {}, got {}", fom.order(), a.order)));
    }
    let tol = a.tol.unwrap_or_else(|| default_tolerance(a.structure));
    let params = ParamOptions { pairs: a.pairs, tau: a.tau.or_else(|| structopt::delay_of(&fom)) };
    let opts = ReduceOptions {
        restarts: a.restarts,
        seed: a.seed,
        minimize: MinimizeOptions { max_iter: a.max_iter, grad_tol: a.grad_tol, ..MinimizeOptions::default() },
        grid: a.grid.options(),
        params,
    };
    // reject bad structure/order combinations before any optimization
    make_parameterization(a.structure, a.order, fom.inputs(), fom.outputs(), &params).map_err(|e| (EXIT_USAGE, e))?;
    let mut config = RunConfig::new("reduce", &[&a.fom], Some(&a.output));
    config.structure = Some(a.structure);
    config.order = Some(a.order);
    config.grid = opts.grid;
    config.tol = Some(tol);
    config.grad_tol = Some(a.grad_tol);
    config.restarts = Some(a.restarts);
    config.seed = Some(a.seed);

    let outcome = structopt::reduce(&fom, a.structure, a.order, &opts).map_err(|e| match exit_code(&e) {
        EXIT_USAGE => (EXIT_USAGE, e),
        _ => (EXIT_OPTIMIZER, e),
    })?;
    let best = &outcome.best;
    save_model(&best.model.to_model(), &a.output).map_err(fail)?;
    let result_doc = document(
        &config,
        json!({ "result": best, "parameterization": outcome.param, "runs": outcome.runs }),
    );
    write_text(&sibling(&a.output, "result"), &result_doc).map_err(fail)?;

    let report = structopt::certify(&fom, &best.model);
    let passed = report.as_ref().map(|r| r.passed(tol)).unwrap_or(false);
    let report_doc = match &report {
        Ok(r) => document(&config, json!({ "passed": passed, "tolerance": tol, "report": r })),
        Err(e) => document(&config, json!({ "passed": false, "tolerance": tol, "error": e.to_string() })),
    };
    write_text(&sibling(&a.output, "conditions"), &report_doc).map_err(fail)?;

    println!(
        "best run: cost {:.6e}, |grad| {:.3e}, {} iterations, {}",
        best.cost, best.grad_norm, best.iterations, best.termination
    );
    match &report {
        Ok(r) => print!("{}", r.table(tol)),
        Err(e) => eprintln!("certification failed: {e}"),
    }
    Ok(if passed {
        EXIT_OK
    } else if best.termination == Termination::LineSearchFailure {
        EXIT_OPTIMIZER
    } else {
        EXIT_CERTIFICATION
    })
}

fn load_pair(fom: &Path, rom: &Path, structure: Option<Structure>) -> std::result::Result<(Model, Rom), (i32, Error)> {
    let h = load_stable(fom)?;
    let file = load_stable(rom)?;
    let s = match structure {
        Some(s) => s,
        None => structopt::structure_of(&file).map_err(fail)?,
    };
    let rom = Rom::from_model(s, &file).map_err(fail)?;
    if h.inputs() != rom.inputs() || h.outputs() != rom.outputs() {
        return Err(usage(format!(
            "FOM is {}x{} but ROM is {}x{}",
            h.outputs(),
            h.inputs(),
            rom.outputs(),
            rom.inputs()
        )));
    }
    Ok((h, rom))
}

fn cmd_gradcheck(a: &PairArgs) -> Outcome {
    let (h, rom) = load_pair(&a.fom, &a.rom, a.structure)?;
    let pairs = match &rom {
        Rom::Unstructured { pairs, .. } => Some(*pairs),
        _ => None,
    };
    let tau = match &rom {
        Rom::Delay(d) => Some(d.tau),
        _ => None,
    };
    let param = make_parameterization(rom.structure(), rom.order(), h.inputs(), h.outputs(), &ParamOptions { pairs, tau })
        .map_err(fail)?;
    let theta = param.pack(&rom).map_err(fail)?;
    let grid = auto_grid(&[&h, &rom], &a.grid.options()).map_err(fail)?;
    let obj = Objective::new(&h, &param, grid).map_err(fail)?;
    let rows = obj.gradient_check(&param, &theta, a.step).map_err(fail)?;
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);

    let passed = rows.iter().all(|r| r.passed(a.tol));

    let mut out = format!("{:>5}  {:>22}  {:>22}  {:>10}  {:>10}\n", "coord", "analytic", "finite difference", "rel. error", "resolution");
    for r in &rows {
        let _ = writeln!(
            out,
            "{:>5}  {:>22.14e}  {:>22.14e}  {:>10.3e}  {:>10.3e}",
            r.coordinate, r.analytic, r.finite_difference, r.relative_error, r.resolution
        );
    }
    let _ = writeln!(out, "max relative error {worst:.3e}: {} at {:.1e}", if passed { "PASS" } else { "FAIL" }, a.tol);
    print!("{out}");
    if let Some(path) = &a.output {
        let mut config = RunConfig::new("gradcheck", &[&a.fom, &a.rom], Some(path));
        config.structure = Some(rom.structure());
        config.order = Some(rom.order());
        config.grid = a.grid.options();
        config.tol = Some(a.tol);
        let doc = document(&config, json!({ "passed": passed, "max_relative_error": worst, "coordinates": rows }));
        write_text(path, &doc).map_err(fail)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_CERTIFICATION })
}

fn conditions(h: &Model, rom: &Rom, window: Option<usize>) -> Result<ConditionReport> {
    match (rom, window) {
        (Rom::Delay(d), Some(_)) => optcond::residual_delay(h, d, window),
        _ => structopt::certify(h, rom),
    }
}

fn cmd_check_conditions(a: &CheckArgs) -> Outcome {
    let (h, rom) = load_pair(&a.fom, &a.rom, a.structure)?;
    let tol = a.tol.unwrap_or_else(|| default_tolerance(rom.structure()));
    let report = conditions(&h, &rom, a.window).map_err(fail)?;
    let passed = report.passed(tol);
    print!("{}", report.table(tol));
    if let Some(path) = &a.output {
        let mut config = RunConfig::new("check-conditions", &[&a.fom, &a.rom], Some(path));
        config.structure = Some(rom.structure());
        config.order = Some(rom.order());
        config.tol = Some(tol);
        let doc = document(&config, json!({ "passed": passed, "tolerance": tol, "report": report }));
        write_text(path, &doc).map_err(fail)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_CERTIFICATION })
}

fn cmd_report(a: &ReportArgs) -> Outcome {
    let h = load_model(&a.fom).map_err(|e| (EXIT_USAGE, e))?;
    let hhat = load_model(&a.rom).map_err(|e| (EXIT_USAGE, e))?;
    if h.inputs() != hhat.inputs() || h.outputs() != hhat.outputs() {
        return Err(usage("FOM and ROM transfer shapes differ".into()));
    }
    let grid = auto_grid(&[&h, &hhat], &a.grid.options()).map_err(fail)?;
    let mut rows: Vec<(f64, f64)> = crate::par::map_indexed(grid.len(), |k| {
        let s = crate::linalg::c(0.0, grid.nodes[k]);
        Ok((grid.nodes[k], (h.eval(s)? - hhat.eval(s)?).norm()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .map_err(fail)?;
    rows.retain(|r| r.0 >= 0.0);
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut csv = String::from("omega,abs_error\n");
    for (w, e) in rows {
        let _ = writeln!(csv, "{w:.17e},{e:.17e}");
    }
    match &a.output {
        Some(path) => write_text(path, &csv).map_err(fail)?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}
