//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use symplectic::bench::{
    energy_error_sweep, perihelion_rate, precession_csv, sweep_csv, trace_export, Method, TauGrid,
};
use symplectic::catalog::{MethodCatalog, BENCHMARK_METHODS};
use symplectic::coeff_file::load_coefficient_file;
use symplectic::coefficients::{
    default_tolerance, validate, DecompositionMode, Provenance, SchemeTag, SplittingCoefficients,
};
use symplectic::engine::{integrate, step_count, PhaseState, StepPlan};
use symplectic::optimizer::{campaign, write_campaign, SearchSpec};
use symplectic::precision::normalize_precision;
use symplectic::sho::{native_order, spectrum_csv, spectrum_report, spectrum_rows, DecompositionSetting};
use symplectic::systems::{system_by_name, KeplerParams, SeparableSystem, SunMercury};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "symplectic", version, about = "Symplectic splitting integrators: catalog, analysis, search and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct Common {
    /// Output directory; created if missing. A manifest.json is written here.
    #[arg(long, global = true, default_value = "symplectic-out")]
    out: PathBuf,
    /// Working precision for coefficient arithmetic.
    #[arg(long = "precision-bits", global = true, default_value_t = 256)]
    precision_bits: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Print the bundled methods.
    List,
    /// Check sums, symmetry and declared order of methods.
    Validate(MethodArgs),
    /// Integrate one method on one system and print the end state.
    Step(StepArgs),
    /// Energy-error sweep over a step-size grid.
    Bench(BenchArgs),
    /// κ spectrum of the harmonic-oscillator decomposition.
    Spectrum(SpectrumArgs),
    /// Seeded multi-start coefficient search.
    Optimize(OptimizeArgs),
    /// Perihelion precession of the Sun–Mercury orbit.
    Precession(PrecessionArgs),
    /// Substep trace for phase-space plots.
    Trace(TraceArgs),
}

#[derive(Debug, Args, Serialize)]
struct MethodArgs {
    /// Comma-separated catalog names or coefficient file paths; `all` for
    /// the whole catalog.
    #[arg(long, visible_alias = "methods", default_value = "all")]
    method: String,
}

#[derive(Debug, Args, Serialize)]
struct StepArgs {
    #[arg(long, visible_alias = "methods")]
    method: String,
    #[arg(long, default_value = "sho")]
    system: String,
    #[arg(long)]
    tau: f64,
    /// Defaults to a single step.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Initial state `q1,..,qn,p1,..,pn`; defaults to the system's benchmark state.
    #[arg(long)]
    initial: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long, default_value = "sho")]
    system: String,
    /// Comma-separated names, `all` for the benchmark set, `exact` for the
    /// closed-form flow.
    #[arg(long = "methods", visible_alias = "method", default_value = "all")]
    methods: String,
    /// `lo:hi:points` in τ/s, or `default`.
    #[arg(long = "tau-grid", default_value = "default")]
    tau_grid: String,
    /// Defaults to 500, or 50 orbital periods for sun-mercury.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SpectrumArgs {
    #[arg(long, visible_alias = "methods", default_value = "all")]
    method: String,
    /// Limit to one decomposition; otherwise drift-first, kick-first and the
    /// native mode.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long = "lambda-max")]
    lambda_max: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct OptimizeArgs {
    /// Family to search, e.g. `ABAs5o6H`, `BABs7o7H` or `BAB's9o7H`.
    #[arg(long, visible_alias = "methods")]
    method: String,
    #[arg(long = "lambda-h")]
    lambda_h: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 64)]
    restarts: usize,
}

#[derive(Debug, Args, Serialize)]
struct PrecessionArgs {
    #[arg(long = "methods", visible_alias = "method", default_value = "all")]
    methods: String,
    /// Single step size in seconds; overrides the grid.
    #[arg(long)]
    tau: Option<f64>,
    /// `lo:hi:points` in τ/s (seconds), or `default`.
    #[arg(long = "tau-grid", default_value = "default")]
    tau_grid: String,
    /// Integration time in seconds; defaults to 50 orbital periods.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct TraceArgs {
    #[arg(long, visible_alias = "methods")]
    method: String,
    #[arg(long, default_value = "henon-heiles-y")]
    system: String,
    #[arg(long)]
    tau: f64,
    /// Defaults to ten steps.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Initial state `q1,..,qn,p1,..,pn`.
    #[arg(long)]
    initial: Option<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    command: &'a Command,
    precision_bits: usize,
    seed: u64,
    jobs: Option<usize>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

/// A failure mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Validation(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Validation(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

struct Output {
    stdout: String,
    files: Vec<PathBuf>,
    notes: Vec<String>,
    failed: bool,
}

impl Output {
    fn new() -> Self {
        Self {
            stdout: String::new(),
            files: Vec::new(),
            notes: Vec::new(),
            failed: false,
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand, prints results
/// and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv_text: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, argv_text) {
        Ok(out) => {
            print!("{}", out.stdout);
            if out.failed {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Failure>() {
                Some(Failure::Usage(_)) => EXIT_USAGE,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<Output> {
    let c = &cli.common;
    if c.precision_bits < 53 {
        return Err(usage(format!("--precision-bits must be at least 53, got {}", c.precision_bits)));
    }
    let precision = normalize_precision(c.precision_bits);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(usage("--jobs must be positive"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("building the worker pool")?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let cat = MethodCatalog::standard(precision);
    let out = pool.install(|| match &cli.command {
        Command::List => cmd_list(&cat),
        Command::Validate(a) => cmd_validate(&cat, a),
        Command::Step(a) => cmd_step(&cat, a),
        Command::Bench(a) => cmd_bench(&cat, a, &c.out),
        Command::Spectrum(a) => cmd_spectrum(&cat, a, &c.out),
        Command::Optimize(a) => cmd_optimize(a, precision, c.seed, &c.out),
        Command::Precession(a) => cmd_precession(&cat, a, &c.out),
        Command::Trace(a) => cmd_trace(&cat, a, &c.out),
    })?;
    let manifest = Manifest {
        tool: "symplectic",
        version: env!("CARGO_PKG_VERSION"),
        argv,
        command: &cli.command,
        precision_bits: precision,
        seed: c.seed,
        jobs: c.jobs,
        outputs: out.files.iter().map(|p| p.display().to_string()).collect(),
        notes: out.notes.clone(),
    };
    let path = c.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(out)
}

fn unknown_method(name: &str, cat: &MethodCatalog) -> anyhow::Error {
    usage(format!(
        "unknown method {name:?}; available: {}",
        cat.names().join(", ")
    ))
}

/// One name: catalog entry first, then a coefficient file path.
fn resolve_one(name: &str, cat: &MethodCatalog) -> Result<SplittingCoefficients> {
    if let Some(c) = cat.get(name) {
        return Ok(c.clone());
    }
    let path = Path::new(name);
    if path.is_file() {
        return load_coefficient_file(path, cat.precision())
            .map_err(|e| Failure::Validation(e.to_string()).into());
    }
    Err(unknown_method(name, cat))
}

/// Comma-separated list; `all` expands to `all_names`.
fn resolve_list(spec: &str, cat: &MethodCatalog, all_names: &[&str]) -> Result<Vec<SplittingCoefficients>> {
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name.eq_ignore_ascii_case("all") {
            for n in all_names {
                out.push(resolve_one(n, cat)?);
            }
        } else {
            out.push(resolve_one(name, cat)?);
        }
    }
    if out.is_empty() {
        return Err(usage("no methods given"));
    }
    Ok(out)
}

fn resolve_methods(spec: &str, cat: &MethodCatalog) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name.eq_ignore_ascii_case("exact") {
            out.push(Method::ExactFlow);
        } else {
            for c in resolve_list(name, cat, &BENCHMARK_METHODS)? {
                out.push(Method::Plan(StepPlan::new(&c)));
            }
        }
    }
    if out.is_empty() {
        return Err(usage("no methods given"));
    }
    Ok(out)
}

fn parse_mode(s: &str) -> Result<DecompositionMode> {
    DecompositionMode::parse(s).ok_or_else(|| usage(format!("--mode must be aba, bab or bab-prime, got {s:?}")))
}

fn system(name: &str) -> Result<Box<dyn SeparableSystem>> {
    system_by_name(name).map_err(|e| {
        usage(format!(
            "{e}; available: sho, henon-heiles, henon-heiles-y, sun-mercury"
        ))
    })
}

fn initial_state(sys: &dyn SeparableSystem, initial: Option<&str>) -> Result<PhaseState> {
    let Some(text) = initial else {
        return Ok(PhaseState::from_system(sys));
    };
    let vals: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--initial must be comma-separated numbers, got {text:?}")))?;
    let n = sys.dim();
    if vals.len() != 2 * n {
        return Err(usage(format!("--initial needs {} values for {}", 2 * n, sys.label())));
    }
    Ok(PhaseState::new(vals[..n].to_vec(), vals[n..].to_vec()))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

fn cmd_list(cat: &MethodCatalog) -> Result<Output> {
    let mut out = Output::new();
    let _ = writeln!(
        out.stdout,
        "{:<14} {:<6} {:>6} {:>9} {:>7}  {:<9}  provenance",
        "name", "scheme", "stages", "sho-order", "order", "native"
    );
    for c in cat.iter() {
        let sho = c
            .declared_sho_order()
            .map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(
            out.stdout,
            "{:<14} {:<6} {:>6} {:>9} {:>7}  {:<9}  {}",
            c.name,
            c.scheme.to_string(),
            c.stages,
            sho,
            c.general_order,
            c.native_mode.label(),
            c.provenance.label()
        );
    }
    Ok(out)
}

fn cmd_validate(cat: &MethodCatalog, a: &MethodArgs) -> Result<Output> {
    let names = cat.names();
    let sets = resolve_list(&a.method, cat, &names)?;
    let mut out = Output::new();
    for set in &sets {
        let tol = default_tolerance(set.precision());
        let rep = validate(set, &tol);
        let mut ok = rep.passed();
        let mut order_note = String::new();
        if let Some(declared) = set.declared_sho_order() {
            let found = native_order(set);
            // literature digits are far shorter than the working precision
            if set.provenance == Provenance::PaperTable4 || set.provenance == Provenance::OptimizerOutput {
                ok &= found >= declared;
            }
            order_note = format!(" sho-order {found} (declared {declared})");
        }
        let _ = writeln!(
            out.stdout,
            "{} {}: max residual {}{}",
            if ok { "PASS" } else { "FAIL" },
            set.name,
            rep.max_residual().to_scientific(3),
            order_note
        );
        out.failed |= !ok;
    }
    Ok(out)
}

fn cmd_step(cat: &MethodCatalog, a: &StepArgs) -> Result<Output> {
    let set = resolve_one(&a.method, cat)?;
    let sys = system(&a.system)?;
    let tau = positive("--tau", a.tau)?;
    let t_end = a.t_end.unwrap_or(tau);
    let s0 = initial_state(sys.as_ref(), a.initial.as_deref())?;
    let plan = StepPlan::new(&set);
    let h0 = s0.energy(sys.as_ref());
    let r = integrate(sys.as_ref(), &s0, tau, t_end, &plan, |_, _| std::ops::ControlFlow::Continue(()))
        .map_err(|e| Failure::Validation(format!("integration failed: {e}")))?;
    let (q, p) = (r.state.q_value(), r.state.p_value());
    let h = sys.energy(&q, &p);
    let mut out = Output::new();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    let _ = writeln!(out.stdout, "steps {}", r.steps);
    let _ = writeln!(out.stdout, "t {:e}", r.state.time());
    let _ = writeln!(out.stdout, "q {}", fmt(&q));
    let _ = writeln!(out.stdout, "p {}", fmt(&p));
    let _ = writeln!(out.stdout, "H {h:e}");
    if h0 != 0.0 {
        let _ = writeln!(out.stdout, "rel_energy_err {:e}", ((h - h0) / h0).abs());
    }
    let _ = writeln!(out.stdout, "evals dT/dp {} dV/dq {}", r.counts.dt_dp, r.counts.dv_dq);
    Ok(out)
}

fn grid_for(text: &str, system_label: &str) -> Result<TauGrid> {
    if text == "default" {
        Ok(TauGrid::default_for(system_label))
    } else {
        TauGrid::parse(text).map_err(|e| usage(e.to_string()))
    }
}

fn kepler_period() -> Result<f64> {
    Ok(KeplerParams::default().orbit()?.period())
}

fn cmd_bench(cat: &MethodCatalog, a: &BenchArgs, dir: &Path) -> Result<Output> {
    let sys = system(&a.system)?;
    let methods = resolve_methods(&a.methods, cat)?;
    let grid = grid_for(&a.tau_grid, sys.label())?;
    let t_end = match a.t_end {
        Some(t) => positive("--t-end", t)?,
        None if sys.label() == "sun-mercury" => 50.0 * kepler_period()?,
        None => 500.0,
    };
    let s0 = PhaseState::from_system(sys.as_ref());
    let records = energy_error_sweep(sys.as_ref(), &s0, &methods, &grid, t_end)?;
    let path = dir.join(format!("sweep_{}.csv", sys.label()));
    std::fs::write(&path, sweep_csv(&records)).with_context(|| format!("writing {}", path.display()))?;
    let mut out = Output::new();
    let unstable = records.iter().filter(|r| r.is_unstable()).count();
    let _ = writeln!(
        out.stdout,
        "{} runs ({} unstable) written to {}",
        records.len(),
        unstable,
        path.display()
    );
    out.notes.push("tau grid values are tau/s; each method runs at tau = s * value".into());
    out.files.push(path);
    Ok(out)
}

fn cmd_spectrum(cat: &MethodCatalog, a: &SpectrumArgs, dir: &Path) -> Result<Output> {
    let names: Vec<&str> = cat.table4().map(|c| c.name.as_str()).collect();
    let sets = resolve_list(&a.method, cat, &names)?;
    let mode = a.mode.as_deref().map(parse_mode).transpose()?;
    let mut rows = Vec::new();
    let mut out = Output::new();
    for set in &sets {
        let r = match mode {
            Some(m) => {
                let lm = a
                    .lambda_max
                    .unwrap_or_else(|| DecompositionSetting::native(set).lambda_max);
                spectrum_rows(set, &[m], lm)
            }
            None => spectrum_report(set, a.lambda_max),
        };
        let tol = symplectic::sho::order_tolerance(set.precision());
        for m in r.iter().map(|r| r.mode).collect::<std::collections::BTreeSet<_>>() {
            let order = r
                .iter()
                .filter(|x| x.mode == m && x.lambda > 0)
                .take_while(|x| x.kappa < tol)
                .count();
            let _ = writeln!(out.stdout, "{} {}: kappa below tolerance through lambda {}", set.name, m.label(), order);
        }
        rows.extend(r);
    }
    let path = dir.join("spectrum.csv");
    std::fs::write(&path, spectrum_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    out.files.push(path);
    Ok(out)
}

/// `ABAs5o6H`, `BABs7o7H`, `BAB's9o7H` (or `BABps9o7H`) → scheme, prime, stages, λ_H.
fn parse_family(name: &str) -> Option<(SchemeTag, bool, usize, usize)> {
    let lower = name.trim().to_ascii_lowercase();
    let (scheme, rest) = if let Some(r) = lower.strip_prefix("aba") {
        (SchemeTag::Aba, r)
    } else if let Some(r) = lower.strip_prefix("bab") {
        (SchemeTag::Bab, r)
    } else {
        return None;
    };
    let (prime, rest) = match rest.strip_prefix('\'').or_else(|| rest.strip_prefix('p')) {
        Some(r) => (true, r),
        None => (false, rest),
    };
    let rest = rest.strip_prefix('s')?;
    let (stages, rest) = rest.split_once('o')?;
    let order = rest.strip_suffix('h').unwrap_or(rest);
    Some((scheme, prime, stages.parse().ok()?, order.parse().ok()?))
}

fn cmd_optimize(a: &OptimizeArgs, precision: usize, seed: u64, dir: &Path) -> Result<Output> {
    let (scheme, prime, stages, order) = parse_family(&a.method).ok_or_else(|| {
        usage(format!(
            "--method for optimize names a family such as ABAs5o6H or BAB's9o7H, got {:?}",
            a.method
        ))
    })?;
    if prime && scheme == SchemeTag::Aba {
        return Err(usage("the primed form exists for BAB families only"));
    }
    if stages < 1 {
        return Err(usage("a family needs at least one stage"));
    }
    let lambda_h = a.lambda_h.unwrap_or(order);
    let mut spec = SearchSpec::new(scheme, stages, lambda_h)
        .with_precision(precision)
        .with_seed(seed)
        .with_restarts(a.restarts);
    if prime {
        spec = spec.with_mode(DecompositionMode::BabPrime);
    }
    if let Some(m) = a.mode.as_deref() {
        spec = spec.with_mode(parse_mode(m)?);
    }
    if spec.dimension() == 0 {
        return Err(usage("this family has no free parameters to search"));
    }
    let results = campaign(&spec, spec.restarts);
    let sub = dir.join(symplectic::catalog::normalize_name(&a.method));
    let files = write_campaign(&results, &sub).map_err(|e| anyhow!("{e}"))?;
    let mut out = Output::new();
    let _ = writeln!(
        out.stdout,
        "{} distinct solutions from {} starts written to {}",
        results.len(),
        spec.restarts,
        sub.display()
    );
    for (i, r) in results.iter().enumerate().take(10) {
        let _ = writeln!(
            out.stdout,
            "{:>3} kappa_max {} sum|coeff| {} kappa_next {}",
            i + 1,
            r.kappa_max.to_scientific(3),
            r.coeff_abs_sum.to_scientific(12),
            r.kappa_next().to_scientific(3)
        );
    }
    out.files = files;
    Ok(out)
}

fn cmd_precession(cat: &MethodCatalog, a: &PrecessionArgs, dir: &Path) -> Result<Output> {
    let params = KeplerParams::default();
    let sys = SunMercury::new(params)?;
    let period = params.orbit()?.period();
    let methods = resolve_methods(&a.methods, cat)?;
    let n_orbits = match a.t_end {
        Some(t) => (positive("--t-end", t)? / period).floor() as usize,
        None => 50,
    };
    if n_orbits < 10 {
        return Err(usage(format!("precession needs at least 10 orbits ({:e} s)", 10.0 * period)));
    }
    let grid = match a.tau {
        Some(t) => TauGrid {
            values: vec![positive("--tau", t)?],
            per_stage: false,
        },
        None => grid_for(&a.tau_grid, "sun-mercury")?,
    };
    let s0 = PhaseState::from_system(&sys);
    let grid = &grid;
    let cells: Vec<(&Method, f64)> = methods
        .iter()
        .flat_map(|m| grid.values.iter().map(move |&v| (m, grid.tau_for(v, m.stages()))))
        .collect();
    use rayon::prelude::*;
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(m, tau)| perihelion_rate(&sys, &s0, m, tau, n_orbits).map_err(|e| (m.name().to_string(), tau, e)))
        .collect();
    let mut ok = Vec::new();
    let mut out = Output::new();
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err((name, tau, e)) => {
                out.notes.push(format!("{name} at tau {tau:e}: {e}"));
                let _ = writeln!(out.stdout, "skipped {name} at tau {tau:e}: {e}");
            }
        }
    }
    let path = dir.join("precession.csv");
    std::fs::write(&path, precession_csv(&ok)).with_context(|| format!("writing {}", path.display()))?;
    let _ = writeln!(out.stdout, "{} fits over {} orbits written to {}", ok.len(), n_orbits, path.display());
    out.notes
        .push("evals_per_orbit = stages * exact period / tau".into());
    out.files.push(path);
    Ok(out)
}

fn cmd_trace(cat: &MethodCatalog, a: &TraceArgs, dir: &Path) -> Result<Output> {
    let set = resolve_one(&a.method, cat)?;
    let sys = system(&a.system)?;
    let tau = positive("--tau", a.tau)?;
    let n_steps = match a.t_end {
        Some(t) => step_count(0.0, positive("--t-end", t)?, tau),
        None => 10,
    };
    if n_steps == 0 {
        return Err(usage("--t-end is shorter than one step"));
    }
    let s0 = initial_state(sys.as_ref(), a.initial.as_deref())?;
    let plan = StepPlan::new(&set);
    let path = dir.join(format!("trace_{}.csv", symplectic::catalog::normalize_name(&set.name)));
    let (trace, files) = trace_export(sys.as_ref(), &s0, &plan, tau, n_steps, &path)?;
    let mut out = Output::new();
    let _ = writeln!(
        out.stdout,
        "{} rows, max |dH/H0| {:e}{} written to {}",
        trace.rows.len(),
        trace.max_rel_energy_dev(),
        if trace.diverged() { " (diverged)" } else { "" },
        path.display()
    );
    out.files = files;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names() {
        assert_eq!(parse_family("ABAs5o6H"), Some((SchemeTag::Aba, false, 5, 6)));
        assert_eq!(parse_family("BAB's9o7H"), Some((SchemeTag::Bab, true, 9, 7)));
        assert_eq!(parse_family("babps8o7h"), Some((SchemeTag::Bab, true, 8, 7)));
        assert_eq!(parse_family("ABAs3o4"), Some((SchemeTag::Aba, false, 3, 4)));
        assert_eq!(parse_family("Ruth"), None);
        assert_eq!(parse_family("ABAsxo4H"), None);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["symplectic", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["symplectic", "step", "--tau"]), EXIT_USAGE);
    }

    #[test]
    fn unknown_method_lists_the_catalog() {
        let cat = MethodCatalog::standard(64);
        let e = resolve_one("NoSuchMethod", &cat).unwrap_err().to_string();
        assert!(e.contains("BAB's9o7H") && e.contains("Ruth"), "{e}");
    }

    #[test]
    fn initial_state_parsing() {
        let sys = system("henon-heiles").unwrap();
        let s = initial_state(sys.as_ref(), Some("0.1,0.2,0.3,0.4")).unwrap();
        assert_eq!(s.q, vec![0.1, 0.2]);
        assert_eq!(s.p, vec![0.3, 0.4]);
        assert!(initial_state(sys.as_ref(), Some("0.1,0.2")).is_err());
        assert!(initial_state(sys.as_ref(), Some("a,b,c,d")).is_err());
    }
}
