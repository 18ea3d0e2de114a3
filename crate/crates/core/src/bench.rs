//! Energy-error sweeps, perihelion precession and substep traces.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::coefficients::SchemeTag;
use crate::engine::{integrate, step_count, IntegrationFault, Integrator, PhaseState, StepPlan};
use crate::systems::{KeplerOrbit, KeplerParams, SeparableSystem, SunMercury, SystemError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Fault(#[from] IntegrationFault),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("system {0} has no closed-form flow")]
    NoExactFlow(String),
    #[error("position at the origin")]
    Singular,
    #[error("eccentricity vector vanishes, perihelion angle undefined")]
    UndefinedAngle,
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What produces a trajectory: a splitting plan, or the closed-form flow of
/// the system as a zero-error reference.
#[derive(Debug, Clone)]
pub enum Method {
    Plan(StepPlan),
    ExactFlow,
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::Plan(p) => &p.name,
            Method::ExactFlow => "exact",
        }
    }

    pub fn scheme(&self) -> Option<SchemeTag> {
        match self {
            Method::Plan(p) => Some(p.scheme),
            Method::ExactFlow => None,
        }
    }

    /// Force evaluations per step used for cost normalisation.
    pub fn stages(&self) -> usize {
        match self {
            Method::Plan(p) => p.stages,
            Method::ExactFlow => 1,
        }
    }
}

/// Calls `visit(step, state)` after every whole step of size `tau` up to
/// `t_end`. A fault is returned together with the number of completed steps.
fn drive<F>(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    method: &Method,
    tau: f64,
    t_end: f64,
    mut visit: F,
) -> Result<usize, (usize, BenchError)>
where
    F: FnMut(usize, &PhaseState) -> ControlFlow<()>,
{
    match method {
        Method::Plan(plan) => {
            let mut done = 0;
            integrate(system, state0, tau, t_end, plan, |i, s| {
                done = i;
                visit(i, s)
            })
            .map(|o| o.steps)
            .map_err(|e| (done, e.into()))
        }
        Method::ExactFlow => {
            let (q0, p0) = (state0.q_value(), state0.p_value());
            let t0 = state0.time();
            let n = step_count(t0, t_end, tau);
            for i in 1..=n {
                let dt = i as f64 * tau;
                let (q, p) = system
                    .exact_flow(&q0, &p0, dt)
                    .ok_or_else(|| (i - 1, BenchError::NoExactFlow(system.label().to_string())))?;
                let mut s = PhaseState::new(q, p);
                s.t = t0 + dt;
                if visit(i, &s).is_break() {
                    return Ok(i);
                }
            }
            Ok(n)
        }
    }
}

fn rel_energy_error(system: &dyn SeparableSystem, s: &PhaseState, h0: f64) -> f64 {
    let h = system.energy(&s.q_value(), &s.p_value());
    ((h - h0) / h0).abs()
}

/// One (method, τ) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub method: String,
    /// `None` for the exact-flow reference.
    pub scheme: Option<SchemeTag>,
    pub stages: usize,
    pub tau: f64,
    pub tau_per_stage: f64,
    pub t_end: f64,
    /// `+∞` once the run went unstable.
    pub max_rel_energy_err: f64,
    pub mean_rel_energy_err: f64,
    pub wall_seconds: f64,
    /// Time at which the energy or a derivative became non-finite.
    pub unstable_at: Option<f64>,
}

impl BenchmarkRecord {
    pub fn is_unstable(&self) -> bool {
        self.unstable_at.is_some()
    }
}

/// Step sizes for a sweep. With `per_stage` the values are `τ/s` and every
/// method runs at `τ = s·value`, so methods with different stage counts are
/// compared at equal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    pub values: Vec<f64>,
    pub per_stage: bool,
}

impl TauGrid {
    /// `points` values from `lo` to `hi`, evenly spaced in log.
    pub fn geometric(lo: f64, hi: f64, points: usize) -> Result<Self, BenchError> {
        if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || points == 0 {
            return Err(BenchError::Invalid(format!(
                "tau grid needs 0 < lo <= hi and at least one point, got {lo}:{hi}:{points}"
            )));
        }
        if points == 1 {
            return Ok(Self { values: vec![lo], per_stage: true });
        }
        let r = (hi / lo).ln();
        let values = (0..points)
            .map(|i| lo * (r * i as f64 / (points - 1) as f64).exp())
            .collect();
        Ok(Self { values, per_stage: true })
    }

    /// `per_decade` points per factor of ten, endpoints included.
    pub fn per_decade(lo: f64, hi: f64, per_decade: usize) -> Result<Self, BenchError> {
        let decades = (hi / lo).log10();
        let points = (decades * per_decade as f64).round() as usize + 1;
        Self::geometric(lo, hi, points)
    }

    /// `lo:hi:points`.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let bad = || BenchError::Invalid(format!("tau grid must be lo:hi:points, got {text:?}"));
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Self::geometric(lo, hi, n)
    }

    /// τ/s window bracketing the stability breakpoint of each bundled
    /// system, 24 points per decade.
    pub fn default_for(system_label: &str) -> Self {
        let (lo, hi) = match system_label {
            "sun-mercury" => (1.0e3, 1.0e6),
            "henon-heiles" | "henon-heiles-y" => (1.0e-2, 1.0),
            _ => (1.0e-2, 1.0),
        };
        Self::per_decade(lo, hi, 24).expect("default grid is well formed")
    }

    pub fn absolute(mut self) -> Self {
        self.per_stage = false;
        self
    }

    pub fn tau_for(&self, value: f64, stages: usize) -> f64 {
        if self.per_stage {
            value * stages as f64
        } else {
            value
        }
    }
}

/// Max and mean relative energy error of one run.
pub fn energy_error_run(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    method: &Method,
    tau: f64,
    t_end: f64,
) -> Result<BenchmarkRecord, BenchError> {
    let h0 = system.energy(&state0.q_value(), &state0.p_value());
    if h0 == 0.0 || !h0.is_finite() {
        return Err(BenchError::Invalid(format!("relative error undefined for H0 = {h0}")));
    }
    let start = Instant::now();
    let (mut max, mut sum, mut n) = (0.0f64, 0.0f64, 0usize);
    let mut unstable_at = None;
    let res = drive(system, state0, method, tau, t_end, |_, s| {
        let e = rel_energy_error(system, s, h0);
        if !e.is_finite() {
            unstable_at = Some(s.time());
            return ControlFlow::Break(());
        }
        max = max.max(e);
        sum += e;
        n += 1;
        ControlFlow::Continue(())
    });
    match res {
        Ok(_) => {}
        Err((done, BenchError::Fault(_))) => {
            unstable_at = Some(state0.time() + (done + 1) as f64 * tau);
        }
        Err((_, e)) => return Err(e),
    }
    let (max, mean) = if unstable_at.is_some() {
        (f64::INFINITY, f64::INFINITY)
    } else if n == 0 {
        (0.0, 0.0)
    } else {
        (max, sum / n as f64)
    };
    let stages = method.stages();
    Ok(BenchmarkRecord {
        method: method.name().to_string(),
        scheme: method.scheme(),
        stages,
        tau,
        tau_per_stage: tau / stages as f64,
        t_end,
        max_rel_energy_err: max,
        mean_rel_energy_err: mean,
        wall_seconds: start.elapsed().as_secs_f64(),
        unstable_at,
    })
}

/// Every (method, τ) cell, evaluated in parallel on the current rayon pool.
/// Rows come back ordered by method as given, then by increasing τ.
pub fn energy_error_sweep(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    methods: &[Method],
    grid: &TauGrid,
    t_end: f64,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    let cells: Vec<(usize, f64)> = methods
        .iter()
        .enumerate()
        .flat_map(|(i, m)| grid.values.iter().map(move |&v| (i, grid.tau_for(v, m.stages()))))
        .collect();
    let mut rows: Vec<(usize, BenchmarkRecord)> = cells
        .par_iter()
        .map(|&(i, tau)| energy_error_run(system, state0, &methods[i], tau, t_end).map(|r| (i, r)))
        .collect::<Result<_, _>>()?;
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.tau.total_cmp(&b.1.tau)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Shortest round-trip text, `inf` for infinities.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub const SWEEP_HEADER: &str =
    "method,scheme,stages,tau,tau_per_stage,t_end,max_rel_energy_err,mean_rel_energy_err,wall_seconds";

pub fn sweep_csv(records: &[BenchmarkRecord]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in records {
        let scheme = r.scheme.map_or("exact".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.6}",
            crate::csv_field(&r.method),
            scheme,
            r.stages,
            fmt_f64(r.tau),
            fmt_f64(r.tau_per_stage),
            fmt_f64(r.t_end),
            fmt_f64(r.max_rel_energy_err),
            fmt_f64(r.mean_rel_energy_err),
            r.wall_seconds,
        );
    }
    out
}

pub fn write_sweep_csv(path: &Path, records: &[BenchmarkRecord]) -> Result<(), BenchError> {
    std::fs::write(path, sweep_csv(records)).map_err(io_err(path))
}

/// Eccentricity (Laplace–Runge–Lenz) vector `(v × h)/μ − r̂` with
/// `v = p/m_M`. Constant along the exact flow, of length `e`, pointing at
/// perihelion.
pub fn lrl_vector(state: &PhaseState, kepler: &KeplerParams) -> Result<[f64; 2], BenchError> {
    let q = state.q_value();
    let p = state.p_value();
    if q.len() != 2 || p.len() != 2 {
        return Err(BenchError::Invalid(format!("planar state expected, got dimension {}", q.len())));
    }
    let r = q[0].hypot(q[1]);
    if r == 0.0 {
        return Err(BenchError::Singular);
    }
    let mu = kepler.mu();
    let v = [p[0] / kepler.m_m, p[1] / kepler.m_m];
    let h = q[0] * v[1] - q[1] * v[0];
    Ok([v[1] * h / mu - q[0] / r, -v[0] * h / mu - q[1] / r])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecessionResult {
    pub method: String,
    pub tau: f64,
    pub evals_per_orbit: f64,
    /// `|slope|` of θ(t) in rad/s.
    pub dtheta_dt: f64,
    /// Signed slope.
    pub slope: f64,
    pub ci95_halfwidth: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Running least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, Default)]
struct LineFit {
    n: f64,
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl LineFit {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        let dx = x - self.mx;
        let dy = y - self.my;
        self.mx += dx / self.n;
        self.my += dy / self.n;
        self.sxx += dx * (x - self.mx);
        self.syy += dy * (y - self.my);
        self.sxy += dx * (y - self.my);
    }

    fn slope(&self) -> f64 {
        self.sxy / self.sxx
    }

    fn residual_ss(&self) -> f64 {
        (self.syy - self.slope() * self.sxy).max(0.0)
    }

    fn r_squared(&self) -> f64 {
        if self.syy == 0.0 {
            1.0
        } else {
            1.0 - self.residual_ss() / self.syy
        }
    }

    fn ci95(&self) -> f64 {
        let dof = self.n - 2.0;
        let se = (self.residual_ss() / dof / self.sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof)
            .expect("at least one degree of freedom")
            .inverse_cdf(0.975);
        t * se
    }
}

/// Wraps an angle difference into `(−π, π]`.
fn wrap(d: f64) -> f64 {
    let w = d.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Rotation rate of the perihelion over `n_orbits` exact-orbit periods,
/// from a least-squares fit to the unwrapped angle of the eccentricity
/// vector sampled after every step.
pub fn perihelion_rate(
    system: &SunMercury,
    state0: &PhaseState,
    method: &Method,
    tau: f64,
    n_orbits: usize,
) -> Result<PrecessionResult, BenchError> {
    if n_orbits < 10 {
        return Err(BenchError::Invalid(format!("need at least 10 orbits, got {n_orbits}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(BenchError::Invalid(format!("step must be positive, got {tau}")));
    }
    let params = &system.params;
    let q0 = state0.q_value();
    let p0 = state0.p_value();
    let orbit = KeplerOrbit::from_state(
        [q0[0], q0[1]],
        [p0[0] / params.m_m, p0[1] / params.m_m],
        params.mu(),
    )?;
    let period = orbit.period();
    let a0 = lrl_vector(state0, params)?;
    if a0[0].hypot(a0[1]) < 1e-10 {
        return Err(BenchError::UndefinedAngle);
    }
    let phi0 = a0[1].atan2(a0[0]);
    let t0 = state0.time();
    let t_end = t0 + n_orbits as f64 * period;

    let mut fit = LineFit::default();
    fit.push(0.0, 0.0);
    let (mut prev, mut theta) = (phi0, 0.0);
    let mut failure = None;
    drive(system, state0, method, tau, t_end, |_, s| match lrl_vector(s, params) {
        Ok(a) if a[0].is_finite() && a[1].is_finite() => {
            let phi = a[1].atan2(a[0]);
            theta += wrap(phi - prev);
            prev = phi;
            fit.push(s.time() - t0, theta);
            ControlFlow::Continue(())
        }
        Ok(_) => {
            failure = Some(BenchError::Fault(IntegrationFault::NonFinite { step: 0, substep: 0 }));
            ControlFlow::Break(())
        }
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    })
    .map_err(|(_, e)| e)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if fit.n < 3.0 {
        return Err(BenchError::Invalid("fewer than three angle samples".into()));
    }
    let slope = fit.slope();
    Ok(PrecessionResult {
        method: method.name().to_string(),
        tau,
        evals_per_orbit: method.stages() as f64 * period / tau,
        dtheta_dt: slope.abs(),
        slope,
        ci95_halfwidth: fit.ci95(),
        r_squared: fit.r_squared(),
        samples: fit.n as usize,
    })
}

pub const PRECESSION_HEADER: &str = "method,evals_per_orbit,dtheta_dt,ci95,r_squared";

pub fn precession_csv(results: &[PrecessionResult]) -> String {
    let mut out = String::from(PRECESSION_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            crate::csv_field(&r.method),
            fmt_f64(r.evals_per_orbit),
            fmt_f64(r.dtheta_dt),
            fmt_f64(r.ci95_halfwidth),
            fmt_f64(r.r_squared),
        );
    }
    out
}

/// A substep point with the local energy.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub substep: usize,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub h: f64,
    pub c_sign: i8,
    pub d_sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub system: String,
    pub method: String,
    pub tau: f64,
    pub n_steps: usize,
    pub h0: f64,
    pub rows: Vec<TraceRow>,
    /// Fault that cut the trace short, with the failing substep.
    pub fault: Option<IntegrationFault>,
}

/// Substep points of `n_steps` steps. Each step contributes one row per
/// substep pair; a last row holds the end state. The run stops at the first
/// fault or non-finite energy.
pub fn substep_rows(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    plan: &StepPlan,
    tau: f64,
    n_steps: usize,
) -> Trace {
    let h0 = system.energy(&state0.q_value(), &state0.p_value());
    let mut rows = Vec::new();
    let mut state = state0.clone();
    let mut it = Integrator::new(system, plan);
    let mut fault = None;
    let mut pts = Vec::with_capacity(plan.k());
    let mut completed = 0;
    let push = |rows: &mut Vec<TraceRow>, step, pts: &mut Vec<crate::engine::SubstepPoint>| {
        for pt in pts.drain(..) {
            rows.push(TraceRow {
                step,
                substep: pt.substep,
                h: system.energy(&pt.q, &pt.p),
                q: pt.q,
                p: pt.p,
                c_sign: pt.c_sign,
                d_sign: pt.d_sign,
            });
        }
    };
    for step in 0..n_steps {
        let r = it.step_traced_into(&mut state, tau, &mut pts);
        push(&mut rows, step, &mut pts);
        if let Err(e) = r {
            fault = Some(e);
            break;
        }
        completed = step + 1;
        if !system.energy(&state.q_value(), &state.p_value()).is_finite() {
            break;
        }
    }
    if fault.is_none() {
        let (c_sign, d_sign) = plan.signs(0);
        let (q, p) = (state.q_value(), state.p_value());
        rows.push(TraceRow {
            step: completed,
            substep: 0,
            h: system.energy(&q, &p),
            q,
            p,
            c_sign,
            d_sign,
        });
    }
    Trace {
        system: system.label().to_string(),
        method: plan.name.clone(),
        tau,
        n_steps,
        h0,
        rows,
        fault,
    }
}

impl Trace {
    /// Largest `|H − H0|/|H0|` over the visited points, `+∞` if any is
    /// non-finite.
    pub fn max_rel_energy_dev(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let e = ((r.h - self.h0) / self.h0).abs();
                if e.is_finite() { e } else { f64::INFINITY }
            })
            .fold(0.0, f64::max)
    }

    pub fn diverged(&self) -> bool {
        self.fault.is_some() || !self.max_rel_energy_dev().is_finite()
    }

    fn coord_names(&self, prefix: char) -> Vec<String> {
        let n = self.rows.first().map_or(1, |r| r.q.len());
        if n == 1 {
            vec![prefix.to_string()]
        } else {
            (1..=n).map(|i| format!("{prefix}{i}")).collect()
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# system={} method={} tau={} steps={} H0={}",
            self.system,
            self.method.replace(' ', "_"),
            fmt_f64(self.tau),
            self.n_steps,
            fmt_f64(self.h0)
        );
        if let Some(f) = &self.fault {
            let _ = writeln!(out, "# fault: {f}");
        }
        let mut cols = vec!["step".to_string(), "substep".to_string()];
        cols.extend(self.coord_names('q'));
        cols.extend(self.coord_names('p'));
        cols.extend(["H", "c_sign", "d_sign"].map(String::from));
        out.push_str(&cols.join(","));
        out.push('\n');
        for r in &self.rows {
            let mut f = vec![r.step.to_string(), r.substep.to_string()];
            f.extend(r.q.iter().chain(&r.p).map(|&x| fmt_f64(x)));
            f.push(fmt_f64(r.h));
            f.push(r.c_sign.to_string());
            f.push(r.d_sign.to_string());
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    }

    /// `H` sampled on an `n × n` grid covering the finite trace points with
    /// a 10 % margin. One-degree-of-freedom systems only.
    pub fn grid_csv(&self, system: &dyn SeparableSystem, n: usize) -> Option<String> {
        if system.dim() != 1 || n < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.q[0].is_finite() && r.p[0].is_finite() && r.h.is_finite())
            .map(|r| (r.q[0], r.p[0]))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let pad = ((hi - lo) * 0.1).max(1e-3);
            (lo - pad, hi + pad)
        };
        let (qlo, qhi) = span(&mut pts.iter().map(|p| p.0));
        let (plo, phi) = span(&mut pts.iter().map(|p| p.1));
        let mut out = String::from("q,p,H\n");
        for i in 0..n {
            let q = qlo + (qhi - qlo) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let p = plo + (phi - plo) * j as f64 / (n - 1) as f64;
                let _ = writeln!(out, "{},{},{}", fmt_f64(q), fmt_f64(p), fmt_f64(system.energy(&[q], &[p])));
            }
        }
        Some(out)
    }
}

/// Writes the trace to `path` and, for one-dimensional systems, the energy
/// field to `<stem>.grid.csv` beside it. Returns the trace and the files
/// written.
pub fn trace_export(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    plan: &StepPlan,
    tau: f64,
    n_steps: usize,
    path: &Path,
) -> Result<(Trace, Vec<PathBuf>), BenchError> {
    if n_steps == 0 {
        return Err(BenchError::Invalid("a trace needs at least one step".into()));
    }
    let trace = substep_rows(system, state0, plan, tau, n_steps);
    std::fs::write(path, trace.to_csv()).map_err(io_err(path))?;
    let mut written = vec![path.to_path_buf()];
    if let Some(grid) = trace.grid_csv(system, 101) {
        let stem = path.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
        let gpath = path.with_file_name(format!("{stem}.grid.csv"));
        std::fs::write(&gpath, grid).map_err(io_err(&gpath))?;
        written.push(gpath);
    }
    Ok((trace, written))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeStats {
    pub max_rel_energy_err: f64,
    /// Least-squares slope of the per-block maxima of `|ΔH/H0|` against
    /// time.
    pub drift_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationStudy {
    pub compensated: EnvelopeStats,
    pub plain: EnvelopeStats,
}

fn envelope(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    plan: &StepPlan,
    tau: f64,
    n_steps: usize,
    blocks: usize,
) -> Result<EnvelopeStats, BenchError> {
    let h0 = system.energy(&state0.q_value(), &state0.p_value());
    let per_block = (n_steps / blocks.max(1)).max(1);
    let mut fit = LineFit::default();
    let (mut max, mut block_max) = (0.0f64, 0.0f64);
    let mut state = state0.clone();
    let mut it = Integrator::new(system, plan);
    for i in 1..=n_steps {
        it.step(&mut state, tau)?;
        let e = rel_energy_error(system, &state, h0);
        max = max.max(e);
        block_max = block_max.max(e);
        if i % per_block == 0 {
            fit.push(state.time(), block_max);
            block_max = 0.0;
        }
    }
    Ok(EnvelopeStats {
        max_rel_energy_err: max,
        drift_slope: if fit.n >= 2.0 { fit.slope() } else { 0.0 },
    })
}

/// Runs the plan with and without compensated summation.
pub fn compensation_study(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    plan: &StepPlan,
    tau: f64,
    n_steps: usize,
    blocks: usize,
) -> Result<CompensationStudy, BenchError> {
    let on = plan.clone().with_compensation(true);
    let off = plan.clone().with_compensation(false);
    let (a, b) = rayon::join(
        || envelope(system, state0, &on, tau, n_steps, blocks),
        || envelope(system, state0, &off, tau, n_steps, blocks),
    );
    Ok(CompensationStudy {
        compensated: a?,
        plain: b?,
    })
}
