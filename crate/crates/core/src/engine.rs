//! Binary64 stepping of symmetric drift/kick compositions.
//!
//! One step is `k` substep pairs. Drift first (ABA): `q += τ c_i ∂T/∂p(p)`
//! then `p −= τ d_i ∂V/∂q(q)`. Kick first (BAB): the same with the two
//! halves swapped. Position, momentum and time are accumulated with Kahan
//! compensation unless disabled on the plan.

use std::ops::ControlFlow;

use crate::coefficients::{SchemeTag, SplittingCoefficients};
use crate::systems::SeparableSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum IntegrationFault {
    #[error("non-finite derivative at substep {substep} of step {step}")]
    NonFinite { step: usize, substep: usize },
    #[error("state has dimension {got}, system expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("step size must be finite")]
    BadStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub q_residual: Vec<f64>,
    pub p_residual: Vec<f64>,
    pub t: f64,
    pub t_residual: f64,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        let n = q.len();
        Self {
            q_residual: vec![0.0; n],
            p_residual: vec![0.0; p.len()],
            q,
            p,
            t: 0.0,
            t_residual: 0.0,
        }
    }

    pub fn from_system(system: &dyn SeparableSystem) -> Self {
        let (q, p) = system.initial_state();
        Self::new(q, p)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Positions including the pending compensation.
    pub fn q_value(&self) -> Vec<f64> {
        self.q.iter().zip(&self.q_residual).map(|(a, b)| a + b).collect()
    }

    pub fn p_value(&self) -> Vec<f64> {
        self.p.iter().zip(&self.p_residual).map(|(a, b)| a + b).collect()
    }

    pub fn time(&self) -> f64 {
        self.t + self.t_residual
    }

    pub fn energy(&self, system: &dyn SeparableSystem) -> f64 {
        system.energy(&self.q, &self.p)
    }
}

#[inline]
fn kahan(x: &mut f64, e: &mut f64, delta: f64) {
    let y = delta + *e;
    let t = *x + y;
    *e = (*x - t) + y;
    *x = t;
}

/// Coefficients lowered to binary64 plus stepping options.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub name: String,
    pub scheme: SchemeTag,
    pub stages: usize,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub fsal: bool,
    pub compensated: bool,
}

impl StepPlan {
    pub fn new(coeffs: &SplittingCoefficients) -> Self {
        let (c, d) = coeffs.to_f64();
        Self {
            name: coeffs.name.clone(),
            scheme: coeffs.scheme,
            stages: coeffs.stages,
            c,
            d,
            fsal: true,
            compensated: true,
        }
    }

    pub fn with_fsal(mut self, fsal: bool) -> Self {
        self.fsal = fsal;
        self
    }

    pub fn with_compensation(mut self, compensated: bool) -> Self {
        self.compensated = compensated;
        self
    }

    /// Same numbers with the roles of drift and kick exchanged, e.g. a
    /// kick-first set run drift first.
    pub fn transposed(&self) -> Self {
        Self {
            name: format!("{} (transposed)", self.name),
            scheme: self.scheme.other(),
            c: self.d.clone(),
            d: self.c.clone(),
            ..self.clone()
        }
    }

    pub fn k(&self) -> usize {
        self.c.len()
    }

    /// Signs `(c_i, d_i)` of pair `i`, each −1, 0 or 1.
    pub fn signs(&self, i: usize) -> (i8, i8) {
        let s = |x: f64| {
            if x > 0.0 {
                1
            } else if x < 0.0 {
                -1
            } else {
                0
            }
        };
        (s(self.c[i]), s(self.d[i]))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub dt_dp: u64,
    pub dv_dq: u64,
}

/// A point visited inside one step and the signs of the pair that leaves it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstepPoint {
    pub substep: usize,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub c_sign: i8,
    pub d_sign: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Half {
    Drift,
    Kick,
}

struct Cache {
    key: Vec<f64>,
    value: Vec<f64>,
    valid: bool,
}

impl Cache {
    fn new(n: usize) -> Self {
        Self {
            key: vec![0.0; n],
            value: vec![0.0; n],
            valid: false,
        }
    }

    fn hit(&self, arg: &[f64]) -> bool {
        self.valid
            && self
                .key
                .iter()
                .zip(arg)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Stateful driver over one trajectory. Holds scratch buffers and the
/// first-same-as-last cache.
pub struct Integrator<'a> {
    system: &'a dyn SeparableSystem,
    plan: &'a StepPlan,
    drift_cache: Cache,
    kick_cache: Cache,
    counts: EvalCounts,
    steps: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(system: &'a dyn SeparableSystem, plan: &'a StepPlan) -> Self {
        let n = system.dim();
        Self {
            system,
            plan,
            drift_cache: Cache::new(n),
            kick_cache: Cache::new(n),
            counts: EvalCounts::default(),
            steps: 0,
        }
    }

    pub fn counts(&self) -> EvalCounts {
        self.counts
    }

    pub fn plan(&self) -> &StepPlan {
        self.plan
    }

    fn check(&self, state: &PhaseState, tau: f64) -> Result<(), IntegrationFault> {
        let n = self.system.dim();
        for len in [state.q.len(), state.p.len(), state.q_residual.len(), state.p_residual.len()] {
            if len != n {
                return Err(IntegrationFault::Dimension { expected: n, got: len });
            }
        }
        if !tau.is_finite() {
            return Err(IntegrationFault::BadStep);
        }
        Ok(())
    }

    fn half(
        &mut self,
        state: &mut PhaseState,
        which: Half,
        coeff: f64,
        tau: f64,
        substep: usize,
    ) -> Result<(), IntegrationFault> {
        if coeff == 0.0 {
            return Ok(());
        }
        let fsal = self.plan.fsal;
        let (arg, cache) = match which {
            Half::Drift => (&state.p, &mut self.drift_cache),
            Half::Kick => (&state.q, &mut self.kick_cache),
        };
        if !(fsal && cache.hit(arg)) {
            cache.key.copy_from_slice(arg);
            match which {
                Half::Drift => {
                    self.system.dt_dp(arg, &mut cache.value);
                    self.counts.dt_dp += 1;
                }
                Half::Kick => {
                    self.system.dv_dq(arg, &mut cache.value);
                    self.counts.dv_dq += 1;
                }
            }
            cache.valid = cache.value.iter().all(|v| v.is_finite());
            if !cache.valid {
                return Err(IntegrationFault::NonFinite {
                    step: self.steps,
                    substep,
                });
            }
        }
        let (x, e, h) = match which {
            Half::Drift => (&mut state.q, &mut state.q_residual, tau * coeff),
            Half::Kick => (&mut state.p, &mut state.p_residual, -tau * coeff),
        };
        if self.plan.compensated {
            for i in 0..x.len() {
                kahan(&mut x[i], &mut e[i], h * cache.value[i]);
            }
        } else {
            for i in 0..x.len() {
                x[i] += h * cache.value[i];
            }
        }
        Ok(())
    }

    fn pair(
        &mut self,
        state: &mut PhaseState,
        i: usize,
        tau: f64,
    ) -> Result<(), IntegrationFault> {
        let (c, d) = (self.plan.c[i], self.plan.d[i]);
        match self.plan.scheme {
            SchemeTag::Aba => {
                self.half(state, Half::Drift, c, tau, i)?;
                self.half(state, Half::Kick, d, tau, i)
            }
            SchemeTag::Bab => {
                self.half(state, Half::Kick, d, tau, i)?;
                self.half(state, Half::Drift, c, tau, i)
            }
        }
    }

    fn advance_time(&self, state: &mut PhaseState, tau: f64) {
        if self.plan.compensated {
            kahan(&mut state.t, &mut state.t_residual, tau);
        } else {
            state.t += tau;
        }
    }

    /// One full composition in place. On a fault the state is left at the
    /// failing substep.
    pub fn step(&mut self, state: &mut PhaseState, tau: f64) -> Result<(), IntegrationFault> {
        self.check(state, tau)?;
        if tau == 0.0 {
            return Ok(());
        }
        for i in 0..self.plan.k() {
            self.pair(state, i, tau)?;
        }
        self.advance_time(state, tau);
        self.steps += 1;
        Ok(())
    }

    /// One step recording every substep point with the signs of the pair
    /// applied next.
    pub fn step_traced(
        &mut self,
        state: &mut PhaseState,
        tau: f64,
    ) -> Result<Vec<SubstepPoint>, IntegrationFault> {
        let mut out = Vec::with_capacity(self.plan.k());
        self.step_traced_into(state, tau, &mut out)?;
        Ok(out)
    }

    /// As `step_traced`, appending to `out`; points visited before a fault
    /// are kept.
    pub fn step_traced_into(
        &mut self,
        state: &mut PhaseState,
        tau: f64,
        out: &mut Vec<SubstepPoint>,
    ) -> Result<(), IntegrationFault> {
        self.check(state, tau)?;
        for i in 0..self.plan.k() {
            let (c_sign, d_sign) = self.plan.signs(i);
            out.push(SubstepPoint {
                substep: i,
                q: state.q_value(),
                p: state.p_value(),
                c_sign,
                d_sign,
            });
            self.pair(state, i, tau)?;
        }
        self.advance_time(state, tau);
        self.steps += 1;
        Ok(())
    }
}

/// One step from `state`, without carrying a cache between calls.
pub fn step(
    system: &dyn SeparableSystem,
    state: &PhaseState,
    tau: f64,
    plan: &StepPlan,
) -> Result<PhaseState, IntegrationFault> {
    let mut s = state.clone();
    Integrator::new(system, plan).step(&mut s, tau)?;
    Ok(s)
}

/// `step` with `−τ`.
pub fn step_reverse(
    system: &dyn SeparableSystem,
    state: &PhaseState,
    tau: f64,
    plan: &StepPlan,
) -> Result<PhaseState, IntegrationFault> {
    step(system, state, -tau, plan)
}

/// Number of whole steps of size `tau` in `[t0, t_end]`, tolerant of the
/// last step landing a few ulps short.
pub fn step_count(t0: f64, t_end: f64, tau: f64) -> usize {
    if tau == 0.0 || t_end <= t0 {
        return 0;
    }
    let n = (t_end - t0) / tau.abs();
    (n * (1.0 + 4.0 * f64::EPSILON)).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOutcome {
    pub state: PhaseState,
    pub steps: usize,
    pub stopped_early: bool,
    pub counts: EvalCounts,
}

/// Runs `floor((t_end − t0)/τ)` steps, calling `observer(step, state)` after
/// each. Returning `Break` from the observer stops early.
pub fn integrate<F>(
    system: &dyn SeparableSystem,
    state0: &PhaseState,
    tau: f64,
    t_end: f64,
    plan: &StepPlan,
    mut observer: F,
) -> Result<IntegrationOutcome, IntegrationFault>
where
    F: FnMut(usize, &PhaseState) -> ControlFlow<()>,
{
    let n = step_count(state0.time(), t_end, tau);
    let mut state = state0.clone();
    let mut it = Integrator::new(system, plan);
    for i in 0..n {
        it.step(&mut state, tau)?;
        if observer(i + 1, &state).is_break() {
            return Ok(IntegrationOutcome {
                state,
                steps: i + 1,
                stopped_early: true,
                counts: it.counts(),
            });
        }
    }
    Ok(IntegrationOutcome {
        state,
        steps: n,
        stopped_early: false,
        counts: it.counts(),
    })
}

/// Substep points of one step followed by the end state.
pub fn substep_trace(
    system: &dyn SeparableSystem,
    state: &PhaseState,
    tau: f64,
    plan: &StepPlan,
) -> Result<(Vec<SubstepPoint>, PhaseState), IntegrationFault> {
    let mut s = state.clone();
    let pts = Integrator::new(system, plan).step_traced(&mut s, tau)?;
    Ok((pts, s))
}
