//! Worst-case relaxed SLP solver.
//!
//! The problem is
//!
//! ```text
//! min_{u, t ≥ 0} max_{‖w‖ ≤ ε} ‖Gu + w‖² + β‖H(Gu + w) − Φ(t)‖²,   Φ(t) = Ds + A⁻¹Wt
//! ```
//!
//! and [`solve`] runs the three-step block coordinate ascent-descent loop:
//! worst-case `w` from the secular equation, one accelerated projected
//! gradient step on `t`, then the closed-form regularized-inversion update
//! of `u`.

mod apgd;
mod instance;
mod nnls;
mod nominal;
mod secular;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use apgd::{apgd_t_step, ApgdConstants, MomentumRule};
pub use instance::{phi, relaxed_objective, update_u, ProblemInstance};
pub use nnls::nnls;
pub use nominal::{nominal_slp, relaxed_slack};
pub use secular::{
    approx_mu, count_secular_roots, mu_bracket, secular_value, solve_mu, worst_case_w, MuSolution,
    RootKind, SecularFunction,
};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RootMethod {
    #[default]
    Bisection,
    /// Closed-form small-ε estimate of the multiplier. Not a root of the
    /// secular function, so `‖w‖ = ε` is not enforced.
    SmallEpsilon,
}

/// Starting point of the alternation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// `t⁰ = 0`, `u⁰ = G⁻¹P⁻¹HᵀDs`.
    Zero,
    /// `t⁰` = optimal slack of the distortion-free penalized problem,
    /// `u⁰ = G⁻¹P⁻¹HᵀΦ(t⁰)`.
    #[default]
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative change of `(u, t)` that ends the outer loop.
    pub outer_tolerance: f64,
    /// Accepted `|f(μ)| / max(1, ε²)` for the secular root.
    pub secular_tolerance: f64,
    pub max_bisection_steps: usize,
    pub root_method: RootMethod,
    /// Relative inset of the open lower end of the multiplier bracket.
    pub bracket_inset: f64,
    pub momentum: MomentumRule,
    pub initialization: Initialization,
    /// Also stop when the iterates, or the worst-case objective, repeat
    /// with period two.
    pub detect_cycles: bool,
    /// Relative tolerance on the period-two objective repeat.
    pub cycle_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            outer_tolerance: 1e-8,
            secular_tolerance: 1e-12,
            max_bisection_steps: 400,
            root_method: RootMethod::Bisection,
            bracket_inset: 1e-10,
            momentum: MomentumRule::Standard,
            initialization: Initialization::Relaxed,
            detect_cycles: true,
            cycle_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [
            ("outer_tolerance", self.outer_tolerance),
            ("secular_tolerance", self.secular_tolerance),
            ("bracket_inset", self.bracket_inset),
            ("cycle_tolerance", self.cycle_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("solver.{name} must be positive, got {v}"));
            }
        }
        if self.bracket_inset >= 1.0 {
            return Err(format!("solver.bracket_inset must be below 1, got {}", self.bracket_inset));
        }
        if self.max_iterations == 0 || self.max_bisection_steps == 0 {
            return Err("solver iteration limits must be positive".into());
        }
        Ok(())
    }
}

/// Iterates of the alternating solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: DVector<f64>,
    pub t: DVector<f64>,
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    /// Scaled multiplier `μ = τ/β` of the last w-step; `None` when `ε = 0`.
    pub mu: Option<f64>,
    pub k: usize,
}

impl SolverState {
    pub fn initial(instance: &ProblemInstance, init: Initialization) -> Result<Self> {
        let t = match init {
            Initialization::Zero => DVector::zeros(instance.rx_dim()),
            Initialization::Relaxed => relaxed_slack(instance)?,
        };
        let w = DVector::zeros(instance.tx_dim());
        let u = instance.update_u(&t, &w);
        Ok(Self { u, z: t.clone(), t, w, mu: None, k: 0 })
    }

    /// APGD t-step from this state.
    pub fn t_step(&self, instance: &ProblemInstance) -> (DVector<f64>, DVector<f64>) {
        apgd_t_step(&self.t, &self.z, &self.u, &self.w, instance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "detail")]
pub enum Termination {
    /// Successive iterates agree to the outer tolerance.
    Converged,
    /// Iterates two steps apart agree to the outer tolerance.
    LimitCycle,
    MaxIterations,
    NumericFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Worst-case objective at the iterate entering this iteration, i.e.
    /// the relaxed objective at `(u^{k-1}, t^{k-1}, w^k)`.
    pub objective: f64,
    pub mu: Option<f64>,
    pub w_norm: f64,
    pub min_slack: f64,
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub u: DVector<f64>,
    pub t: DVector<f64>,
    /// Worst-case distortion for the final `(u, t)`.
    pub w: DVector<f64>,
    pub mu: Option<f64>,
    /// Worst-case objective at the final `(u, t)`.
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Converged | Termination::LimitCycle)
    }

    pub fn objective_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }
}

/// State after each completed iteration, for instrumentation.
#[derive(Debug)]
pub struct IterationSnapshot<'a> {
    pub state: &'a SolverState,
    pub record: &'a IterationRecord,
}

/// Worst-case `w` (and `μ`) for fixed `(u, t)`.
pub fn inner_maximization(
    u: &DVector<f64>,
    t: &DVector<f64>,
    instance: &ProblemInstance,
    config: &SolverConfig,
) -> Result<(DVector<f64>, Option<f64>)> {
    if instance.epsilon() == 0.0 {
        return Ok((DVector::zeros(instance.tx_dim()), None));
    }
    let sec = SecularFunction::new(u, t, instance);
    let solution = match config.root_method {
        RootMethod::Bisection => secular::solve_secular(&sec, instance.epsilon(), config)?,
        RootMethod::SmallEpsilon => {
            let mu = approx_mu(u, t, instance)?;
            MuSolution { mu, shift: mu - sec.lambda_max(), kind: RootKind::Approximate, steps: 0, residual: f64::NAN }
        }
    };
    let w = secular::worst_case_from_solution(&sec, &solution, u, t, instance)?;
    Ok((w, Some(solution.mu)))
}

pub fn solve(instance: &ProblemInstance, config: &SolverConfig) -> SolveReport {
    solve_with_observer(instance, config, |_| {})
}

/// [`solve`] with a callback after every iteration.
pub fn solve_with_observer<F>(instance: &ProblemInstance, config: &SolverConfig, mut observe: F) -> SolveReport
where
    F: FnMut(&IterationSnapshot<'_>),
{
    if config.root_method == RootMethod::SmallEpsilon && instance.epsilon() > 0.0 {
        log::warn!("approximate multiplier selected: ‖w‖ = ε is not enforced");
    }
    let mut state = match SolverState::initial(instance, config.initialization) {
        Ok(s) => s,
        Err(e) => {
            let t = DVector::zeros(instance.rx_dim());
            let w = DVector::zeros(instance.tx_dim());
            let u = instance.update_u(&t, &w);
            return SolveReport {
                objective: instance.relaxed_objective(&u, &t, &w),
                u,
                t,
                w,
                mu: None,
                iterations: 0,
                trace: Vec::new(),
                termination: Termination::NumericFailure(e.to_string()),
            };
        }
    };
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut termination = Termination::MaxIterations;

    while state.k < config.max_iterations {
        let (w, mu) = match inner_maximization(&state.u, &state.t, instance, config) {
            Ok(v) => v,
            Err(e) => {
                termination = Termination::NumericFailure(e.to_string());
                break;
            }
        };
        let objective = instance.relaxed_objective(&state.u, &state.t, &w);
        state.w = w;
        state.mu = mu;

        let (t, z) = state.t_step(instance);
        let u = instance.update_u(&t, &state.w);

        let change = relative_change(&u, &state.u, &t, &state.t);
        let cycle_change = previous.as_ref().map(|(u2, t2)| relative_change(&u, u2, &t, t2));
        let old_u = std::mem::replace(&mut state.u, u);
        let old_t = std::mem::replace(&mut state.t, t);
        state.z = z;
        state.k += 1;
        previous = Some((old_u, old_t));

        let record = IterationRecord {
            objective,
            mu,
            w_norm: state.w.norm(),
            min_slack: state.t.min(),
            change,
        };
        observe(&IterationSnapshot { state: &state, record: &record });
        trace.push(record);

        if change <= config.outer_tolerance {
            termination = Termination::Converged;
            break;
        }
        if config.detect_cycles
            && (cycle_change.is_some_and(|c| c <= config.outer_tolerance)
                || objective_cycle(&trace, config.cycle_tolerance))
        {
            termination = Termination::LimitCycle;
            break;
        }
    }

    let (mut w, mut mu, mut objective) = match inner_maximization(&state.u, &state.t, instance, config) {
        Ok((w, mu)) => {
            let obj = instance.relaxed_objective(&state.u, &state.t, &w);
            (w, mu, obj)
        }
        Err(e) => {
            if !matches!(termination, Termination::NumericFailure(_)) {
                termination = Termination::NumericFailure(e.to_string());
            }
            let obj = instance.relaxed_objective(&state.u, &state.t, &state.w);
            (state.w.clone(), state.mu, obj)
        }
    };
    let (mut u, mut t) = (state.u, state.t);

    // On a period-two cycle both points are fixed by the iteration; return
    // the one with the smaller worst-case objective.
    if termination == Termination::LimitCycle {
        if let (Some((u_prev, t_prev)), Some(last)) = (previous, trace.last()) {
            if last.objective < objective {
                objective = last.objective;
                u = u_prev;
                t = t_prev;
                w = state.w;
                mu = state.mu;
            }
        }
    }

    SolveReport { u, t, w, mu, objective, iterations: state.k, trace, termination }
}

/// Worst-case objective repeats with period two over the last four iterations.
fn objective_cycle(trace: &[IterationRecord], tol: f64) -> bool {
    let n = trace.len();
    if n < 4 {
        return false;
    }
    let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    close(trace[n - 1].objective, trace[n - 3].objective) && close(trace[n - 2].objective, trace[n - 4].objective)
}

fn relative_change(u: &DVector<f64>, u_old: &DVector<f64>, t: &DVector<f64>, t_old: &DVector<f64>) -> f64 {
    let du = (u - u_old).norm() / u.norm().max(f64::MIN_POSITIVE);
    let dt = (t - t_old).norm() / (1.0 + t.norm());
    du.max(dt)
}
