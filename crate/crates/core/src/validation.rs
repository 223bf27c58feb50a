//! Property suites run by the `validate` subcommand. Each suite draws its
//! own instances from a seeded stream and reports the worst observed value
//! of its test statistic against the threshold.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::constellation::{build_ci_geometry, PskConstellation};
use crate::error::Result;
use crate::realify::RealDistortionMatrix;
use crate::simulator::sample_channel;
use crate::solver::{
    apgd_t_step, count_secular_roots, nnls, solve_mu, solve_with_observer, worst_case_w, MomentumRule,
    ProblemInstance, RootKind, SecularFunction, SolverConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    /// Worst value of the statistic; passing means `worst <= threshold`.
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSettings {
    pub seed: u64,
    pub instances: usize,
    pub sphere_samples: usize,
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub constellation: PskConstellation,
    pub apgd_constellation: PskConstellation,
    pub apgd_steps: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub solver: SolverConfig,
}

impl ValidationSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let v = &cfg.validate;
        Self {
            seed: cfg.run.seed,
            instances: v.instances,
            sphere_samples: v.sphere_samples,
            sizes: v.sizes.clone(),
            betas: v.betas.clone(),
            epsilons: v.epsilons.clone(),
            constellation: cfg.constellation(),
            apgd_constellation: PskConstellation::new(v.apgd_psk_order, 0.0).expect("validated order"),
            apgd_steps: v.apgd_steps,
            gamma: 10f64.powf(cfg.problem.gamma_db / 10.0),
            sigma: cfg.system.noise_sigma,
            solver: cfg.solver.clone(),
        }
    }
}

/// Random square instance with `n` users and antennas.
#[allow(clippy::too_many_arguments)]
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n_t: usize,
    n_r: usize,
    constellation: &PskConstellation,
    gamma: f64,
    sigma: f64,
    beta: f64,
    epsilon: f64,
    momentum: MomentumRule,
) -> Result<ProblemInstance> {
    let channel = sample_channel(n_t, n_r, rng)?;
    let symbols: Vec<usize> = (0..n_r).map(|_| rng.random_range(0..constellation.order())).collect();
    let geometry = build_ci_geometry(&symbols, &vec![gamma; n_r], &vec![sigma; n_r], constellation)?;
    ProblemInstance::with_momentum(
        channel.real,
        RealDistortionMatrix::identity(n_t),
        geometry,
        beta,
        epsilon,
        momentum,
    )
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random `(u, t)` with `t ≥ 0`.
fn random_point<R: Rng + ?Sized>(rng: &mut R, instance: &ProblemInstance) -> (DVector<f64>, DVector<f64>) {
    let u = gaussian(rng, instance.tx_dim()) * 2.0;
    let t = gaussian(rng, instance.rx_dim()).abs();
    (u, t)
}

struct Suite {
    rng: ChaCha8Rng,
    settings: ValidationSettings,
    case: usize,
}

impl Suite {
    fn new(settings: &ValidationSettings, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(stream);
        Self { rng, settings: settings.clone(), case: 0 }
    }

    /// Cycles through the size, β and ε grids.
    fn next_instance(&mut self, constellation: &PskConstellation, momentum: MomentumRule) -> Result<ProblemInstance> {
        let s = &self.settings;
        let k = self.case;
        self.case += 1;
        let n = s.sizes[k % s.sizes.len()];
        let beta = s.betas[(k / s.sizes.len()) % s.betas.len()];
        let eps = s.epsilons[(k / (s.sizes.len() * s.betas.len())) % s.epsilons.len()];
        random_instance(&mut self.rng, n, n, constellation, s.gamma, s.sigma, beta, eps, momentum)
    }
}

fn outcome(name: &str, checks: usize, worst: f64, threshold: f64, detail: String) -> PropertyOutcome {
    PropertyOutcome {
        name: name.into(),
        passed: worst <= threshold && checks > 0,
        checks,
        worst,
        threshold,
        detail,
    }
}

/// Multiplier inside `(λ̄_max, λ̄_max + ‖q‖/ε]`, `|f(μ*)| ≤ tol·max(1, ε²)`
/// and `‖w*‖ = ε`. The statistic is the largest of the normalized secular
/// residual and the `‖w*‖/ε` deviation, scaled so that 1 is the limit.
pub fn check_bracketing(settings: &ValidationSettings) -> PropertyOutcome {
    let mut suite = Suite::new(settings, 1);
    let (mut worst, mut checks, mut outside) = (0.0f64, 0, 0);
    let c = settings.constellation.clone();
    for _ in 0..settings.instances {
        let Ok(inst) = suite.next_instance(&c, settings.solver.momentum) else { continue };
        let (u, t) = random_point(&mut suite.rng, &inst);
        let sec = SecularFunction::new(&u, &t, &inst);
        let Ok(sol) = solve_mu(&u, &t, &inst, &settings.solver) else {
            outside += 1;
            continue;
        };
        let eps = inst.epsilon();
        let upper = sec.lambda_max() + sec.q_norm() / eps;
        if !(sol.mu >= sec.lambda_max() && sol.mu <= upper * (1.0 + 1e-15)) {
            outside += 1;
        }
        let w = worst_case_w(&u, &t, sol.mu, &inst).unwrap_or_else(|_| DVector::zeros(inst.tx_dim()));
        let norm_dev = (w.norm() / eps - 1.0).abs() / 1e-6;
        let residual = if sol.kind == RootKind::Interior {
            sec.value(sol.mu).map(|f| f.abs() / (1e-8 * eps.powi(2).max(1.0))).unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        worst = worst.max(norm_dev).max(residual);
        checks += 1;
    }
    if outside > 0 {
        worst = f64::INFINITY;
    }
    outcome(
        "bracketing",
        checks,
        worst,
        1.0,
        format!("{outside} multipliers outside the bracket; statistic = max(|f|/(1e-8 max(1,eps^2)), |‖w‖/eps - 1|/1e-6)"),
    )
}

/// `J(u, t, w*) ≥ J(u, t, w_s) − 1e-9|J|` for uniform samples `w_s` on the
/// ε-sphere. The statistic is the largest relative excess of a sample.
pub fn check_sphere_dominance(settings: &ValidationSettings) -> PropertyOutcome {
    let mut suite = Suite::new(settings, 2);
    let (mut worst, mut checks) = (f64::NEG_INFINITY, 0);
    let c = settings.constellation.clone();
    for _ in 0..settings.instances {
        let Ok(inst) = suite.next_instance(&c, settings.solver.momentum) else { continue };
        let (u, t) = random_point(&mut suite.rng, &inst);
        let Ok((w, _)) = crate::solver::inner_maximization(&u, &t, &inst, &settings.solver) else {
            worst = f64::INFINITY;
            continue;
        };
        let best = inst.relaxed_objective(&u, &t, &w);
        for _ in 0..settings.sphere_samples {
            let g = gaussian(&mut suite.rng, inst.tx_dim());
            let ws = &g * (inst.epsilon() / g.norm());
            let j = inst.relaxed_objective(&u, &t, &ws);
            worst = worst.max((j - best) / best.abs().max(f64::MIN_POSITIVE));
            checks += 1;
        }
    }
    outcome("sphere-dominance", checks, worst, 1e-9, "statistic = max (J(w_s) - J(w*))/|J(w*)|".into())
}

/// `‖Gu + w − P⁻¹HᵀΦ(t)‖ ≤ 1e-10 ‖Φ(t)‖` after every u-update of full
/// solver runs.
pub fn check_fixed_point(settings: &ValidationSettings) -> PropertyOutcome {
    let mut suite = Suite::new(settings, 3);
    let (mut worst, mut checks) = (0.0f64, 0);
    let c = settings.constellation.clone();
    let runs = settings.instances.div_ceil(5).max(1);
    for _ in 0..runs {
        let Ok(inst) = suite.next_instance(&c, settings.solver.momentum) else { continue };
        solve_with_observer(&inst, &settings.solver, |snap| {
            let phi = inst.phi(&snap.state.t);
            let gap = inst.g() * &snap.state.u + &snap.state.w - inst.p_inv_ht() * &phi;
            worst = worst.max(gap.norm() / phi.norm().max(f64::MIN_POSITIVE));
            checks += 1;
        });
    }
    outcome("fixed-point", checks, worst, 1e-10, "statistic = ‖Gu + w - P^-1 H^T Phi(t)‖/‖Phi(t)‖".into())
}

/// A fixed budget of APGD t-steps with `(u, w)` frozen lands within 1e-6
/// (sup norm) of the Lawson–Hanson NNLS solution.
pub fn check_apgd_nnls(settings: &ValidationSettings) -> PropertyOutcome {
    let mut suite = Suite::new(settings, 4);
    let (mut worst, mut checks) = (0.0f64, 0);
    let c = settings.apgd_constellation.clone();
    for _ in 0..settings.instances {
        let Ok(inst) = suite.next_instance(&c, settings.solver.momentum) else { continue };
        // Frozen point whose NNLS solution is interior, where the iteration
        // runs at its unconstrained rate.
        let w = gaussian(&mut suite.rng, inst.tx_dim()) * 0.1;
        let t_inner = gaussian(&mut suite.rng, inst.rx_dim()).abs().add_scalar(0.1);
        let target_rx = inst.geometry().scaled_symbols() + inst.geometry().a_inv() * &t_inner;
        let Ok(x) = inst.h().clone().svd(true, true).solve(&target_rx, 1e-12) else { continue };
        let u = inst.g_solve(&(x - &w));
        let r = inst.h() * (inst.g() * &u + &w) - inst.geometry().scaled_symbols();
        let Ok(target) = nnls(inst.geometry().a_inv(), &r) else {
            worst = f64::INFINITY;
            continue;
        };
        let mut t = DVector::zeros(inst.rx_dim());
        let mut z = t.clone();
        for _ in 0..settings.apgd_steps {
            (t, z) = apgd_t_step(&t, &z, &u, &w, &inst);
        }
        worst = worst.max((&t - &target).amax());
        checks += 1;
    }
    outcome(
        "apgd-nnls",
        checks,
        worst,
        1e-6,
        format!(
            "{} steps, {}-PSK, momentum {:?}; statistic = ‖t - t_nnls‖_inf",
            settings.apgd_steps,
            c.order(),
            settings.solver.momentum
        ),
    )
}

/// Single-user root counts are even and within `[2, 2 rank(H)]`. The
/// statistic is the number of violating instances.
pub fn check_root_parity(settings: &ValidationSettings) -> PropertyOutcome {
    let mut suite = Suite::new(settings, 5);
    let (mut bad, mut checks) = (0usize, 0);
    let c = settings.constellation.clone();
    let s = settings;
    for k in 0..s.instances {
        let n_t = s.sizes[k % s.sizes.len()];
        let beta = s.betas[k % s.betas.len()];
        let eps = s.epsilons[k % s.epsilons.len()];
        let Ok(inst) = random_instance(&mut suite.rng, n_t, 1, &c, s.gamma, s.sigma, beta, eps, s.solver.momentum)
        else {
            continue;
        };
        let (u, t) = random_point(&mut suite.rng, &inst);
        let rank = inst.h().rank(1e-10);
        let count = count_secular_roots(&u, &t, &inst);
        if !count.is_multiple_of(2) || count < 2 || count > 2 * rank {
            bad += 1;
        }
        checks += 1;
    }
    outcome("root-parity", checks, bad as f64, 0.0, "statistic = instances with an odd or out-of-range count".into())
}

pub fn run_all(settings: &ValidationSettings) -> Vec<PropertyOutcome> {
    vec![
        check_bracketing(settings),
        check_sphere_dominance(settings),
        check_fixed_point(settings),
        check_apgd_nnls(settings),
        check_root_parity(settings),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> ValidationSettings {
        let cfg = RunConfig::from_toml_str("[problem]\nbeta = 1.0\n[validate]\ninstances = 12\nsphere_samples = 200\n")
            .unwrap();
        ValidationSettings::from_config(&cfg)
    }

    #[test]
    fn default_suites_pass() {
        for o in run_all(&settings()) {
            assert!(o.passed, "{o:?}");
        }
    }

    #[test]
    fn literal_momentum_fails_the_apgd_check() {
        let mut s = settings();
        s.solver.momentum = MomentumRule::Literal;
        let o = check_apgd_nnls(&s);
        assert!(!o.passed, "{o:?}");
    }

    #[test]
    fn suites_are_reproducible() {
        assert_eq!(run_all(&settings()), run_all(&settings()));
    }
}
