use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{calibrate_epsilon, receive, sample_channel, sample_distortion, sample_noise, ChannelRealization};
use super::metrics::{bit_errors, energy_efficiency, estimate_mi};
use crate::constellation::{build_ci_geometry, CiGeometry, PskConstellation};
use crate::error::{Result, SlpError};
use crate::realify::RealDistortionMatrix;
use crate::solver::{nominal_slp, solve, ProblemInstance, SolverConfig};

/// Margins below `-VIOLATION_TOL` count as a CI violation.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Worst-case design, transmitted through `G` with actual distortion.
    WcSlp,
    /// Nominal design over an ideal front end.
    NominalSlp,
    /// Nominal design transmitted through `G` with actual distortion.
    NominalUnderDistortion,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::WcSlp, Scheme::NominalSlp, Scheme::NominalUnderDistortion];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::WcSlp => "wc-slp",
            Scheme::NominalSlp => "nominal-slp",
            Scheme::NominalUnderDistortion => "nominal-under-distortion",
        }
    }

    fn depends_on_beta(self) -> bool {
        self == Scheme::WcSlp
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected wc-slp, nominal-slp or nominal-under-distortion)"))
    }
}

/// How BER enters the energy-efficiency figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EeMode {
    /// `BER × rate / power`.
    #[default]
    Literal,
    /// `(1 − BER) × rate / power`.
    Complement,
}

/// Actual distortion statistics and the radius the solver designs for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    /// Per-complex-entry variance `σ_w²`.
    pub variance: f64,
    pub epsilon: f64,
    pub confidence: f64,
}

impl DistortionSpec {
    pub fn new(variance: f64, epsilon: f64, confidence: f64) -> Result<Self> {
        let spec = Self { variance, epsilon, confidence };
        spec.validate()?;
        Ok(spec)
    }

    /// Radius taken from the chi-square quantile at `confidence`.
    pub fn calibrated(variance: f64, confidence: f64, n_t: usize) -> Result<Self> {
        Self::new(variance, calibrate_epsilon(confidence, variance, n_t)?, confidence)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(SlpError::InvalidParameter(format!(
                "distortion variance must be non-negative, got {}",
                self.variance
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(SlpError::InvalidParameter(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(SlpError::InvalidParameter(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub constellation: PskConstellation,
    pub gamma_db: Vec<f64>,
    pub betas: Vec<f64>,
    pub blocks: usize,
    pub symbols_per_block: usize,
    /// Noise standard deviation `σ_i`, shared by all users.
    pub noise_sigma: f64,
    pub distortion: DistortionSpec,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub solver: SolverConfig,
    pub mi_bins: usize,
    pub ee_mode: EeMode,
    /// Worker threads; results do not depend on it.
    pub parallel: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 {
            return Err(SlpError::Dimension("n_t and n_r must be positive".into()));
        }
        if self.n_r > self.n_t {
            return Err(SlpError::Dimension(format!(
                "n_r = {} exceeds n_t = {}",
                self.n_r, self.n_t
            )));
        }
        if self.gamma_db.is_empty() || self.betas.is_empty() || self.schemes.is_empty() {
            return Err(SlpError::Empty("gamma grid, beta grid and scheme list must be non-empty".into()));
        }
        if let Some(g) = self.gamma_db.iter().find(|g| !g.is_finite()) {
            return Err(SlpError::InvalidParameter(format!("gamma must be finite, got {g}")));
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(SlpError::InvalidParameter(format!("beta must be positive, got {b}")));
        }
        if self.blocks == 0 || self.symbols_per_block == 0 {
            return Err(SlpError::InvalidParameter("blocks and symbols_per_block must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(SlpError::InvalidParameter(format!("noise sigma must be positive, got {}", self.noise_sigma)));
        }
        if self.mi_bins < 2 {
            return Err(SlpError::InvalidParameter(format!("mi_bins must be at least 2, got {}", self.mi_bins)));
        }
        if self.parallel == 0 {
            return Err(SlpError::InvalidParameter("parallel must be at least 1".into()));
        }
        self.distortion.validate()?;
        self.solver.validate().map_err(SlpError::InvalidParameter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub gamma_db: f64,
    pub beta: f64,
    pub scheme: Scheme,
    pub mean_power: f64,
    pub ber: f64,
    pub mi_bits_per_user: f64,
    pub energy_efficiency: f64,
    pub blocks: usize,
    pub symbols_per_block: usize,
    pub solver_failures: u64,
    pub seed: u64,
    /// Fraction of user-symbols whose noise-free received point leaves the
    /// CI region, over all distortion draws.
    pub ci_violation_rate: f64,
    /// Same, restricted to draws with `‖w‖ ≤ ε`.
    pub ci_violation_rate_in_ball: f64,
    pub epsilon: f64,
    pub mi_bins: usize,
}

/// Randomness of one coherence block, shared by every γ, β and scheme.
struct BlockDraw {
    channel: ChannelRealization,
    symbols: Vec<Vec<usize>>,
    distortion: Vec<DVector<f64>>,
    noise: Vec<DVector<f64>>,
}

fn draw_block(cfg: &SweepConfig, block: usize) -> Result<BlockDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(block as u64);
    let channel = sample_channel(cfg.n_t, cfg.n_r, &mut rng)?;
    let order = cfg.constellation.order();
    let sigmas = vec![cfg.noise_sigma; cfg.n_r];
    let mut symbols = Vec::with_capacity(cfg.symbols_per_block);
    let mut distortion = Vec::with_capacity(cfg.symbols_per_block);
    let mut noise = Vec::with_capacity(cfg.symbols_per_block);
    for _ in 0..cfg.symbols_per_block {
        symbols.push((0..cfg.n_r).map(|_| rng.random_range(0..order)).collect());
        distortion.push(sample_distortion(cfg.distortion.variance, cfg.n_t, &mut rng));
        noise.push(sample_noise(&sigmas, &mut rng));
    }
    Ok(BlockDraw { channel, symbols, distortion, noise })
}

#[derive(Debug, Clone, Default)]
struct Tally {
    power: f64,
    bit_errors: u64,
    evaluated: u64,
    violations: u64,
    violations_in_ball: u64,
    user_symbols_in_ball: u64,
    failures: u64,
    samples: Vec<Vec<Vector2<f64>>>,
    sent: Vec<Vec<usize>>,
}

impl Tally {
    fn new(users: usize) -> Self {
        Self { samples: vec![Vec::new(); users], sent: vec![Vec::new(); users], ..Self::default() }
    }

    fn merge(&mut self, other: Tally) {
        self.power += other.power;
        self.bit_errors += other.bit_errors;
        self.evaluated += other.evaluated;
        self.violations += other.violations;
        self.violations_in_ball += other.violations_in_ball;
        self.user_symbols_in_ball += other.user_symbols_in_ball;
        self.failures += other.failures;
        for (mine, theirs) in self.samples.iter_mut().zip(other.samples) {
            mine.extend(theirs);
        }
        for (mine, theirs) in self.sent.iter_mut().zip(other.sent) {
            mine.extend(theirs);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        power: f64,
        x: &DVector<f64>,
        noise: &DVector<f64>,
        in_ball: bool,
        draw: &BlockDraw,
        geometry: &CiGeometry,
        constellation: &PskConstellation,
        sent: &[usize],
    ) {
        let clean = draw.channel.real.matrix() * x;
        let margins = geometry.margins(&clean);
        let received = receive(x, &draw.channel.real, noise);
        let mut detected = Vec::with_capacity(sent.len());
        for (i, r) in received.iter().enumerate() {
            detected.push(constellation.ml_detect(r));
            self.samples[i].push(*r);
            self.sent[i].push(sent[i]);
            let violated = margins[2 * i].min(margins[2 * i + 1]) < -VIOLATION_TOL;
            self.violations += u64::from(violated);
            if in_ball {
                self.violations_in_ball += u64::from(violated);
                self.user_symbols_in_ball += 1;
            }
        }
        self.bit_errors += bit_errors(&detected, sent, constellation);
        self.power += power;
        self.evaluated += 1;
    }
}

/// Tallies for one block at one γ: WC-SLP per β, then one per nominal scheme.
struct BlockTally {
    wc: Vec<Tally>,
    nominal: Tally,
    nominal_distorted: Tally,
}

fn simulate_block(cfg: &SweepConfig, gamma: f64, block: usize) -> Result<BlockTally> {
    let draw = draw_block(cfg, block)?;
    let n_r = cfg.n_r;
    let want = |s: Scheme| cfg.schemes.contains(&s);
    let g = RealDistortionMatrix::identity(cfg.n_t);
    let gammas = vec![gamma; n_r];
    let sigmas = vec![cfg.noise_sigma; n_r];
    let c = &cfg.constellation;
    let eps = cfg.distortion.epsilon;

    let mut out = BlockTally {
        wc: vec![Tally::new(n_r); cfg.betas.len()],
        nominal: Tally::new(n_r),
        nominal_distorted: Tally::new(n_r),
    };
    for k in 0..cfg.symbols_per_block {
        let sent = &draw.symbols[k];
        let w_act = &draw.distortion[k];
        let noise = &draw.noise[k];
        let in_ball = w_act.norm() <= eps;
        let geometry = build_ci_geometry(sent, &gammas, &sigmas, c)?;

        if want(Scheme::NominalSlp) || want(Scheme::NominalUnderDistortion) {
            match nominal_slp(&draw.channel.real, &geometry) {
                Ok((x, _)) => {
                    let power = x.norm_squared();
                    if want(Scheme::NominalSlp) {
                        out.nominal.record(power, &x, noise, true, &draw, &geometry, c, sent);
                    }
                    if want(Scheme::NominalUnderDistortion) {
                        let x_act = g.matrix() * &x + w_act;
                        out.nominal_distorted.record(power, &x_act, noise, in_ball, &draw, &geometry, c, sent);
                    }
                }
                Err(e) => {
                    log::debug!("block {block} symbol {k}: nominal design failed: {e}");
                    out.nominal.failures += 1;
                    out.nominal_distorted.failures += 1;
                }
            }
        }

        if want(Scheme::WcSlp) {
            for (bi, &beta) in cfg.betas.iter().enumerate() {
                let tally = &mut out.wc[bi];
                let instance = match ProblemInstance::with_momentum(
                    draw.channel.real.clone(),
                    g.clone(),
                    geometry.clone(),
                    beta,
                    eps,
                    cfg.solver.momentum,
                ) {
                    Ok(inst) => inst,
                    Err(e) => {
                        log::debug!("block {block} symbol {k} beta {beta}: {e}");
                        tally.failures += 1;
                        continue;
                    }
                };
                let report = solve(&instance, &cfg.solver);
                if !report.converged() {
                    log::debug!("block {block} symbol {k} beta {beta}: {:?}", report.termination);
                    tally.failures += 1;
                    continue;
                }
                let x_act = g.matrix() * &report.u + w_act;
                tally.record(report.u.norm_squared(), &x_act, noise, in_ball, &draw, &geometry, c, sent);
            }
        }
    }
    Ok(out)
}

fn finish(
    cfg: &SweepConfig,
    gamma_db: f64,
    beta: f64,
    scheme: Scheme,
    tally: &Tally,
) -> Result<MetricsRecord> {
    let n = tally.evaluated as f64;
    let user_symbols = n * cfg.n_r as f64;
    let (mean_power, ber, rate, violation) = if tally.evaluated == 0 {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let bits = user_symbols * cfg.constellation.bits_per_symbol() as f64;
        let mut rate = 0.0;
        for (samples, sent) in tally.samples.iter().zip(&tally.sent) {
            rate += estimate_mi(samples, sent, cfg.constellation.order(), cfg.mi_bins)?;
        }
        (
            tally.power / n,
            tally.bit_errors as f64 / bits,
            rate / cfg.n_r as f64,
            tally.violations as f64 / user_symbols,
        )
    };
    let ber_term = match cfg.ee_mode {
        EeMode::Literal => ber,
        EeMode::Complement => 1.0 - ber,
    };
    let energy_efficiency = energy_efficiency(ber_term, rate, mean_power).unwrap_or(f64::NAN);
    let in_ball = if tally.user_symbols_in_ball == 0 {
        f64::NAN
    } else {
        tally.violations_in_ball as f64 / tally.user_symbols_in_ball as f64
    };
    Ok(MetricsRecord {
        gamma_db,
        beta,
        scheme,
        mean_power,
        ber,
        mi_bits_per_user: rate,
        energy_efficiency,
        blocks: cfg.blocks,
        symbols_per_block: cfg.symbols_per_block,
        solver_failures: tally.failures,
        seed: cfg.seed,
        ci_violation_rate: violation,
        ci_violation_rate_in_ball: in_ball,
        epsilon: cfg.distortion.epsilon,
        mi_bins: cfg.mi_bins,
    })
}

/// Monte-Carlo sweep over the γ grid, β grid and schemes.
///
/// Every block draws from its own ChaCha stream keyed by the seed and the
/// block index, so all γ, β and schemes see the same channels, symbols,
/// distortion and noise, and the output does not depend on `parallel`.
/// Rows come out ordered by γ, then β, then scheme in config order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| SlpError::InvalidParameter(format!("thread pool: {e}")))?;

    let mut records = Vec::new();
    for &gamma_db in &cfg.gamma_db {
        let gamma = 10f64.powf(gamma_db / 10.0);
        log::info!("gamma = {gamma_db} dB: {} blocks", cfg.blocks);
        let blocks: Vec<Result<BlockTally>> =
            pool.install(|| (0..cfg.blocks).into_par_iter().map(|b| simulate_block(cfg, gamma, b)).collect());

        let mut wc = vec![Tally::new(cfg.n_r); cfg.betas.len()];
        let mut nominal = Tally::new(cfg.n_r);
        let mut nominal_distorted = Tally::new(cfg.n_r);
        for block in blocks {
            let block = block?;
            for (acc, t) in wc.iter_mut().zip(block.wc) {
                acc.merge(t);
            }
            nominal.merge(block.nominal);
            nominal_distorted.merge(block.nominal_distorted);
        }

        for (bi, &beta) in cfg.betas.iter().enumerate() {
            for &scheme in &cfg.schemes {
                let tally = match scheme {
                    Scheme::WcSlp => &wc[bi],
                    Scheme::NominalSlp => &nominal,
                    Scheme::NominalUnderDistortion => &nominal_distorted,
                };
                debug_assert!(scheme.depends_on_beta() || tally.evaluated + tally.failures > 0);
                records.push(finish(cfg, gamma_db, beta, scheme, tally)?);
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            n_t: 2,
            n_r: 2,
            constellation: PskConstellation::qpsk(),
            gamma_db: vec![4.0, 10.0],
            betas: vec![1.0, 100.0],
            blocks: 3,
            symbols_per_block: 5,
            noise_sigma: 1.0,
            distortion: DistortionSpec::new(0.02, 0.2, 0.99).unwrap(),
            seed: 11,
            schemes: Scheme::ALL.to_vec(),
            solver: SolverConfig::default(),
            mi_bins: 16,
            ee_mode: EeMode::Literal,
            parallel: 1,
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("wcslp".parse::<Scheme>().is_err());
    }

    #[test]
    fn record_layout_and_ranges() {
        let cfg = small();
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.len(), 2 * 2 * 3);
        assert_eq!(out[0].scheme, Scheme::WcSlp);
        assert_eq!(out[1].scheme, Scheme::NominalSlp);
        assert_eq!(out[3].beta, 100.0);
        assert_eq!(out[6].gamma_db, 10.0);
        for r in &out {
            assert!((0.0..=1.0).contains(&r.ber));
            assert!((0.0..=2.0).contains(&r.mi_bits_per_user));
            assert!(r.mean_power > 0.0);
            assert_eq!(r.solver_failures, 0);
        }
        // Nominal rows do not depend on β.
        assert_eq!(out[1].mean_power, out[4].mean_power);
        assert_eq!(out[2].ber, out[5].ber);
    }

    #[test]
    fn sweep_is_deterministic_and_thread_count_invariant() {
        let cfg = small();
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&SweepConfig { parallel: 3, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        let c = run_sweep(&SweepConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_nominal_is_error_free() {
        // Design scale σ√γ dwarfs the noise σ at 80 dB.
        let cfg = SweepConfig {
            gamma_db: vec![80.0],
            schemes: vec![Scheme::NominalSlp],
            betas: vec![1.0],
            ..small()
        };
        for r in run_sweep(&cfg).unwrap() {
            assert_eq!(r.ber, 0.0);
            assert_eq!(r.ci_violation_rate, 0.0);
        }
    }

    #[test]
    fn complement_mode_uses_success_rate() {
        let cfg = SweepConfig { schemes: vec![Scheme::NominalSlp], betas: vec![1.0], ..small() };
        let lit = run_sweep(&cfg).unwrap();
        let comp = run_sweep(&SweepConfig { ee_mode: EeMode::Complement, ..cfg }).unwrap();
        for (l, c) in lit.iter().zip(&comp) {
            let expect = (1.0 - l.ber) * l.mi_bits_per_user / l.mean_power;
            assert!((c.energy_efficiency - expect).abs() <= 1e-15 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(run_sweep(&SweepConfig { n_r: 3, ..small() }).is_err());
        assert!(run_sweep(&SweepConfig { betas: vec![], ..small() }).is_err());
        assert!(run_sweep(&SweepConfig { betas: vec![0.0], ..small() }).is_err());
        assert!(run_sweep(&SweepConfig { parallel: 0, ..small() }).is_err());
        assert!(DistortionSpec::new(0.02, 0.5, 1.0).is_err());
    }
}
