//! Inner maximization over the distortion sphere.
//!
//! For fixed `(u, t)` the worst-case distortion maximizes
//! `wᵀPw + 2qᵀw` over `‖w‖ = ε`, with `q = PGu − HᵀΦ(t)`. Stationarity gives
//! `w = −(P − μI)⁻¹q`, and the multiplier `μ` is a root of the secular
//! function `f(μ) = qᵀ(P − μI)⁻²q − ε²`. The maximizer corresponds to the
//! unique root above `λ̄_max`, where `f` falls monotonically from `+∞` to
//! `−ε²`.
//!
//! All evaluations go through the eigendecomposition of `HᵀH` cached on the
//! instance and are written in terms of the shift `s = μ − λ̄_max`, which
//! keeps full relative precision when the root sits close to the pole.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ProblemInstance, SolverConfig};
use crate::error::{Result, SlpError};

/// Eigenvalues of `P` closer than this (relative to `λ̄_max`) are one pole.
const POLE_MERGE: f64 = 1e-9;
/// Projections of `q` below this fraction of `‖q‖` are treated as zero.
const NEGLIGIBLE_WEIGHT: f64 = 1e-12;

/// How the multiplier was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootKind {
    /// Regular root of `f` strictly above `λ̄_max`.
    Interior,
    /// `q = 0`: no root exists and `w` is a scaled top eigenvector of `P`.
    Degenerate,
    /// `q ⟂` top eigenspace of `P` and `f(λ̄_max⁺) ≤ 0`: `μ = λ̄_max` with an
    /// added top-eigenvector component.
    HardCase,
    /// Closed-form small-ε approximation, not a root of `f`.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSolution {
    pub mu: f64,
    /// `μ − λ̄_max`, carried separately for precision.
    pub shift: f64,
    pub kind: RootKind,
    pub steps: usize,
    /// `f(μ)` at the returned point (`−ε²` for the degenerate case).
    pub residual: f64,
}

/// Secular function for a fixed `(u, t)`, expressed in the eigenbasis of `P`.
#[derive(Debug, Clone)]
pub struct SecularFunction {
    q: DVector<f64>,
    /// `Vᵀq`, same (ascending) order as the eigenvalues.
    coeffs: DVector<f64>,
    /// `λ_i(P) − λ̄_max ≤ 0`.
    gaps: DVector<f64>,
    lambda_max: f64,
    epsilon: f64,
}

impl SecularFunction {
    pub fn new(u: &DVector<f64>, t: &DVector<f64>, instance: &ProblemInstance) -> Self {
        Self::from_rhs(instance.secular_rhs(u, t), instance)
    }

    /// Builds `f` directly from `q`.
    pub fn from_rhs(q: DVector<f64>, instance: &ProblemInstance) -> Self {
        let coeffs = instance.gram_eigenvectors().tr_mul(&q);
        let eig = instance.gram_eigenvalues();
        let top = eig[eig.len() - 1];
        let gaps = eig.map(|l| l - top);
        Self { q, coeffs, gaps, lambda_max: instance.lambda_max(), epsilon: instance.epsilon() }
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn q_norm(&self) -> f64 {
        self.q.norm()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Eigenvalues of `P`, ascending.
    pub fn poles(&self) -> DVector<f64> {
        self.gaps.add_scalar(self.lambda_max)
    }

    /// `f(λ̄_max + s)`.
    pub fn value_at_shift(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.gaps.iter())
            .map(|(c, g)| {
                let d = g - s;
                c * c / (d * d)
            })
            .sum::<f64>()
            - self.epsilon * self.epsilon
    }

    fn check_pole(&self, mu: f64) -> Result<f64> {
        let s = mu - self.lambda_max;
        for g in self.gaps.iter() {
            let pole = g + self.lambda_max;
            if (g - s).abs() <= 16.0 * f64::EPSILON * pole.abs().max(1.0) {
                return Err(SlpError::Pole { mu, pole });
            }
        }
        Ok(s)
    }

    /// `f(μ)`; errors when `μ` is numerically an eigenvalue of `P`.
    pub fn value(&self, mu: f64) -> Result<f64> {
        let s = self.check_pole(mu)?;
        Ok(self.value_at_shift(s))
    }

    /// `w = −(P − μI)⁻¹q` at `μ = λ̄_max + s`.
    fn resolvent_at_shift(&self, s: f64, instance: &ProblemInstance) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.coeffs.len(),
            self.coeffs.iter().zip(self.gaps.iter()).map(|(c, g)| -c / (g - s)),
        );
        instance.gram_eigenvectors() * scaled
    }

    /// Distinct poles of `f` (merged eigenvalue clusters carrying a
    /// non-negligible share of `q`) with their weights `Σ (vᵢᵀq)²`.
    pub fn weighted_poles(&self) -> Vec<(f64, f64)> {
        let floor = (NEGLIGIBLE_WEIGHT * self.q_norm()).powi(2);
        let merge = POLE_MERGE * self.lambda_max.max(1.0);
        let mut clusters: Vec<(f64, f64)> = Vec::new();
        for (c, g) in self.coeffs.iter().zip(self.gaps.iter()) {
            let pole = g + self.lambda_max;
            match clusters.last_mut() {
                Some((p, w)) if pole - *p <= merge => *w += c * c,
                _ => clusters.push((pole, c * c)),
            }
        }
        clusters.retain(|&(_, w)| w > floor);
        clusters
    }
}

/// `f(μ)` for the given `(u, t)`.
pub fn secular_value(
    mu: f64,
    u: &DVector<f64>,
    t: &DVector<f64>,
    instance: &ProblemInstance,
) -> Result<f64> {
    SecularFunction::new(u, t, instance).value(mu)
}

/// Bracket `(λ̄_max, λ̄_max + ‖q‖/ε]` containing the maximizing multiplier.
pub fn mu_bracket(u: &DVector<f64>, t: &DVector<f64>, instance: &ProblemInstance) -> Result<(f64, f64)> {
    let eps = instance.epsilon();
    if eps == 0.0 {
        return Err(SlpError::Bracket("epsilon = 0 fixes w = 0".into()));
    }
    let sec = SecularFunction::new(u, t, instance);
    let q_norm = sec.q_norm();
    if q_norm == 0.0 {
        return Err(SlpError::Bracket("q = 0: the secular function has no root".into()));
    }
    Ok((sec.lambda_max, sec.lambda_max + q_norm / eps))
}

/// Largest root of `f` by bisection on the shift `s = μ − λ̄_max`.
pub fn solve_mu(
    u: &DVector<f64>,
    t: &DVector<f64>,
    instance: &ProblemInstance,
    config: &SolverConfig,
) -> Result<MuSolution> {
    let sec = SecularFunction::new(u, t, instance);
    solve_secular(&sec, instance.epsilon(), config)
}

pub(crate) fn solve_secular(
    sec: &SecularFunction,
    eps: f64,
    config: &SolverConfig,
) -> Result<MuSolution> {
    if eps == 0.0 {
        return Err(SlpError::Bracket("epsilon = 0 fixes w = 0".into()));
    }
    let lambda_max = sec.lambda_max;
    if sec.q_norm() == 0.0 {
        return Ok(MuSolution {
            mu: lambda_max,
            shift: 0.0,
            kind: RootKind::Degenerate,
            steps: 0,
            residual: -eps * eps,
        });
    }

    let tol = config.secular_tolerance * eps.powi(2).max(1.0);
    let mut hi = sec.q_norm() / eps;
    let mut lo = config.bracket_inset * lambda_max;
    let mut steps = 0;

    // The bound guarantees f(hi) <= 0; guard against rounding anyway.
    let mut f_hi = sec.value_at_shift(hi);
    while f_hi > tol && steps < config.max_bisection_steps {
        lo = hi;
        hi *= 2.0;
        f_hi = sec.value_at_shift(hi);
        steps += 1;
    }
    if f_hi.abs() <= tol {
        return Ok(interior(lambda_max, hi, steps, f_hi));
    }

    let mut f_lo = sec.value_at_shift(lo);
    if f_lo <= 0.0 {
        // Root is closer to the pole than the inset: scan toward it.
        let mut s = lo;
        let mut found = false;
        while s > f64::MIN_POSITIVE * 1e10 {
            s *= 1e-2;
            steps += 1;
            let v = sec.value_at_shift(s);
            if v > 0.0 {
                hi = lo;
                lo = s;
                f_lo = v;
                found = true;
                break;
            }
            lo = s;
        }
        if !found {
            return Ok(MuSolution {
                mu: lambda_max,
                shift: 0.0,
                kind: RootKind::HardCase,
                steps,
                residual: f_lo,
            });
        }
    }
    debug_assert!(f_lo > 0.0);

    let mut best = (hi, f_hi);
    while steps < config.max_bisection_steps {
        steps += 1;
        let mid = if hi > 8.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let v = sec.value_at_shift(mid);
        if v.abs() < best.1.abs() {
            best = (mid, v);
        }
        if v.abs() <= tol {
            return Ok(interior(lambda_max, mid, steps, v));
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            // Bracket collapsed to adjacent floats: the root is resolved.
            return Ok(interior(lambda_max, best.0, steps, best.1));
        }
    }
    Err(SlpError::NonConvergence {
        steps,
        lower: lambda_max + lo,
        upper: lambda_max + hi,
        value: best.1,
    })
}

fn interior(lambda_max: f64, shift: f64, steps: usize, residual: f64) -> MuSolution {
    MuSolution { mu: lambda_max + shift, shift, kind: RootKind::Interior, steps, residual }
}

/// Closed-form small-ε estimate `μ̂ = 2 (‖Pq‖²/ε²)^{1/3}`.
///
/// This is only a heuristic: for small ε the exact root behaves like
/// `‖q‖/ε`, so the estimate can be far off (and even below `λ̄_max`).
pub fn approx_mu(u: &DVector<f64>, t: &DVector<f64>, instance: &ProblemInstance) -> Result<f64> {
    let eps = instance.epsilon();
    if eps == 0.0 {
        return Err(SlpError::Bracket("epsilon = 0 fixes w = 0".into()));
    }
    let q = instance.secular_rhs(u, t);
    let pq = instance.p_mul(&q);
    Ok(2.0 * (pq.norm_squared() / (eps * eps)).cbrt())
}

/// `w = −(P − μI)⁻¹q` at the given multiplier.
pub fn worst_case_w(
    u: &DVector<f64>,
    t: &DVector<f64>,
    mu: f64,
    instance: &ProblemInstance,
) -> Result<DVector<f64>> {
    if instance.epsilon() == 0.0 {
        return Ok(DVector::zeros(instance.tx_dim()));
    }
    let sec = SecularFunction::new(u, t, instance);
    let s = sec.check_pole(mu)?;
    Ok(sec.resolvent_at_shift(s, instance))
}

/// Worst-case distortion for a solved multiplier, including the degenerate
/// and hard cases.
pub(crate) fn worst_case_from_solution(
    sec: &SecularFunction,
    solution: &MuSolution,
    u: &DVector<f64>,
    t: &DVector<f64>,
    instance: &ProblemInstance,
) -> Result<DVector<f64>> {
    let eps = instance.epsilon();
    if eps == 0.0 {
        return Ok(DVector::zeros(instance.tx_dim()));
    }
    match solution.kind {
        RootKind::Interior => Ok(sec.resolvent_at_shift(solution.shift, instance)),
        RootKind::Approximate => {
            let s = sec.check_pole(solution.mu)?;
            Ok(sec.resolvent_at_shift(s, instance))
        }
        RootKind::Degenerate | RootKind::HardCase => {
            let v = instance.gram_eigenvectors();
            let n = v.ncols();
            let top = v.column(n - 1).into_owned();
            let merge = POLE_MERGE * sec.lambda_max.max(1.0);
            let mut base = DVector::zeros(n);
            if solution.kind == RootKind::HardCase {
                for i in 0..n {
                    if sec.gaps[i].abs() > merge {
                        base += v.column(i) * (-sec.coeffs[i] / sec.gaps[i]);
                    }
                }
            }
            let along = (eps * eps - base.norm_squared()).max(0.0).sqrt();
            let plus = &base + &top * along;
            let minus = &base - &top * along;
            if instance.relaxed_objective(u, t, &minus) > instance.relaxed_objective(u, t, &plus) {
                Ok(minus)
            } else {
                Ok(plus)
            }
        }
    }
}

/// Number of real roots of `f`, counted with multiplicity.
///
/// Between consecutive poles `f` is convex and blows up at both ends, so it
/// has two roots or none depending on the sign of its minimum, which is
/// located by bisection on `f'`. Each tail contributes exactly one root.
/// Returns 0 when `q = 0`.
pub fn count_secular_roots(u: &DVector<f64>, t: &DVector<f64>, instance: &ProblemInstance) -> usize {
    let sec = SecularFunction::new(u, t, instance);
    count_roots(&sec, instance.epsilon())
}

pub(crate) fn count_roots(sec: &SecularFunction, eps: f64) -> usize {
    let poles = sec.weighted_poles();
    if poles.is_empty() {
        return 0;
    }
    let eps2 = eps * eps;
    let f = |mu: f64| poles.iter().map(|&(p, w)| w / (p - mu).powi(2)).sum::<f64>() - eps2;
    let df = |mu: f64| poles.iter().map(|&(p, w)| 2.0 * w / (p - mu).powi(3)).sum::<f64>();

    let mut count = if eps2 > 0.0 { 2 } else { 0 };
    for pair in poles.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        let (mut lo, mut hi) = (a, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if df(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mid = 0.5 * (lo + hi);
        if mid > a && mid < b && f(mid) <= 0.0 {
            count += 2;
        }
    }
    count
}
