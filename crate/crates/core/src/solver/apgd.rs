//! One accelerated projected-gradient step on the t-subproblem
//! `min_{t ≥ 0} ‖r − A⁻¹t‖²` with `r = H(Gu + w) − Ds`.
//!
//! The gradient of that objective is Lipschitz with constant `2/σ²_min(A)`,
//! so a step of `σ²_min/2` gives the update
//! `t⁺ = max{Bz + σ²_min A⁻ᵀ r, 0}` with `B = I − σ²_min (AAᵀ)⁻¹`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ProblemInstance;
use crate::error::{Result, SlpError};
use nalgebra::DMatrix;

/// How the extrapolation weight of the t-step is derived from `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumRule {
    /// `φ = (√κ − 1)/(√κ + 1)` with `κ = (σ_max/σ_min)²`, the condition number
    /// of the t-subproblem Hessian.
    #[default]
    Standard,
    /// `φ = (1 − √κ)/(1 + √κ)` with `κ = σ_max/σ_min`. Non-positive; kept for
    /// comparison runs.
    Literal,
}

#[derive(Debug, Clone)]
pub struct ApgdConstants {
    sigma_min_sq: f64,
    sigma_max: f64,
    b: DMatrix<f64>,
    a_inv_t: DMatrix<f64>,
    momentum: f64,
    rule: MomentumRule,
}

impl ApgdConstants {
    pub fn new(a: &DMatrix<f64>, a_inv: &DMatrix<f64>, rule: MomentumRule) -> Result<Self> {
        let sv = a.clone().singular_values();
        let (sigma_min, sigma_max) = (sv.min(), sv.max());
        if !(sigma_min > 0.0) {
            return Err(SlpError::Singular("CI normal matrix A".into()));
        }
        let ratio = sigma_max / sigma_min;
        let momentum = match rule {
            MomentumRule::Standard => (ratio - 1.0) / (ratio + 1.0),
            MomentumRule::Literal => (1.0 - ratio.sqrt()) / (1.0 + ratio.sqrt()),
        };
        let sigma_min_sq = sigma_min * sigma_min;
        let n = a.nrows();
        let aat_inv = a_inv.transpose() * a_inv;
        let b = DMatrix::identity(n, n) - aat_inv * sigma_min_sq;
        Ok(Self { sigma_min_sq, sigma_max, b, a_inv_t: a_inv.transpose(), momentum, rule })
    }

    pub fn sigma_min_sq(&self) -> f64 {
        self.sigma_min_sq
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Extrapolation weight `φ`.
    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn rule(&self) -> MomentumRule {
        self.rule
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Returns `(t⁺, z⁺)` given the previous slack `t`, momentum iterate `z`,
/// and the frozen `u`, `w`.
pub fn apgd_t_step(
    t: &DVector<f64>,
    z: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    instance: &ProblemInstance,
) -> (DVector<f64>, DVector<f64>) {
    let c = instance.apgd();
    let residual = instance.h() * (instance.g() * u + w) - instance.geometry().scaled_symbols();
    let mut t_new = &c.b * z + &c.a_inv_t * residual * c.sigma_min_sq;
    t_new.apply(|x| *x = x.max(0.0));
    let z_new = &t_new + (&t_new - t) * c.momentum;
    (t_new, z_new)
}
