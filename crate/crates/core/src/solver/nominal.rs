//! Nominal (distortion-free) CI-constrained power minimization
//! `min ‖x‖² s.t. Hx = Ds + A⁻¹Wt, t ≥ 0`, and its penalized relaxation.
//!
//! Both reduce to an NNLS in `t`. With `Φ(t) = Ds + A⁻¹Wt` and
//! `M = HHᵀ + ρI` (`ρ = 0` for the constrained problem, `ρ = 1/β` for the
//! relaxation), the optimal power over `x` is `Φ(t)ᵀM⁻¹Φ(t) = ‖C⁻¹Φ(t)‖²`
//! where `M = CCᵀ`.

use nalgebra::{DMatrix, DVector};

use super::nnls::nnls;
use super::{phi, ProblemInstance};
use crate::constellation::CiGeometry;
use crate::error::{Result, SlpError};
use crate::realify::RealChannel;

/// Smallest accepted `σ_min(H) / σ_max(H)` for the constrained problem.
const H_RCOND: f64 = 1e-10;

/// Solves the constrained baseline. Returns `(x, t)`.
pub fn nominal_slp(channel: &RealChannel, geometry: &CiGeometry) -> Result<(DVector<f64>, DVector<f64>)> {
    let h = channel.matrix();
    if geometry.users() != channel.users() {
        return Err(SlpError::Dimension(format!(
            "geometry has {} users but the channel has {}",
            geometry.users(),
            channel.users()
        )));
    }
    if h.nrows() > h.ncols() {
        return Err(SlpError::Singular(format!(
            "{} users exceed {} antennas",
            channel.users(),
            channel.antennas()
        )));
    }
    let sv = h.clone().singular_values();
    if sv.min() <= H_RCOND * sv.max() {
        return Err(SlpError::Singular("channel H is not full row rank".into()));
    }
    let gram = h * h.transpose();
    let t = reduced_nnls(&gram, geometry)?;
    let chol = gram.cholesky().ok_or_else(|| SlpError::Singular("HHᵀ".into()))?;
    let x = h.tr_mul(&chol.solve(&phi(&t, geometry)));
    Ok((x, t))
}

/// Optimal slack of the penalized problem with `w = 0`,
/// `min_{t ≥ 0} Φ(t)ᵀ(HHᵀ + I/β)⁻¹Φ(t)`.
///
/// This is also the fixed point of the t-step of the alternating solver
/// whenever `w` stops changing.
pub fn relaxed_slack(instance: &ProblemInstance) -> Result<DVector<f64>> {
    let h = instance.h();
    let n = h.nrows();
    let gram = h * h.transpose() + DMatrix::identity(n, n) / instance.beta();
    reduced_nnls(&gram, instance.geometry())
}

fn reduced_nnls(gram: &DMatrix<f64>, geometry: &CiGeometry) -> Result<DVector<f64>> {
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| SlpError::Singular("CI Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let a_inv_w = geometry.a_inv() * DMatrix::from_diagonal(geometry.w_diag());
    let e = l
        .solve_lower_triangular(&a_inv_w)
        .ok_or_else(|| SlpError::Singular("Cholesky factor".into()))?;
    let f = -l
        .solve_lower_triangular(&geometry.scaled_symbols())
        .ok_or_else(|| SlpError::Singular("Cholesky factor".into()))?;
    nnls(&e, &f)
}
