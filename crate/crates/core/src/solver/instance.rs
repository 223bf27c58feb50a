use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::apgd::{ApgdConstants, MomentumRule};
use crate::constellation::CiGeometry;
use crate::error::{Result, SlpError};
use crate::realify::{RealChannel, RealDistortionMatrix};

/// Smallest accepted `σ_min / σ_max` for `G`.
const G_RCOND: f64 = 1e-12;

/// Everything the worst-case problem needs for one symbol period:
/// channel, distortion, CI geometry, penalty `β` and distortion radius `ε`.
///
/// Construction caches the eigendecomposition of `HᵀH` (and through it
/// `P = HᵀH + I/β`), an LU factorization of `G`, the regularized inverse
/// `P⁻¹Hᵀ` and the APGD constants. The instance is immutable afterwards.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    channel: RealChannel,
    distortion: RealDistortionMatrix,
    geometry: CiGeometry,
    beta: f64,
    epsilon: f64,
    /// Eigenvalues of `HᵀH`, ascending, clamped at zero.
    gram_eigenvalues: DVector<f64>,
    /// Matching orthonormal eigenvectors (columns).
    gram_eigenvectors: DMatrix<f64>,
    g_lu: LU<f64, Dyn, Dyn>,
    p_inv_ht: DMatrix<f64>,
    apgd: ApgdConstants,
}

impl ProblemInstance {
    pub fn new(
        channel: RealChannel,
        distortion: RealDistortionMatrix,
        geometry: CiGeometry,
        beta: f64,
        epsilon: f64,
    ) -> Result<Self> {
        Self::with_momentum(channel, distortion, geometry, beta, epsilon, MomentumRule::Standard)
    }

    pub fn with_momentum(
        channel: RealChannel,
        distortion: RealDistortionMatrix,
        geometry: CiGeometry,
        beta: f64,
        epsilon: f64,
        momentum: MomentumRule,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SlpError::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(SlpError::InvalidParameter(format!(
                "epsilon must be non-negative, got {epsilon}"
            )));
        }
        if distortion.antennas() != channel.antennas() {
            return Err(SlpError::Dimension(format!(
                "G acts on {} antennas but the channel has {}",
                distortion.antennas(),
                channel.antennas()
            )));
        }
        if geometry.users() != channel.users() {
            return Err(SlpError::Dimension(format!(
                "geometry has {} users but the channel has {}",
                geometry.users(),
                channel.users()
            )));
        }

        let g = distortion.matrix();
        let sv = g.clone().singular_values();
        if sv.min() <= G_RCOND * sv.max() {
            return Err(SlpError::Singular("distortion matrix G is not invertible".into()));
        }
        let g_lu = g.clone().lu();

        let h = channel.matrix();
        let gram = h.transpose() * h;
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let gram_eigenvalues =
            DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
        let gram_eigenvectors = DMatrix::from_columns(
            &order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>(),
        );

        let inv_diag = gram_eigenvalues.map(|l| 1.0 / (l + 1.0 / beta));
        let p_inv = &gram_eigenvectors
            * DMatrix::from_diagonal(&inv_diag)
            * gram_eigenvectors.transpose();
        let p_inv_ht = p_inv * h.transpose();

        let apgd = ApgdConstants::new(geometry.a(), geometry.a_inv(), momentum)?;

        Ok(Self {
            channel,
            distortion,
            geometry,
            beta,
            epsilon,
            gram_eigenvalues,
            gram_eigenvectors,
            g_lu,
            p_inv_ht,
            apgd,
        })
    }

    /// Same problem with a different distortion radius.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(SlpError::InvalidParameter(format!(
                "epsilon must be non-negative, got {epsilon}"
            )));
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    pub fn channel(&self) -> &RealChannel {
        &self.channel
    }

    pub fn h(&self) -> &DMatrix<f64> {
        self.channel.matrix()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        self.distortion.matrix()
    }

    pub fn distortion(&self) -> &RealDistortionMatrix {
        &self.distortion
    }

    pub fn geometry(&self) -> &CiGeometry {
        &self.geometry
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn apgd(&self) -> &ApgdConstants {
        &self.apgd
    }

    /// Real dimension of the precoder output, `2 n_t`.
    pub fn tx_dim(&self) -> usize {
        self.channel.matrix().ncols()
    }

    /// Real dimension of the stacked received signal, `2 n_r`.
    pub fn rx_dim(&self) -> usize {
        self.channel.matrix().nrows()
    }

    pub(crate) fn gram_eigenvalues(&self) -> &DVector<f64> {
        &self.gram_eigenvalues
    }

    pub(crate) fn gram_eigenvectors(&self) -> &DMatrix<f64> {
        &self.gram_eigenvectors
    }

    /// Eigenvalues of `P`, ascending.
    pub fn p_eigenvalues(&self) -> DVector<f64> {
        self.gram_eigenvalues.add_scalar(1.0 / self.beta)
    }

    /// `λ̄_max = ‖H‖² + 1/β`, the largest eigenvalue of `P`.
    pub fn lambda_max(&self) -> f64 {
        self.gram_eigenvalues[self.gram_eigenvalues.len() - 1] + 1.0 / self.beta
    }

    pub fn p(&self) -> DMatrix<f64> {
        let h = self.h();
        h.transpose() * h + DMatrix::identity(self.tx_dim(), self.tx_dim()) / self.beta
    }

    /// `P v` through the cached eigendecomposition.
    pub fn p_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.gram_eigenvectors.tr_mul(v);
        let scaled = coeffs.component_mul(&self.p_eigenvalues());
        &self.gram_eigenvectors * scaled
    }

    /// Regularized channel inverse `P⁻¹Hᵀ`.
    pub fn p_inv_ht(&self) -> &DMatrix<f64> {
        &self.p_inv_ht
    }

    /// `G⁻¹ v`.
    pub fn g_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.g_lu.solve(v).expect("G was checked to be invertible")
    }

    /// `Φ(t) = Ds + A⁻¹Wt`.
    pub fn phi(&self, t: &DVector<f64>) -> DVector<f64> {
        phi(t, &self.geometry)
    }

    /// `‖Gu+w‖² + β‖H(Gu+w) − Φ(t)‖²`.
    pub fn relaxed_objective(&self, u: &DVector<f64>, t: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let x = self.g() * u + w;
        let residual = self.h() * &x - self.phi(t);
        x.norm_squared() + self.beta * residual.norm_squared()
    }

    /// `q = PGu − HᵀΦ(t)`, the linear term of the inner maximization.
    pub fn secular_rhs(&self, u: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
        self.p_mul(&(self.g() * u)) - self.h().tr_mul(&self.phi(t))
    }

    /// Closed-form u-step `u = G⁻¹P⁻¹HᵀΦ(t) − G⁻¹w`.
    pub fn update_u(&self, t: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let target = &self.p_inv_ht * self.phi(t);
        self.g_solve(&(target - w))
    }
}

/// `Φ(t) = Ds + A⁻¹Wt`.
pub fn phi(t: &DVector<f64>, geometry: &CiGeometry) -> DVector<f64> {
    geometry.scaled_symbols() + geometry.a_inv() * t.component_mul(geometry.w_diag())
}

/// Free-function form of [`ProblemInstance::relaxed_objective`].
pub fn relaxed_objective(
    u: &DVector<f64>,
    t: &DVector<f64>,
    w: &DVector<f64>,
    instance: &ProblemInstance,
) -> f64 {
    instance.relaxed_objective(u, t, w)
}

/// Free-function form of [`ProblemInstance::update_u`].
pub fn update_u(t: &DVector<f64>, w: &DVector<f64>, instance: &ProblemInstance) -> DVector<f64> {
    instance.update_u(t, w)
}
