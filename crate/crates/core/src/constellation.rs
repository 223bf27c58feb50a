//! M-PSK constellations and their distance-preserving constructive
//! interference (CI) regions.
//!
//! The CI region of symbol `m` at SNR target `γ` and noise level `σ` is the
//! cone with apex `σ√γ·s_m` whose edges run parallel to the two ML decision
//! boundaries of `s_m`. Its inequality form is `A_m (y − σ√γ·s_m) ≥ 0`,
//! where the rows of `A_m` are the unit inward normals of those boundaries.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Result, SlpError};
use crate::realify::Complex64;

/// Relative slack used when deciding that two squared distances tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PskConstellation {
    order: usize,
    offset: f64,
    points: Vec<Complex64>,
}

impl PskConstellation {
    /// `order` must be a power of two and at least 4. For BPSK the two
    /// boundary normals are antiparallel and `A_m` is singular.
    pub fn new(order: usize, offset: f64) -> Result<Self> {
        if order < 4 {
            return Err(SlpError::UnsupportedConstellation(format!(
                "{order}-PSK: CI normal matrix is singular for M < 4"
            )));
        }
        if !order.is_power_of_two() {
            return Err(SlpError::UnsupportedConstellation(format!(
                "{order}-PSK: Gray labeling needs a power-of-two order"
            )));
        }
        if !offset.is_finite() {
            return Err(SlpError::InvalidParameter("phase offset must be finite".into()));
        }
        let points = (0..order)
            .map(|m| Complex64::from_polar(1.0, offset + 2.0 * PI * m as f64 / order as f64))
            .collect();
        Ok(Self { order, offset, points })
    }

    /// QPSK with points on the diagonals.
    pub fn qpsk() -> Self {
        Self::new(4, PI / 4.0).expect("QPSK is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, m: usize) -> Complex64 {
        self.points[m]
    }

    pub fn point_real(&self, m: usize) -> Vector2<f64> {
        Vector2::new(self.points[m].re, self.points[m].im)
    }

    pub fn angle(&self, m: usize) -> f64 {
        self.offset + 2.0 * PI * m as f64 / self.order as f64
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    /// Reflected binary Gray label of phase index `m`.
    pub fn gray_label(&self, m: usize) -> usize {
        m ^ (m >> 1)
    }

    fn check_index(&self, m: usize) -> Result<()> {
        if m >= self.order {
            return Err(SlpError::InvalidSymbol { index: m, order: self.order });
        }
        Ok(())
    }

    /// Rows are the unit inward normals of the two ML sector boundaries of
    /// symbol `m`.
    pub fn ci_normals(&self, m: usize) -> Result<Matrix2<f64>> {
        self.check_index(m)?;
        let theta = self.angle(m);
        let half = PI / self.order as f64;
        let a1 = theta - half + PI / 2.0;
        let a2 = theta + half - PI / 2.0;
        Ok(Matrix2::new(a1.cos(), a1.sin(), a2.cos(), a2.sin()))
    }

    /// Nearest constellation point. Ties (including `y = 0`) go to the
    /// lowest index.
    pub fn ml_detect(&self, y: &Vector2<f64>) -> usize {
        let dist: Vec<f64> = self
            .points
            .iter()
            .map(|p| (y[0] - p.re).powi(2) + (y[1] - p.im).powi(2))
            .collect();
        let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = TIE_TOLERANCE * (1.0 + best);
        dist.iter().position(|&d| d <= best + slack).unwrap_or(0)
    }

    /// `A_m (y − σ√γ·s_m)`: non-negative in both components iff `y` lies in
    /// the CI region of `s_m`.
    pub fn ci_margin(&self, y: &Vector2<f64>, m: usize, gamma: f64, sigma: f64) -> Result<Vector2<f64>> {
        let a = self.ci_normals(m)?;
        Ok(a * (y - self.point_real(m) * (sigma * gamma.sqrt())))
    }
}

/// Stacked CI description of one symbol period for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct CiGeometry {
    constellation: PskConstellation,
    symbols: Vec<usize>,
    gammas: Vec<f64>,
    sigmas: Vec<f64>,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    d: DVector<f64>,
    outer_mask: DVector<f64>,
    s: DVector<f64>,
}

impl CiGeometry {
    pub fn constellation(&self) -> &PskConstellation {
        &self.constellation
    }

    pub fn users(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Block-diagonal matrix of CI normals.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// Diagonal of `D = diag(σ_i√γ_i) ⊗ I_2`.
    pub fn d_diag(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn d(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }

    /// Diagonal of the binary outer-point mask `W`.
    pub fn w_diag(&self) -> &DVector<f64> {
        &self.outer_mask
    }

    pub fn w(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.outer_mask)
    }

    /// Stacked real symbol vector `s`.
    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    /// `D s`.
    pub fn scaled_symbols(&self) -> DVector<f64> {
        self.d.component_mul(&self.s)
    }

    /// Per-user margins `A_i(y_i − σ_i√γ_i s_i)` for a stacked received vector.
    pub fn margins(&self, received: &DVector<f64>) -> DVector<f64> {
        &self.a * (received - self.scaled_symbols())
    }
}

pub fn build_ci_geometry(
    symbols: &[usize],
    gammas: &[f64],
    sigmas: &[f64],
    constellation: &PskConstellation,
) -> Result<CiGeometry> {
    let n_r = symbols.len();
    if n_r == 0 {
        return Err(SlpError::Empty("no users".into()));
    }
    if gammas.len() != n_r || sigmas.len() != n_r {
        return Err(SlpError::Dimension(format!(
            "{n_r} symbols but {} SNR targets and {} noise levels",
            gammas.len(),
            sigmas.len()
        )));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(SlpError::InvalidParameter(format!("SNR target must be positive, got {g}")));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(SlpError::InvalidParameter(format!("noise level must be positive, got {s}")));
    }

    let mut a = DMatrix::zeros(2 * n_r, 2 * n_r);
    let mut a_inv = DMatrix::zeros(2 * n_r, 2 * n_r);
    let mut d = DVector::zeros(2 * n_r);
    let mut s = DVector::zeros(2 * n_r);
    for (i, &m) in symbols.iter().enumerate() {
        let block = constellation.ci_normals(m)?;
        let inv = block
            .try_inverse()
            .ok_or_else(|| SlpError::Singular(format!("CI normals of symbol {m}")))?;
        a.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(&block);
        a_inv.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(&inv);
        let scale = sigmas[i] * gammas[i].sqrt();
        d[2 * i] = scale;
        d[2 * i + 1] = scale;
        let p = constellation.point(m);
        s[2 * i] = p.re;
        s[2 * i + 1] = p.im;
    }

    Ok(CiGeometry {
        constellation: constellation.clone(),
        symbols: symbols.to_vec(),
        gammas: gammas.to_vec(),
        sigmas: sigmas.to_vec(),
        a,
        a_inv,
        d,
        // Every PSK point is an outer point.
        outer_mask: DVector::from_element(2 * n_r, 1.0),
        s,
    })
}
