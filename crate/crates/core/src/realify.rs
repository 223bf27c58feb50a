//! Real-valued embeddings of complex vectors and matrices.
//!
//! Every real vector in this crate uses the interleaved layout
//! `[Re v_1, Im v_1, Re v_2, Im v_2, ...]`. A complex scalar `a + ib`
//! acting on such a vector becomes the 2x2 block `[[a, -b], [b, a]]`, so
//! a complex matrix embeds as a grid of these blocks and products commute
//! with the embedding.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Result, SlpError};

pub type Complex64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// The block transform `T(v) = [[Re v, -Im v], [Im v, Re v]]` of a complex
/// row vector, with each block `1 x n`.
///
/// This is the literal block layout, which acts on `[Re x; Im x]` stacked
/// vectors. The rest of the crate uses [`embed_row`] instead, which is the
/// same matrix with columns permuted to the interleaved layout.
pub fn t_transform(v: &[Complex64]) -> DMatrix<f64> {
    let n = v.len();
    let mut out = DMatrix::zeros(2, 2 * n);
    for (k, z) in v.iter().enumerate() {
        out[(0, k)] = z.re;
        out[(0, n + k)] = -z.im;
        out[(1, k)] = z.im;
        out[(1, n + k)] = z.re;
    }
    out
}

/// Interleaved real embedding of a complex vector.
pub fn embed_vector(v: &[Complex64]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|z| [z.re, z.im]))
}

/// Inverse of [`embed_vector`]. Panics if the length is odd.
pub fn unembed_vector(v: &DVector<f64>) -> ComplexVector {
    assert!(v.len().is_multiple_of(2), "interleaved vector must have even length");
    ComplexVector::from_iterator(
        v.len() / 2,
        (0..v.len() / 2).map(|k| Complex64::new(v[2 * k], v[2 * k + 1])),
    )
}

/// `2 x 2n` real matrix mapping `embed_vector(x)` to `(Re, Im)` of `v^T x`.
pub fn embed_row(v: &[Complex64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2, 2 * v.len());
    for (k, z) in v.iter().enumerate() {
        out[(0, 2 * k)] = z.re;
        out[(0, 2 * k + 1)] = -z.im;
        out[(1, 2 * k)] = z.im;
        out[(1, 2 * k + 1)] = z.re;
    }
    out
}

/// Real embedding of a complex matrix: row `j` of `m` becomes rows
/// `2j, 2j+1` of the result via [`embed_row`].
pub fn embed_matrix(m: &ComplexMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * m.nrows(), 2 * m.ncols());
    for j in 0..m.nrows() {
        let row: Vec<Complex64> = m.row(j).iter().copied().collect();
        out.view_mut((2 * j, 0), (2, 2 * m.ncols()))
            .copy_from(&embed_row(&row));
    }
    out
}

/// Real-embedded downlink channel. Rows `2i, 2i+1` form the user block `H_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannel {
    matrix: DMatrix<f64>,
}

impl RealChannel {
    pub fn from_real(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || !matrix.nrows().is_multiple_of(2) || !matrix.ncols().is_multiple_of(2) {
            return Err(SlpError::Dimension(format!(
                "real channel must have even, non-zero dimensions, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(SlpError::InvalidParameter("channel has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn users(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn antennas(&self) -> usize {
        self.matrix.ncols() / 2
    }

    /// The `2 x 2n_t` block of user `i`.
    pub fn user_block(&self, i: usize) -> DMatrix<f64> {
        self.matrix.rows(2 * i, 2).into_owned()
    }
}

/// Builds `H` from the per-user complex channel vectors `h_1..h_{n_r}`.
pub fn build_real_channel(users: &[ComplexVector]) -> Result<RealChannel> {
    let n_t = users
        .first()
        .map(|h| h.len())
        .ok_or_else(|| SlpError::Empty("no user channels".into()))?;
    if n_t == 0 {
        return Err(SlpError::Dimension("channel vectors are empty".into()));
    }
    let mut matrix = DMatrix::zeros(2 * users.len(), 2 * n_t);
    for (i, h) in users.iter().enumerate() {
        if h.len() != n_t {
            return Err(SlpError::Dimension(format!(
                "user {i} has {} antennas, expected {n_t}",
                h.len()
            )));
        }
        let row: Vec<Complex64> = h.iter().copied().collect();
        matrix.view_mut((2 * i, 0), (2, 2 * n_t)).copy_from(&embed_row(&row));
    }
    RealChannel::from_real(matrix)
}

/// Real-embedded linear distortion `G` acting on the precoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDistortionMatrix {
    matrix: DMatrix<f64>,
}

impl RealDistortionMatrix {
    pub fn identity(n_t: usize) -> Self {
        Self { matrix: DMatrix::identity(2 * n_t, 2 * n_t) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn antennas(&self) -> usize {
        self.matrix.nrows() / 2
    }
}

/// Builds `G` from the complex distortion matrix `Ḡ`.
pub fn build_real_distortion(g: &ComplexMatrix) -> Result<RealDistortionMatrix> {
    if !g.is_square() || g.nrows() == 0 {
        return Err(SlpError::Dimension(format!(
            "distortion matrix must be square, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    Ok(RealDistortionMatrix { matrix: embed_matrix(g) })
}
