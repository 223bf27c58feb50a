use nalgebra::Vector2;

use crate::constellation::PskConstellation;
use crate::error::{Result, SlpError};

/// Fraction of Gray-coded bits in error.
pub fn estimate_ber(detected: &[usize], sent: &[usize], constellation: &PskConstellation) -> Result<f64> {
    if detected.len() != sent.len() {
        return Err(SlpError::Dimension(format!(
            "{} detections for {} symbols",
            detected.len(),
            sent.len()
        )));
    }
    if sent.is_empty() {
        return Err(SlpError::Empty("no symbols".into()));
    }
    let bits = bit_errors(detected, sent, constellation);
    Ok(bits as f64 / (sent.len() as f64 * constellation.bits_per_symbol() as f64))
}

pub(crate) fn bit_errors(detected: &[usize], sent: &[usize], constellation: &PskConstellation) -> u64 {
    detected
        .iter()
        .zip(sent)
        .map(|(&d, &s)| (constellation.gray_label(d) ^ constellation.gray_label(s)).count_ones() as u64)
        .sum()
}

/// Plug-in mutual information (bits) between a discrete symbol and a 2-D
/// received sample, from a `bins x bins` histogram spanning ±4 standard
/// deviations of the received cloud on each axis. Samples outside the span
/// fall in the edge bins. Clamped to `[0, log2 M]`.
pub fn estimate_mi(samples: &[Vector2<f64>], sent: &[usize], order: usize, bins: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(SlpError::Empty("no received samples".into()));
    }
    if samples.len() != sent.len() {
        return Err(SlpError::Dimension(format!(
            "{} samples for {} symbols",
            samples.len(),
            sent.len()
        )));
    }
    if bins < 2 {
        return Err(SlpError::InvalidParameter(format!("need at least 2 bins per axis, got {bins}")));
    }
    if order < 2 {
        return Err(SlpError::InvalidParameter(format!("alphabet size must be at least 2, got {order}")));
    }
    if let Some(&bad) = sent.iter().find(|&&s| s >= order) {
        return Err(SlpError::InvalidSymbol { index: bad, order });
    }

    let n = samples.len() as f64;
    let axis = |k: usize| {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / n;
        let half = if var > 0.0 { 4.0 * var.sqrt() } else { 1.0 };
        (mean - half, 2.0 * half)
    };
    let (lo_x, span_x) = axis(0);
    let (lo_y, span_y) = axis(1);
    let bin = |v: f64, lo: f64, span: f64| {
        let b = ((v - lo) / span * bins as f64).floor();
        if b.is_nan() {
            0
        } else {
            (b.max(0.0) as usize).min(bins - 1)
        }
    };

    let cells = bins * bins;
    let mut joint = vec![0u64; order * cells];
    let mut by_symbol = vec![0u64; order];
    let mut by_cell = vec![0u64; cells];
    for (s, &m) in samples.iter().zip(sent) {
        let cell = bin(s[0], lo_x, span_x) * bins + bin(s[1], lo_y, span_y);
        joint[m * cells + cell] += 1;
        by_symbol[m] += 1;
        by_cell[cell] += 1;
    }

    let mut mi = 0.0;
    for m in 0..order {
        for cell in 0..cells {
            let c = joint[m * cells + cell];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (by_symbol[m] as f64 * by_cell[cell] as f64)).log2();
            }
        }
    }
    Ok(mi.clamp(0.0, (order as f64).log2()))
}

/// `(BER × per-user rate) / mean power`.
pub fn energy_efficiency(ber: f64, per_user_rate: f64, mean_power: f64) -> Result<f64> {
    if !(mean_power > 0.0) {
        return Err(SlpError::InvalidParameter(format!("mean power must be positive, got {mean_power}")));
    }
    Ok(ber * per_user_rate / mean_power)
}
