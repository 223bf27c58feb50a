use nalgebra::{DVector, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, SlpError};
use crate::realify::{build_real_channel, Complex64, ComplexVector, RealChannel, RealDistortionMatrix};

/// One Rayleigh block-fading draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub users: Vec<ComplexVector>,
    pub real: RealChannel,
}

/// `h_i ~ CN(0, I)` for every user.
pub fn sample_channel<R: Rng + ?Sized>(n_t: usize, n_r: usize, rng: &mut R) -> Result<ChannelRealization> {
    if n_t == 0 || n_r == 0 {
        return Err(SlpError::Dimension("channel needs at least one antenna and one user".into()));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let users: Vec<ComplexVector> = (0..n_r)
        .map(|_| {
            ComplexVector::from_fn(n_t, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * scale, im * scale)
            })
        })
        .collect();
    let real = build_real_channel(&users)?;
    Ok(ChannelRealization { users, real })
}

/// Radius `ε` with `Pr{‖w‖ > ε} = 1 − p` for `w` CSCG with per-entry
/// variance `σ_w²` over `n_t` antennas: `2‖w‖²/σ_w²` is chi-square with
/// `2 n_t` degrees of freedom.
pub fn calibrate_epsilon(confidence: f64, variance: f64, n_t: usize) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(SlpError::InvalidParameter(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(SlpError::InvalidParameter(format!("variance must be non-negative, got {variance}")));
    }
    if n_t == 0 {
        return Err(SlpError::Dimension("n_t must be positive".into()));
    }
    let chi2 = ChiSquared::new(2.0 * n_t as f64)
        .map_err(|e| SlpError::InvalidParameter(e.to_string()))?;
    Ok((0.5 * variance * chi2.inverse_cdf(confidence)).sqrt())
}

/// Real-embedded CSCG distortion with per-entry variance `σ_w²`.
pub fn sample_distortion<R: Rng + ?Sized>(variance: f64, n_t: usize, rng: &mut R) -> DVector<f64> {
    let sd = (0.5 * variance).sqrt();
    DVector::from_fn(2 * n_t, |_, _| {
        let g: f64 = rng.sample(StandardNormal);
        sd * g
    })
}

/// Real-embedded receiver noise, `E|z_i|² = σ_i²` split evenly over the
/// two components.
pub fn sample_noise<R: Rng + ?Sized>(sigmas: &[f64], rng: &mut R) -> DVector<f64> {
    let mut z = DVector::zeros(2 * sigmas.len());
    for (i, s) in sigmas.iter().enumerate() {
        let sd = s * std::f64::consts::FRAC_1_SQRT_2;
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        z[2 * i] = sd * a;
        z[2 * i + 1] = sd * b;
    }
    z
}

/// `r_i = H_i x + z_i` for a given transmitted signal and noise draw.
pub fn receive(x: &DVector<f64>, channel: &RealChannel, noise: &DVector<f64>) -> Vec<Vector2<f64>> {
    let y = channel.matrix() * x + noise;
    (0..channel.users()).map(|i| Vector2::new(y[2 * i], y[2 * i + 1])).collect()
}

/// `r_i = H_i(Gu + w) + z_i` with fresh noise.
pub fn transmit_receive<R: Rng + ?Sized>(
    u: &DVector<f64>,
    w_actual: &DVector<f64>,
    channel: &RealChannel,
    distortion: &RealDistortionMatrix,
    sigmas: &[f64],
    rng: &mut R,
) -> Result<Vec<Vector2<f64>>> {
    if sigmas.len() != channel.users() {
        return Err(SlpError::Dimension(format!(
            "{} noise levels for {} users",
            sigmas.len(),
            channel.users()
        )));
    }
    if u.len() != distortion.matrix().ncols() || w_actual.len() != channel.matrix().ncols() {
        return Err(SlpError::Dimension("precoder output and distortion must have length 2 n_t".into()));
    }
    let noise = sample_noise(sigmas, rng);
    let x = distortion.matrix() * u + w_actual;
    Ok(receive(&x, channel, &noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn channel_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n_t = 4;
        let draws = 100_000 / n_t;
        let (mut energy, mut energy_sq, mut mean_re) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let ch = sample_channel(n_t, 1, &mut rng).unwrap();
            let e = ch.users[0].norm_squared();
            energy += e;
            energy_sq += e * e;
            mean_re += ch.users[0].iter().map(|z| z.re).sum::<f64>();
        }
        let n = draws as f64;
        let mean = energy / n;
        let sd = (energy_sq / n - mean * mean).sqrt();
        assert!((mean - n_t as f64).abs() < 3.0 * sd / n.sqrt());
        // Real parts: variance 1/2 each, n_t of them per draw.
        let re_mean = mean_re / (n * n_t as f64);
        assert!(re_mean.abs() < 3.0 * (0.5 / (n * n_t as f64)).sqrt());
    }

    #[test]
    fn channel_is_deterministic_per_seed() {
        let a = sample_channel(3, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_channel(3, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn epsilon_calibration() {
        let eps = calibrate_epsilon(0.99, 0.02, 8).unwrap();
        // χ²₁₆ at 0.99 is 32.0000.
        assert_relative_eq!(eps, (0.01f64 * 32.0).sqrt(), max_relative = 1e-4);
        assert_relative_eq!(eps, 0.566, epsilon = 1e-3);
        assert_eq!(calibrate_epsilon(0.99, 0.0, 8).unwrap(), 0.0);
        assert!(calibrate_epsilon(0.9, 0.02, 8).unwrap() < eps);
        assert!(calibrate_epsilon(0.99, 0.03, 8).unwrap() > eps);
        assert!(calibrate_epsilon(1.0, 0.02, 8).is_err());
        assert!(calibrate_epsilon(0.5, -1.0, 8).is_err());
    }

    #[test]
    fn distortion_moments_and_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (var, n_t, draws) = (0.02, 8, 100_000);
        let eps = calibrate_epsilon(0.99, var, n_t).unwrap();
        let (mut energy, mut energy_sq, mut exceed) = (0.0, 0.0, 0usize);
        for _ in 0..draws {
            let w = sample_distortion(var, n_t, &mut rng);
            let e = w.norm_squared();
            energy += e;
            energy_sq += e * e;
            exceed += usize::from(w.norm() > eps);
        }
        let n = draws as f64;
        let mean = energy / n;
        let sd = (energy_sq / n - mean * mean).sqrt();
        assert!((mean - n_t as f64 * var).abs() < 3.0 * sd / n.sqrt());
        let rate = exceed as f64 / n;
        assert!((rate - 0.01).abs() <= 0.003, "tail rate {rate}");
        assert_eq!(sample_distortion(0.0, 3, &mut rng), DVector::zeros(6));
    }

    #[test]
    fn noiseless_transmission_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = sample_channel(3, 2, &mut rng).unwrap();
        let u = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let g = RealDistortionMatrix::identity(3);
        let r = transmit_receive(&u, &DVector::zeros(6), &ch.real, &g, &[0.0, 0.0], &mut rng).unwrap();
        let y = ch.real.matrix() * &u;
        for i in 0..2 {
            assert_eq!(r[i], Vector2::new(y[2 * i], y[2 * i + 1]));
        }
    }

    #[test]
    fn noise_variance_per_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = 1.5;
        let n = 50_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let z = sample_noise(&[sigma], &mut rng);
            acc[0] += z[0] * z[0];
            acc[1] += z[1] * z[1];
        }
        let target = sigma * sigma / 2.0;
        // Var of a chi-square-1 sample mean: 2 target² / n.
        let tol = 3.0 * (2.0 * target * target / n as f64).sqrt();
        for a in acc {
            assert!((a / n as f64 - target).abs() < tol);
        }
    }

    #[test]
    fn reception_is_linear_at_fixed_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = sample_channel(2, 2, &mut rng).unwrap();
        let noise = sample_noise(&[1.0, 1.0], &mut rng);
        let x1 = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let x2 = DVector::from_vec(vec![0.3, 0.1, -0.7, 1.0]);
        let zero = DVector::zeros(4);
        let r_sum = receive(&(&x1 + &x2), &ch.real, &noise);
        let r1 = receive(&x1, &ch.real, &noise);
        let r2 = receive(&x2, &ch.real, &zero);
        for i in 0..2 {
            assert!((r_sum[i] - r1[i] - r2[i]).amax() < 1e-12);
        }
    }
}
