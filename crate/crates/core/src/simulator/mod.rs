//! Monte-Carlo link-level evaluation: Rayleigh channels, CSCG distortion
//! and noise, detection, and BER / mutual-information / power metrics.

mod channel;
mod metrics;
mod sweep;

pub use channel::{
    calibrate_epsilon, receive, sample_channel, sample_distortion, sample_noise, transmit_receive,
    ChannelRealization,
};
pub use metrics::{energy_efficiency, estimate_ber, estimate_mi};
pub use sweep::{run_sweep, DistortionSpec, EeMode, MetricsRecord, Scheme, SweepConfig, VIOLATION_TOL};
