//! C/A codes, NCO replicas and synthetic signal generation.

mod ca_code;
mod nco;
mod synth;

pub use ca_code::{generate_ca_code, CaCode, CHIP_RATE_HZ, CODE_LENGTH, CODE_PERIOD_S, L1_FREQUENCY_HZ};
pub use nco::{carrier_replica, sample_code_replica, wrap, wrap_signed, NcoState};
pub use synth::{
    add_awgn, doppler_code_rate, sample_count, synthesize_scene, synthesize_signal, GaussianSource,
    SatelliteSignal, Scene, SignalSpec,
};
