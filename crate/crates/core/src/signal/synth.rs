//! Deterministic synthetic baseband signals with known truth.
//!
//! The model is complex baseband with no intermediate frequency: a C/A code
//! delayed by `code_phase_samples`, rotated by the Doppler as a complex
//! exponential, plus circular white Gaussian noise. No navigation data is
//! modulated.
//!
//! Noise comes from ChaCha8 (`rand_chacha`) seeded with `seed_from_u64`, which
//! is value-stable across platforms. Uniforms take the top 53 bits of each
//! `u64` draw; Gaussian pairs come from Box-Muller, the cosine branch feeding
//! the in-phase component and the sine branch the quadrature component.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::ca_code::{generate_ca_code, CHIP_RATE_HZ, CODE_LENGTH, CODE_PERIOD_S, L1_FREQUENCY_HZ};
use super::nco::{carrier_replica, sample_code_replica, wrap, NcoState};
use crate::dsp::{IqBuffer, Precision};
use crate::error::{Error, Result};

/// Code chipping rate seen by a receiver at the given carrier Doppler.
pub fn doppler_code_rate(doppler_hz: f64) -> f64 {
    CHIP_RATE_HZ * (1.0 + doppler_hz / L1_FREQUENCY_HZ)
}

/// Number of samples a duration covers, rounded to the nearest integer.
pub fn sample_count(sample_rate_hz: f64, duration_s: f64) -> usize {
    (sample_rate_hz * duration_s).round() as usize
}

/// Ground truth for one synthesized satellite signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub prn: u8,
    pub doppler_hz: f64,
    /// True code delay in samples at the first sample.
    pub code_phase_samples: f64,
    pub carrier_phase_cycles: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.prn) {
            return Err(Error::invalid(format!("PRN must be in 1..=32, got {}", self.prn)));
        }
        validate_common(self.sample_rate_hz, self.duration_s, self.noise_sigma)?;
        check_satellite(self.sample_rate_hz, self.doppler_hz, self.code_phase_samples, self.carrier_phase_cycles)
    }

    pub fn len(&self) -> usize {
        sample_count(self.sample_rate_hz, self.duration_s)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples_per_code_period(&self) -> f64 {
        self.sample_rate_hz * CODE_PERIOD_S
    }
}

fn validate_common(sample_rate_hz: f64, duration_s: f64, noise_sigma: f64) -> Result<()> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) || sample_count(sample_rate_hz, duration_s) == 0 {
        return Err(Error::invalid(format!("duration {duration_s} s yields no samples")));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    Ok(())
}

fn check_satellite(fs: f64, doppler_hz: f64, code_phase_samples: f64, carrier_phase_cycles: f64) -> Result<()> {
    if !doppler_hz.is_finite() || !carrier_phase_cycles.is_finite() {
        return Err(Error::invalid("Doppler and carrier phase must be finite"));
    }
    let period = fs * CODE_PERIOD_S;
    if !(code_phase_samples >= 0.0 && code_phase_samples < period) {
        return Err(Error::invalid(format!(
            "code phase {code_phase_samples} outside [0, {period}) samples"
        )));
    }
    Ok(())
}

/// One satellite inside a multi-satellite [`Scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteSignal {
    pub prn: u8,
    pub doppler_hz: f64,
    pub code_phase_samples: f64,
    pub carrier_phase_cycles: f64,
    pub amplitude: f64,
}

/// Several satellites summed into one buffer with a single noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub satellites: Vec<SatelliteSignal>,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub precision: Precision,
}

/// Noise-free signal of one satellite in double precision.
fn clean_signal(sat: &SatelliteSignal, fs: f64, n: usize) -> Result<Vec<Complex64>> {
    let code = generate_ca_code(sat.prn)?;
    let code_rate = doppler_code_rate(sat.doppler_hz);
    let step = code_rate / fs;
    let code_nco = NcoState::code(wrap(-sat.code_phase_samples * step, CODE_LENGTH as f64));
    let (code_buf, _) = sample_code_replica(&code, code_nco, code_rate, fs, n, Precision::Double)?;
    // carrier_replica rotates by e^(-2 pi i phase); negate to get e^(+2 pi i (phi + f t))
    let carrier_nco = NcoState::carrier(-sat.carrier_phase_cycles);
    let (carrier_buf, _) = carrier_replica(carrier_nco, -sat.doppler_hz, fs, n, Precision::Double)?;
    let code = code_buf.samples().to_c64();
    let carrier = carrier_buf.samples().to_c64();
    Ok(code
        .iter()
        .zip(&carrier)
        .map(|(c, w)| c * w * sat.amplitude)
        .collect())
}

pub fn synthesize_signal(spec: &SignalSpec) -> Result<IqBuffer> {
    spec.validate()?;
    synthesize_scene(&Scene {
        satellites: vec![SatelliteSignal {
            prn: spec.prn,
            doppler_hz: spec.doppler_hz,
            code_phase_samples: spec.code_phase_samples,
            carrier_phase_cycles: spec.carrier_phase_cycles,
            amplitude: 1.0,
        }],
        sample_rate_hz: spec.sample_rate_hz,
        duration_s: spec.duration_s,
        noise_sigma: spec.noise_sigma,
        seed: spec.seed,
        precision: spec.precision,
    })
}

pub fn synthesize_scene(scene: &Scene) -> Result<IqBuffer> {
    validate_common(scene.sample_rate_hz, scene.duration_s, scene.noise_sigma)?;
    let n = sample_count(scene.sample_rate_hz, scene.duration_s);
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for sat in &scene.satellites {
        check_satellite(scene.sample_rate_hz, sat.doppler_hz, sat.code_phase_samples, sat.carrier_phase_cycles)?;
        if !sat.amplitude.is_finite() {
            return Err(Error::invalid("satellite amplitude must be finite"));
        }
        let clean = clean_signal(sat, scene.sample_rate_hz, n)?;
        if scene.satellites.len() == 1 {
            acc = clean;
        } else {
            for (a, s) in acc.iter_mut().zip(clean) {
                *a += s;
            }
        }
    }
    add_noise_c64(&mut acc, scene.noise_sigma, scene.seed);
    IqBuffer::from_c64(acc, scene.sample_rate_hz, scene.precision)
}

/// Seeded source of circular complex Gaussian samples.
pub struct GaussianSource {
    rng: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `(0, 1]`.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals as `(I, Q)`.
    pub fn next_pair(&mut self) -> (f64, f64) {
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = TAU * self.uniform();
        (r * theta.cos(), r * theta.sin())
    }
}

fn add_noise_c64(samples: &mut [Complex64], sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut src = GaussianSource::new(seed);
    for s in samples {
        let (i, q) = src.next_pair();
        *s += Complex64::new(sigma * i, sigma * q);
    }
}

/// Adds independent `N(0, sigma^2)` noise to each component; `sigma == 0`
/// returns the input unchanged.
pub fn add_awgn(buf: &IqBuffer, sigma: f64, seed: u64) -> Result<IqBuffer> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(buf.clone());
    }
    let mut values = buf.samples().to_c64();
    add_noise_c64(&mut values, sigma, seed);
    IqBuffer::from_c64(values, buf.sample_rate_hz(), buf.precision())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SignalSpec {
        SignalSpec {
            prn: 5,
            doppler_hz: 0.0,
            code_phase_samples: 0.0,
            carrier_phase_cycles: 0.0,
            sample_rate_hz: 8.184e6,
            duration_s: 10e-3,
            noise_sigma: 0.0,
            seed: 7,
            precision: Precision::Single,
        }
    }

    #[test]
    fn ten_ms_at_8184_khz_is_81840_samples() {
        assert_eq!(synthesize_signal(&spec()).unwrap().len(), 81_840);
    }

    #[test]
    fn clean_aligned_signal_is_code_times_carrier() {
        let s = spec();
        let buf = synthesize_signal(&s).unwrap();
        let code = generate_ca_code(5).unwrap();
        let (code_rep, _) = sample_code_replica(&code, NcoState::code(0.0), CHIP_RATE_HZ, s.sample_rate_hz, s.len(), Precision::Single).unwrap();
        let (carrier, _) = carrier_replica(NcoState::carrier(0.0), 0.0, s.sample_rate_hz, s.len(), Precision::Single).unwrap();
        let dsp = crate::dsp::Dsp::default();
        let product = dsp.pointwise_multiply(&code_rep, &carrier, false).unwrap();
        assert_eq!(buf, product);
    }

    #[test]
    fn seeds_control_noise() {
        let mut s = spec();
        s.noise_sigma = 0.5;
        let a = synthesize_signal(&s).unwrap();
        let b = synthesize_signal(&s).unwrap();
        assert_eq!(a, b);
        s.seed = 8;
        assert_ne!(a, synthesize_signal(&s).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec();
        s.code_phase_samples = 8184.0;
        assert!(synthesize_signal(&s).is_err());
        let mut s = spec();
        s.noise_sigma = -1.0;
        assert!(synthesize_signal(&s).is_err());
        let mut s = spec();
        s.prn = 0;
        assert!(synthesize_signal(&s).is_err());
    }

    #[test]
    fn awgn_identity_and_reproducibility() {
        let buf = synthesize_signal(&spec()).unwrap();
        assert_eq!(add_awgn(&buf, 0.0, 1).unwrap(), buf);
        assert_eq!(add_awgn(&buf, 1.0, 3).unwrap(), add_awgn(&buf, 1.0, 3).unwrap());
        assert!(add_awgn(&buf, -0.1, 3).is_err());
    }
}
