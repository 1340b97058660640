//! Numerically controlled oscillators for carrier and code replicas.
//!
//! Both replicas come out of the same phase accumulator: the phase advances
//! by a fixed step each sample and is wrapped into `[0, modulus)`. Because the
//! accumulator is the only state, generating `a + b` samples in one call is
//! bit-identical to generating `a` then `b` from the returned state.

use num_complex::Complex64;
use std::f64::consts::TAU;

use super::ca_code::{CaCode, CODE_LENGTH};
use crate::dsp::{IqBuffer, Precision};
use crate::error::{Error, Result};

/// Phase accumulator. `phase` is in cycles for a carrier NCO and in chips for
/// a code NCO; `step_per_sample` uses the same unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcoState {
    pub phase: f64,
    pub step_per_sample: f64,
}

impl NcoState {
    pub fn carrier(phase_cycles: f64) -> Self {
        Self {
            phase: wrap(phase_cycles, 1.0),
            step_per_sample: 0.0,
        }
    }

    pub fn code(phase_chips: f64) -> Self {
        Self {
            phase: wrap(phase_chips, CODE_LENGTH as f64),
            step_per_sample: 0.0,
        }
    }
}

/// Wraps `x` into `[0, modulus)`.
pub fn wrap(x: f64, modulus: f64) -> f64 {
    let r = x.rem_euclid(modulus);
    // rem_euclid can round up to exactly `modulus` for tiny negative inputs
    if r >= modulus {
        0.0
    } else {
        r
    }
}

/// Wraps `x` into `[-modulus/2, modulus/2)`.
pub fn wrap_signed(x: f64, modulus: f64) -> f64 {
    wrap(x + modulus / 2.0, modulus) - modulus / 2.0
}

fn check(n: usize, sample_rate_hz: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("replica length must be at least one sample"));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
    }
    Ok(())
}

/// `out[k] = e^(-2 pi i (phase_k))` with `phase_{k+1} = phase_k + freq/fs`.
pub fn carrier_replica(
    nco: NcoState,
    freq_hz: f64,
    sample_rate_hz: f64,
    n: usize,
    precision: Precision,
) -> Result<(IqBuffer, NcoState)> {
    check(n, sample_rate_hz)?;
    let step = freq_hz / sample_rate_hz;
    if !step.is_finite() {
        return Err(Error::invalid("carrier step is not finite"));
    }
    let mut phase = wrap(nco.phase, 1.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(Complex64::from_polar(1.0, -TAU * phase));
        phase = wrap(phase + step, 1.0);
    }
    let buf = IqBuffer::from_c64(out, sample_rate_hz, precision)?;
    Ok((
        buf,
        NcoState {
            phase,
            step_per_sample: step,
        },
    ))
}

/// Samples a code at `chip_rate / fs` chips per sample, taking the chip under
/// the floor of the phase at the centre of each sample interval, i.e.
/// `phase + step / 2` (no interpolation). Output is real `+/-1`.
pub fn sample_code_replica(
    code: &CaCode,
    nco: NcoState,
    chip_rate_hz: f64,
    sample_rate_hz: f64,
    n: usize,
    precision: Precision,
) -> Result<(IqBuffer, NcoState)> {
    check(n, sample_rate_hz)?;
    if !(chip_rate_hz.is_finite() && chip_rate_hz > 0.0) {
        return Err(Error::invalid(format!("chip rate must be > 0, got {chip_rate_hz}")));
    }
    let len = CODE_LENGTH as f64;
    let step = chip_rate_hz / sample_rate_hz;
    let half = step / 2.0;
    let chips = code.chips();
    let mut phase = wrap(nco.phase, len);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let centre = wrap(phase + half, len);
        let chip = chips[(centre as usize).min(CODE_LENGTH - 1)];
        out.push(Complex64::new(f64::from(chip), 0.0));
        phase = wrap(phase + step, len);
    }
    let buf = IqBuffer::from_c64(out, sample_rate_hz, precision)?;
    Ok((
        buf,
        NcoState {
            phase,
            step_per_sample: step,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::generate_ca_code;

    #[test]
    fn dc_carrier_is_all_ones() {
        let (buf, next) = carrier_replica(NcoState::carrier(0.0), 0.0, 1000.0, 4, Precision::Double).unwrap();
        for i in 0..4 {
            assert_eq!(buf.samples().get(i), Complex64::new(1.0, 0.0));
        }
        assert_eq!(next.phase, 0.0);
    }

    #[test]
    fn replica_loop_length_for_ten_ms() {
        let fs = 8.184e6;
        let n = (fs * 10e-3_f64).round() as usize;
        assert_eq!(n, 81_840);
        let (buf, _) = carrier_replica(NcoState::carrier(0.0), 1500.0, fs, n, Precision::Single).unwrap();
        assert_eq!(buf.len(), 81_840);
    }

    #[test]
    fn integer_oversampling_repeats_chips() {
        let code = generate_ca_code(3).unwrap();
        let (buf, _) = sample_code_replica(&code, NcoState::code(0.0), 1.023e6, 2.046e6, 2046, Precision::Double).unwrap();
        for k in 0..2046 {
            assert_eq!(buf.samples().get(k).re, f64::from(code.chips()[k / 2]));
            assert_eq!(buf.samples().get(k).im, 0.0);
        }
    }

    #[test]
    fn one_code_period_at_8184_khz() {
        let fs = 8.184e6;
        let per_ms = (fs / 1000.0_f64).round() as usize;
        assert_eq!(per_ms, 8184);
        let code = generate_ca_code(1).unwrap();
        let (_, next) = sample_code_replica(&code, NcoState::code(0.0), 1.023e6, fs, per_ms, Precision::Single).unwrap();
        assert_eq!(next.phase, 0.0);
    }

    #[test]
    fn zero_length_is_rejected() {
        let code = generate_ca_code(1).unwrap();
        assert!(carrier_replica(NcoState::carrier(0.0), 1.0, 1.0, 0, Precision::Single).is_err());
        assert!(sample_code_replica(&code, NcoState::code(0.0), 1.0, 1.0, 0, Precision::Single).is_err());
    }

    #[test]
    fn wrap_stays_in_range() {
        assert_eq!(wrap(-1e-18, 1.0), 0.0);
        assert_eq!(wrap(1023.0, 1023.0), 0.0);
        assert!((wrap_signed(0.75, 1.0) + 0.25).abs() < 1e-15);
        assert!((wrap_signed(1022.5, 1023.0) + 0.5).abs() < 1e-12);
    }
}
