//! Coarse acquisition by parallel code phase search.
//!
//! For every Doppler bin the input is mixed with the bin's carrier replica,
//! correlated against the sampled code over all lags at once (forward
//! transform, multiply by the conjugate code spectrum, inverse transform) and
//! the squared magnitudes are summed over noncoherent rounds. The global
//! (bin, lag) maximum gives the estimate; the detection metric is the peak
//! power over the largest power more than one chip away from it in the same
//! bin.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::dsp::{CorrelationMethod, Dsp, IqBuffer, Precision, Samples, Spectrum};
use crate::error::{Error, Result};
use crate::exec::{run_epochs, EpochTask, ExecPlan, Progress};
use crate::signal::{
    carrier_replica, generate_ca_code, sample_code_replica, CaCode, NcoState, CHIP_RATE_HZ, CODE_PERIOD_S,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcqConfig {
    pub doppler_min_hz: f64,
    pub doppler_max_hz: f64,
    pub doppler_step_hz: f64,
    /// Coherent integration length in code periods (milliseconds).
    pub coherent_ms: u32,
    pub noncoherent_rounds: u32,
    pub detection_threshold: f64,
    /// Half-width of the region around the peak ignored when looking for the
    /// second peak. `None` means one chip, `ceil(fs / chip_rate)` samples.
    pub exclusion_radius_samples: Option<usize>,
    pub method: CorrelationMethod,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self::with_coherent_ms(1)
    }
}

impl AcqConfig {
    /// Defaults for a coherent length: +/-5 kHz in steps of `2 / (3 T)`, and
    /// enough noncoherent rounds to use 10 ms of data.
    pub fn with_coherent_ms(coherent_ms: u32) -> Self {
        let t = f64::from(coherent_ms.max(1)) * CODE_PERIOD_S;
        Self {
            doppler_min_hz: -5000.0,
            doppler_max_hz: 5000.0,
            doppler_step_hz: 2.0 / (3.0 * t),
            coherent_ms,
            noncoherent_rounds: (10 / coherent_ms.max(1)).max(1),
            detection_threshold: 2.5,
            exclusion_radius_samples: None,
            method: CorrelationMethod::FrequencyDomain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.doppler_min_hz, self.doppler_max_hz, self.doppler_step_hz, self.detection_threshold];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("acquisition parameters must be finite"));
        }
        if self.doppler_min_hz > self.doppler_max_hz {
            return Err(Error::config("doppler_min_hz exceeds doppler_max_hz"));
        }
        if self.doppler_step_hz <= 0.0 {
            return Err(Error::config("doppler_step_hz must be > 0"));
        }
        if self.coherent_ms == 0 || self.noncoherent_rounds == 0 {
            return Err(Error::config("coherent_ms and noncoherent_rounds must be at least 1"));
        }
        if self.detection_threshold <= 1.0 {
            return Err(Error::config("detection_threshold must be > 1"));
        }
        Ok(())
    }

    /// Bin centres from `doppler_min_hz` upward, including `doppler_max_hz`
    /// when the span is a whole number of steps.
    pub fn doppler_bins(&self) -> Vec<f64> {
        let span = (self.doppler_max_hz - self.doppler_min_hz) / self.doppler_step_hz;
        let n = (span + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.doppler_min_hz + k as f64 * self.doppler_step_hz).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqResult {
    pub prn: u8,
    pub doppler_hz: f64,
    /// Index of the winning Doppler bin.
    pub doppler_bin: usize,
    pub code_phase_samples: usize,
    pub peak_metric: f64,
    pub detected: bool,
    pub bins_searched: usize,
    pub rounds_used: u32,
    /// Mixing-stage products for one bin: one per sample used.
    pub mixing_products_per_bin: u64,
    /// Pointwise products over all bins: mixing plus the correlation stage
    /// (spectral products for the frequency-domain path, every lag product
    /// for the direct path).
    pub multiplications_performed: u64,
}

struct CodeBranch {
    replica: IqBuffer,
    /// Present for the frequency-domain path only.
    conj_spectrum: Option<Spectrum>,
}

/// Everything acquisition needs that does not depend on the input samples:
/// bin carriers and, per PRN, the sampled code and its conjugate spectrum.
/// Built once, then shared read-only by any number of channels.
pub struct AcquisitionPlan {
    config: AcqConfig,
    sample_rate_hz: f64,
    precision: Precision,
    samples_per_period: usize,
    coherent_len: usize,
    exclusion_radius: usize,
    bins: Vec<f64>,
    carriers: Vec<IqBuffer>,
    codes: BTreeMap<u8, CodeBranch>,
}

/// Samples per code period, required to be a whole number.
pub fn samples_per_code_period(sample_rate_hz: f64) -> Result<usize> {
    let spc = sample_rate_hz * CODE_PERIOD_S;
    let rounded = spc.round();
    if !(sample_rate_hz.is_finite() && rounded >= 1.0) || (spc - rounded).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "sample rate {sample_rate_hz} Hz does not give a whole number of samples per code period"
        )));
    }
    Ok(rounded as usize)
}

fn conjugate(spectrum: &Spectrum) -> Result<Spectrum> {
    let bins = match spectrum.bins() {
        Samples::Single(v) => Samples::Single(v.iter().map(|z| z.conj()).collect()),
        Samples::Double(v) => Samples::Double(v.iter().map(|z| z.conj()).collect()),
    };
    Spectrum::new(bins, spectrum.sample_rate_hz())
}

impl AcquisitionPlan {
    pub fn new(dsp: &Dsp, codes: &[CaCode], sample_rate_hz: f64, precision: Precision, config: &AcqConfig) -> Result<Self> {
        config.validate()?;
        let samples_per_period = samples_per_code_period(sample_rate_hz)?;
        let coherent_len = samples_per_period * config.coherent_ms as usize;
        let bins = config.doppler_bins();
        let carriers = bins
            .iter()
            .map(|&f| carrier_replica(NcoState::carrier(0.0), f, sample_rate_hz, coherent_len, precision).map(|(b, _)| b))
            .collect::<Result<Vec<_>>>()?;
        let mut branches = BTreeMap::new();
        for code in codes {
            let (replica, _) =
                sample_code_replica(code, NcoState::code(0.0), CHIP_RATE_HZ, sample_rate_hz, coherent_len, precision)?;
            let conj_spectrum = match config.method {
                CorrelationMethod::FrequencyDomain => Some(conjugate(&dsp.fft(&replica)?)?),
                CorrelationMethod::Direct => None,
            };
            branches.insert(code.prn(), CodeBranch { replica, conj_spectrum });
        }
        let exclusion_radius = config
            .exclusion_radius_samples
            .unwrap_or_else(|| (sample_rate_hz / CHIP_RATE_HZ).ceil() as usize);
        Ok(Self {
            config: config.clone(),
            sample_rate_hz,
            precision,
            samples_per_period,
            coherent_len,
            exclusion_radius,
            bins,
            carriers,
            codes: branches,
        })
    }

    pub fn doppler_bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn samples_per_period(&self) -> usize {
        self.samples_per_period
    }

    pub fn exclusion_radius(&self) -> usize {
        self.exclusion_radius
    }

    /// Searches one PRN, which must have been part of the plan.
    pub fn search(&self, dsp: &Dsp, samples: &IqBuffer, prn: u8) -> Result<AcqResult> {
        let branch = self
            .codes
            .get(&prn)
            .ok_or_else(|| Error::invalid(format!("PRN {prn} is not part of this acquisition plan")))?;
        if samples.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::invalid(format!(
                "sample rate {} Hz does not match the plan's {} Hz",
                samples.sample_rate_hz(),
                self.sample_rate_hz
            )));
        }
        if samples.precision() != self.precision {
            return Err(Error::invalid(format!(
                "{} samples given to a {} plan",
                samples.precision(),
                self.precision
            )));
        }
        if samples.len() < self.coherent_len {
            return Err(Error::invalid(format!(
                "acquisition needs {} samples, buffer has {}",
                self.coherent_len,
                samples.len()
            )));
        }
        let rounds = (samples.len() / self.coherent_len).min(self.config.noncoherent_rounds as usize);
        let segments = (0..rounds)
            .map(|r| samples.slice(r * self.coherent_len..(r + 1) * self.coherent_len))
            .collect::<Result<Vec<_>>>()?;

        let spc = self.samples_per_period;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut best_power = Vec::new();
        for (b, carrier) in self.carriers.iter().enumerate() {
            let mut power = vec![0.0f64; spc];
            for seg in &segments {
                let mixed = dsp.pointwise_multiply(seg, carrier, false)?;
                let corr = match &branch.conj_spectrum {
                    Some(conj_spectrum) => {
                        let spectrum = dsp.fft(&mixed)?;
                        let product = dsp.pointwise_multiply(&spectrum, conj_spectrum, false)?;
                        dsp.ifft(&product)?
                    }
                    None => dsp.circular_correlate(&mixed, &branch.replica, CorrelationMethod::Direct)?.output,
                };
                let mag = dsp.magnitude_sq(&corr)?;
                for (acc, m) in power.iter_mut().zip(&mag[..spc]) {
                    *acc += m;
                }
            }
            let mut improved = false;
            for (lag, &p) in power.iter().enumerate() {
                if best.is_none_or(|(_, _, bp)| p > bp) {
                    best = Some((b, lag, p));
                    improved = true;
                }
            }
            if improved {
                best_power = power;
            }
        }
        let (bin, lag, peak) = best.ok_or_else(|| Error::Internal("empty Doppler grid".into()))?;
        let second = second_peak(&best_power, lag, self.exclusion_radius);
        let peak_metric = if second > 0.0 {
            peak / second
        } else if peak > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };

        let n = self.coherent_len as u64;
        let rounds_u = rounds as u64;
        let per_round_corr = match self.config.method {
            CorrelationMethod::FrequencyDomain => n,
            CorrelationMethod::Direct => n * n,
        };
        let mixing = rounds_u * n;
        Ok(AcqResult {
            prn,
            doppler_hz: self.bins[bin],
            doppler_bin: bin,
            code_phase_samples: lag,
            peak_metric,
            detected: peak_metric >= self.config.detection_threshold,
            bins_searched: self.bins.len(),
            rounds_used: rounds as u32,
            mixing_products_per_bin: mixing,
            multiplications_performed: self.bins.len() as u64 * (mixing + rounds_u * per_round_corr),
        })
    }
}

/// Largest value at circular distance greater than `radius` from `peak`.
fn second_peak(power: &[f64], peak: usize, radius: usize) -> f64 {
    let n = power.len();
    power
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            let d = i.abs_diff(peak);
            d.min(n - d) > radius
        })
        .map(|(_, &p)| p)
        .fold(0.0, f64::max)
}

/// Acquires one satellite.
pub fn acquire_channel(dsp: &Dsp, samples: &IqBuffer, code: &CaCode, config: &AcqConfig) -> Result<AcqResult> {
    let plan = AcquisitionPlan::new(dsp, std::slice::from_ref(code), samples.sample_rate_hz(), samples.precision(), config)?;
    plan.search(dsp, samples, code.prn())
}

struct AcqTask<'a> {
    prn: u8,
    dsp: &'a Dsp,
    plan: &'a AcquisitionPlan,
    samples: &'a IqBuffer,
    result: Option<AcqResult>,
}

impl EpochTask for AcqTask<'_> {
    fn channel_id(&self) -> u32 {
        u32::from(self.prn)
    }

    fn phase_one(&mut self, _epoch: u64) -> Result<()> {
        self.result = Some(self.plan.search(self.dsp, self.samples, self.prn)?);
        Ok(())
    }

    fn phase_two(&mut self, _epoch: u64) -> Result<Progress> {
        Ok(Progress::Complete)
    }
}

/// Acquires every PRN in `prns` as independent channels distributed by `exec`.
/// Results come back in the order of `prns`; errors carry the PRN as channel id.
pub fn acquire_all(
    dsp: &Dsp,
    samples: &IqBuffer,
    prns: &[u8],
    config: &AcqConfig,
    exec: &ExecPlan,
) -> Result<Vec<AcqResult>> {
    if prns.is_empty() {
        return Err(Error::invalid("no PRNs to acquire"));
    }
    if prns.iter().collect::<BTreeSet<_>>().len() != prns.len() {
        return Err(Error::invalid("PRN list contains duplicates"));
    }
    let codes = prns
        .iter()
        .map(|&p| generate_ca_code(p).map_err(|e| e.in_channel(u32::from(p))))
        .collect::<Result<Vec<_>>>()?;
    let plan = AcquisitionPlan::new(dsp, &codes, samples.sample_rate_hz(), samples.precision(), config)?;
    let mut tasks: Vec<AcqTask> = prns
        .iter()
        .map(|&prn| AcqTask {
            prn,
            dsp,
            plan: &plan,
            samples,
            result: None,
        })
        .collect();
    run_epochs(&mut tasks, exec, false)?;
    tasks
        .into_iter()
        .map(|t| t.result.ok_or_else(|| Error::Internal(format!("PRN {} produced no result", t.prn))))
        .collect()
}
