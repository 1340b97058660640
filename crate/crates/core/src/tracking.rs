//! Time-domain code and carrier tracking.
//!
//! Each epoch wipes the carrier off one integration block, correlates it with
//! early, prompt and late code replicas (three dot products), runs a
//! normalized early-minus-late power DLL and a Costas PLL through
//! second-order loop filters, and advances both NCOs. No transform is used
//! anywhere on this path.
//!
//! Code delay convention: `code_phase_chips` is the delay of the received code
//! relative to the first sample of the next block, so the prompt replica
//! starts at code phase `-code_phase_chips`. A positive DLL error means the
//! replica is late (delay overestimated) and speeds the code NCO up.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::acquisition::{samples_per_code_period, AcqResult};
use crate::dsp::{correlation_multiplications, CorrelationMethod, Dsp, IqBuffer};
use crate::error::{Error, Result};
use crate::exec::{run_epochs, EpochTask, ExecPlan, Progress, RunReport};
use crate::signal::{
    carrier_replica, doppler_code_rate, sample_code_replica, wrap, wrap_signed, CaCode, NcoState, CHIP_RATE_HZ,
    CODE_LENGTH, CODE_PERIOD_S,
};

/// Epochs averaged by the lock metric.
pub const LOCK_WINDOW: usize = 20;

const DAMPING: f64 = 0.707;
/// Noise bandwidth over natural frequency for the damping above.
const BANDWIDTH_RATIO: f64 = 0.53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierDiscriminator {
    /// `atan(qp / ip)`: blind to 180 degree data-bit flips, range +/-0.25 cycle.
    #[default]
    Costas,
    /// `atan2(qp, ip)`: range +/-0.5 cycle, only valid without data modulation.
    FourQuadrant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub correlator_spacing_chips: f64,
    pub dll_bandwidth_hz: f64,
    pub pll_bandwidth_hz: f64,
    pub integration_ms: u32,
    pub carrier_discriminator: CarrierDiscriminator,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            correlator_spacing_chips: 0.5,
            dll_bandwidth_hz: 2.0,
            pll_bandwidth_hz: 15.0,
            integration_ms: 1,
            carrier_discriminator: CarrierDiscriminator::Costas,
        }
    }
}

impl TrackConfig {
    /// Wide loops that pull in from half a chip and 200 Hz within 50 one-ms
    /// epochs on data-free signals. A Costas loop cannot: 200 Hz turns the
    /// carrier 0.2 cycle per epoch, too close to its 0.25 cycle ambiguity.
    ///
    /// When the sample rate is a whole multiple of the chip rate the sampled
    /// correlators move in steps of one sample, which leaves the DLL a dead
    /// zone of half a sample around alignment.
    pub fn pull_in() -> Self {
        Self {
            dll_bandwidth_hz: 80.0,
            pll_bandwidth_hz: 180.0,
            carrier_discriminator: CarrierDiscriminator::FourQuadrant,
            ..Self::default()
        }
    }

    pub fn integration_s(&self) -> f64 {
        f64::from(self.integration_ms) * CODE_PERIOD_S
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.correlator_spacing_chips;
        if !(d.is_finite() && d > 0.0 && d <= 1.0) {
            return Err(Error::config(format!("correlator spacing must be in (0, 1] chip, got {d}")));
        }
        if self.integration_ms == 0 {
            return Err(Error::config("integration_ms must be at least 1"));
        }
        let t = self.integration_s();
        for (name, b) in [("DLL", self.dll_bandwidth_hz), ("PLL", self.pll_bandwidth_hz)] {
            check_bandwidth(name, b, t)?;
        }
        Ok(())
    }
}

fn check_bandwidth(name: &str, bandwidth_hz: f64, integration_s: f64) -> Result<()> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(Error::config(format!("{name} bandwidth must be > 0, got {bandwidth_hz}")));
    }
    if bandwidth_hz * integration_s >= 0.25 {
        return Err(Error::config(format!(
            "{name} bandwidth {bandwidth_hz} Hz is unstable at {integration_s} s integration (B*T must stay below 0.25)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopFilterState {
    pub integrator: f64,
    pub last_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub prn: u8,
    pub sample_rate_hz: f64,
    /// Code delay relative to the next block's first sample, in `[0, 1023)`.
    pub code_phase_chips: f64,
    /// Carrier NCO phase at the next block's first sample, in `[0, 1)`.
    pub carrier_phase_cycles: f64,
    /// Carrier NCO frequency.
    pub doppler_hz: f64,
    /// Frequency the carrier loop corrects around (the acquisition estimate).
    pub doppler_base_hz: f64,
    pub code_rate_hz: f64,
    pub dll_filter: LoopFilterState,
    pub pll_filter: LoopFilterState,
    pub epoch: u64,
    /// Prompt `(ip, qp)` of the most recent epochs, oldest first.
    pub prompt_history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub ie: f64,
    pub qe: f64,
    pub ip: f64,
    pub qp: f64,
    pub il: f64,
    pub ql: f64,
    pub dll_error_chips: f64,
    pub pll_error_cycles: f64,
    pub lock_metric: f64,
    /// Products performed by this epoch: carrier wipeoff plus three correlators.
    pub multiplications: u64,
    /// Products a full-lag direct correlation over the same block would need.
    pub full_lag_multiplications: u64,
}

/// Starts a tracking state from a detection. Filters start at zero.
pub fn init_from_acquisition(acq: &AcqResult, sample_rate_hz: f64) -> Result<TrackState> {
    if !acq.detected {
        return Err(Error::invalid(format!("PRN {} was not detected", acq.prn)));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
    }
    let chips_per_sample = CHIP_RATE_HZ / sample_rate_hz;
    Ok(TrackState {
        prn: acq.prn,
        sample_rate_hz,
        code_phase_chips: wrap(acq.code_phase_samples as f64 * chips_per_sample, CODE_LENGTH as f64),
        carrier_phase_cycles: 0.0,
        doppler_hz: acq.doppler_hz,
        doppler_base_hz: acq.doppler_hz,
        code_rate_hz: doppler_code_rate(acq.doppler_hz),
        dll_filter: LoopFilterState::default(),
        pll_filter: LoopFilterState::default(),
        epoch: 0,
        prompt_history: Vec::new(),
    })
}

/// Samples in one integration block.
pub fn block_len(sample_rate_hz: f64, config: &TrackConfig) -> Result<usize> {
    Ok(samples_per_code_period(sample_rate_hz)? * config.integration_ms as usize)
}

/// Carrier wipeoff and the three code correlators. Discriminator and lock
/// fields of the returned output are zero.
pub fn epl_correlate(
    dsp: &Dsp,
    block: &IqBuffer,
    code: &CaCode,
    state: &TrackState,
    config: &TrackConfig,
) -> Result<TrackOutput> {
    let (out, _, _) = correlate(dsp, block, code, state, config)?;
    Ok(out)
}

/// Returns the correlators and the carrier and prompt code NCO states at the
/// end of the block.
fn correlate(
    dsp: &Dsp,
    block: &IqBuffer,
    code: &CaCode,
    state: &TrackState,
    config: &TrackConfig,
) -> Result<(TrackOutput, NcoState, NcoState)> {
    config.validate()?;
    if code.prn() != state.prn {
        return Err(Error::invalid(format!("code PRN {} does not match state PRN {}", code.prn(), state.prn)));
    }
    let fs = block.sample_rate_hz();
    if fs != state.sample_rate_hz {
        return Err(Error::invalid(format!("block rate {fs} Hz does not match state rate {} Hz", state.sample_rate_hz)));
    }
    let n = block_len(fs, config)?;
    if block.len() != n {
        return Err(Error::invalid(format!("tracking block must hold {n} samples, got {}", block.len())));
    }
    let precision = block.precision();
    let (carrier, carrier_end) = carrier_replica(
        NcoState::carrier(state.carrier_phase_cycles),
        state.doppler_hz,
        fs,
        n,
        precision,
    )?;
    let wiped = dsp.pointwise_multiply(block, &carrier, false)?;
    let half = config.correlator_spacing_chips / 2.0;
    let prompt_phase = -state.code_phase_chips;
    let mut sums = [(0.0, 0.0); 3];
    let mut prompt_end = None;
    for (slot, offset) in [half, 0.0, -half].into_iter().enumerate() {
        let (replica, end) = sample_code_replica(
            code,
            NcoState::code(prompt_phase + offset),
            state.code_rate_hz,
            fs,
            n,
            precision,
        )?;
        let z = dsp.dot_product(&wiped, &replica, false)?;
        sums[slot] = (z.re, z.im);
        if offset == 0.0 {
            prompt_end = Some(end);
        }
    }
    let [(ie, qe), (ip, qp), (il, ql)] = sums;
    let out = TrackOutput {
        ie,
        qe,
        ip,
        qp,
        il,
        ql,
        dll_error_chips: 0.0,
        pll_error_cycles: 0.0,
        lock_metric: 0.0,
        multiplications: 4 * n as u64,
        full_lag_multiplications: correlation_multiplications(CorrelationMethod::Direct, n),
    };
    Ok((out, carrier_end, prompt_end.expect("prompt replica generated")))
}

/// Normalized early-minus-late power, scaled to chips of replica lateness
/// for a triangular correlation peak.
pub fn dll_discriminator(out: &TrackOutput, spacing_chips: f64) -> Result<f64> {
    let e = out.ie * out.ie + out.qe * out.qe;
    let l = out.il * out.il + out.ql * out.ql;
    if e + l == 0.0 {
        return Err(Error::DegenerateInput("early and late correlators are both zero".into()));
    }
    Ok((e - l) / (e + l) * (1.0 - spacing_chips / 2.0) / 2.0)
}

/// Costas arctangent discriminator in cycles, in `(-0.25, 0.25]`.
pub fn pll_discriminator(out: &TrackOutput) -> Result<f64> {
    if out.ip == 0.0 && out.qp == 0.0 {
        return Err(Error::DegenerateInput("prompt correlator is zero".into()));
    }
    if out.ip == 0.0 {
        return Ok(0.25);
    }
    Ok((out.qp / out.ip).atan() / TAU)
}

/// Carrier phase error in cycles using the chosen discriminator.
pub fn carrier_phase_error(out: &TrackOutput, kind: CarrierDiscriminator) -> Result<f64> {
    match kind {
        CarrierDiscriminator::Costas => pll_discriminator(out),
        CarrierDiscriminator::FourQuadrant => {
            if out.ip == 0.0 && out.qp == 0.0 {
                return Err(Error::DegenerateInput("prompt correlator is zero".into()));
            }
            Ok(out.qp.atan2(out.ip) / TAU)
        }
    }
}

/// Second-order proportional-plus-integral filter with natural frequency
/// `bandwidth / 0.53` and damping 0.707: the integrator gains
/// `w0^2 * error * T`, the correction is `2 * zeta * w0 * error + integrator`.
pub fn loop_filter(
    error: f64,
    state: LoopFilterState,
    bandwidth_hz: f64,
    integration_s: f64,
) -> Result<(f64, LoopFilterState)> {
    check_bandwidth("loop", bandwidth_hz, integration_s)?;
    if !error.is_finite() {
        return Err(Error::invalid("loop filter error is not finite"));
    }
    let w0 = bandwidth_hz / BANDWIDTH_RATIO;
    let kp = 2.0 * DAMPING * w0;
    let ki = w0 * w0;
    let integrator = state.integrator + ki * error * integration_s;
    Ok((
        kp * error + integrator,
        LoopFilterState {
            integrator,
            last_error: error,
        },
    ))
}

/// `(sum ip)^2 / (n * sum(ip^2 + qp^2))` over the window: near 1 for a steady
/// carrier-locked prompt, near `1/n` for noise.
pub fn lock_metric(history: &[(f64, f64)]) -> f64 {
    let n = history.len() as f64;
    let sum_i: f64 = history.iter().map(|&(i, _)| i).sum();
    let power: f64 = history.iter().map(|&(i, q)| i * i + q * q).sum();
    if power == 0.0 {
        0.0
    } else {
        sum_i * sum_i / (n * power)
    }
}

/// Closes the loops on correlators measured for `state`'s block.
fn close_loops(
    state: &TrackState,
    mut out: TrackOutput,
    carrier_end: NcoState,
    prompt_end: NcoState,
    config: &TrackConfig,
) -> Result<(TrackState, TrackOutput)> {
    let t = config.integration_s();
    let dll_error = dll_discriminator(&out, config.correlator_spacing_chips)?;
    let pll_error = carrier_phase_error(&out, config.carrier_discriminator)?;
    let (carrier_corr, pll_filter) = loop_filter(pll_error, state.pll_filter, config.pll_bandwidth_hz, t)?;
    let (code_corr, dll_filter) = loop_filter(dll_error, state.dll_filter, config.dll_bandwidth_hz, t)?;
    let doppler_hz = state.doppler_base_hz + carrier_corr;

    let mut prompt_history = state.prompt_history.clone();
    prompt_history.push((out.ip, out.qp));
    if prompt_history.len() > LOCK_WINDOW {
        prompt_history.remove(0);
    }
    out.dll_error_chips = dll_error;
    out.pll_error_cycles = pll_error;
    out.lock_metric = lock_metric(&prompt_history);

    let next = TrackState {
        prn: state.prn,
        sample_rate_hz: state.sample_rate_hz,
        code_phase_chips: wrap(-prompt_end.phase, CODE_LENGTH as f64),
        carrier_phase_cycles: carrier_end.phase,
        doppler_hz,
        doppler_base_hz: state.doppler_base_hz,
        code_rate_hz: doppler_code_rate(doppler_hz) + code_corr,
        dll_filter,
        pll_filter,
        epoch: state.epoch + 1,
        prompt_history,
    };
    if ![next.code_phase_chips, next.carrier_phase_cycles, next.doppler_hz, next.code_rate_hz]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::Internal("tracking state became non-finite".into()));
    }
    Ok((next, out))
}

/// One full epoch: correlate, discriminate, filter and advance the NCOs.
pub fn track_epoch(
    dsp: &Dsp,
    block: &IqBuffer,
    code: &CaCode,
    state: &TrackState,
    config: &TrackConfig,
) -> Result<(TrackState, TrackOutput)> {
    let (out, carrier_end, prompt_end) = correlate(dsp, block, code, state, config)?;
    close_loops(state, out, carrier_end, prompt_end, config)
}

/// Code delay error in chips, wrapped to `(-511.5, 511.5]`.
pub fn code_error_chips(estimate: f64, truth: f64) -> f64 {
    wrap_signed(estimate - truth, CODE_LENGTH as f64)
}

/// State and correlators recorded after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub output: TrackOutput,
    pub doppler_hz: f64,
    pub code_phase_chips: f64,
    pub carrier_phase_cycles: f64,
}

/// One satellite tracked over consecutive blocks of a shared buffer.
pub struct TrackingChannel<'a> {
    dsp: &'a Dsp,
    samples: &'a IqBuffer,
    code: CaCode,
    config: TrackConfig,
    state: TrackState,
    block_len: usize,
    max_epochs: u64,
    pending: Option<(TrackOutput, NcoState, NcoState)>,
    history: Vec<EpochRecord>,
}

impl<'a> TrackingChannel<'a> {
    /// Tracks from the start of `samples` for at most `max_epochs` epochs or
    /// until the buffer runs out.
    pub fn new(
        dsp: &'a Dsp,
        samples: &'a IqBuffer,
        code: CaCode,
        state: TrackState,
        config: TrackConfig,
        max_epochs: u64,
    ) -> Result<Self> {
        config.validate()?;
        let block_len = block_len(samples.sample_rate_hz(), &config)?;
        let available = (samples.len() / block_len) as u64;
        if available == 0 {
            return Err(Error::invalid(format!("buffer holds less than one {block_len}-sample block")));
        }
        Ok(Self {
            dsp,
            samples,
            code,
            config,
            state,
            block_len,
            max_epochs: max_epochs.min(available),
            pending: None,
            history: Vec::new(),
        })
    }

    pub fn state(&self) -> &TrackState {
        &self.state
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn into_history(self) -> Vec<EpochRecord> {
        self.history
    }

    fn block(&self, epoch: u64) -> Result<IqBuffer> {
        let start = epoch as usize * self.block_len;
        self.samples.slice(start..start + self.block_len)
    }
}

impl EpochTask for TrackingChannel<'_> {
    fn channel_id(&self) -> u32 {
        u32::from(self.state.prn)
    }

    fn phase_one(&mut self, epoch: u64) -> Result<()> {
        let block = self.block(epoch)?;
        self.pending = Some(correlate(self.dsp, &block, &self.code, &self.state, &self.config)?);
        Ok(())
    }

    fn phase_two(&mut self, _epoch: u64) -> Result<Progress> {
        let (out, carrier_end, prompt_end) = self
            .pending
            .take()
            .ok_or_else(|| Error::Internal("loop update without correlators".into()))?;
        let (next, out) = close_loops(&self.state, out, carrier_end, prompt_end, &self.config)?;
        self.history.push(EpochRecord {
            epoch: self.state.epoch,
            output: out,
            doppler_hz: next.doppler_hz,
            code_phase_chips: next.code_phase_chips,
            carrier_phase_cycles: next.carrier_phase_cycles,
        });
        self.state = next;
        Ok(if self.history.len() as u64 >= self.max_epochs {
            Progress::Complete
        } else {
            Progress::Continue
        })
    }
}

/// Tracks several satellites over the same buffer, one channel per state,
/// scheduled by `exec`. Returns per-channel histories in input order.
pub fn track_all(
    dsp: &Dsp,
    samples: &IqBuffer,
    channels: Vec<(CaCode, TrackState)>,
    config: &TrackConfig,
    max_epochs: u64,
    exec: &ExecPlan,
) -> Result<(Vec<Vec<EpochRecord>>, RunReport)> {
    let mut tasks = channels
        .into_iter()
        .map(|(code, state)| TrackingChannel::new(dsp, samples, code, state, config.clone(), max_epochs))
        .collect::<Result<Vec<_>>>()?;
    let report = run_epochs(&mut tasks, exec, false)?;
    Ok((tasks.into_iter().map(TrackingChannel::into_history).collect(), report))
}
