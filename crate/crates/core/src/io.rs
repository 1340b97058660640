//! File formats: binary IF samples, TOML run configuration and truth
//! sidecars, and CSV report schemas.
//!
//! IF file layout, little-endian throughout:
//!
//! | offset | size | field                                      |
//! |--------|------|--------------------------------------------|
//! | 0      | 8    | magic `GNSSIF01`                           |
//! | 8      | 4    | version, `u32`, currently 1                |
//! | 12     | 8    | sample rate in Hz, `f64`                   |
//! | 20     | 1    | sample format: 0 = i8, 1 = i16, 2 = f32    |
//! | 21     | 1    | layout: 0 = interleaved I/Q                |
//! | 22     | 10   | reserved, zero                             |
//! | 32     | 8    | full scale, `f64` (1.0 for f32 payloads)   |
//! | 40     | ..   | payload                                    |
//!
//! Integer payloads store `round(x / scale * max)` with `max` = 127 or 32767,
//! where `scale` is the largest absolute component at write time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::acquisition::{AcqConfig, AcqResult};
use crate::bench::PrecisionReport;
use crate::dsp::{ComputePathPolicy, IqBuffer, Precision};
use crate::error::{Error, Result};
use crate::exec::{ExecPlan, PriorityHint, Schedule};
use crate::signal::SignalSpec;
use crate::tracking::EpochRecord;

pub const IF_MAGIC: &[u8; 8] = b"GNSSIF01";
pub const IF_VERSION: u32 = 1;
pub const IF_HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    I8,
    I16,
    F32,
}

impl SampleFormat {
    fn code(self) -> u8 {
        match self {
            SampleFormat::I8 => 0,
            SampleFormat::I16 => 1,
            SampleFormat::F32 => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(SampleFormat::I8),
            1 => Ok(SampleFormat::I16),
            2 => Ok(SampleFormat::F32),
            other => Err(Error::Format(format!("unknown sample format {other}"))),
        }
    }

    /// Bytes per component.
    pub fn width(self) -> usize {
        match self {
            SampleFormat::I8 => 1,
            SampleFormat::I16 => 2,
            SampleFormat::F32 => 4,
        }
    }

    /// Largest quantization level, `None` for floating point.
    pub fn max_level(self) -> Option<f64> {
        match self {
            SampleFormat::I8 => Some(127.0),
            SampleFormat::I16 => Some(32767.0),
            SampleFormat::F32 => None,
        }
    }
}

impl std::str::FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i8" | "int8" => Ok(SampleFormat::I8),
            "i16" | "int16" => Ok(SampleFormat::I16),
            "f32" | "float32" => Ok(SampleFormat::F32),
            other => Err(Error::invalid(format!("unknown sample format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfFileHeader {
    pub version: u32,
    pub sample_rate_hz: f64,
    pub sample_format: SampleFormat,
    pub scale: f64,
}

impl IfFileHeader {
    fn to_bytes(self) -> [u8; IF_HEADER_LEN] {
        let mut b = [0u8; IF_HEADER_LEN];
        b[..8].copy_from_slice(IF_MAGIC);
        b[8..12].copy_from_slice(&self.version.to_le_bytes());
        b[12..20].copy_from_slice(&self.sample_rate_hz.to_le_bytes());
        b[20] = self.sample_format.code();
        b[21] = 0;
        b[32..40].copy_from_slice(&self.scale.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8; IF_HEADER_LEN]) -> Result<Self> {
        if &b[..8] != IF_MAGIC {
            return Err(Error::Format("bad magic, not an IF sample file".into()));
        }
        let version = u32::from_le_bytes(b[8..12].try_into().expect("4 bytes"));
        if version != IF_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let sample_rate_hz = f64::from_le_bytes(b[12..20].try_into().expect("8 bytes"));
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Format(format!("bad sample rate {sample_rate_hz}")));
        }
        let sample_format = SampleFormat::from_code(b[20])?;
        if b[21] != 0 {
            return Err(Error::Format(format!("unknown layout {}", b[21])));
        }
        if b[22..32].iter().any(|&x| x != 0) {
            return Err(Error::Format("reserved header bytes are not zero".into()));
        }
        let scale = f64::from_le_bytes(b[32..40].try_into().expect("8 bytes"));
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Format(format!("bad full scale {scale}")));
        }
        Ok(Self {
            version,
            sample_rate_hz,
            sample_format,
            scale,
        })
    }
}

/// Writes `buf` to `w` in the IF format. Returns the header written.
pub fn write_if<W: Write>(w: &mut W, buf: &IqBuffer, format: SampleFormat) -> Result<IfFileHeader> {
    let samples = buf.samples();
    if !samples.is_finite() {
        return Err(Error::invalid("IF output requires finite samples"));
    }
    let values = samples.to_c64();
    let scale = match format.max_level() {
        Some(_) => {
            let peak = values.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
            if peak > 0.0 {
                peak
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let header = IfFileHeader {
        version: IF_VERSION,
        sample_rate_hz: buf.sample_rate_hz(),
        sample_format: format,
        scale,
    };
    w.write_all(&header.to_bytes())?;
    let mut payload = Vec::with_capacity(values.len() * 2 * format.width());
    for z in &values {
        for x in [z.re, z.im] {
            match format {
                SampleFormat::I8 => payload.push((x / scale * 127.0).round().clamp(-127.0, 127.0) as i8 as u8),
                SampleFormat::I16 => payload
                    .extend_from_slice(&((x / scale * 32767.0).round().clamp(-32767.0, 32767.0) as i16).to_le_bytes()),
                SampleFormat::F32 => payload.extend_from_slice(&(x as f32).to_le_bytes()),
            }
        }
    }
    w.write_all(&payload)?;
    Ok(header)
}

/// Reads an IF stream. Float payloads come back in single precision, integer
/// payloads dequantized in double precision.
pub fn read_if<R: Read>(r: &mut R) -> Result<(IfFileHeader, IqBuffer)> {
    let mut hb = [0u8; IF_HEADER_LEN];
    r.read_exact(&mut hb).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated header".into()),
        _ => Error::Io(e),
    })?;
    let header = IfFileHeader::from_bytes(&hb)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let pair = 2 * header.sample_format.width();
    if payload.is_empty() || payload.len() % pair != 0 {
        return Err(Error::Format(format!(
            "payload of {} bytes is not a whole number of {pair}-byte samples",
            payload.len()
        )));
    }
    let buf = match header.sample_format {
        SampleFormat::F32 => {
            let values: Vec<Complex64> = payload
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                    let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                    Complex64::new(f64::from(re), f64::from(im))
                })
                .collect();
            if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Format("non-finite sample in payload".into()));
            }
            IqBuffer::from_c64(values, header.sample_rate_hz, Precision::Single)?
        }
        SampleFormat::I8 => {
            let k = header.scale / 127.0;
            let values = payload
                .chunks_exact(2)
                .map(|c| Complex64::new(f64::from(c[0] as i8) * k, f64::from(c[1] as i8) * k))
                .collect();
            IqBuffer::from_c64(values, header.sample_rate_hz, Precision::Double)?
        }
        SampleFormat::I16 => {
            let k = header.scale / 32767.0;
            let values = payload
                .chunks_exact(4)
                .map(|c| {
                    let re = i16::from_le_bytes([c[0], c[1]]);
                    let im = i16::from_le_bytes([c[2], c[3]]);
                    Complex64::new(f64::from(re) * k, f64::from(im) * k)
                })
                .collect();
            IqBuffer::from_c64(values, header.sample_rate_hz, Precision::Double)?
        }
    };
    Ok((header, buf))
}

pub fn write_if_file(path: &Path, buf: &IqBuffer, format: SampleFormat) -> Result<IfFileHeader> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = write_if(&mut w, buf, format)?;
    w.flush()?;
    Ok(header)
}

pub fn read_if_file(path: &Path) -> Result<IqBuffer> {
    Ok(read_if(&mut BufReader::new(File::open(path)?))?.1)
}

/// Run configuration file. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub prns: Vec<u8>,
    pub doppler_min_hz: f64,
    pub doppler_max_hz: f64,
    /// `None` uses `2 / (3 T)` for the configured coherent length.
    pub doppler_step_hz: Option<f64>,
    pub coherent_ms: u32,
    /// `None` uses enough rounds to cover 10 ms.
    pub noncoherent_rounds: Option<u32>,
    pub threshold: f64,
    pub workers: usize,
    pub schedule: Schedule,
    pub priority: PriorityHint,
    pub precision: Precision,
    pub min_iterations: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Tracking epochs for `track` and `run`.
    pub track_epochs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prns: (1..=32).collect(),
            doppler_min_hz: -5000.0,
            doppler_max_hz: 5000.0,
            doppler_step_hz: None,
            coherent_ms: 1,
            noncoherent_rounds: None,
            threshold: 2.5,
            workers: 1,
            schedule: Schedule::Dynamic,
            priority: PriorityHint::Normal,
            precision: Precision::Single,
            min_iterations: ComputePathPolicy::default().min_iterations,
            seed: 0,
            duration_s: 10e-3,
            sample_rate_hz: 8.184e6,
            track_epochs: 50,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition().validate()?;
        self.exec_plan().validate()?;
        if self.prns.is_empty() {
            return Err(Error::config("prns must not be empty"));
        }
        Ok(())
    }

    pub fn acquisition(&self) -> AcqConfig {
        let base = AcqConfig::with_coherent_ms(self.coherent_ms);
        AcqConfig {
            doppler_min_hz: self.doppler_min_hz,
            doppler_max_hz: self.doppler_max_hz,
            doppler_step_hz: self.doppler_step_hz.unwrap_or(base.doppler_step_hz),
            noncoherent_rounds: self.noncoherent_rounds.unwrap_or(base.noncoherent_rounds),
            detection_threshold: self.threshold,
            ..base
        }
    }

    pub fn exec_plan(&self) -> ExecPlan {
        ExecPlan::new(self.workers)
            .with_schedule(self.schedule)
            .with_priority(self.priority)
    }

    pub fn compute_policy(&self) -> ComputePathPolicy {
        ComputePathPolicy {
            min_iterations: self.min_iterations,
        }
    }
}

/// Ground truth written next to a synthesized IF file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub signal: SignalSpec,
}

impl Truth {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("truth serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqCsvRow {
    pub prn: u8,
    pub detected: bool,
    pub doppler_hz: f64,
    pub code_phase_samples: usize,
    pub peak_metric: f64,
}

impl From<&AcqResult> for AcqCsvRow {
    fn from(r: &AcqResult) -> Self {
        Self {
            prn: r.prn,
            detected: r.detected,
            doppler_hz: r.doppler_hz,
            code_phase_samples: r.code_phase_samples,
            peak_metric: r.peak_metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCsvRow {
    pub n_instances: usize,
    pub workers: usize,
    pub repetition: usize,
    /// Empty for failed cells.
    pub makespan_s: Option<f64>,
    pub ert_s: Option<f64>,
    pub failed: bool,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackCsvRow {
    pub prn: u8,
    pub epoch: u64,
    pub doppler_hz: f64,
    pub code_phase_chips: f64,
    pub carrier_phase_cycles: f64,
    pub ip: f64,
    pub qp: f64,
    pub lock_metric: f64,
}

impl TrackCsvRow {
    pub fn new(prn: u8, r: &EpochRecord) -> Self {
        Self {
            prn,
            epoch: r.epoch,
            doppler_hz: r.doppler_hz,
            code_phase_chips: r.code_phase_chips,
            carrier_phase_cycles: r.carrier_phase_cycles,
            ip: r.output.ip,
            qp: r.output.qp,
            lock_metric: r.output.lock_metric,
        }
    }
}

const ACQ_HEADER: [&str; 5] = ["prn", "detected", "doppler_hz", "code_phase_samples", "peak_metric"];
const BENCH_HEADER: [&str; 7] = ["n_instances", "workers", "repetition", "makespan_s", "ert_s", "failed", "cause"];
const TRACK_HEADER: [&str; 8] = [
    "prn",
    "epoch",
    "doppler_hz",
    "code_phase_chips",
    "carrier_phase_cycles",
    "ip",
    "qp",
    "lock_metric",
];

/// Serializes rows with a fixed header, written even when there are no rows.
fn emit<T: Serialize>(header: &[&str], rows: &[T]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.serialize(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV is UTF-8")
}

fn parse<T: for<'de> Deserialize<'de>>(header: &[&str], text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Format(format!("expected columns {}", header.join(","))));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

pub fn emit_acquisition_csv(results: &[AcqResult]) -> String {
    let rows: Vec<AcqCsvRow> = results.iter().map(AcqCsvRow::from).collect();
    emit(&ACQ_HEADER, &rows)
}

pub fn parse_acquisition_csv(text: &str) -> Result<Vec<AcqCsvRow>> {
    parse(&ACQ_HEADER, text)
}

pub fn emit_bench_csv(rows: &[BenchCsvRow]) -> String {
    emit(&BENCH_HEADER, rows)
}

pub fn parse_bench_csv(text: &str) -> Result<Vec<BenchCsvRow>> {
    parse(&BENCH_HEADER, text)
}

pub fn emit_tracking_csv(rows: &[TrackCsvRow]) -> String {
    emit(&TRACK_HEADER, rows)
}

pub fn parse_tracking_csv(text: &str) -> Result<Vec<TrackCsvRow>> {
    parse(&TRACK_HEADER, text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCsvRow {
    pub case: usize,
    pub prn: u8,
    pub detected_double: bool,
    pub detected_single: bool,
    pub delta_code_phase_samples: f64,
    pub delta_doppler_hz: f64,
    pub double_s: f64,
    pub single_s: f64,
}

const PRECISION_HEADER: [&str; 8] = [
    "case",
    "prn",
    "detected_double",
    "detected_single",
    "delta_code_phase_samples",
    "delta_doppler_hz",
    "double_s",
    "single_s",
];

pub fn emit_precision_csv(report: &PrecisionReport) -> String {
    let rows: Vec<PrecisionCsvRow> = report
        .cases
        .iter()
        .enumerate()
        .map(|(i, c)| PrecisionCsvRow {
            case: i,
            prn: c.signal.prn,
            detected_double: c.double.detected,
            detected_single: c.single.detected,
            delta_code_phase_samples: c.delta_code_phase_samples,
            delta_doppler_hz: c.delta_doppler_hz,
            double_s: c.double_s,
            single_s: c.single_s,
        })
        .collect();
    emit(&PRECISION_HEADER, &rows)
}

pub fn parse_precision_csv(text: &str) -> Result<Vec<PrecisionCsvRow>> {
    parse(&PRECISION_HEADER, text)
}
