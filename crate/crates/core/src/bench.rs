//! Multi-instance throughput measurement.
//!
//! A grid cell launches N instances of a workload at once, each using M
//! workers. Its makespan runs from the first instance start to the last
//! instance finish, and the effective running time is makespan / N.
//! Timestamps come from the system-wide monotonic clock, so instances in
//! separate processes report comparable start and end times.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Barrier;
use std::thread;
use std::time::Instant;

use crate::acquisition::{acquire_all, acquire_channel, AcqConfig, AcqResult};
use crate::dsp::{CorrelationMethod, Dsp, IqBuffer, Precision};
use crate::error::{Error, Result};
use crate::exec::{run_epochs, EpochTask, ExecPlan, Progress, Schedule};
use crate::io::BenchCsvRow;
use crate::signal::{generate_ca_code, synthesize_signal, GaussianSource, SignalSpec};

/// Relative improvement below which the ert curve counts as flat.
pub const DEFAULT_SATURATION_EPSILON: f64 = 0.05;

/// Nanoseconds on the system-wide monotonic clock.
pub fn monotonic_ns() -> u64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts) };
    assert_eq!(rc, 0, "CLOCK_MONOTONIC is always available");
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

pub fn effective_running_time(makespan_s: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("effective running time needs at least one instance"));
    }
    if !(makespan_s.is_finite() && makespan_s >= 0.0) {
        return Err(Error::invalid(format!("makespan must be >= 0, got {makespan_s}")));
    }
    Ok(makespan_s / n as f64)
}

/// Smallest `n` whose relative improvement to the next point is below
/// `epsilon`; `None` if the curve keeps improving.
pub fn detect_saturation(curve: &[(usize, f64)], epsilon: f64) -> Result<Option<usize>> {
    if curve.len() < 2 {
        return Err(Error::invalid("saturation needs at least two points"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if curve.iter().any(|&(n, ert)| n == 0 || !(ert.is_finite() && ert > 0.0)) {
        return Err(Error::invalid("curve points need n >= 1 and a positive finite ert"));
    }
    if curve.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::invalid("curve must be strictly increasing in n"));
    }
    Ok(curve
        .windows(2)
        .find(|w| (w[0].1 - w[1].1) / w[0].1 < epsilon)
        .map(|w| w[0].0))
}

/// Fixed CPU-bound work: `channels` tasks, each doing one frequency-domain
/// correlation of `length` samples per epoch for `epochs` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWorkload {
    pub channels: u32,
    pub epochs: u64,
    pub length: usize,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for SyntheticWorkload {
    fn default() -> Self {
        Self {
            channels: 12,
            epochs: 20,
            length: 8184,
            precision: Precision::Single,
            seed: 1,
        }
    }
}

/// Acquisition of `prns` on a synthesized signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionWorkload {
    pub signal: SignalSpec,
    pub prns: Vec<u8>,
    #[serde(default)]
    pub acquisition: AcqConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Workload {
    Synthetic(SyntheticWorkload),
    Acquisition(AcquisitionWorkload),
}

impl Default for Workload {
    fn default() -> Self {
        Workload::Synthetic(SyntheticWorkload::default())
    }
}

struct SyntheticTask<'a> {
    id: u32,
    dsp: &'a Dsp,
    signal: IqBuffer,
    replica: IqBuffer,
    epochs: u64,
    peak: f64,
}

impl EpochTask for SyntheticTask<'_> {
    fn channel_id(&self) -> u32 {
        self.id
    }

    fn phase_one(&mut self, _epoch: u64) -> Result<()> {
        let corr = self.dsp.circular_correlate(&self.signal, &self.replica, CorrelationMethod::FrequencyDomain)?;
        self.peak = self.dsp.magnitude_sq(&corr.output)?.into_iter().fold(0.0, f64::max);
        Ok(())
    }

    fn phase_two(&mut self, epoch: u64) -> Result<Progress> {
        // rotate the input so consecutive epochs see different data
        let mut v = self.signal.samples().to_c64();
        let shift = (self.peak as usize % v.len()).max(1);
        v.rotate_left(shift);
        self.signal = IqBuffer::from_c64(v, self.signal.sample_rate_hz(), self.signal.precision())?;
        Ok(if epoch + 1 >= self.epochs { Progress::Complete } else { Progress::Continue })
    }
}

impl Workload {
    pub fn validate(&self) -> Result<()> {
        match self {
            Workload::Synthetic(w) => {
                if w.channels == 0 || w.epochs == 0 || w.length == 0 {
                    return Err(Error::config("synthetic workload needs channels, epochs and length >= 1"));
                }
                Ok(())
            }
            Workload::Acquisition(w) => {
                w.signal.validate()?;
                w.acquisition.validate()?;
                if w.prns.is_empty() {
                    return Err(Error::config("acquisition workload needs at least one PRN"));
                }
                Ok(())
            }
        }
    }

    /// Runs the workload once with `workers` workers.
    pub fn run(&self, workers: usize, schedule: Schedule) -> Result<()> {
        let plan = ExecPlan::new(workers).with_schedule(schedule);
        let dsp = Dsp::default();
        match self {
            Workload::Synthetic(w) => {
                let mut noise = GaussianSource::new(w.seed);
                let mut tasks = (0..w.channels)
                    .map(|id| {
                        let code = generate_ca_code(1 + (id % 32) as u8)?;
                        let signal: Vec<Complex64> = (0..w.length)
                            .map(|k| {
                                let (re, im) = noise.next_pair();
                                Complex64::new(f64::from(code.chips()[k % 1023]) + re, im)
                            })
                            .collect();
                        let replica = (0..w.length)
                            .map(|k| Complex64::new(f64::from(code.chips()[k % 1023]), 0.0))
                            .collect();
                        Ok(SyntheticTask {
                            id,
                            dsp: &dsp,
                            signal: IqBuffer::from_c64(signal, 1.0, w.precision)?,
                            replica: IqBuffer::from_c64(replica, 1.0, w.precision)?,
                            epochs: w.epochs,
                            peak: 0.0,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                run_epochs(&mut tasks, &plan, false)?;
            }
            Workload::Acquisition(w) => {
                let buf = synthesize_signal(&w.signal)?;
                acquire_all(&dsp, &buf, &w.prns, &w.acquisition, &plan)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Isolation {
    /// Every instance is a separate process.
    #[default]
    Process,
    /// Every instance is a thread of the orchestrating process.
    InProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub instance_counts: Vec<usize>,
    pub worker_counts: Vec<usize>,
    pub repetitions: usize,
    pub schedule: Schedule,
    pub workload: Workload,
    pub isolation: Isolation,
    /// Program started for process instances; defaults to the running binary.
    pub instance_program: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            instance_counts: vec![1, 2, 4],
            worker_counts: vec![1],
            repetitions: 5,
            schedule: Schedule::Dynamic,
            workload: Workload::default(),
            isolation: Isolation::Process,
            instance_program: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instance_counts.is_empty() || self.worker_counts.is_empty() {
            return Err(Error::config("instance_counts and worker_counts must not be empty"));
        }
        if self.instance_counts.contains(&0) || self.worker_counts.contains(&0) {
            return Err(Error::config("instance and worker counts must be >= 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be >= 1"));
        }
        self.workload.validate()
    }
}

/// What one instance reports about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceTiming {
    pub pid: u32,
    pub start_ns: u64,
    pub end_ns: u64,
}

impl InstanceTiming {
    pub fn wall_s(&self) -> f64 {
        (self.end_ns - self.start_ns) as f64 * 1e-9
    }
}

/// Runs the workload and returns this instance's timing line.
pub fn run_instance(workload: &Workload, workers: usize, schedule: Schedule) -> Result<InstanceTiming> {
    let start_ns = monotonic_ns();
    workload.run(workers, schedule)?;
    let end_ns = monotonic_ns();
    Ok(InstanceTiming {
        pid: std::process::id(),
        start_ns,
        end_ns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub instances: Vec<InstanceTiming>,
    /// Present unless the repetition failed.
    pub timing: Option<BatchTiming>,
    /// Set when any instance failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    pub makespan_s: f64,
    pub ert_s: f64,
    /// Spread between the first and last instance start.
    pub launch_skew_s: f64,
}

impl Repetition {
    pub fn per_instance_s(&self) -> Vec<f64> {
        self.instances.iter().map(InstanceTiming::wall_s).collect()
    }

    fn failed(cause: String) -> Self {
        Self {
            instances: Vec::new(),
            timing: None,
            failure: Some(cause),
        }
    }

    fn from_timings(instances: Vec<InstanceTiming>) -> Result<Self> {
        if instances.iter().any(|t| t.end_ns < t.start_ns) {
            return Err(Error::Internal("instance reported an end before its start".into()));
        }
        let first_start = instances.iter().map(|t| t.start_ns).min().expect("at least one instance");
        let last_start = instances.iter().map(|t| t.start_ns).max().expect("at least one instance");
        let last_end = instances.iter().map(|t| t.end_ns).max().expect("at least one instance");
        let makespan_s = (last_end - first_start) as f64 * 1e-9;
        Ok(Self {
            timing: Some(BatchTiming {
                ert_s: effective_running_time(makespan_s, instances.len())?,
                makespan_s,
                launch_skew_s: (last_start - first_start) as f64 * 1e-9,
            }),
            instances,
            failure: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_instances: usize,
    pub workers: usize,
    pub repetitions: Vec<Repetition>,
    /// Index of the reported repetition: the lower median by makespan of the
    /// successful ones, `None` if every repetition failed.
    pub median_repetition: Option<usize>,
}

impl GridCell {
    pub fn reported(&self) -> Option<&Repetition> {
        self.median_repetition.map(|i| &self.repetitions[i])
    }

    pub fn timing(&self) -> Option<BatchTiming> {
        self.reported().and_then(|r| r.timing)
    }

    pub fn makespan_s(&self) -> Option<f64> {
        self.timing().map(|t| t.makespan_s)
    }

    pub fn ert_s(&self) -> Option<f64> {
        self.timing().map(|t| t.ert_s)
    }

    pub fn per_instance_s(&self) -> Vec<f64> {
        self.reported().map(Repetition::per_instance_s).unwrap_or_default()
    }

    /// First failure cause, if any repetition failed.
    pub fn failure(&self) -> Option<&str> {
        self.repetitions.iter().find_map(|r| r.failure.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub cores: usize,
    pub memory_bytes: Option<u64>,
    pub os: String,
}

pub fn host_info() -> HostInfo {
    HostInfo {
        cores: thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        memory_bytes: total_memory(),
        os: std::env::consts::OS.to_string(),
    }
}

#[cfg(target_os = "linux")]
fn total_memory() -> Option<u64> {
    // SAFETY: sysinfo only writes into the zeroed struct it is given.
    let mut info: libc::sysinfo = unsafe { std::mem::zeroed() };
    if unsafe { libc::sysinfo(&mut info) } == 0 {
        Some(info.totalram as u64 * u64::from(info.mem_unit))
    } else {
        None
    }
}

#[cfg(not(target_os = "linux"))]
fn total_memory() -> Option<u64> {
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub workers: usize,
    pub n_star: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRunReport {
    pub grid: Vec<GridCell>,
    /// Plateau of the ert curve at the first configured worker count.
    pub saturation_n: Option<usize>,
    pub saturation: Vec<SaturationPoint>,
    pub environment: HostInfo,
    pub isolation: Isolation,
}

impl EffectiveRunReport {
    pub fn cell(&self, n_instances: usize, workers: usize) -> Option<&GridCell> {
        self.grid.iter().find(|c| c.n_instances == n_instances && c.workers == workers)
    }

    /// ert curve over instance counts at one worker count, successful cells only.
    pub fn ert_curve(&self, workers: usize) -> Vec<(usize, f64)> {
        self.grid
            .iter()
            .filter(|c| c.workers == workers)
            .filter_map(|c| c.ert_s().map(|e| (c.n_instances, e)))
            .collect()
    }

    /// One CSV row per cell, taken from its reported repetition.
    pub fn csv_rows(&self) -> Vec<BenchCsvRow> {
        self.grid
            .iter()
            .map(|c| match (c.median_repetition, c.timing()) {
                (Some(i), Some(t)) => BenchCsvRow {
                    n_instances: c.n_instances,
                    workers: c.workers,
                    repetition: i,
                    makespan_s: Some(t.makespan_s),
                    ert_s: Some(t.ert_s),
                    failed: false,
                    cause: String::new(),
                },
                _ => BenchCsvRow {
                    n_instances: c.n_instances,
                    workers: c.workers,
                    repetition: 0,
                    makespan_s: None,
                    ert_s: None,
                    failed: true,
                    cause: c.failure().unwrap_or("failed").to_string(),
                },
            })
            .collect()
    }
}

fn lower_median(reps: &[Repetition]) -> Option<usize> {
    let mut ok: Vec<(f64, usize)> = reps
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.timing.map(|t| (t.makespan_s, i)))
        .collect();
    if ok.is_empty() {
        return None;
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Some(ok[(ok.len() - 1) / 2].1)
}

fn run_in_process(workload: &Workload, n: usize, workers: usize, schedule: Schedule) -> Result<Repetition> {
    let gate = Barrier::new(n);
    let results: Vec<Result<InstanceTiming>> = thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .map(|_| {
                thread::Builder::new().spawn_scoped(s, || {
                    gate.wait();
                    run_instance(workload, workers, schedule)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| match h {
                Ok(h) => h
                    .join()
                    .unwrap_or_else(|_| Err(Error::Internal("instance thread panicked".into()))),
                Err(e) => Err(Error::Resource(format!("cannot start instance thread: {e}"))),
            })
            .collect()
    });
    let mut timings = Vec::with_capacity(n);
    for r in results {
        match r {
            Ok(t) => timings.push(t),
            Err(Error::Internal(msg)) => return Err(Error::Internal(msg)),
            Err(e) => return Ok(Repetition::failed(e.to_string())),
        }
    }
    Repetition::from_timings(timings)
}

fn run_processes(
    program: &PathBuf,
    workload: &Workload,
    n: usize,
    workers: usize,
    schedule: Schedule,
) -> Result<Repetition> {
    let json = serde_json::to_string(workload).expect("workload serializes to JSON");
    let mut children = Vec::with_capacity(n);
    for _ in 0..n {
        let spawned = Command::new(program)
            .args(["bench-instance", "--workers", &workers.to_string(), "--schedule", &schedule.to_string()])
            .arg("--workload")
            .arg(&json)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn();
        match spawned {
            Ok(c) => children.push(c),
            Err(e) => {
                for mut c in children {
                    let _ = c.kill();
                    let _ = c.wait();
                }
                return Ok(Repetition::failed(format!("cannot start instance: {e}")));
            }
        }
    }
    let mut timings = Vec::with_capacity(n);
    let mut failure = None;
    for child in children {
        let out = child.wait_with_output()?;
        if failure.is_some() {
            continue;
        }
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            let last = stderr.lines().last().unwrap_or("").trim().to_string();
            failure = Some(format!("instance exited with {}: {last}", out.status));
            continue;
        }
        let line = out.stdout.lines().map_while(std::result::Result::ok).find(|l| l.starts_with('{'));
        match line.as_deref().map(serde_json::from_str::<InstanceTiming>) {
            Some(Ok(t)) => timings.push(t),
            _ => failure = Some("instance printed no timing line".to_string()),
        }
    }
    match failure {
        Some(cause) => Ok(Repetition::failed(cause)),
        None => Repetition::from_timings(timings),
    }
}

/// Sweeps the instance by worker grid. Failed repetitions are kept with
/// their cause; they never contribute numbers.
pub fn run_bench(config: &BenchConfig) -> Result<EffectiveRunReport> {
    config.validate()?;
    let program = match (&config.isolation, &config.instance_program) {
        (Isolation::Process, Some(p)) => Some(p.clone()),
        (Isolation::Process, None) => Some(std::env::current_exe()?),
        (Isolation::InProcess, _) => None,
    };
    let mut grid = Vec::new();
    for &workers in &config.worker_counts {
        for &n in &config.instance_counts {
            let repetitions = (0..config.repetitions)
                .map(|_| match &program {
                    Some(p) => run_processes(p, &config.workload, n, workers, config.schedule),
                    None => run_in_process(&config.workload, n, workers, config.schedule),
                })
                .collect::<Result<Vec<_>>>()?;
            grid.push(GridCell {
                n_instances: n,
                workers,
                median_repetition: lower_median(&repetitions),
                repetitions,
            });
        }
    }
    let mut report = EffectiveRunReport {
        grid,
        saturation_n: None,
        saturation: Vec::new(),
        environment: host_info(),
        isolation: config.isolation,
    };
    for &workers in &config.worker_counts {
        let mut curve = report.ert_curve(workers);
        curve.sort_by_key(|p| p.0);
        curve.dedup_by_key(|p| p.0);
        let n_star = if curve.len() >= 2 {
            detect_saturation(&curve, DEFAULT_SATURATION_EPSILON)?
        } else {
            None
        };
        report.saturation.push(SaturationPoint { workers, n_star });
    }
    report.saturation_n = report.saturation.first().and_then(|p| p.n_star);
    Ok(report)
}

/// One case of the precision study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCase {
    pub signal: SignalSpec,
    pub double: AcqResult,
    pub single: AcqResult,
    pub double_s: f64,
    pub single_s: f64,
    pub decision_match: bool,
    /// Circular difference in samples.
    pub delta_code_phase_samples: f64,
    pub delta_doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub cases: Vec<PrecisionCase>,
    pub decision_mismatches: usize,
    pub max_delta_code_phase_samples: f64,
    pub max_delta_doppler_hz: f64,
    pub total_double_s: f64,
    pub total_single_s: f64,
}

/// Seeded acquisition cases at a fixed carrier to noise density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrecisionSuite {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub cn0_dbhz: f64,
    pub seed: u64,
    pub acquisition: AcqConfig,
}

impl Default for PrecisionSuite {
    fn default() -> Self {
        Self {
            sample_rate_hz: 2.046e6,
            duration_s: 10e-3,
            cn0_dbhz: 45.0,
            seed: 2024,
            acquisition: AcqConfig::default(),
        }
    }
}

/// Noise standard deviation per component giving `cn0_dbhz` for a unit
/// amplitude signal sampled at `sample_rate_hz`.
pub fn noise_sigma_for_cn0(sample_rate_hz: f64, cn0_dbhz: f64) -> f64 {
    (sample_rate_hz / (2.0 * 10f64.powf(cn0_dbhz / 10.0))).sqrt()
}

impl PrecisionSuite {
    /// The `i`-th case: PRN, Doppler and code phase spread deterministically.
    pub fn case(&self, i: usize) -> SignalSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(i as u64));
        let mut frac = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let (u, v) = (frac(), frac());
        let period = (self.sample_rate_hz * 1e-3).round();
        SignalSpec {
            prn: 1 + (i % 32) as u8,
            doppler_hz: self.acquisition.doppler_min_hz
                + u * (self.acquisition.doppler_max_hz - self.acquisition.doppler_min_hz),
            code_phase_samples: (v * period).floor().min(period - 1.0),
            carrier_phase_cycles: (i as f64 * 0.618_033_988_75).fract(),
            sample_rate_hz: self.sample_rate_hz,
            duration_s: self.duration_s,
            noise_sigma: noise_sigma_for_cn0(self.sample_rate_hz, self.cn0_dbhz),
            seed: self.seed.wrapping_mul(31).wrapping_add(i as u64),
            precision: Precision::Double,
        }
    }
}

/// Runs every case of `suite` in double and single precision.
pub fn compare_precision(suite: &PrecisionSuite, suite_size: usize) -> Result<PrecisionReport> {
    suite.acquisition.validate()?;
    let dsp = Dsp::default();
    let mut cases = Vec::with_capacity(suite_size);
    for i in 0..suite_size {
        let signal = suite.case(i);
        let code = generate_ca_code(signal.prn)?;
        let double_buf = synthesize_signal(&signal)?;
        let single_buf = synthesize_signal(&SignalSpec {
            precision: Precision::Single,
            ..signal.clone()
        })?;
        let t0 = Instant::now();
        let double = acquire_channel(&dsp, &double_buf, &code, &suite.acquisition)?;
        let double_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let single = acquire_channel(&dsp, &single_buf, &code, &suite.acquisition)?;
        let single_s = t1.elapsed().as_secs_f64();
        let period = double_buf.len().min((suite.sample_rate_hz * 1e-3).round() as usize);
        let d = double.code_phase_samples.abs_diff(single.code_phase_samples);
        cases.push(PrecisionCase {
            decision_match: double.detected == single.detected,
            delta_code_phase_samples: d.min(period - d) as f64,
            delta_doppler_hz: (double.doppler_hz - single.doppler_hz).abs(),
            signal,
            double,
            single,
            double_s,
            single_s,
        });
    }
    Ok(PrecisionReport {
        decision_mismatches: cases.iter().filter(|c| !c.decision_match).count(),
        max_delta_code_phase_samples: cases.iter().map(|c| c.delta_code_phase_samples).fold(0.0, f64::max),
        max_delta_doppler_hz: cases.iter().map(|c| c.delta_doppler_hz).fold(0.0, f64::max),
        total_double_s: cases.iter().map(|c| c.double_s).sum(),
        total_single_s: cases.iter().map(|c| c.single_s).sum(),
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ert_is_makespan_over_n() {
        assert_eq!(effective_running_time(100.0, 4).unwrap(), 25.0);
        assert_eq!(effective_running_time(7.5, 1).unwrap(), 7.5);
        assert!(matches!(effective_running_time(1.0, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn saturation_on_constructed_curves() {
        let plateau = [(1, 100.0), (2, 50.0), (4, 26.0), (8, 25.5)];
        assert_eq!(detect_saturation(&plateau, 0.05).unwrap(), Some(4));
        let improving = [(1, 100.0), (2, 45.0), (4, 20.0)];
        assert_eq!(detect_saturation(&improving, 0.05).unwrap(), None);
        assert!(detect_saturation(&[(1, 1.0)], 0.05).is_err());
        assert!(detect_saturation(&[(2, 1.0), (1, 1.0)], 0.05).is_err());
    }

    #[test]
    fn median_ignores_failed_repetitions() {
        let ok = |m: f64| Repetition {
            instances: Vec::new(),
            timing: Some(BatchTiming {
                makespan_s: m,
                ert_s: m,
                launch_skew_s: 0.0,
            }),
            failure: None,
        };
        let reps = vec![ok(3.0), Repetition::failed("x".into()), ok(1.0), ok(2.0), ok(4.0)];
        assert_eq!(lower_median(&reps), Some(3));
        assert_eq!(lower_median(&[Repetition::failed("x".into())]), None);
    }

    #[test]
    fn repetition_times_come_from_timestamps() {
        let t = |s, e| InstanceTiming {
            pid: 1,
            start_ns: s,
            end_ns: e,
        };
        let r = Repetition::from_timings(vec![t(1_000, 3_000_001_000), t(2_000, 2_000_002_000)])
            .unwrap()
            .timing
            .unwrap();
        assert!((r.makespan_s - 3.0).abs() < 1e-12);
        assert!((r.ert_s - 1.5).abs() < 1e-12);
        assert!((r.launch_skew_s - 1e-6).abs() < 1e-15);
        assert!(matches!(Repetition::from_timings(vec![t(5, 4)]), Err(Error::Internal(_))));
    }
}
