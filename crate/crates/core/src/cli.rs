//! Command-line surface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 IO or file
//! format error, 4 pipeline error. On failure one line goes to stderr:
//! `swgnss-error code=<n> kind=<usage|io|pipeline> message=<JSON string>`.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::acquisition::{acquire_all, AcqResult};
use crate::bench::{
    compare_precision, noise_sigma_for_cn0, run_bench, run_instance, BenchConfig, Isolation, PrecisionSuite,
    Workload,
};
use crate::dsp::{Dsp, IqBuffer, Precision};
use crate::error::{Error, Result};
use crate::exec::{PriorityHint, Schedule};
use crate::io::{
    emit_acquisition_csv, emit_bench_csv, emit_tracking_csv, parse_acquisition_csv, read_if_file, write_if_file,
    RunConfig, SampleFormat, TrackCsvRow, Truth,
};
use crate::signal::{generate_ca_code, synthesize_signal, SignalSpec};
use crate::tracking::{init_from_acquisition, track_all, EpochRecord, TrackConfig};

#[derive(Debug, Parser)]
#[command(name = "swgnss", version, about = "Software GNSS L1 baseband engine and throughput harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize an IF file with a truth sidecar.
    Synth(SynthArgs),
    /// Acquire satellites in an IF file; writes acquisition CSV.
    Acquire(PipelineArgs),
    /// Track satellites seeded from an acquisition CSV; writes tracking CSV.
    Track(TrackArgs),
    /// Acquire, then track every detected satellite.
    Run(RunArgs),
    /// Measure effective running time over an instance by worker grid.
    Bench(BenchArgs),
    /// Render a saved bench report as CSV.
    Report(ReportArgs),
    /// One measured instance, started by `bench`.
    #[command(hide = true)]
    BenchInstance(InstanceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    I8,
    I16,
    F32,
}

impl From<FormatArg> for SampleFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::I8 => SampleFormat::I8,
            FormatArg::I16 => SampleFormat::I16,
            FormatArg::F32 => SampleFormat::F32,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    prn: u8,
    /// Doppler in Hz.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    doppler: f64,
    /// Code delay in samples.
    #[arg(long, default_value_t = 0.0)]
    code_phase: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    carrier_phase: f64,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 8.184e6)]
    fs: f64,
    #[arg(long, default_value_t = 10.0)]
    dur_ms: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise per component; overridden by --cn0.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Carrier to noise density in dB-Hz for a unit-amplitude signal.
    #[arg(long)]
    cn0: Option<f64>,
    #[arg(long, value_enum, default_value = "f32")]
    format: FormatArg,
    #[arg(long, short)]
    out: PathBuf,
    /// Truth sidecar path; defaults to `<out>.truth.toml`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Options shared by the pipeline commands. Flags override the config file.
#[derive(Debug, Args)]
struct ExecFlags {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated PRNs.
    #[arg(long, value_delimiter = ',')]
    prns: Option<Vec<u8>>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long)]
    priority: Option<PriorityHint>,
    #[arg(long)]
    precision: Option<Precision>,
    /// Length below which element-wise kernels run as plain loops.
    #[arg(long)]
    min_iterations: Option<usize>,
}

impl ExecFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.prns {
            cfg.prns = p.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.schedule {
            cfg.schedule = s;
        }
        if let Some(p) = self.priority {
            cfg.priority = p;
        }
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        if let Some(m) = self.min_iterations {
            cfg.min_iterations = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    exec: ExecFlags,
}

#[derive(Debug, Args)]
struct TrackOptions {
    /// Tracking epochs; defaults to the config file value.
    #[arg(long)]
    epochs: Option<u64>,
    /// Wide loops with a four-quadrant carrier discriminator.
    #[arg(long)]
    pull_in: bool,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Acquisition CSV seeding the loops; undetected rows are skipped.
    #[arg(long)]
    acq: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    track: TrackOptions,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    track: TrackOptions,
    /// Also write the acquisition CSV here.
    #[arg(long)]
    acq_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IsolationArg {
    Process,
    InProcess,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// TOML bench configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    instances: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    workers: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long, value_enum)]
    isolation: Option<IsolationArg>,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Full report as JSON, readable by `report`.
    #[arg(long)]
    report_json: Option<PathBuf>,
    /// Run the single versus double precision study over this many cases
    /// instead of the grid.
    #[arg(long)]
    precision_cases: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON written by `bench --report-json`.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    #[arg(long)]
    workload: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "dynamic")]
    schedule: Schedule,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_input(path: &Path, cfg: &RunConfig) -> Result<IqBuffer> {
    Ok(read_if_file(path)?.to_precision(cfg.precision))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SignalSpec {
        prn: a.prn,
        doppler_hz: a.doppler,
        code_phase_samples: a.code_phase,
        carrier_phase_cycles: a.carrier_phase,
        sample_rate_hz: a.fs,
        duration_s: a.dur_ms * 1e-3,
        noise_sigma: a.cn0.map_or(a.noise_sigma, |c| noise_sigma_for_cn0(a.fs, c)),
        seed: a.seed,
        precision: Precision::Double,
    };
    let buf = synthesize_signal(&spec)?;
    write_if_file(&a.out, &buf, a.format.into())?;
    let truth = a.truth.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".truth.toml");
        PathBuf::from(p)
    });
    std::fs::write(truth, Truth { signal: spec }.to_toml())?;
    Ok(())
}

fn acquire_file(a: &PipelineArgs, cfg: &RunConfig, dsp: &Dsp) -> Result<(IqBuffer, Vec<AcqResult>)> {
    let buf = load_input(&a.input, cfg)?;
    let results = acquire_all(dsp, &buf, &cfg.prns, &cfg.acquisition(), &cfg.exec_plan())?;
    Ok((buf, results))
}

fn track_from(
    buf: &IqBuffer,
    seeds: &[AcqResult],
    cfg: &RunConfig,
    opts: &TrackOptions,
    dsp: &Dsp,
) -> Result<Vec<TrackCsvRow>> {
    let channels = seeds
        .iter()
        .filter(|r| r.detected)
        .map(|r| Ok((generate_ca_code(r.prn)?, init_from_acquisition(r, buf.sample_rate_hz())?)))
        .collect::<Result<Vec<_>>>()?;
    if channels.is_empty() {
        return Ok(Vec::new());
    }
    let prns: Vec<u8> = channels.iter().map(|(c, _)| c.prn()).collect();
    let config = if opts.pull_in {
        TrackConfig::pull_in()
    } else {
        TrackConfig::default()
    };
    let epochs = opts.epochs.unwrap_or(cfg.track_epochs);
    let (histories, _) = track_all(dsp, buf, channels, &config, epochs, &cfg.exec_plan())?;
    Ok(prns
        .iter()
        .zip(&histories)
        .flat_map(|(&prn, h)| h.iter().map(move |r: &EpochRecord| TrackCsvRow::new(prn, r)))
        .collect())
}

/// Acquisition rows reread from CSV, as seeds for tracking.
fn seeds_from_csv(path: &Path) -> Result<Vec<AcqResult>> {
    Ok(parse_acquisition_csv(&std::fs::read_to_string(path)?)?
        .into_iter()
        .map(|row| AcqResult {
            prn: row.prn,
            doppler_hz: row.doppler_hz,
            doppler_bin: 0,
            code_phase_samples: row.code_phase_samples,
            peak_metric: row.peak_metric,
            detected: row.detected,
            bins_searched: 0,
            rounds_used: 0,
            mixing_products_per_bin: 0,
            multiplications_performed: 0,
        })
        .collect())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => toml::from_str::<BenchConfig>(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        None => BenchConfig::default(),
    };
    if let Some(n) = &a.instances {
        cfg.instance_counts = n.clone();
    }
    if let Some(w) = &a.workers {
        cfg.worker_counts = w.clone();
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = a.schedule {
        cfg.schedule = s;
    }
    if let Some(i) = a.isolation {
        cfg.isolation = match i {
            IsolationArg::Process => Isolation::Process,
            IsolationArg::InProcess => Isolation::InProcess,
        };
    }
    if let Some(cases) = a.precision_cases {
        let report = compare_precision(&PrecisionSuite::default(), cases)?;
        return write_output(a.out.as_deref(), &crate::io::emit_precision_csv(&report));
    }
    let report = run_bench(&cfg)?;
    if let Some(p) = &a.report_json {
        std::fs::write(p, serde_json::to_string_pretty(&report).expect("report serializes to JSON"))?;
    }
    write_output(a.out.as_deref(), &emit_bench_csv(&report.csv_rows()))
}

fn report(a: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input)?;
    let report: crate::bench::EffectiveRunReport =
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    write_output(a.out.as_deref(), &emit_bench_csv(&report.csv_rows()))
}

fn bench_instance(a: &InstanceArgs) -> Result<()> {
    let workload: Workload = serde_json::from_str(&a.workload).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    workload.validate()?;
    let timing = run_instance(&workload, a.workers, a.schedule)?;
    println!("{}", serde_json::to_string(&timing).expect("timing serializes to JSON"));
    Ok(())
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Acquire(a) => {
            let cfg = a.exec.resolve()?;
            let dsp = Dsp::new(cfg.compute_policy());
            let (_, results) = acquire_file(a, &cfg, &dsp)?;
            write_output(a.out.as_deref(), &emit_acquisition_csv(&results))
        }
        Command::Track(a) => {
            let cfg = a.pipeline.exec.resolve()?;
            let dsp = Dsp::new(cfg.compute_policy());
            let buf = load_input(&a.pipeline.input, &cfg)?;
            let seeds = seeds_from_csv(&a.acq)?;
            let rows = track_from(&buf, &seeds, &cfg, &a.track, &dsp)?;
            write_output(a.pipeline.out.as_deref(), &emit_tracking_csv(&rows))
        }
        Command::Run(a) => {
            let cfg = a.pipeline.exec.resolve()?;
            let dsp = Dsp::new(cfg.compute_policy());
            let (buf, results) = acquire_file(&a.pipeline, &cfg, &dsp)?;
            if let Some(p) = &a.acq_out {
                std::fs::write(p, emit_acquisition_csv(&results))?;
            }
            let rows = track_from(&buf, &results, &cfg, &a.track, &dsp)?;
            write_output(a.pipeline.out.as_deref(), &emit_tracking_csv(&rows))
        }
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
        Command::BenchInstance(a) => bench_instance(a),
    }
}

fn exit_code(e: &Error) -> (i32, &'static str) {
    match e {
        Error::InvalidConfig(_) => (2, "usage"),
        Error::Io(_) | Error::Format(_) => (3, "io"),
        _ => (4, "pipeline"),
    }
}

fn error_line(code: i32, kind: &str, message: &str) -> String {
    let msg = serde_json::to_string(message).expect("string serializes to JSON");
    format!("swgnss-error code={code} kind={kind} message={msg}")
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if code != 0 {
                let first = e.to_string().lines().next().unwrap_or("").to_string();
                eprintln!("{}", error_line(2, "usage", &first));
            }
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            eprintln!("{}", error_line(code, kind, &e.to_string()));
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["swgnss", "acquire", "--input", "x.if", "--bogus"]), 2);
        assert_eq!(run(["swgnss", "frobnicate"]), 2);
    }

    #[test]
    fn missing_input_is_an_io_error() {
        assert_eq!(run(["swgnss", "acquire", "--input", "/nonexistent/x.if", "--prns", "1"]), 3);
    }

    #[test]
    fn error_line_is_parseable() {
        let line = error_line(4, "pipeline", "channel 3: bad \"thing\"");
        let msg = line.split_once("message=").unwrap().1;
        assert_eq!(serde_json::from_str::<String>(msg).unwrap(), "channel 3: bad \"thing\"");
        assert!(line.starts_with("swgnss-error code=4 kind=pipeline "));
    }
}
