//! File formats and the command-line surface, driven through the real binary.

use num_complex::Complex64;
use std::path::Path;
use std::process::{Command, Output};

use swgnss::acquisition::AcqResult;
use swgnss::dsp::{IqBuffer, Precision};
use swgnss::error::Error;
use swgnss::io::{
    emit_acquisition_csv, emit_bench_csv, parse_acquisition_csv, parse_bench_csv, parse_tracking_csv, read_if,
    read_if_file, write_if, write_if_file, AcqCsvRow, BenchCsvRow, SampleFormat, Truth,
};
use swgnss::signal::GaussianSource;

const BIN: &str = env!("CARGO_BIN_EXE_swgnss");

fn random_buffer(n: usize, precision: Precision, seed: u64) -> IqBuffer {
    let mut g = GaussianSource::new(seed);
    let v = (0..n)
        .map(|_| {
            let (a, b) = g.next_pair();
            Complex64::new(a * 3.0, b * 3.0)
        })
        .collect();
    IqBuffer::from_c64(v, 8.184e6, precision).unwrap()
}

#[test]
fn float32_round_trip_is_bit_identical() {
    let buf = random_buffer(81_840, Precision::Single, 1);
    let mut bytes = Vec::new();
    write_if(&mut bytes, &buf, SampleFormat::F32).unwrap();
    assert_eq!(bytes.len(), 40 + 81_840 * 8);
    let (header, back) = read_if(&mut bytes.as_slice()).unwrap();
    assert_eq!(header.sample_rate_hz, 8.184e6);
    assert_eq!(back.samples(), buf.samples());
    assert_eq!(back.sample_rate_hz(), buf.sample_rate_hz());
}

#[test]
fn integer_formats_stay_within_quantization_bound() {
    let buf = random_buffer(20_000, Precision::Double, 2);
    let orig = buf.samples().to_c64();
    let full_scale = orig.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
    for (format, levels) in [(SampleFormat::I8, 127.0), (SampleFormat::I16, 32767.0)] {
        let mut bytes = Vec::new();
        let header = write_if(&mut bytes, &buf, format).unwrap();
        assert_eq!(header.scale, full_scale);
        let (_, back) = read_if(&mut bytes.as_slice()).unwrap();
        let worst = orig
            .iter()
            .zip(back.samples().to_c64())
            .map(|(a, b)| (a.re - b.re).abs().max((a.im - b.im).abs()))
            .fold(0.0, f64::max);
        assert!(worst <= full_scale / levels, "{format:?}: {worst}");
    }
}

#[test]
fn damaged_files_are_format_errors() {
    let buf = random_buffer(100, Precision::Single, 3);
    let mut good = Vec::new();
    write_if(&mut good, &buf, SampleFormat::I16).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_if(&mut bad_magic.as_slice()), Err(Error::Format(_))));

    let mut bad_version = good.clone();
    bad_version[8] = 9;
    assert!(matches!(read_if(&mut bad_version.as_slice()), Err(Error::Format(_))));

    let truncated = &good[..good.len() - 1];
    assert!(matches!(read_if(&mut &truncated[..]), Err(Error::Format(_))));

    let header_only = &good[..20];
    assert!(matches!(read_if(&mut &header_only[..]), Err(Error::Format(_))));

    let mut dirty_reserved = good.clone();
    dirty_reserved[25] = 1;
    assert!(matches!(read_if(&mut dirty_reserved.as_slice()), Err(Error::Format(_))));
}

#[test]
fn file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.if");
    let buf = random_buffer(1000, Precision::Single, 4);
    write_if_file(&path, &buf, SampleFormat::F32).unwrap();
    assert_eq!(read_if_file(&path).unwrap(), buf);
}

fn acq_row(prn: u8, detected: bool, doppler_hz: f64, code_phase_samples: usize, peak_metric: f64) -> AcqResult {
    AcqResult {
        prn,
        doppler_hz,
        doppler_bin: 0,
        code_phase_samples,
        peak_metric,
        detected,
        bins_searched: 16,
        rounds_used: 10,
        mixing_products_per_bin: 0,
        multiplications_performed: 0,
    }
}

#[test]
fn csv_parses_back_to_the_same_values() {
    let results = vec![
        acq_row(1, true, 1_666.666_666_666_666_7, 4000, 12.345_678_901_234_567),
        acq_row(7, false, -5000.0, 0, 1.000_000_000_000_2),
        acq_row(32, true, 0.1 + 0.2, 8183, f64::INFINITY),
    ];
    let text = emit_acquisition_csv(&results);
    assert!(text.starts_with("prn,detected,doppler_hz,code_phase_samples,peak_metric\n"));
    let back = parse_acquisition_csv(&text).unwrap();
    let want: Vec<AcqCsvRow> = results.iter().map(AcqCsvRow::from).collect();
    assert_eq!(back, want);

    let rows = vec![
        BenchCsvRow {
            n_instances: 4,
            workers: 2,
            repetition: 1,
            makespan_s: Some(1.234_567_890_123),
            ert_s: Some(1.234_567_890_123 / 4.0),
            failed: false,
            cause: String::new(),
        },
        BenchCsvRow {
            n_instances: 8,
            workers: 12,
            repetition: 0,
            makespan_s: None,
            ert_s: None,
            failed: true,
            cause: "cannot start instance: out of memory, \"retry\"".into(),
        },
    ];
    let text = emit_bench_csv(&rows);
    assert_eq!(text.lines().count(), 3);
    assert_eq!(parse_bench_csv(&text).unwrap(), rows);
    assert_eq!(emit_bench_csv(&rows[..1]).lines().count(), 2);
    assert!(parse_acquisition_csv("a,b\n1,2\n").is_err());
}

fn swgnss(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn error_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .find(|l| l.starts_with("swgnss-error "))
        .unwrap_or_default()
        .to_string()
}

#[test]
fn synth_then_acquire_closes_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sig.if");
    let out = swgnss(&[
        "synth", "--prn", "5", "--doppler", "1500", "--code-phase", "4000", "--fs", "8184000", "--dur-ms", "10",
        "--seed", "7", "--out", p(&file),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let truth = Truth::from_toml(&std::fs::read_to_string(dir.path().join("sig.if.truth.toml")).unwrap()).unwrap();
    assert_eq!((truth.signal.prn, truth.signal.doppler_hz, truth.signal.code_phase_samples), (5, 1500.0, 4000.0));

    let csv1 = dir.path().join("w1.csv");
    let csv4 = dir.path().join("w4.csv");
    for (workers, csv) in [("1", &csv1), ("4", &csv4)] {
        let out = swgnss(&["acquire", "--input", p(&file), "--prns", "5,6,7", "--workers", workers, "--out", p(csv)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&csv1).unwrap();
    assert_eq!(a, std::fs::read(&csv4).unwrap());
    let rows = parse_acquisition_csv(std::str::from_utf8(&a).unwrap()).unwrap();
    let row = rows.iter().find(|r| r.prn == 5).unwrap();
    let step = 2.0 / 3.0e-3;
    assert!(row.detected);
    assert!((row.doppler_hz - 1500.0).abs() <= step / 2.0, "{}", row.doppler_hz);
    assert_eq!(row.code_phase_samples, 4000);
    assert!(rows.iter().filter(|r| r.prn != 5).all(|r| !r.detected));

    let track = dir.path().join("track.csv");
    let out = swgnss(&[
        "track", "--acq", p(&csv1), "--input", p(&file), "--epochs", "8", "--workers", "2", "--precision", "double",
        "--out", p(&track),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_tracking_csv(&std::fs::read_to_string(&track).unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.prn == 5));
    assert!((rows[7].doppler_hz - 1500.0).abs() < 400.0);
}

/// Tracking only pulls in from seeds within its capture range, so this run
/// uses a finer Doppler grid than the default.
#[test]
fn run_acquires_then_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sig.if");
    assert!(swgnss(&[
        "synth", "--prn", "12", "--doppler", "-1930", "--code-phase", "100", "--fs", "2046000", "--dur-ms", "40",
        "--cn0", "50", "--format", "i16", "--out", p(&file),
    ])
    .status
    .success());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "doppler_step_hz = 100.0\ntrack_epochs = 40\n").unwrap();
    let acq = dir.path().join("acq.csv");
    let out = swgnss(&[
        "run", "--config", p(&cfg), "--input", p(&file), "--prns", "12,13", "--acq-out", p(&acq), "--pull-in",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_tracking_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 40);
    let last = rows.last().unwrap();
    assert!(last.lock_metric > 0.8, "{last:?}");
    assert!((last.doppler_hz + 1930.0).abs() < 25.0, "{last:?}");
    assert_eq!(parse_acquisition_csv(&std::fs::read_to_string(acq).unwrap()).unwrap().len(), 2);
}

#[test]
fn exit_codes_follow_the_taxonomy() {
    let out = swgnss(&["acquire", "--input", "x.if", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("swgnss-error code=2 kind=usage"));

    let out = swgnss(&["acquire", "--input", "/nonexistent/x.if"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out).starts_with("swgnss-error code=3 kind=io"));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("short.if");
    assert!(swgnss(&["synth", "--prn", "1", "--dur-ms", "0.5", "--out", p(&file)]).status.success());
    let out = swgnss(&["acquire", "--input", p(&file), "--prns", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_line(&out).starts_with("swgnss-error code=4 kind=pipeline"));

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "workers = 2\nunknown_key = 1\n").unwrap();
    let out = swgnss(&["acquire", "--input", p(&file), "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_grid_rows_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(&cfg, "[workload]\nkind = \"synthetic\"\nchannels = 4\nepochs = 2\nlength = 1024\n").unwrap();
    let json = dir.path().join("report.json");
    let out = swgnss(&[
        "bench", "--config", p(&cfg), "--instances", "1,2,4", "--workers", "1", "--repetitions", "3",
        "--report-json", p(&json),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = parse_bench_csv(&text).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, n) in rows.iter().zip([1, 2, 4]) {
        assert_eq!((row.n_instances, row.workers, row.failed), (n, 1, false));
        assert!(row.repetition < 3);
        assert_eq!(row.ert_s.unwrap(), row.makespan_s.unwrap() / n as f64);
    }
    let out = swgnss(&["report", "--input", p(&json)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}
