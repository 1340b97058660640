//! Throughput harness: timing arithmetic, isolation and failure bookkeeping.

use std::collections::BTreeSet;
use std::path::PathBuf;

use swgnss::bench::{
    compare_precision, detect_saturation, effective_running_time, host_info, run_bench, BenchConfig, Isolation,
    PrecisionSuite, SyntheticWorkload, Workload,
};

fn small_workload(epochs: u64) -> Workload {
    Workload::Synthetic(SyntheticWorkload {
        channels: 4,
        epochs,
        length: 4096,
        ..SyntheticWorkload::default()
    })
}

fn config(isolation: Isolation, instances: Vec<usize>, repetitions: usize, workload: Workload) -> BenchConfig {
    BenchConfig {
        instance_counts: instances,
        worker_counts: vec![1],
        repetitions,
        workload,
        isolation,
        instance_program: Some(PathBuf::from(env!("CARGO_BIN_EXE_swgnss"))),
        ..BenchConfig::default()
    }
}

#[test]
fn single_instance_ert_is_its_wall_time() {
    for isolation in [Isolation::InProcess, Isolation::Process] {
        let report = run_bench(&config(isolation, vec![1], 3, small_workload(3))).unwrap();
        let cell = report.cell(1, 1).unwrap();
        assert_eq!(cell.repetitions.len(), 3);
        let wall = cell.per_instance_s();
        assert_eq!(wall.len(), 1);
        assert!((cell.ert_s().unwrap() - wall[0]).abs() <= 1e-9, "{isolation:?}");
    }
}

#[test]
fn cells_are_recomputable_from_raw_timestamps() {
    let report = run_bench(&config(Isolation::Process, vec![1, 2, 3], 2, small_workload(3))).unwrap();
    assert_eq!(report.grid.len(), 3);
    for cell in &report.grid {
        for rep in &cell.repetitions {
            let t = rep.timing.expect("no failures expected");
            assert_eq!(rep.instances.len(), cell.n_instances);
            let first = rep.instances.iter().map(|i| i.start_ns).min().unwrap();
            let last = rep.instances.iter().map(|i| i.end_ns).max().unwrap();
            let makespan = (last - first) as f64 * 1e-9;
            assert!((t.makespan_s - makespan).abs() <= 1e-9);
            assert!((t.ert_s - makespan / cell.n_instances as f64).abs() <= 1e-9);
            assert!(t.launch_skew_s >= 0.0 && t.launch_skew_s <= t.makespan_s);
            let pids: BTreeSet<u32> = rep.instances.iter().map(|i| i.pid).collect();
            assert_eq!(pids.len(), cell.n_instances, "process instances share a pid");
            assert!(!pids.contains(&std::process::id()));
        }
        let ert = cell.ert_s().unwrap();
        assert_eq!(ert, effective_running_time(cell.makespan_s().unwrap(), cell.n_instances).unwrap());
    }
    let rows = report.csv_rows();
    assert_eq!(rows.len(), 3);
    for (row, cell) in rows.iter().zip(&report.grid) {
        assert_eq!(row.ert_s, cell.ert_s());
        assert_eq!(row.repetition, cell.median_repetition.unwrap());
    }
}

#[test]
fn reported_repetition_is_the_lower_median() {
    let report = run_bench(&config(Isolation::InProcess, vec![1], 4, small_workload(2))).unwrap();
    let cell = &report.grid[0];
    let mut spans: Vec<f64> = cell.repetitions.iter().map(|r| r.timing.unwrap().makespan_s).collect();
    spans.sort_by(f64::total_cmp);
    assert_eq!(cell.makespan_s().unwrap(), spans[1]);
}

#[test]
fn concurrent_instances_finish_close_together() {
    let report = run_bench(&config(Isolation::Process, vec![2], 3, small_workload(40))).unwrap();
    let times = report.grid[0].per_instance_s();
    let (lo, hi) = times.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    assert!((hi - lo) / hi < 0.25, "{times:?}");
}

#[test]
fn failed_cells_keep_their_cause() {
    let mut cfg = config(Isolation::Process, vec![1, 2], 2, small_workload(1));
    cfg.instance_program = Some(PathBuf::from("/nonexistent/swgnss"));
    let report = run_bench(&cfg).unwrap();
    assert_eq!(report.grid.len(), 2);
    for cell in &report.grid {
        assert!(cell.ert_s().is_none());
        assert!(cell.failure().unwrap().contains("cannot start instance"));
    }
    let rows = report.csv_rows();
    assert!(rows.iter().all(|r| r.failed && r.makespan_s.is_none() && !r.cause.is_empty()));
    assert_eq!(report.saturation_n, None);

    cfg.instance_program = Some(PathBuf::from("/bin/false"));
    let report = run_bench(&cfg).unwrap();
    assert!(report.grid.iter().all(|c| c.failure().unwrap().contains("exited")));
}

#[test]
fn crashing_workload_is_reported_not_fabricated() {
    let bad = Workload::Synthetic(SyntheticWorkload {
        channels: 0,
        ..SyntheticWorkload::default()
    });
    assert!(run_bench(&config(Isolation::Process, vec![1], 1, bad)).is_err());
}

#[test]
fn saturation_edge_cases() {
    assert_eq!(detect_saturation(&[(1, 10.0), (2, 9.9)], 0.05).unwrap(), Some(1));
    assert_eq!(detect_saturation(&[(1, 10.0), (2, 9.0)], 0.05).unwrap(), None);
    assert_eq!(detect_saturation(&[(1, 10.0), (2, 9.0)], 0.2).unwrap(), Some(1));
    assert!(detect_saturation(&[(1, 10.0), (1, 9.0)], 0.05).is_err());
    assert!(detect_saturation(&[(1, 10.0), (2, f64::NAN)], 0.05).is_err());
}

#[test]
fn host_descriptor_is_populated() {
    let h = host_info();
    assert!(h.cores >= 1);
    if cfg!(target_os = "linux") {
        assert!(h.memory_bytes.unwrap() > 0);
    }
}

#[test]
fn precision_study_reports_both_runtimes() {
    let report = compare_precision(&PrecisionSuite::default(), 8).unwrap();
    assert_eq!(report.cases.len(), 8);
    assert_eq!(report.decision_mismatches, 0);
    for c in &report.cases {
        assert!(c.double_s > 0.0 && c.single_s > 0.0);
        assert!(c.delta_code_phase_samples <= 0.1 && c.delta_doppler_hz <= 1.0, "{c:?}");
    }
    assert!(report.total_double_s > 0.0 && report.total_single_s > 0.0);
}

#[test]
fn bench_config_validation() {
    let mut cfg = BenchConfig::default();
    assert!(cfg.validate().is_ok());
    cfg.repetitions = 0;
    assert!(cfg.validate().is_err());
    let cfg = BenchConfig {
        instance_counts: vec![],
        ..BenchConfig::default()
    };
    assert!(cfg.validate().is_err());
    let parsed: BenchConfig =
        toml::from_str("instance_counts = [1, 2]\nisolation = \"inprocess\"\n[workload]\nkind = \"synthetic\"\n").unwrap();
    assert_eq!(parsed.isolation, Isolation::InProcess);
    assert!(toml::from_str::<BenchConfig>("instances = [1]").is_err());
}
