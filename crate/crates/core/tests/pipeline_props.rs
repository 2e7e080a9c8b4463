mod common;

use frpsim::fixtures;
use frpsim::pipeline::report::{emit_report, ReportFormat};
use frpsim::pipeline::{run_with_instance, RunConfig};
use frpsim::suc::SucSolution;
use std::path::Path;

fn config(cache: Option<&Path>) -> RunConfig {
    RunConfig {
        scenarios: 3,
        eval_scenarios: 3,
        seed: 5,
        solver: common::solver(),
        cache_dir: cache.map(Path::to_path_buf),
        ..RunConfig::new("ring.json")
    }
}

fn emit_all(report: &frpsim::pipeline::ComparisonReport, dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for format in [ReportFormat::Table, ReportFormat::Csv, ReportFormat::Structured] {
        for path in emit_report(report, format, dir).unwrap() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&path).unwrap()));
        }
    }
    files.sort();
    files
}

#[test]
fn repeated_runs_write_identical_reports() {
    let inst = fixtures::ramping_ring(3).with_sigma_fraction(0.08);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_with_instance(&inst, &config(None)).unwrap().0;
    let second = run_with_instance(&inst, &config(None)).unwrap().0;
    let (fa, fb) = (emit_all(&first, a.path()), emit_all(&second, b.path()));
    assert!(fa.len() >= 3);
    assert_eq!(fa, fb);
}

#[test]
fn second_run_reads_the_cached_commitment() {
    let inst = fixtures::ramping_ring(3).with_sigma_fraction(0.08);
    let cache = tempfile::tempdir().unwrap();
    let first = run_with_instance(&inst, &config(Some(cache.path()))).unwrap().0;
    let cached: Vec<_> = std::fs::read_dir(cache.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(cached.len(), 1);

    // mark the stored solution so a fresh solve could not reproduce it
    let mut sol: SucSolution = serde_json::from_str(&std::fs::read_to_string(&cached[0]).unwrap()).unwrap();
    let marker = 123_456.75;
    sol.expected_total_cost = marker;
    std::fs::write(&cached[0], serde_json::to_string(&sol).unwrap()).unwrap();

    let second = run_with_instance(&inst, &config(Some(cache.path()))).unwrap().0;
    let (s1, s2) = (first.suc.unwrap(), second.suc.unwrap());
    assert_ne!(s1.expected_total_cost, marker);
    assert_eq!(s2.expected_total_cost, marker);
    assert_eq!(s1.commitment, s2.commitment);

    // a different seed misses the cache
    let third = run_with_instance(&inst, &RunConfig { seed: 6, ..config(Some(cache.path())) }).unwrap().0;
    assert_ne!(third.suc.unwrap().expected_total_cost, marker);
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 2);
}
