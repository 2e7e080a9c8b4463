use frpsim::fixtures;
use frpsim::instance::save_instance;
use std::path::Path;
use std::process::{Command, Output};

fn frpsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frpsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ring_file(dir: &Path) -> String {
    let inst = fixtures::ramping_ring(2).with_sigma_fraction(0.05);
    let path = dir.join("ring.json");
    save_instance(&inst, &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_instance_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = frpsim(&["sample", "--instance", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_instance_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"buses\": 3}").unwrap();
    let out = frpsim(&["run", "--instance", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_scenarios_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let inst = ring_file(dir.path());
    let out = frpsim(&["sample", "--instance", &inst, "--scenarios", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_commitment_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    // committed units cannot back down far enough and there is no spill
    let inst = fixtures::ramping_ring(2).scaled_load(0.05);
    let path = dir.path().join("light.json");
    save_instance(&inst, &path).unwrap();
    let out = frpsim(&["suc", "--instance", "light.json", "--scenarios", "2"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn staged_commands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let inst = ring_file(dir.path());
    let steps: [&[&str]; 5] = [
        &["suc", "--instance", &inst, "--scenarios", "3"],
        &["frp", "--instance", &inst, "--scenarios", "3", "--suc", "suc.json"],
        &["damc", "--instance", &inst, "--variant", "proposed", "--frp", "frp.json", "--suc", "suc.json"],
        &["evaluate", "--instance", &inst, "--dam", "dam.json", "--eval-scenarios", "2"],
        &["settle", "--instance", &inst, "--dam", "dam.json", "--traces", "traces.json"],
    ];
    for args in steps {
        let out = frpsim(args, dir.path());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["suc.json", "frp.json", "dam.json", "traces.json", "settlement.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn full_run_writes_every_report_format() {
    let dir = tempfile::tempdir().unwrap();
    let inst = ring_file(dir.path());
    let out = frpsim(
        &["run", "--instance", &inst, "--scenarios", "3", "--eval-scenarios", "2", "--out", "results"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["PROPOSED", "NF", "CI95", "WITHOUT"] {
        assert!(stdout.contains(name), "{stdout}");
    }
    let written: Vec<_> = std::fs::read_dir(dir.path().join("results")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(written.len() >= 3, "{written:?}");
}
