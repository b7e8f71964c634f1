use std::path::Path;
use std::process::{Command, Output};

fn arpla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arpla")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = arpla(&["run", "--scenario", "hmm3-blockage", "--trials", "20", "--seed", "4", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("hmm3-blockage.csv")).unwrap();
    assert!(text.contains("# seed,4"));
    assert!(text.contains("# trials,20"));
}

#[test]
fn config_file_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        r#"
        [[scenario]]
        name = "first"
        detector = "sprt"
        trials = 10
        [[scenario]]
        name = "second"
        detector = "hmm2"
        trials = 10
        format = "json-lines"
        "#,
    );
    let out = dir.path().to_str().unwrap();
    let o = arpla(&["run", "--config", &cfg, "--scenario", "second", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("second.jsonl").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "name = \"x\"\ndetector = \"hmm9\"\n");
    assert_eq!(code(&arpla(&["run", "--config", &bad])), 2);
    let zero = write(dir.path(), "zero.toml", "name = \"x\"\ndetector = \"hmm2\"\ntrials = 0\n");
    assert_eq!(code(&arpla(&["run", "--config", &zero])), 2);
    assert_eq!(code(&arpla(&["run", "--scenario", "no-such-scenario"])), 2);
    assert_eq!(code(&arpla(&["run", "--scenario", "hmm2-los", "--spoofer", "gan"])), 2);
}

#[test]
fn numeric_faults_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // every score is NaN once the noise variance overflows the observation
    let cfg = write(
        dir.path(),
        "nan.toml",
        r#"
        name = "overflow"
        detector = "hmm2"
        trials = 2
        [channel]
        m_t = 4
        m_r = 4
        rho_t = 0.7
        r_tx = 0.5
        r_rx = 0.5
        noise_var = 1e308
        k0 = 10.0
        sigma_phi = 0.0
        los_angles = [0.3, -0.2]
        "#,
    );
    let o = arpla(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn export_then_validate_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("alice.jsonl");
    let trace = trace.to_str().unwrap();
    let o = arpla(&["export-csi", "--n", "400", "--out", trace]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = arpla(&["validate-trace", "--path", trace]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("400 records"));
    let spoofer = format!("trace:{trace}");
    let out = dir.path().to_str().unwrap();
    let o = arpla(&["run", "--scenario", "hmm2-los", "--trials", "5", "--spoofer", &spoofer, "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_trace_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.jsonl", "{\"version\":1,\"m_t\":2,\"m_r\":2,\"label\":\"x\"}\n{\"t\":1,\"re\":[1.0],\"im\":[0.0]}\n");
    assert_eq!(code(&arpla(&["validate-trace", "--path", &bad])), 2);
}

#[test]
fn analyze_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = arpla(&["analyze", "--scenario", "hmm2-los", "--trajectories", "2000", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("hmm2-los-curves.jsonl")).unwrap();
    assert!(text.lines().count() > 2);
}
