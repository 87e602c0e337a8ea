use std::process::{Command, Output};

fn spinclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinclust"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(spinclust(&["run", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(spinclust(&["bogus"]).status.code(), Some(2));
    assert_eq!(spinclust(&["synthesize", "--target", "toffoli"]).status.code(), Some(2));
    assert_eq!(spinclust(&["run", "--m", "two"]).status.code(), Some(2));
}

#[test]
fn identity_synthesis_writes_empty_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.toml");
    let o = spinclust(&["synthesize", "--target", "identity", "-o", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let file = spinclust::synthesis::GateFile::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(file.tau_f.len(), 0);
    assert_eq!(file.unitary_fidelity, 1.0);
}

#[test]
fn unreachable_threshold_exits_one() {
    let o = spinclust(&[
        "synthesize", "--target", "swap", "--max-k", "1", "--restarts", "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_csv_has_provenance_header() {
    let o = spinclust(&["run", "--ideal", "--m", "2", "--n", "2", "--seed", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# spinclust "));
    assert!(lines[1].starts_with("# config_hash="));
    assert_eq!(lines[2], "# seed=5");
    let header = lines.iter().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("m,n,t2_us,trials,fidelity"));
    let row = lines.last().unwrap();
    assert!(row.starts_with("2,2,inf,"));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "m = 3\nn = 1\nideal = true\nseed = 9\n").unwrap();
    let a = stdout(&spinclust(&["run", "--config", cfg.to_str().unwrap()]));
    assert!(a.contains("# m=3") && a.lines().last().unwrap().starts_with("3,1,"));
    let b = stdout(&spinclust(&["run", "--config", cfg.to_str().unwrap(), "--n", "2"]));
    assert!(b.lines().last().unwrap().starts_with("3,2,"));
    let hash = |s: &str| s.lines().nth(1).unwrap().to_string();
    assert_ne!(hash(&a), hash(&b));
    std::fs::write(&cfg, "[table]\nm = 3\n").unwrap();
    assert_eq!(spinclust(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn runs_are_reproducible() {
    let args = ["run", "--m", "2", "--n", "1", "--t2-us", "2", "--trials", "50", "--seed", "3", "--workers", "1"];
    let a = spinclust(&args);
    let b = spinclust(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_passes_and_is_deterministic() {
    let a = spinclust(&["verify", "--trials", "50"]);
    let b = spinclust(&["verify", "--trials", "50"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(!stdout(&a).contains("FAIL"));
}

#[test]
fn verify_fails_under_injected_noise() {
    let o = spinclust(&["verify", "--trials", "50", "--inject-b", "1e10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL noisy_2x2_t2_300us"));
}

#[test]
fn figures_emit_csv() {
    let c = stdout(&spinclust(&["figure", "fig3c", "--points", "5", "--tau-ns", "1.7"]));
    let rows: Vec<&str> = c.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "tau_ns,delta_omega,delta_omega_rad_s,fidelity");
    assert_eq!(rows.len(), 6);
    let r = stdout(&spinclust(&["figure", "rates"]));
    assert!(r.contains("2x5_3us,0.85,10,"));
    let b = stdout(&spinclust(&["figure", "fig3b", "--trials", "20", "--max-n", "3", "--t2-us", "2,300"]));
    assert_eq!(b.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2 * 3);
}

#[test]
fn rate_command() {
    let o = spinclust(&["rate", "--eta", "0.85", "--photons", "10", "--duration-us", "3"]);
    let last = stdout(&o).lines().last().unwrap().to_string();
    let rate: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!((rate - 0.85f64.powi(10) / 3e-6).abs() < 1e-6);
}

#[test]
fn preset_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("systems.toml"),
        "format_version = 1\n[toy]\nlabel = \"Toy\"\na_mhz = 50.0\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spinclust"))
        .arg("presets")
        .env("SPINCLUST_PRESET_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(stdout(&o).trim(), "toy\tToy");
}
