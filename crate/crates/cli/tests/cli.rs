use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nlslab"));
    c.env("NLSLAB_THREADS", "2").env("RUST_LOG", "warn");
    c
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
}

#[test]
fn spectrum_of_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spectrum.csv");
    let status = bin()
        .args(["spectrum", "--config"])
        .arg(scenario("zero.json"))
        .args(["--K", "5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,lambda_minus,lambda_plus,tau,gamma,open"
    );
    assert_eq!(lines.count(), 11);
}

#[test]
fn sigma_accepts_negative_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sigma.csv");
    let status = bin()
        .args(["sigma", "--config"])
        .arg(scenario("constant.json"))
        .args(["--n", "-2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("# n = -2"));
    assert!(text.contains("k,tau_k,sigma_k_n,alpha_k_n,residual"));
}

#[test]
fn frequencies_and_compare_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let freq = dir.path().join("f.csv");
    assert!(bin()
        .args(["frequencies", "--config"])
        .arg(scenario("plane_wave.json"))
        .args(["--K", "6", "--out"])
        .arg(&freq)
        .status()
        .unwrap()
        .success());
    let text = fs::read_to_string(&freq).unwrap();
    assert!(text.starts_with("n,omega_nls,omega_renorm,rho,weighted_rho"));
    assert_eq!(text.lines().count(), 14);

    let cmp = dir.path().join("c.csv");
    assert!(bin()
        .args(["compare", "--config"])
        .arg(scenario("plane_wave.json"))
        .args(["--ref", "w", "--s", "1", "--T", "1", "--out"])
        .arg(&cmp)
        .status()
        .unwrap()
        .success());
    assert!(fs::read_to_string(&cmp).unwrap().contains("t,norm"));
}

#[test]
fn checks_on_scenario_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["checks", "--config"])
        .arg(scenario("constant.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("[PASS] criterion  2"), "{stdout}");
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        "{\n \"name\": \"x\",\n \"profile\": {\"kind\": \"zero\"},\n \"K\": \"many\"\n}",
    )
    .unwrap();
    let output = bin()
        .args(["spectrum", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("s.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("line 4"), "{stderr}");
}

#[test]
fn bad_thread_count_is_rejected() {
    let output = bin()
        .env("NLSLAB_THREADS", "zero")
        .args(["checks", "--level", "quick"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn simulate_requires_a_time_interval() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["simulate", "--config"])
        .arg(scenario("zero.json"))
        .arg("--out")
        .arg(dir.path().join("t.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let out = dir.path().join("t2.csv");
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(scenario("plane_wave.json"))
        .args(["--T", "0.01", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    assert!(fs::read_to_string(out).unwrap().starts_with("t,n,re,im"));
}
