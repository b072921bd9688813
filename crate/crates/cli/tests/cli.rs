use std::path::Path;
use std::process::{Command, Output};

const STEIN_STEIN: &str = r#"
[model]
s0 = 1.0
nu = 0.25
rho = -0.7
[model.kernel]
type = "constant"
[model.curve]
type = "affine"
x0 = 0.1
theta = 0.1
[numerics]
n = 32
"#;

fn gaussvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussvol"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn transform_at_origin_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", &format!("{STEIN_STEIN}[transform]\nz = [0.0]\n"));
    let o = gaussvol(&["transform", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "z,re,im\n0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0\n"
    );
}

#[test]
fn invalid_hurst_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = STEIN_STEIN
        .replace("type = \"constant\"", "type = \"riemann_liouville\"\nh = 1.2")
        .replace("rho = -0.7", "rho = 2.0");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = gaussvol(&["price", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("H must lie in (0, 1)"), "{err}");
    assert!(err.contains("rho must lie in [-1, 1]"), "{err}");
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &format!("{STEIN_STEIN}sigma = 1.0\n"));
    let o = gaussvol(&["price", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_with_config_code() {
    let o = gaussvol(&["smile"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn smile_output_is_deterministic_and_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{STEIN_STEIN}[smile]\nmaturities = [0.5, 1.0]\nlog_moneyness = [-0.1, 0.0, 0.1]\n");
    let cfg = write_config(dir.path(), "s.toml", &text);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = gaussvol(&["smile", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("maturity,log_moneyness,implied_vol"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[2] > 0.1 && r[2] < 0.4, "{r:?}");
    }
    // negative correlation: downward sloping smile
    assert!(rows[0][2] > rows[2][2]);
}

#[test]
fn simulate_repeats_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{STEIN_STEIN}[mc]\nn_steps = 20\nseed = 11\n[simulate]\npaths = 3\n");
    let cfg = write_config(dir.path(), "m.toml", &text);
    let run = |seed: &str| {
        let o = gaussvol(&["simulate", "--config", &cfg, "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let first = run("5");
    assert_eq!(first, run("5"));
    assert_ne!(first, run("6"));
    assert!(first.starts_with("path,t,X,X2,S\n"));
    assert_eq!(first.lines().count(), 1 + 3 * 20);
}

#[test]
fn calibration_recovers_vol_of_vol_from_skews() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("skew.csv");
    let text = format!(
        "{STEIN_STEIN}[skew]\nmaturities = [0.25, 0.5, 1.0]\n[calibrate]\ntargets_path = \"skew.csv\"\nfree = [\"nu\"]\ninit = [0.4]\nbudget = 80\n"
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = gaussvol(&["skew", "--config", &cfg, "--out", targets.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = gaussvol(&["calibrate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let nu: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("nu,"))
        .expect("nu row")
        .parse()
        .unwrap();
    assert!((nu - 0.25).abs() < 1e-4, "{report}");
}

#[test]
fn selftest_checks_bundled_oracle_smile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "st.toml", "[selftest]\ncriteria = [1, 6]\n");
    let o = gaussvol(&["selftest", "--config", &cfg, "--n", "128"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("[PASS] golden ODE smile: max abs vol diff"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);
}

#[test]
fn selftest_failure_exits_with_acceptance_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "st.toml", "[selftest]\ncriteria = [1]\n");
    // a four-point grid cannot reproduce the oracle smile to 1e-2
    let o = gaussvol(&["selftest", "--config", &cfg, "--n", "4"]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    assert!(stdout(&o).contains("[FAIL] golden"));
}

#[test]
fn regenerated_golden_matches_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("golden.csv");
    let o = gaussvol(&["selftest", "--regenerate-golden", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bundled = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/golden/ode_smile.csv")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), bundled);
}
