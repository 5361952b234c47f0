use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isolab(dir: &Path, config: &str, args: &[&str], env: &[(&str, &str)]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isolab"));
    cmd.env_clear().arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const COARSE: &str = "
spacing = 0.1
budget = 2000
centers = 6
v_min = 0.5
v_max = 2.0
v_per_decade = 3
profile_tolerance = 0.08
";

#[test]
fn build_phi_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = isolab(dir.path(), "", &["build-phi"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("out/phi.csv"));
    let err = rows.iter().map(|r| (r[1] - 2.0 / (r[0] + 2.0)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
    assert_eq!(rows.last().unwrap()[0], 10.0);
    let text = fs::read_to_string(dir.path().join("out/phi.csv")).unwrap();
    assert!(text.contains("# config_sha256 "));
    assert!(text.contains("isolab-core"));
    let report = fs::read_to_string(dir.path().join("out/phi_report.json")).unwrap();
    assert!(report.contains("\"config_sha256\""));
}

#[test]
fn decreasing_rate_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "rate_kind = \"table\"\nrate_points = [[0.5, 2.0], [1.0, 1.0]]\n";
    let out = isolab(dir.path(), cfg, &["build-phi"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("monotonicity"));
}

#[test]
fn zero_horizon_passes_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = isolab(dir.path(), "", &["build-phi"], &[("ISOLAB_T_MAX", "0")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vacuous"));
    assert_eq!(data_rows(&dir.path().join("out/phi.csv")).len(), 1);
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = isolab(dir.path(), "preset = \"cube\"\n", &["profile"], &[]);
    assert_eq!(unknown.status.code(), Some(2));
    let empty = isolab(dir.path(), "slopes = []\n", &["estimate-a3"], &[]);
    assert_eq!(empty.status.code(), Some(2));
    let typo = isolab(dir.path(), "spacingg = 1\n", &["check"], &[]);
    assert_eq!(typo.status.code(), Some(2));
    // windows run past the solved curve
    let short = isolab(
        dir.path(),
        "escape_rate = \"configured\"\nescape_t_max = 5.0\n",
        &["escape"],
        &[],
    );
    assert_eq!(short.status.code(), Some(2), "{}", String::from_utf8_lossy(&short.stderr));
}

#[test]
fn printed_config_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = isolab(dir.path(), COARSE, &["check", "--print-config"], &[("ISOLAB_SEED", "9")]);
    assert_eq!(first.status.code(), Some(0));
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("seed = 9"));
    let again = isolab(dir.path(), &text, &["check", "--print-config"], &[]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn profile_outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let env = [("ISOLAB_PRESET", "half-space")];
    let ra = isolab(a.path(), COARSE, &["profile"], &env);
    let rb = isolab(b.path(), COARSE, &["profile"], &env);
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(rb.status.code(), Some(0));
    for name in ["profile.csv", "profile_summary.json"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let rows = data_rows_lenient(&a.path().join("out/profile.csv"));
    assert_eq!(rows, 3);
}

fn data_rows_lenient(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1
}
