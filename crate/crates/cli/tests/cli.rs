use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sde-gridopt");

const OU: &str = r#"
[model]
a = -1.0
b = 1.0
horizon = 1.0
x0 = [1.0]

[grid]
sweep = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]

[mc]
paths = 2000
seed = 11

[gramian]
panels = 32
"#;

const ZERO_DRIFT: &str = r#"
[model]
a = [[0.0, 0.0], [0.0, 0.0]]
b = [[1.0, 0.0], [0.5, 2.0]]
horizon = 2.0
x0 = [0.0, 1.0]

[grid]
sweep = [8, 16]

[mc]
paths = 500
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn sde-gridopt")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Parses one CSV table; empty cells become NaN.
fn table(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| if c.is_empty() { f64::NAN } else { c.parse().unwrap_or(f64::NAN) })
                .collect()
        })
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn gramian_endpoints_for_ou() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.toml", OU);
    let out = dir.path().join("out");
    stdout_ok(&["gramian", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    let (header, rows) = table(&std::fs::read_to_string(out.join("gramian.csv")).unwrap());
    assert_eq!(rows.len(), 33);
    let t = column(&header, "t");
    let f = column(&header, "F");
    let s = column(&header, "S");
    assert_eq!(rows[0][t], 0.0);
    assert_eq!(rows[32][t], 1.0);
    // At t = T the weight reduces to A^2 B^2 / 12 and S vanishes.
    assert!((rows[32][f] - 1.0 / 12.0).abs() < 1e-14);
    assert_eq!(rows[32][s], 0.0);
    assert!(out.join("weights.csv").exists());
}

#[test]
fn zero_drift_has_zero_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", ZERO_DRIFT);
    let text = stdout_ok(&["gramian", "--config", cfg.to_str().unwrap()]);
    let first = text.split("\n\n").next().unwrap();
    let (header, rows) = table(first);
    for name in ["F", "S"] {
        let c = column(&header, name);
        assert!(rows.iter().all(|r| r[c] == 0.0), "{name} not zero");
    }
}

#[test]
fn convergence_uniform_approaches_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.toml", OU);
    let (header, rows) = table(&stdout_ok(&["convergence", "--config", cfg.to_str().unwrap()]));
    let c = column(&header, "N2T_N");
    let limit = rows.last().unwrap()[c];
    assert!((limit - 0.036_027_696_5).abs() < 1e-9);
    let gaps: Vec<f64> = rows[..rows.len() - 1].iter().map(|r| (r[c] - limit).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps.last().unwrap() / limit < 1e-8);
}

#[test]
fn convergence_optimal_grid_reaches_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let text = OU.replace("[grid]", "[grid]\nkind = \"terminal-optimal\"");
    let cfg = write_config(dir.path(), "ou.toml", &text);
    let (header, rows) = table(&stdout_ok(&["convergence", "--config", cfg.to_str().unwrap()]));
    let c = column(&header, "N2T_N");
    let limit = rows.last().unwrap()[c];
    assert!((limit - 0.032_401_342_7).abs() < 1e-9);
    let finest = rows[rows.len() - 2][c];
    assert!((finest - limit).abs() / limit < 1e-6);
}

#[test]
fn convergence_zero_drift_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", ZERO_DRIFT);
    let (header, rows) = table(&stdout_ok(&["convergence", "--config", cfg.to_str().unwrap()]));
    for name in ["T_N", "I_N", "N2T_N", "N2I_N"] {
        let c = column(&header, name);
        // The trailing limit row only carries the rescaled columns.
        assert!(rows.iter().filter(|r| !r[c].is_nan()).all(|r| r[c] == 0.0));
        assert!(rows[..rows.len() - 1].iter().all(|r| r[c] == 0.0));
    }
}

#[test]
fn mc_verify_is_reproducible_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let text = OU.replace("sweep = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]", "sweep = [8, 32]");
    let cfg = write_config(dir.path(), "ou.toml", &text);
    let cfg = cfg.to_str().unwrap();
    let a = stdout_ok(&["mc-verify", "--config", cfg]);
    let b = stdout_ok(&["mc-verify", "--config", cfg]);
    assert_eq!(a, b);
    let c = stdout_ok(&["mc-verify", "--config", cfg, "--seed", "12"]);
    assert_ne!(a, c);
    let d = stdout_ok(&["mc-verify", "--config", cfg, "--seed", "11"]);
    assert_eq!(a, d);

    let (header, rows) = table(a.split("\n\n").next().unwrap());
    let conv = stdout_ok(&["convergence", "--config", cfg]);
    let (ch, crows) = table(&conv);
    let predicted = column(&header, "predicted");
    let tn = column(&ch, "T_N");
    for (r, cr) in rows.iter().zip(&crows) {
        assert_eq!(r[predicted], cr[tn]);
        assert!(r[column(&header, "zscore")].abs() < 4.0);
    }
}

#[test]
fn mc_verify_zero_drift_has_no_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", ZERO_DRIFT);
    let out = dir.path().join("o");
    stdout_ok(&["mc-verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    for file in ["mc_verify.csv", "mc_verify_integral.csv"] {
        let (header, rows) = table(&std::fs::read_to_string(out.join(file)).unwrap());
        let c = column(&header, "sample_mse");
        assert!(rows.iter().all(|r| r[c] == 0.0));
    }
}

#[test]
fn ou_table_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{OU}\n[ou_table]\nhorizons = [0.01, 1.0, 30.0]\n");
    let cfg = write_config(dir.path(), "ou.toml", &text);
    let (header, rows) = table(&stdout_ok(&["ou-table", "--config", cfg.to_str().unwrap()]));
    let ratio = column(&header, "ratio");
    let quad = column(&header, "ratio_quad");
    let over = column(&header, "ratio_over_asymptote");
    assert!((rows[0][ratio] - 1.0).abs() < 1e-4);
    assert!((rows[1][ratio] - 1.111_919_863).abs() < 1e-8);
    assert!((rows[2][over] - 1.0).abs() < 1e-6);
    for r in &rows {
        assert!((r[ratio] - r[quad]).abs() / r[ratio] < 1e-8);
    }
}

#[test]
fn ou_table_rejects_other_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", ZERO_DRIFT);
    let out = run(&["ou-table", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: kind=config message="), "{err}");
}

#[test]
fn errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[model]\na = -1.0\nb = 1.0\nhorizon = -2.0\n");
    let cases: [(&[&str], &str); 4] = [
        (&["convergence", "--config", bad.to_str().unwrap()], "error: kind="),
        (&["gramian", "--config", "/nonexistent/x.toml"], "error: kind=io "),
        (&["frobnicate"], "error: kind=usage "),
        (&["gramian"], "error: kind=usage "),
    ];
    for (args, prefix) in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.starts_with(prefix), "{args:?}: {err}");
        assert_eq!(err.lines().count(), 1, "{err}");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "x.toml", &format!("{OU}\n[extra]\nfoo = 1\n"));
    let out = run(&["gramian", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: kind=config"));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("mc-verify"));
}

#[test]
fn mc_verify_ou_full_size_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = OU
        .replace("sweep = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]", "n = 32")
        .replace("paths = 2000", "paths = 100000");
    let cfg = write_config(dir.path(), "ou.toml", &text);
    let cfg = cfg.to_str().unwrap();
    let a = stdout_ok(&["mc-verify", "--config", cfg]);
    let b = stdout_ok(&["mc-verify", "--config", cfg]);
    assert_eq!(a, b);
    let (header, rows) = table(a.split("\n\n").next().unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&header, "N")], 32.0);
    assert!(rows[0][column(&header, "zscore")].abs() <= 3.0);
}
