use std::path::Path;
use std::process::{Command, Output};

fn ncorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncorm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, data: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    let text = format!(
        "[data]\npath = {:?}\n\n[sampler]\niterations = 40\nburn_in = 10\nthin = 2\nv_updates = 5\n{extra}",
        data.display().to_string()
    );
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn simulate_fit_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    let out = ncorm(&["simulate", "--design", "i", "--n", "30", "--seed", "3", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().next(), Some("x,y"));
    assert_eq!(text.lines().count(), 31);

    let config = write_config(dir.path(), &data, "");
    let fitted = dir.path().join("fit");
    let out = ncorm(&["fit", "--config", &config, "--out", fitted.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["chain0.jsonl", "trace0.csv", "report.txt"] {
        assert!(fitted.join(f).exists(), "{f} missing");
    }

    let grid = dir.path().join("density.csv");
    let archive = fitted.join("chain0.jsonl");
    let out = ncorm(&[
        "predict", "--archive", archive.to_str().unwrap(), "--x", "0.25,0.75", "--y-min", "-3",
        "--y-max", "3", "--y-points", "61", "--out", grid.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&grid)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 122);
    for x in [0.25, 0.75] {
        let curve: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == x).collect();
        let mass: f64 = curve.windows(2).map(|w| 0.5 * 0.1 * (w[0][2] + w[1][2])).sum();
        assert!((mass - 1.0).abs() < 0.05, "x={x}: mass {mass}");
    }
}

#[test]
fn same_seed_gives_the_same_archive() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    ncorm(&["simulate", "--design", "iii", "--n", "20", "--out", data.to_str().unwrap()]);
    let config = write_config(dir.path(), &data, "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&ncorm(&["fit", "--config", &config, "--seed", "9", "--out", d.to_str().unwrap()])), 0);
    }
    assert_eq!(
        std::fs::read(a.join("chain0.jsonl")).unwrap(),
        std::fs::read(b.join("chain0.jsonl")).unwrap()
    );
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    ncorm(&["simulate", "--design", "i", "--n", "10", "--out", data.to_str().unwrap()]);
    let config = write_config(dir.path(), &data, "bogus_key = 1\n");
    let out = ncorm(&["fit", "--config", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let config = write_config(dir.path(), &data, "\n[estimator]\na = -1.0\n");
    assert_eq!(code(&ncorm(&["fit", "--config", &config])), 2);
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x,y\n0.1,0.5\n0.2,oops\n").unwrap();
    let config = write_config(dir.path(), &data, "");
    let out = ncorm(&["fit", "--config", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let missing = dir.path().join("nowhere.jsonl");
    let out = ncorm(&["predict", "--archive", missing.to_str().unwrap(), "--x", "0.5", "--out", "p.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn cross_validation_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    ncorm(&["simulate", "--design", "ii", "--n", "16", "--out", data.to_str().unwrap()]);
    let config = write_config(dir.path(), &data, "");
    let table = dir.path().join("cv.csv");
    let out = ncorm(&["cv", "--config", &config, "--folds", "4", "--out", table.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dataset,params,LPS,SE"));
    let row = lines.next().unwrap();
    assert!(row.contains("folds=4"));
    assert!(lines.next().is_none());
}

#[test]
fn short_self_check_passes() {
    let out = ncorm(&["check", "--iterations", "3000"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"));
}
