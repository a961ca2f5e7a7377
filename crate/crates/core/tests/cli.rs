use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nesc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nesc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "preset = fixed-demand\nsolver.horizon = 20\nnoise.sigma = 50\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = nesc(&["run", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", "7"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ta = fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(ta, fs::read(b.join("trajectory.csv")).unwrap());
    let header = String::from_utf8(ta).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("t,z1,"));
    assert!(header.ends_with(",ne_residual,price,mismatch"));

    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("noise.seed = 7"));
    assert!(manifest.contains("resolved.kappa = 0.1778, 0.1238, 0.1824, 0.15"));
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "preset = bilinear\nsolver.horizon = 15\n");
    let first = tmp.path().join("first");
    assert!(nesc(&["run", "--config", &cfg, "--out", first.to_str().unwrap()]).status.success());
    // the manifest minus its resolved lines is itself a config
    let manifest = fs::read_to_string(first.join("manifest.txt")).unwrap();
    let replay: String = manifest
        .lines()
        .filter(|l| !l.starts_with("resolved.") && !l.starts_with("output.dir"))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg2 = write_config(tmp.path(), &replay);
    let second = tmp.path().join("second");
    assert!(nesc(&["run", "--config", &cfg2, "--out", second.to_str().unwrap()]).status.success());
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(second.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "preset = bilinear\nesc.gamma = -1\n");
    assert_eq!(nesc(&["run", "--config", &bad]).status.code(), Some(2));
    let unknown = write_config(tmp.path(), "preset = bilinear\nsolver.stepsize = 1\n");
    let out = nesc(&["run", "--config", &unknown]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(nesc(&["run", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(nesc(&["run", "--config", "/nonexistent/x.cfg"]).status.code(), Some(1));
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "preset = bilinear\ncontroller = baseline-unfiltered\nsolver.horizon = 100\n",
    );
    let out = nesc(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    // the partial trajectory is still written
    assert!(tmp.path().join("o/trajectory.csv").exists());
}

#[test]
fn validate_and_negative_controls() {
    let ok = nesc(&["validate"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let table = String::from_utf8(ok.stdout).unwrap();
    assert!(table.starts_with("check\tstatus\tdetail\n"));
    assert!(!table.contains("\tfail\t"));

    let flipped = nesc(&["validate", "--inject-sign-flip"]);
    assert_eq!(flipped.status.code(), Some(1));
    let table = String::from_utf8(flipped.stdout).unwrap();
    assert!(table.contains("dither-average-quadratic\tfail"));

    let anti = nesc(&["validate", "--inject-non-monotone"]);
    assert_eq!(anti.status.code(), Some(1));
    assert!(String::from_utf8(anti.stdout)
        .unwrap()
        .contains("monotone-fixed-demand\tfail"));
}

#[test]
fn counterexample_reports_positive_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nesc(&["counterexample", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lyapunov_rate 0.200000"));
    let csv = fs::read_to_string(tmp.path().join("counterexample.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",lyapunov"));
}

#[test]
fn bilinear_writes_three_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "preset = bilinear\nsolver.horizon = 50\n");
    let out = nesc(&["bilinear", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["nesc", "baseline-unfiltered", "baseline-filtered"] {
        assert!(tmp.path().join(format!("bilinear_{name}.csv")).exists());
    }
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn noise_study_writes_histograms() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "preset = fixed-demand\nsolver.horizon = 40\nstudy.runs = 4\nstudy.tail = 10\n",
    );
    let out = nesc(&["noise-study", "--config", &cfg, "--sigma", "100", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = fs::read_to_string(tmp.path().join("histogram_sigma_100.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bin_left,bin_right,count"));
    let total: u64 = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 4 * 11);
}
