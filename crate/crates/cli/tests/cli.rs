use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "shots_per_basis = 200000\nbatches = 4\n";

fn qpcorr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpcorr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    fs::write(dir.join("run.cfg"), body).unwrap();
    "run.cfg".to_string()
}

fn metric(dir: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(dir.join("metrics.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from metrics"))
        .parse()
        .unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

fn run_small(experiment: &str, extra: &str) -> (TempDir, Output) {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("experiment = {experiment}\n{SMALL}output_dir = out\n{extra}"));
    let out = qpcorr(tmp.path(), &["run", &cfg]);
    (tmp, out)
}

#[test]
fn ground_reference_run() {
    let (tmp, out) = run_small("reference_g", "");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    assert!(metric(&dir, "sigma_z") > 0.95);
    assert!(metric(&dir, "max_field_moment_order_1_2") < 0.1);
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    for figure in ["1e", "2a", "2b", "2c/3"] {
        assert!(manifest.contains(&format!("\t{figure}\t")), "figure {figure} missing");
    }
    for (name, _) in files(&dir) {
        assert!(name == "manifest.txt" || manifest.contains(&format!("{name}\t")), "{name} not in manifest");
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let (a, out_a) = run_small("bell", "shot_logs = true\n");
    let (b, out_b) = run_small("bell", "shot_logs = true\n");
    assert!(out_a.status.success() && out_b.status.success());
    assert_eq!(out_a.stdout, out_b.stdout);
    let fa = files(&a.path().join("out"));
    assert!(fa.iter().any(|(n, _)| n == "shots_x.log"));
    assert_eq!(fa, files(&b.path().join("out")));

    let (c, _) = run_small("bell", "seed = 7\n");
    assert_ne!(
        fs::read(a.path().join("out/moments.tsv")).unwrap(),
        fs::read(c.path().join("out/moments.tsv")).unwrap()
    );
}

#[test]
fn report_reproduces_derived_files() {
    let (tmp, out) = run_small("bell", "");
    assert!(out.status.success());
    let dir = tmp.path().join("out");
    let before = files(&dir);
    for derived in ["metrics.txt", "manifest.txt", "rho_mle_re.csv", "grid_z.csv", "histogram_y.csv"] {
        fs::remove_file(dir.join(derived)).unwrap();
    }
    let rep = qpcorr(tmp.path(), &["report", "out"]);
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    assert_eq!(rep.stdout, out.stdout);
    assert_eq!(files(&dir), before);
}

#[test]
fn explicit_default_sequence_changes_nothing() {
    let (a, out_a) = run_small("bell", "");
    let (b, out_b) = run_small("bell", "sequence = pulse ge pi x 10e-9; swap ge 1.923076923076923e-9\n");
    let (c, out_c) = run_small("bell", "sequence = pulse ge pi x 10e-9; swap ge 3.846153846153846e-9\n");
    assert!(out_a.status.success() && out_b.status.success() && out_c.status.success());
    let fidelity = |t: &TempDir| metric(&t.path().join("out"), "fidelity");
    assert!((fidelity(&a) - fidelity(&b)).abs() < 0.01);
    // a full swap leaves |1g⟩, far from the Bell state
    assert!(fidelity(&c) < 0.7);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    for body in ["experiment = bell\ncolour = red\n", "shots_per_basis = 1e6\n", "experiment = bell\nbatches = 1\n"] {
        let cfg = write_config(tmp.path(), body);
        assert_eq!(qpcorr(tmp.path(), &["run", &cfg]).status.code(), Some(2), "{body:?}");
    }
    assert_eq!(qpcorr(tmp.path(), &["run", "missing.cfg"]).status.code(), Some(2));
    assert_eq!(qpcorr(tmp.path(), &["frobnicate"]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "experiment = reference_g\n");
    let out = Command::new(env!("CARGO_BIN_EXE_qpcorr"))
        .args(["run", &cfg])
        .current_dir(tmp.path())
        .env("QPCORR_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("blocker"), "").unwrap();
    let cfg = write_config(tmp.path(), &format!("experiment = reference_g\n{SMALL}output_dir = blocker/out\n"));
    assert_eq!(qpcorr(tmp.path(), &["run", &cfg]).status.code(), Some(1));
    assert_eq!(qpcorr(tmp.path(), &["report", "nowhere"]).status.code(), Some(1));

    let (run, out) = run_small("reference_g", "");
    assert!(out.status.success());
    fs::write(run.path().join("out/histogram_x.bin"), b"truncated").unwrap();
    assert_eq!(qpcorr(run.path(), &["report", "out"]).status.code(), Some(1));
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let dir = tmp.path().join(workers);
        fs::create_dir(&dir).unwrap();
        let cfg = write_config(&dir, &format!("experiment = bell\n{SMALL}output_dir = out\n"));
        let out = Command::new(env!("CARGO_BIN_EXE_qpcorr"))
            .args(["run", &cfg])
            .current_dir(&dir)
            .env("QPCORR_WORKERS", workers)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(files(&dir.join("out")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn selftest_detects_corrupted_cache() {
    let (tmp, out) = run_small("reference_g", "");
    assert!(out.status.success());
    let ok = qpcorr(tmp.path(), &["selftest"]);
    let text = String::from_utf8_lossy(&ok.stdout).into_owned();
    assert!(ok.status.success(), "{text}");
    assert_eq!(text.matches(": PASS").count(), 5, "{text}");

    let cache = tmp.path().join(".qpcorr-cache");
    let entry = fs::read_dir(&cache).unwrap().next().unwrap().unwrap().path();
    let mut pooled = fs::read(entry.join("pooled.tsv")).unwrap();
    pooled.extend_from_slice(b"0\t0\ti\t1\t0\t0\n");
    fs::write(entry.join("pooled.tsv"), pooled).unwrap();
    let bad = qpcorr(tmp.path(), &["selftest"]);
    let text = String::from_utf8_lossy(&bad.stdout).into_owned();
    assert!(!bad.status.success());
    assert!(text.contains("selftest vacuum-reference cache: FAIL"), "{text}");

    // a run with the corrupted entry recomputes and repairs it
    let rerun = qpcorr(tmp.path(), &["run", "run.cfg"]);
    assert!(rerun.status.success());
    assert!(String::from_utf8_lossy(&rerun.stderr).contains("recomputing"));
    assert!(qpcorr(tmp.path(), &["selftest"]).status.success());
}
