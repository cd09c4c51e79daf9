//! End-to-end tests of the `odnoise` binary and the shipped fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_odnoise"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn odnoise");
    assert!(
        out.status.success(),
        "command failed: {}\nstderr: {}",
        format!("{cmd:?}"),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn odnoise");
    assert!(!out.status.success(), "expected failure: {cmd:?}");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_field(out: &Output, key: &str) -> f64 {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("missing {key} in output"))
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(bin().args(["generate", "--n", "5", "--seed", "9"]).arg("--out").arg(&a));
    run_ok(bin().args(["generate", "--n", "5", "--seed", "9"]).arg("--out").arg(&b));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    // 5x5 CSV summing to 1
    let text = fs::read_to_string(&a).unwrap();
    let sum: f64 = text
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()))
        .sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn generate_rejects_single_stop() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let err = run_err(bin().args(["generate", "--n", "1", "--seed", "0"]).arg("--out").arg(&out));
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn seed_flag_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(bin().args(["generate", "--n", "4", "--seed", "77"]).arg("--out").arg(&a));
    run_ok(
        bin()
            .args(["generate", "--n", "4"])
            .arg("--out")
            .arg(&b)
            .env("OD_NOISE_SEED", "77"),
    );
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn perturb_golden_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est.csv");
    run_ok(
        bin()
            .arg("perturb")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--spec")
            .arg(fixture("spec.json"))
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        fs::read_to_string(fixture("est_5.csv")).unwrap()
    );
}

#[test]
fn perturb_tiny_amplitude_keeps_input() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"noise":{"terms":[{"kind":"additive","amplitude":1e-15}],"clamped":false,"seed":1}}"#,
    )
    .unwrap();
    let out = dir.path().join("est.csv");
    run_ok(
        bin()
            .arg("perturb")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--spec")
            .arg(&spec)
            .arg("--out")
            .arg(&out),
    );
    let read = |p: &Path| -> Vec<f64> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect::<Vec<f64>>())
            .collect()
    };
    for (a, b) in read(&out).iter().zip(read(&fixture("ref_5.csv"))) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn perturb_clamped_output_is_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"noise":{"terms":[{"kind":"additive","amplitude":0.1}],"clamped":true,"seed":5}}"#,
    )
    .unwrap();
    let out = dir.path().join("est.csv");
    run_ok(
        bin()
            .arg("perturb")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--spec")
            .arg(&spec)
            .arg("--out")
            .arg(&out),
    );
    for line in fs::read_to_string(&out).unwrap().lines().skip(1) {
        for v in line.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap() >= 0.0, "negative cell {v}");
        }
    }
}

#[test]
fn metrics_identical_files_report_undefined_ratios() {
    let out = run_ok(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("ref_5.csv")),
    );
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("ratio_in undefined"), "{text}");
    assert!(text.contains("ratio_out undefined"), "{text}");
    assert_eq!(stdout_field(&out, "err_od"), 0.0);
}

#[test]
fn metrics_fixture_golden_values() {
    // Frozen from an independent spreadsheet-style computation on the
    // shipped fixture pair.
    let out = run_ok(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("est_5.csv")),
    );
    assert_eq!(stdout_field(&out, "err_od"), 0.0576291251105999);
    assert_eq!(stdout_field(&out, "err_in"), 0.1291311062366132);
    assert_eq!(stdout_field(&out, "err_out"), 0.13975140808749623);
    assert_eq!(stdout_field(&out, "ratio_in"), 2.240726472747748);
    assert_eq!(stdout_field(&out, "ratio_out"), 2.4250135295181035);
}

#[test]
fn metrics_with_counts_baseline() {
    // counts_5.csv holds the reference marginals, so the counts-based
    // marginal errors equal the matrix-based ones.
    let plain = run_ok(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("est_5.csv")),
    );
    let counted = run_ok(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("est_5.csv"))
            .arg("--counts")
            .arg(fixture("counts_5.csv")),
    );
    assert!(
        (stdout_field(&plain, "err_in") - stdout_field(&counted, "err_in")).abs() < 1e-12
    );
    assert!(
        (stdout_field(&plain, "err_out") - stdout_field(&counted, "err_out")).abs() < 1e-12
    );
}

#[test]
fn metrics_rejects_bad_counts_normalization() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("c.csv");
    fs::write(
        &counts,
        "stop,boarding_share,alighting_share\nS1,0.9,0.2\nS2,0.3,0.2\nS3,0.1,0.2\nS4,0.1,0.2\nS5,0.1,0.2\n",
    )
    .unwrap();
    let err = run_err(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("est_5.csv"))
            .arg("--counts")
            .arg(&counts),
    );
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("sum to"), "{err}");
}

#[test]
fn malformed_matrix_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "stop,A,B\nA,0.5,0.5\nB,nope,0\n").unwrap();
    let err = run_err(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(&bad)
            .arg("--est")
            .arg(&bad),
    );
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn sweep_fit_infer_round_trip() {
    // Additive noise: ratio at N = 25 is near 5, so inferring from a
    // count error of 5e recovers roughly e.
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{
  "noise": {"terms": [{"kind": "additive", "amplitude": 0.1}], "clamped": false, "seed": 11},
  "sweep": {"n_values": [16, 20, 25, 30, 36, 42, 49, 56, 64, 72, 81, 90, 100],
            "replicates": 40, "reference_seed": 3}
}"#,
    )
    .unwrap();
    let sweep_csv = dir.path().join("sweep.csv");
    run_ok(bin().arg("sweep").arg("--spec").arg(&spec).arg("--out").arg(&sweep_csv));

    let model = dir.path().join("model.csv");
    run_ok(
        bin()
            .arg("fit")
            .arg("--in")
            .arg(&sweep_csv)
            .args(["--frac", "0.4", "--side", "boarding"])
            .arg("--out")
            .arg(&model),
    );

    let e = 0.004;
    let out = run_ok(
        bin()
            .arg("infer")
            .arg("--model")
            .arg(&model)
            .args(["--n", "25"])
            .args(["--count-error", &(5.0 * e).to_string()]),
    );
    let inferred = stdout_field(&out, "err_od");
    assert!((inferred / e - 1.0).abs() < 0.10, "inferred {inferred} vs {e}");

    // out-of-range N refused
    let err = run_err(
        bin()
            .arg("infer")
            .arg("--model")
            .arg(&model)
            .args(["--n", "200", "--count-error", "0.01"]),
    );
    assert!(err.contains("extrapolation refused"), "{err}");
}

#[test]
fn aggregate_size_one_matches_metrics() {
    let metrics = run_ok(
        bin()
            .arg("metrics")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("est_5.csv")),
    );
    let agg = run_ok(
        bin()
            .arg("aggregate")
            .arg("--ref")
            .arg(fixture("ref_5.csv"))
            .arg("--est")
            .arg(fixture("est_5.csv"))
            .args(["--n", "1", "--side", "boarding"]),
    );
    assert_eq!(stdout_field(&metrics, "err_od"), stdout_field(&agg, "err_od"));
}

#[test]
fn report_emits_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    fs::write(
        &sweep,
        "n,mean_ratio_in,mean_ratio_out,sd_ratio_in,sd_ratio_out,mean_err_od\n\
         9,2.8,2.9,0.3,0.3,0.01\n16,3.8,3.9,0.3,0.3,0.01\n25,4.9,5.0,0.3,0.3,0.01\n",
    )
    .unwrap();
    let empirical = dir.path().join("empirical.csv");
    fs::write(&empirical, "n,ratio_in,ratio_out\n27,8.08,11.25\n15,,\n").unwrap();
    let out_csv = dir.path().join("plot.csv");
    let out_svg = dir.path().join("plot.svg");
    run_ok(
        bin()
            .arg("report")
            .arg("--sweep")
            .arg(&sweep)
            .arg("--empirical")
            .arg(&empirical)
            .arg("--out")
            .arg(&out_csv)
            .arg("--svg")
            .arg(&out_svg),
    );
    let csv = fs::read_to_string(&out_csv).unwrap();
    assert!(csv.contains("9,ratio_in,2.8"));
    assert!(csv.contains("9,sqrt_n,3"));
    assert!(csv.contains("27,empirical_in,8.08"));
    let svg = fs::read_to_string(&out_svg).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<circle").count(), 3);
    assert_eq!(svg.matches("<path d=").count(), 2);

    // golden determinism: a second run produces identical bytes
    let out_svg2 = dir.path().join("plot2.svg");
    run_ok(
        bin()
            .arg("report")
            .arg("--sweep")
            .arg(&sweep)
            .arg("--empirical")
            .arg(&empirical)
            .arg("--out")
            .arg(&out_csv)
            .arg("--svg")
            .arg(&out_svg2),
    );
    assert_eq!(fs::read(&out_svg).unwrap(), fs::read(&out_svg2).unwrap());
}

#[test]
fn report_rejects_malformed_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    fs::write(&sweep, "n,mean_ratio_in,mean_ratio_out,sd_ratio_in,sd_ratio_out,mean_err_od\n9,2.8\n").unwrap();
    let err = run_err(
        bin()
            .arg("report")
            .arg("--sweep")
            .arg(&sweep)
            .arg("--out")
            .arg(dir.path().join("plot.csv")),
    );
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn empirical_pairs_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("points.csv");
    run_ok(
        bin()
            .arg("empirical")
            .arg("--pair")
            .arg(fixture("ref_5.csv"))
            .arg(fixture("est_5.csv"))
            .arg("--pair")
            .arg(fixture("ref_5.csv"))
            .arg(fixture("ref_5.csv"))
            .arg("--out")
            .arg(&out),
    );
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,ratio_in,ratio_out");
    assert!(lines[1].starts_with("5,2.240726472747748,2.4250135295181035"));
    assert_eq!(lines[2], "5,,");
}

#[test]
fn delta_fixture_matches_independent_arithmetic() {
    // delta_5.csv was computed from ref/est by independent spreadsheet
    // arithmetic; est - ref must reproduce it exactly.
    let read = |p: PathBuf| -> Vec<f64> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect::<Vec<f64>>())
            .collect()
    };
    let reference = read(fixture("ref_5.csv"));
    let estimate = read(fixture("est_5.csv"));
    let golden = read(fixture("delta_5.csv"));
    for ((r, e), g) in reference.iter().zip(&estimate).zip(&golden) {
        assert_eq!(e - r, *g);
    }
}

#[test]
fn report_matches_golden_fixtures() {
    // plot_golden.{csv,svg} were produced once from the small fixed sweep
    // and empirical fixtures and then frozen; rendering must stay
    // byte-identical across runs and platforms.
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("plot.csv");
    let svg = dir.path().join("plot.svg");
    run_ok(
        bin()
            .arg("report")
            .arg("--sweep")
            .arg(fixture("sweep_small.csv"))
            .arg("--empirical")
            .arg(fixture("empirical_small.csv"))
            .arg("--out")
            .arg(&csv)
            .arg("--svg")
            .arg(&svg),
    );
    assert_eq!(
        fs::read_to_string(&csv).unwrap(),
        fs::read_to_string(fixture("plot_golden.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(&svg).unwrap(),
        fs::read_to_string(fixture("plot_golden.svg")).unwrap()
    );
}
