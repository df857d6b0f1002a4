use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn neurise(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurise"))
        .current_dir(dir)
        .env_remove("NEURISE_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = neurise(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn metric_rows(path: impl AsRef<Path>) -> Vec<(String, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,n,value,seed"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

fn sample_rows(path: impl AsRef<Path>) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

#[test]
fn generate_one_d_writes_model_samples_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "one-d", "--p", "10", "--order", "6", "--n", "100000", "--seed", "7", "--out", "g"]);
    let rows = sample_rows(d.join("g/samples.txt"));
    assert_eq!(rows.len(), 100_000);
    assert!(rows.iter().all(|r| {
        let f: Vec<&str> = r.split_whitespace().collect();
        f.len() == 10 && f.iter().all(|s| *s == "0" || *s == "1")
    }));
    let model = read_json(d.join("g/model.json"));
    assert_eq!(model["p"], 10);
    let manifest = read_json(d.join("g/manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["status"], "ok");
    // the drawn strengths are echoed so the run can be repeated
    let theta = manifest["config"]["theta"].as_array().unwrap();
    assert_eq!(theta.len(), 6);
    assert!(theta.iter().all(|t| t.as_f64().unwrap().abs() <= 1.0));
}

#[test]
fn generate_er_strengths_lie_in_interval() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "er", "--p", "20", "--degree", "2.6", "--interval", "0.3,1.3", "--n", "0", "--out", "g"]);
    let model = read_json(d.join("g/model.json"));
    let terms = model["terms"].as_array().unwrap();
    assert!(!terms.is_empty());
    for t in terms {
        assert_eq!(t["sites"].as_array().unwrap().len(), 2);
        let s = t["strength"].as_f64().unwrap();
        assert!((0.3..=1.3).contains(&s), "strength {s}");
    }
}

#[test]
fn same_seed_gives_identical_sample_files() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for sampler in ["exact", "gibbs"] {
        let args = |out: &'static str| {
            vec!["generate", "--generator", "er", "--p", "8", "--n", "500", "--sampler", sampler, "--seed", "3", "--out", out]
        };
        ok(d, &args("a"));
        ok(d, &args("b"));
        assert_eq!(
            fs::read(d.join("a/samples.txt")).unwrap(),
            fs::read(d.join("b/samples.txt")).unwrap()
        );
    }
    ok(d, &["generate", "--generator", "er", "--p", "8", "--n", "500", "--seed", "4", "--out", "c"]);
    assert_ne!(
        fs::read(d.join("a/samples.txt")).unwrap(),
        fs::read(d.join("c/samples.txt")).unwrap()
    );
}

#[test]
fn manifest_reruns_and_flags_override_the_file() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "one-d", "--p", "6", "--order", "3", "--n", "300", "--seed", "5", "--out", "a"]);
    ok(d, &["generate", "--config", "a/manifest.json", "--out", "b"]);
    assert_eq!(
        fs::read(d.join("a/samples.txt")).unwrap(),
        fs::read(d.join("b/samples.txt")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a/model.json")).unwrap(),
        fs::read(d.join("b/model.json")).unwrap()
    );

    let config = json!({"generator": "er", "p": 5, "n": 50, "seed": 1, "out": "file"});
    fs::write(d.join("cfg.json"), config.to_string()).unwrap();
    ok(d, &["generate", "--config", "cfg.json", "--p", "7"]);
    let manifest = read_json(d.join("file/manifest.json"));
    assert_eq!(manifest["config"]["p"], 7);
    assert_eq!(manifest["config"]["generator"], "er");
    assert_eq!(sample_rows(d.join("file/samples.txt")).len(), 50);
}

#[test]
fn exit_codes_follow_error_classes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = neurise(d, &["generate", "--generator", "lattice", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown generator"));
    assert_eq!(read_json(d.join("x/manifest.json"))["status"], "failed");

    fs::write(d.join("bad.json"), "{ not json").unwrap();
    let out = neurise(d, &["fit", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = neurise(d, &["generate", "--generator", "er", "--p", "40", "--n", "10", "--out", "y"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diverging_fit_exits_with_solver_failure_and_flags_sites() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("s.txt"),
        "# p=4 q=2\n0 0 0 0\n0 0 0 0\n0 0 0 0\n1 0 0 0\n",
    )
    .unwrap();
    let out = neurise(
        d,
        &["fit", "--samples", "s.txt", "--method", "neurise", "--optimizer", "sgd", "--lr", "1e6", "--minibatch", "4", "--epochs", "50", "--out", "f"],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(d.join("f/manifest.json"));
    assert_eq!(manifest["status"], "failed");
    let failed = manifest["summary"]["failed_sites"].as_array().unwrap();
    assert!(failed.iter().any(|u| u == 0));
    // sites that trained are still written
    for u in 0..4 {
        let written = d.join(format!("f/cond_{u}.json")).exists();
        assert_eq!(written, !failed.iter().any(|f| f == u));
    }
}

#[test]
fn fit_grise_writes_one_solution_per_variable() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "er", "--p", "6", "--n", "2000", "--seed", "2", "--out", "g"]);
    ok(d, &["fit", "--samples", "g/samples.txt", "--method", "grise", "--order", "2", "--out", "f"]);
    for u in 0..6 {
        let sol = read_json(d.join(format!("f/cond_{u}.json")));
        assert_eq!(sol["u"], u);
        // 1 field + 5 couplings
        assert_eq!(sol["theta"].as_array().unwrap().len(), 6);
    }
    assert!(!d.join("f/cond_6.json").exists());
    ok(d, &["eval", "--metric", "conditional-error", "--truth", "g/model.json", "--learned", "f", "--out", "e"]);
    let rows = metric_rows(d.join("e/metrics.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].1 < 0.2, "{rows:?}");
}

#[test]
fn fit_neurise_and_structure_write_their_artifacts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "one-d", "--p", "5", "--order", "2", "--n", "1000", "--seed", "1", "--out", "g"]);
    ok(d, &["fit", "--samples", "g/samples.txt", "--method", "neurise", "--depth", "2", "--width", "10", "--epochs", "3", "--out", "n"]);
    for u in 0..5 {
        let cond = read_json(d.join(format!("n/cond_{u}.json")));
        assert_eq!(cond["flavor"], "binary-net");
        let loss = fs::read_to_string(d.join(format!("n/loss_{u}.csv"))).unwrap();
        assert_eq!(loss.lines().count(), 4);
    }

    ok(d, &["fit", "--samples", "g/samples.txt", "--method", "structure", "--lambda-in", "auto", "--epochs", "3", "--out", "s"]);
    let norms = fs::read_to_string(d.join("s/norms.csv")).unwrap();
    assert_eq!(norms.lines().count(), 1 + 5 * 4);
    let result = read_json(d.join("s/structure.json"));
    assert_eq!(result["adjacency"].as_array().unwrap().len(), 5);
    let manifest = read_json(d.join("s/manifest.json"));
    let expected = (5f64.ln() / 1000.0).sqrt();
    assert!((manifest["summary"]["lambda_in"].as_f64().unwrap() - expected).abs() < 1e-15);
    assert_eq!(manifest["config"]["zero_input_init"], true);
}

/// Linear conditionals that equal the truth exactly.
fn write_exact_fixture(d: &Path) {
    let model = json!({"p": 3, "q": 2, "terms": [
        {"sites": [0], "kind": "monomial", "labels": null, "strength": 0.3},
        {"sites": [0, 1], "kind": "monomial", "labels": null, "strength": 0.5},
        {"sites": [1, 2], "kind": "monomial", "labels": null, "strength": -0.4},
    ]});
    fs::write(d.join("truth.json"), model.to_string()).unwrap();
    fs::create_dir_all(d.join("exact")).unwrap();
    // basis order per center: {u}, then the pairs containing u
    let thetas = [[0.3, 0.5, 0.0], [0.0, 0.5, -0.4], [0.0, 0.0, -0.4]];
    for (u, theta) in thetas.iter().enumerate() {
        let cond = json!({
            "u": u, "p": 3, "q": 2, "flavor": "linear",
            "basis": {"kind": "monomial", "u": u, "max_order": 2, "p": 3, "q": 2},
            "theta": theta,
        });
        fs::write(d.join(format!("exact/cond_{u}.json")), cond.to_string()).unwrap();
    }
}

#[test]
fn conditional_error_is_zero_for_exact_recovery() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_exact_fixture(d);
    ok(d, &["eval", "--metric", "conditional-error", "--truth", "truth.json", "--learned", "exact", "--n", "123", "--out", "e"]);
    let text = fs::read_to_string(d.join("e/metrics.csv")).unwrap();
    let rows = metric_rows(d.join("e/metrics.csv"));
    assert_eq!(rows[0].0, "conditional_error");
    assert!(rows[0].1.abs() < 1e-12, "{text}");
    assert!(text.contains(",123,"));
}

#[test]
fn tvd_reports_learned_and_baseline_rows() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_exact_fixture(d);
    ok(d, &["eval", "--metric", "tvd", "--truth", "truth.json", "--learned", "exact", "--n-draw", "20000", "--out", "e"]);
    let rows = metric_rows(d.join("e/metrics.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, ["tvd_learned_true", "tvd_true_true"]);
    // the learned conditionals are exact, so both are sampling noise
    assert!(rows.iter().all(|r| r.1 < 0.05), "{rows:?}");
}

#[test]
fn spectrum_emits_one_row_per_order() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "one-d", "--p", "10", "--order", "3", "--n", "500", "--seed", "2", "--out", "g"]);
    ok(d, &["fit", "--samples", "g/samples.txt", "--method", "neurise", "--epochs", "2", "--out", "n"]);
    ok(d, &["eval", "--metric", "spectrum", "--learned", "n", "--site", "3", "--max-order", "9", "--out", "e"]);
    let rows = metric_rows(d.join("e/metrics.csv"));
    assert_eq!(rows.len(), 9);
    for (k, (name, _)) in rows.iter().enumerate() {
        assert_eq!(name, &format!("leading_coefficient_order_{}", k + 1));
    }
    let spectrum = fs::read_to_string(d.join("e/spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().next(), Some("bitmask,coefficient"));
    assert_eq!(spectrum.lines().count(), 1 + 1024);
}

#[test]
fn expand_recovers_model_strengths() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_exact_fixture(d);
    ok(d, &["expand", "--model", "truth.json", "--out", "x"]);
    let text = fs::read_to_string(d.join("x/spectrum.csv")).unwrap();
    let coeffs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let mut expected = [0.0; 8];
    expected[0b001] = 0.3;
    expected[0b011] = 0.5;
    expected[0b110] = -0.4;
    for (c, e) in coeffs.iter().zip(expected) {
        assert!((c - e).abs() < 1e-12, "{coeffs:?}");
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_exact_fixture(d);
    ok(d, &["generate", "--generator", "er", "--p", "4", "--n", "0", "--out", "g"]);
    let out = neurise(d, &["eval", "--metric", "conditional-error", "--truth", "g/model.json", "--learned", "exact", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn energy_fit_feeds_gap_and_sampling() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "one-d", "--p", "5", "--order", "2", "--n", "1000", "--seed", "9", "--out", "g"]);
    ok(d, &["fit", "--samples", "g/samples.txt", "--method", "energy", "--epochs", "3", "--out", "f"]);
    ok(d, &["eval", "--metric", "energy-gap", "--truth", "g/model.json", "--learned", "f", "--out", "e"]);
    let rows = metric_rows(d.join("e/metrics.csv"));
    assert_eq!(rows[0].0, "energy_gap_mean");
    assert!(rows[0].1 <= rows[1].1);
    ok(d, &["sample", "--learned", "f", "--n", "200", "--sampler", "exact", "--out", "s"]);
    assert_eq!(sample_rows(d.join("s/samples.txt")).len(), 200);
}

#[test]
fn pipeline_is_reproducible_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--generator", "one-d", "--p", "6", "--order", "3", "--n", "800", "--seed", "4", "--out", "g"]);
    for (threads, out) in [("1", "a"), ("3", "b")] {
        let fit = format!("{out}/fit");
        let ev = format!("{out}/eval");
        ok(d, &["--threads", threads, "fit", "--samples", "g/samples.txt", "--epochs", "3", "--out", &fit]);
        ok(d, &["--threads", threads, "eval", "--metric", "tvd", "--truth", "g/model.json", "--learned", &fit, "--n-draw", "2000", "--out", &ev]);
    }
    for f in ["fit/cond_0.json", "fit/cond_5.json", "eval/metrics.csv"] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn thread_count_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = Command::new(env!("CARGO_BIN_EXE_neurise"))
        .current_dir(d)
        .env("NEURISE_THREADS", "0")
        .args(["generate", "--n", "0", "--out", "g"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--threads"));
}
