use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_distinct"));
    c.env_remove("DISTINCT_GRAM_BUDGET_MB");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

/// Writes a CSV table with `(label, n, shift-on-d0)` groups.
fn write_groups(dir: &Path, name: &str, groups: &[(&str, usize, f64)], d: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("id,label");
    for k in 0..d {
        s.push_str(&format!(",d{k}"));
    }
    s.push('\n');
    for &(label, n, shift) in groups {
        for i in 0..n {
            s.push_str(&format!("{label}{i},{label}"));
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = z + if k == 0 { shift } else { 0.0 };
                s.push_str(&format!(",{}", v as f32));
            }
            s.push('\n');
        }
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_summary_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "t.csv", &[("a", 2, 0.0), ("b", 1, 0.0)], 64, 1);
    let bin_path = dir.path().join("t.mmde");
    let out = run(&["ingest", p(&csv), p(&bin_path)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "3 records, dim=64\n");

    let back = dir.path().join("back.csv");
    assert!(run(&["ingest", p(&bin_path), p(&back)]).status.success());
    let parse = |path: &Path| -> Vec<Vec<f64>> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    for (a, b) in parse(&csv).iter().flatten().zip(parse(&back).iter().flatten()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn ingest_rejects_duplicate_id() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("dup.csv");
    std::fs::write(&csv, "id,label,d0\nx,a,1\ny,a,2\nx,b,3\n").unwrap();
    let out = run(&["ingest", p(&csv), p(&dir.path().join("o.mmde"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"x\""));
}

#[test]
fn constant_groups_give_unit_p_value() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let mut s = String::from("id,label,d0,d1\n");
    for i in 0..6 {
        s.push_str(&format!("a{i},a,1,2\nb{i},b,1,2\n"));
    }
    std::fs::write(&csv, s).unwrap();
    let r = json(&run(&["test", p(&csv), "--a", "a", "--b", "b", "--degenerate-fallback"]));
    assert_eq!(r["results"]["test"]["p_value"], 1.0);
    assert_eq!(r["results"]["test"]["reject"], false);

    // Without the explicit flag the zero median is an error.
    assert_eq!(run(&["test", p(&csv), "--a", "a", "--b", "b"]).status.code(), Some(1));

    let ci = json(&run(&["ci", p(&csv), "--a", "a", "--b", "b", "--iterations", "200", "--degenerate-fallback"]));
    assert_eq!(ci["results"]["interval"]["lower"], 0.0);
    assert_eq!(ci["results"]["interval"]["upper"], 0.0);
}

#[test]
fn separated_fixture_hits_minimum_p() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "s.csv", &[("a", 20, 0.0), ("b", 20, 10.0)], 2, 2);
    let r = json(&run(&["test", p(&csv), "--a", "a", "--b", "b", "--permutations", "199"]));
    assert_eq!(r["results"]["test"]["p_value"], 1.0 / 200.0);
    assert_eq!(r["results"]["test"]["exceedances"], 0);
    // A decision to reject is still a successful run.
    assert_eq!(r["results"]["test"]["reject"], true);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "u.csv", &[("a", 5, 0.0), ("b", 5, 0.0)], 2, 3);
    assert_eq!(run(&["test", p(&csv), "--a", "a", "--b", "nope"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["test", p(&csv), "--a", "a", "--b", "b", "--bandwidth", "wide"]).status.code(), Some(2));
    assert_eq!(run(&["test", p(&csv), "--a", "a", "--b", "b", "--workers", "0"]).status.code(), Some(2));
    assert_eq!(run(&["test", p(&csv), "--a", "a", "--b", "b", "--alpha", "1.5"]).status.code(), Some(2));
    let missing = run(&["test", "/nonexistent/t.csv", "--a", "a", "--b", "b"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn matrix_fixture_has_quiet_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(
        dir.path(),
        "m.csv",
        &[("x", 40, 0.0), ("y", 40, 4.0), ("z", 40, 8.0)],
        3,
        4,
    );
    let r = json(&run(&["matrix", p(&csv), "--cap", "20", "--permutations", "199"]));
    let sig = &r["results"]["significant"];
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(sig[i][j], i != j, "cell {i},{j}");
        }
    }
}

#[test]
fn same_group_power_is_near_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "n.csv", &[("g", 200, 0.0)], 4, 5);
    let r = json(&run(&[
        "power", p(&csv), "--a", "g", "--b", "g", "--sizes", "10", "--trials", "200",
        "--alpha", "0.05", "--permutations", "99",
    ]));
    let rate = r["results"]["curve"]["rates"][0].as_f64().unwrap();
    // Binomial(200, 0.05): 4 standard errors either side.
    assert!((0.0..=0.112).contains(&rate), "{rate}");
}

#[test]
fn csv_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "f.csv", &[("a", 15, 0.0), ("b", 15, 1.0)], 3, 6);
    let args = ["test", p(&csv), "--a", "a", "--b", "b", "--permutations", "49", "--seed", "9"];
    let j = json(&run(&args));
    let mut with_csv = args.to_vec();
    with_csv.extend(["--format", "csv"]);
    let out = run(&with_csv);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lookup = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    for (key, ptr) in [
        ("results.test.observed", "/results/test/observed"),
        ("results.test.p_value", "/results/test/p_value"),
        ("results.test.permutation_stats.17", "/results/test/permutation_stats/17"),
    ] {
        let a = lookup(key);
        let b = j.pointer(ptr).unwrap().as_f64().unwrap();
        assert_eq!(format!("{a:.11e}"), format!("{b:.11e}"));
    }
}

#[test]
fn report_reruns_from_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "r.csv", &[("a", 30, 0.0), ("b", 30, 0.5)], 4, 7);
    let first = dir.path().join("first.json");
    let out = run(&[
        "ci", p(&csv), "--a", "a", "--b", "b", "--iterations", "150", "--seed", "11",
        "--out", p(&first),
    ]);
    assert!(out.status.success());
    let again = run(&["--from-report", p(&first)]);
    let strip = |s: &str| distinct_cli::report::without_timing(s).unwrap();
    assert_eq!(
        strip(&std::fs::read_to_string(&first).unwrap()),
        strip(&String::from_utf8(again.stdout).unwrap())
    );
    assert_eq!(
        run(&["--from-report", p(&first), "ci", p(&csv), "--a", "a", "--b", "b"]).status.code(),
        Some(2)
    );
}

#[test]
fn remaining_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_groups(dir.path(), "o.csv", &[("a", 30, 0.0), ("b", 30, 2.0)], 6, 8);
    let base = ["--permutations", "19", "--alpha", "0.1"];
    let with = |extra: &[&str]| -> Value {
        let mut v: Vec<&str> = extra.to_vec();
        v.extend(base);
        json(&run(&v))
    };
    let k = with(&["ablate", p(&csv), "--mode", "kernel", "--a", "a", "--b", "b", "--sizes", "4", "--trials", "5"]);
    assert_eq!(k["results"]["settings"], serde_json::json!(["rbf", "linear"]));
    let d = with(&["ablate", p(&csv), "--mode", "dimensionality", "--a", "a", "--b", "b", "--sizes", "4", "--trials", "5", "--dims", "2,6"]);
    assert_eq!(d["results"]["curves"].as_array().unwrap().len(), 2);
    let rep = with(&["ablate", p(&csv), "--mode", "representation", "--a", "a", "--b", "b", "--sizes", "4", "--trials", "3", "--representation", &format!("copy={}", p(&csv))]);
    assert_eq!(rep["results"]["curves"][0], rep["results"]["curves"][1]);

    let pert = with(&["perturb", p(&csv), "--group", "a", "--kind", "noise", "--ratios", "1e9", "--reduce-dims", "3"]);
    assert_eq!(pert["results"]["rows"][0]["p_value"], 1.0);

    let out_table = dir.path().join("red.csv");
    let red = with(&["reduce", p(&csv), "--reduce-dims", "3", "--output", p(&out_table)]);
    assert_eq!(red["results"]["target_dim"], 3);
    assert!(std::fs::read_to_string(&out_table).unwrap().starts_with("id,label,d0,d1,d2\n"));

    let aud = with(&["audit", "--candidates", p(&csv), "--reference", p(&csv)]);
    assert_eq!(aud["results"]["exceedance_rate"], 1.0);
    assert!((aud["results"]["expected_fp_rate"].as_f64().unwrap() - 0.01).abs() < 1e-12);
}
