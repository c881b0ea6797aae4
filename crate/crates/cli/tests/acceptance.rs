//! Acceptance suite. Runs every criterion in turn, prints one PASS / FAIL /
//! SKIP line per criterion and exits non-zero if any failed.
//!
//! `cargo test -p distinct-cli --test acceptance [-- <substring>...]`

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use distinct_core::audit::{audit, AuditConfig};
use distinct_core::io::{load_table, TableFormat};
use distinct_core::kernel::{gram_bytes, precompute_gram};
use distinct_core::power::mmd_matrix;
use distinct_core::robustness::{check_gaussian_bound, check_perturbation_bound, Pca};
use distinct_core::{
    mmd_squared_unbiased, permutation_test, EmbeddingTable, GroupedDataset, Kernel, KernelMatrix,
    KernelSpec, TestConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize, mean: &[f64]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|k| {
                    let z: f64 = StandardNormal.sample(rng);
                    z + mean.get(k).copied().unwrap_or(0.0)
                })
                .collect()
        })
        .collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// Naive oracles, written without reference to the library's internals.

fn naive_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s
}

fn naive_median_distance(pooled: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(naive_sq_dist(&pooled[i], &pooled[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let c = d.len();
    if c % 2 == 1 {
        d[c / 2]
    } else {
        0.5 * (d[c / 2 - 1] + d[c / 2])
    }
}

fn naive_mmd(x: &[Vec<f64>], y: &[Vec<f64>], k: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut xx = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                xx += k(&x[i], &x[j]);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if i != j {
                yy += k(&y[i], &y[j]);
            }
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += k(a, b);
        }
    }
    xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n)
}

fn estimator_matches_naive() -> Verdict {
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let mut worst_sigma_rel: f64 = 0.0;
    for i in 0..200 {
        let d = r.random_range(1..=64);
        let m = r.random_range(2..=50);
        let n = r.random_range(2..=50);
        let shift: f64 = r.random_range(0.0..2.0);
        let x = gaussian(&mut r, m, d, &[]);
        let y = gaussian(&mut r, n, d, &[shift]);
        let (spec, oracle): (KernelSpec, f64) = if i % 2 == 0 {
            let pooled: Vec<Vec<f64>> = x.iter().chain(&y).cloned().collect();
            let sigma = naive_median_distance(&pooled);
            let est = mmd_squared_unbiased(&x, &y, &KernelSpec::rbf_median()).unwrap();
            let used = est.kernel.sigma().unwrap();
            worst_sigma_rel = worst_sigma_rel.max(((used - sigma) / sigma).abs());
            let k = |a: &[f64], b: &[f64]| (-naive_sq_dist(a, b) / (2.0 * sigma * sigma)).exp();
            (KernelSpec::rbf_median(), naive_mmd(&x, &y, &k))
        } else {
            let k = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            (KernelSpec::linear(), naive_mmd(&x, &y, &k))
        };
        let got = mmd_squared_unbiased(&x, &y, &spec).unwrap().value;
        worst = worst.max((got - oracle).abs());
    }
    verdict(
        worst <= 1e-10 && worst_sigma_rel <= 1e-12,
        format!("200 instances, max |diff| = {worst:.2e} (tol 1e-10), max median rel diff = {worst_sigma_rel:.2e}"),
    )
}

fn null_unbiasedness() -> Verdict {
    let values: Vec<f64> = (0..1000u64)
        .map(|t| {
            let mut r = rng(20_000 + t);
            let x = gaussian(&mut r, 20, 8, &[]);
            let y = gaussian(&mut r, 20, 8, &[]);
            mmd_squared_unbiased(&x, &y, &KernelSpec::rbf_median()).unwrap().value
        })
        .collect();
    let (mean, sd) = mean_sd(&values);
    let se = sd / (values.len() as f64).sqrt();
    verdict(
        mean.abs() <= 3.0 * se,
        format!("1000 trials, mean = {mean:.3e}, SE = {se:.3e}, |mean|/SE = {:.2}", mean.abs() / se),
    )
}

fn exact_p_accounting() -> Verdict {
    let mut bad = 0;
    for run in 0..50u64 {
        let mut r = rng(30_000 + run);
        let m = r.random_range(5..=30);
        let n = r.random_range(5..=30);
        let reps = r.random_range(19..=299);
        let x = gaussian(&mut r, m, 4, &[]);
        let y = gaussian(&mut r, n, 4, &[0.4]);
        let res = permutation_test(&x, &y, &KernelSpec::rbf_median(), &TestConfig::new(reps, 0.05, run)).unwrap();
        let count = res.permutation_stats.iter().filter(|&&s| s >= res.observed).count();
        let expected = (1 + count) as f64 / (res.permutation_stats.len() + 1) as f64;
        if res.p_value != expected || res.exceedances != count || res.permutation_stats.len() != reps {
            bad += 1;
        }
    }
    let mut r = rng(31_000);
    let x = gaussian(&mut r, 20, 2, &[]);
    let y = gaussian(&mut r, 20, 2, &[10.0]);
    let fixture = permutation_test(&x, &y, &KernelSpec::rbf_median(), &TestConfig::new(199, 0.01, 7)).unwrap();
    verdict(
        bad == 0 && fixture.p_value == 0.005,
        format!("{bad}/50 recounts disagree, separated fixture p = {}", fixture.p_value),
    )
}

fn type_one_calibration() -> Verdict {
    let trials = 500u64;
    let rejections = (0..trials)
        .filter(|&t| {
            let mut r = rng(40_000 + t);
            let x = gaussian(&mut r, 50, 64, &[]);
            let y = gaussian(&mut r, 50, 64, &[]);
            permutation_test(&x, &y, &KernelSpec::rbf_median(), &TestConfig::new(199, 0.05, t))
                .unwrap()
                .reject
        })
        .count();
    let rate = rejections as f64 / trials as f64;
    verdict(
        (0.03..=0.08).contains(&rate),
        format!("alpha = 0.05, {trials} trials, rejection rate = {rate:.3} (want [0.03, 0.08])"),
    )
}

fn small_sample_power() -> Verdict {
    let trials = 500u64;
    let rejections = (0..trials)
        .filter(|&t| {
            let mut r = rng(50_000 + t);
            let x = gaussian(&mut r, 6, 2, &[0.0, 0.0]);
            let y = gaussian(&mut r, 6, 2, &[5.0, 0.0]);
            permutation_test(&x, &y, &KernelSpec::rbf_median(), &TestConfig::new(500, 0.01, t))
                .unwrap()
                .reject
        })
        .count();
    let rate = rejections as f64 / trials as f64;
    verdict(
        rate >= 0.90,
        format!("n = 6, alpha = 0.01, {trials} trials, rejection rate = {rate:.3} (want >= 0.90)"),
    )
}

fn perturbation_bound() -> Verdict {
    const EPS: [f64; 3] = [0.001, 0.01, 0.1];
    let mut r = rng(60_000);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for case in 0..10_000 {
        let eps = EPS[case % 3];
        let m = r.random_range(2..=12);
        let n = r.random_range(2..=12);
        let d = r.random_range(1..=6);
        let pooled = gaussian(&mut r, m + n, d, &[]);
        let kernel = if case % 2 == 0 {
            Kernel::rbf(naive_median_distance(&pooled).max(1e-3)).unwrap()
        } else {
            Kernel::Linear
        };
        let total = m + n;
        let ideal = precompute_gram(kernel, &pooled, (m, n), gram_bytes(total)).unwrap();
        // Every tenth case uses the extremal sign pattern: +eps within
        // samples, -eps across them.
        let adversarial = case % 10 == 0;
        let mut values = ideal.values().to_vec();
        for i in 0..total {
            for j in i..total {
                let delta = if adversarial {
                    if (i < m) == (j < m) { eps } else { -eps }
                } else {
                    r.random_range(-eps..=eps)
                };
                values[i * total + j] += delta;
                if i != j {
                    values[j * total + i] += delta;
                }
            }
        }
        let approx = KernelMatrix::from_values(values, (m, n), kernel).unwrap();
        let idx_x: Vec<usize> = (0..m).collect();
        let idx_y: Vec<usize> = (m..total).collect();
        let check = check_perturbation_bound(&ideal, &approx, &idx_x, &idx_y).unwrap();
        if !check.bound_ok || check.delta_mmd > 4.0 * eps + 1e-12 {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(check.delta_mmd / (4.0 * eps));
    }

    let mut gauss_violations = 0;
    for case in 0..1000 {
        let m = r.random_range(2..=15);
        let n = r.random_range(2..=15);
        let d = r.random_range(1..=16);
        let scale = [0.001, 0.01, 0.1][case % 3];
        let ideal = gaussian(&mut r, m + n, d, &[]);
        let jittered: Vec<Vec<f64>> = ideal
            .iter()
            .map(|v| {
                v.iter()
                    .map(|&x| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        x + scale * z
                    })
                    .collect()
            })
            .collect();
        let sigma = naive_median_distance(&ideal).max(1e-3);
        if !check_gaussian_bound(&ideal, &jittered, m, sigma).unwrap().bound_ok {
            gauss_violations += 1;
        }
    }
    verdict(
        violations == 0 && gauss_violations == 0,
        format!(
            "10000 gram perturbations: {violations} outside 4*eps (max ratio {worst_ratio:.6}); \
             1000 jitter cases: {gauss_violations} outside 2*eta/sigma^2"
        ),
    )
}

fn grouped(groups: &[(&str, Vec<Vec<f64>>)]) -> GroupedDataset {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for (label, vs) in groups {
        for (i, v) in vs.iter().enumerate() {
            ids.push(format!("{label}-{i}"));
            labels.push(label.to_string());
            vectors.push(v.clone());
        }
    }
    GroupedDataset::new(EmbeddingTable::from_vectors(ids, labels, &vectors, "synthetic").unwrap())
}

fn negative_controls() -> Verdict {
    let mut r = rng(70_000);
    let ds = grouped(&[
        ("g0", gaussian(&mut r, 200, 8, &[0.0])),
        ("g1", gaussian(&mut r, 200, 8, &[2.0])),
        ("g2", gaussian(&mut r, 200, 8, &[0.0, 2.0])),
    ]);
    let trials = 500u64;
    let mut diag = [0usize; 3];
    let mut off = 0usize;
    for t in 0..trials {
        let mat = mmd_matrix(&ds, 25, &KernelSpec::rbf_median(), &TestConfig::new(199, 0.01, t)).unwrap();
        for i in 0..3 {
            diag[i] += mat.significant[i][i] as usize;
            for j in i + 1..3 {
                off += mat.significant[i][j] as usize;
            }
        }
    }
    let rates: Vec<f64> = diag.iter().map(|&c| c as f64 / trials as f64).collect();
    let off_rate = off as f64 / (3 * trials) as f64;
    verdict(
        rates.iter().all(|&x| x <= 0.03),
        format!(
            "alpha = 0.01, {trials} trials/cell, diagonal rates = {:.3}/{:.3}/{:.3} (want <= 0.03), off-diagonal rate = {off_rate:.3}",
            rates[0], rates[1], rates[2]
        ),
    )
}

fn full_rank_isometry() -> Verdict {
    let mut r = rng(80_000);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = r.random_range(2..=16);
        let m = r.random_range(2..=30);
        let n = r.random_range(2..=30).max(d + 1);
        let x = gaussian(&mut r, m, d, &[]);
        let y = gaussian(&mut r, n, d, &[0.5]);
        let pooled: Vec<Vec<f64>> = x.iter().chain(&y).cloned().collect();
        let pca = Pca::fit(&pooled, d).unwrap();
        let px = pca.transform(&x).unwrap();
        let py = pca.transform(&y).unwrap();
        let before = mmd_squared_unbiased(&x, &y, &KernelSpec::rbf_median()).unwrap().value;
        let after = mmd_squared_unbiased(&px, &py, &KernelSpec::rbf_median()).unwrap().value;
        worst = worst.max((before - after).abs());
    }
    verdict(worst <= 1e-10, format!("100 datasets, max |change| = {worst:.2e} (tol 1e-10)"))
}

fn oracle_nn(query: &[f64], corpus: &[Vec<f64>]) -> (usize, f64) {
    let norm = |v: &[f64]| v.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in corpus.iter().enumerate() {
        let s = query.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / (qn * norm(c));
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn audit_null() -> Verdict {
    let dim = 32;
    let mut flagged = 0usize;
    let mut audited = 0usize;
    let mut mismatches = 0usize;
    for seed in 0..20u64 {
        let mut r = rng(90_000 + seed);
        let reference = grouped(&[("s", gaussian(&mut r, 1000, dim, &[]))]);
        let candidates = grouped(&[("s", gaussian(&mut r, 1000, dim, &[]))]);
        let report = audit(&candidates, &reference, &AuditConfig::default()).unwrap();
        flagged += report.flagged.len();
        audited += report.candidate_nn.len();

        let ref_idx = reference.group("s").unwrap();
        let ref_vecs = reference.vectors(ref_idx);
        let cand_idx = candidates.group("s").unwrap();
        let cand_vecs = candidates.vectors(cand_idx);
        let by_id: HashMap<&str, _> = report.candidate_nn.iter().map(|c| (c.id.as_str(), c)).collect();
        for (&ci, q) in cand_idx.iter().zip(&cand_vecs) {
            let (best, sim) = oracle_nn(q, &ref_vecs);
            let got = by_id[candidates.table().records()[ci].id.as_str()];
            let want_id = &reference.table().records()[ref_idx[best]].id;
            if &got.best_match_id != want_id || got.similarity.to_bits() != sim.to_bits() {
                mismatches += 1;
            }
        }
    }
    let rate = flagged as f64 / audited as f64;
    verdict(
        (0.0..=0.02).contains(&rate) && mismatches == 0,
        format!(
            "20 seeds x 1000 candidates, pooled exceedance = {:.3}% (want [0%, 2%]), {mismatches} nearest-neighbor mismatches vs exhaustive search",
            100.0 * rate
        ),
    )
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_distinct"));
    c.env_remove("DISTINCT_GRAM_BUDGET_MB");
    c
}

fn write_fixture(dir: &Path) -> PathBuf {
    let mut r = rng(100_000);
    let mut s = String::from("id,label");
    let d = 6;
    for k in 0..d {
        s.push_str(&format!(",d{k}"));
    }
    s.push('\n');
    for (label, shift) in [("a", 0.0), ("b", 0.7), ("c", 1.5)] {
        for i in 0..40 {
            s.push_str(&format!("{label}{i},{label}"));
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut r);
                s.push_str(&format!(",{}", (z + if k == 0 { shift } else { 0.0 }) as f32));
            }
            s.push('\n');
        }
    }
    let path = dir.join("fixture.csv");
    std::fs::write(&path, s).unwrap();
    path
}

/// Report text with the timing line removed.
fn strip_timing(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"runtime_ms\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let table = write_fixture(dir.path());
    let t = table.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["test", t, "--a", "a", "--b", "b"],
        vec!["test", t, "--a", "a", "--b", "a", "--kernel", "linear"],
        vec!["matrix", t, "--cap", "15", "--permutations", "99"],
        vec!["power", t, "--a", "a", "--b", "c", "--sizes", "4,8", "--trials", "20", "--permutations", "99"],
        vec!["ci", t, "--a", "a", "--b", "c", "--iterations", "200"],
        vec!["ablate", t, "--mode", "bandwidth", "--a", "a", "--b", "c", "--sizes", "5", "--trials", "10", "--permutations", "99", "--reference-size", "30"],
        vec!["perturb", t, "--group", "a", "--kind", "noise", "--ratios", "0.5,2", "--permutations", "99"],
        vec!["audit", "--candidates", t, "--reference", t],
        vec!["reduce", t, "--reduce-dims", "3", "--output", "REDUCED", "--trials", "5", "--sample-size", "10"],
    ];
    let mut failures = Vec::new();
    let mut runs = 0;
    for (ci, cmd) in commands.iter().enumerate() {
        let reduced = dir.path().join(format!("reduced{ci}.csv"));
        let args: Vec<String> = cmd
            .iter()
            .map(|a| if *a == "REDUCED" { reduced.to_str().unwrap().to_string() } else { a.to_string() })
            .collect();
        let mut outputs = Vec::new();
        for workers in [1, 4, 8] {
            let report = dir.path().join(format!("r{ci}-w{workers}.json"));
            let status = bin()
                .args(&args)
                .args(["--seed", "42", "--workers", &workers.to_string(), "--out", report.to_str().unwrap()])
                .status()
                .unwrap();
            runs += 1;
            if !status.success() {
                failures.push(format!("{} (workers {workers}) exited {status}", cmd[0]));
                continue;
            }
            let first = std::fs::read_to_string(&report).unwrap();
            outputs.push(strip_timing(&first));
            let rerun = bin()
                .args(["--from-report", report.to_str().unwrap(), "--workers", &workers.to_string()])
                .output()
                .unwrap();
            runs += 1;
            outputs.push(strip_timing(&String::from_utf8_lossy(&rerun.stdout)));
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            failures.push(format!("{} reports differ", cmd[0]));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} commands x workers {{1, 4, 8}} plus --from-report re-runs ({runs} invocations){}",
            commands.len(),
            if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }
        ),
    )
}

/// Optional: an externally produced table of abstract embeddings with group
/// labels `A`, `C`, `H`, named by `DISTINCT_SECTION_TABLE`.
fn external_sections() -> Verdict {
    let Ok(path) = std::env::var("DISTINCT_SECTION_TABLE") else {
        return Verdict::Skip("DISTINCT_SECTION_TABLE not set".into());
    };
    let path = PathBuf::from(path);
    let table = match TableFormat::detect(&path).and_then(|f| load_table(&path, f)) {
        Ok(t) => t,
        Err(e) => return Verdict::Fail(format!("loading {}: {e}", path.display())),
    };
    let ds = GroupedDataset::new(table);
    let mat = match mmd_matrix(&ds, 500, &KernelSpec::rbf_median(), &TestConfig::new(500, 0.01, 0)) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(format!("matrix: {e}")),
    };
    let pos = |l: &str| mat.labels.iter().position(|x| x == l);
    let (Some(a), Some(c), Some(h)) = (pos("A"), pos("C"), pos("H")) else {
        return Verdict::Fail(format!("labels A, C, H required, found {:?}", mat.labels));
    };
    let n = mat.labels.len();
    let cross_ok = (0..n).all(|i| (0..n).all(|j| i == j || mat.significant[i][j]));
    let diag_ok = (0..n).all(|i| !mat.significant[i][i]);
    let mut magnitude_ok = true;
    let mut parts = Vec::new();
    for (name, i, j, expected) in [("C-H", c, h, 0.72), ("A-H", a, h, 0.45), ("A-C", a, c, 0.37)] {
        let v = mat.values[i][j];
        magnitude_ok &= (v - expected).abs() <= 0.15;
        parts.push(format!("{name} = {v:.3} (expect {expected} +/- 0.15)"));
    }
    verdict(
        cross_ok && diag_ok && magnitude_ok,
        format!(
            "cross cells significant: {cross_ok}, diagonals quiet: {diag_ok}, {}",
            parts.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("estimator-vs-naive", estimator_matches_naive),
        ("null-unbiasedness", null_unbiasedness),
        ("exact-p-accounting", exact_p_accounting),
        ("type-one-calibration", type_one_calibration),
        ("small-sample-power", small_sample_power),
        ("kernel-perturbation-bound", perturbation_bound),
        ("negative-controls", negative_controls),
        ("full-rank-isometry", full_rank_isometry),
        ("audit-null-calibration", audit_null),
        ("cli-determinism", cli_determinism),
        ("external-section-embeddings", external_sections),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {name}: {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
