//! Command dispatch: resolves flags into a [`RunConfig`] and runs it.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use distinct_core::audit::{audit, AuditConfig};
use distinct_core::io::{load_table, save_table, TableFormat};
use distinct_core::power::{bootstrap_ci, mmd_matrix, rejection_rate_curve, threshold_sample_size};
use distinct_core::robustness::{
    bandwidth_ablation, dimensionality_ablation, kernel_ablation, paired_perturbation_test,
    representation_ablation, stability_analysis, BandwidthReference, Pca, PerturbationKind,
    PerturbationSpec, ReducerSpec,
};
use distinct_core::table::{split_half, subsample};
use distinct_core::{
    permutation_test, EmbeddingTable, Error as CoreError, GroupedDataset, KernelFamily,
    KernelSpec, TestConfig,
};
use serde_json::{json, Value};

use crate::args::*;
use crate::report::{Report, RunConfig, SCHEMA_VERSION};

/// Environment variable capping Gram-matrix memory, in MiB.
pub const GRAM_BUDGET_ENV: &str = "DISTINCT_GRAM_BUDGET_MB";

/// A problem with how the command was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// True when an error should exit with the usage status.
pub fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<CoreError>(),
                Some(
                    CoreError::UnknownGroup(_)
                        | CoreError::InvalidParameter(_)
                        | CoreError::InvalidBandwidth(_)
                )
            )
    })
}

pub enum Outcome {
    Report(Report),
    /// Plain-text summary (ingest).
    Summary(String),
}

/// Builds the run configuration from command-line flags.
pub fn resolve_config(global: &GlobalArgs, command: Command) -> Result<RunConfig> {
    let mut test = TestConfig::new(global.permutations, global.alpha, global.seed);
    if let Ok(raw) = std::env::var(GRAM_BUDGET_ENV) {
        let mb: u64 = raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("{GRAM_BUDGET_ENV} must be a whole number of MiB, got {raw:?}")))?;
        test.gram_budget_bytes = mb.saturating_mul(1 << 20);
    }
    test.validate()?;
    let kernel = KernelSpec {
        family: match global.kernel {
            KernelArg::Rbf => KernelFamily::Rbf,
            KernelArg::Linear => KernelFamily::Linear,
        },
        bandwidth: global.bandwidth.0,
        degenerate_fallback: global.degenerate_fallback,
    };
    kernel.validate()?;
    if global.reduce_dims == Some(0) {
        return Err(usage("--reduce-dims must be at least 1"));
    }
    Ok(RunConfig {
        engine_version: distinct_core::VERSION.to_string(),
        seed: global.seed,
        kernel,
        test,
        reduce_dims: global.reduce_dims,
        command,
    })
}

/// Reads the configuration embedded in an earlier report.
pub fn config_from_report(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading report {}", path.display()))?;
    let report: Report = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a JSON report", path.display()))?;
    if report.config.engine_version != distinct_core::VERSION {
        log::warn!(
            "report was produced by engine {}, rerunning with {}",
            report.config.engine_version,
            distinct_core::VERSION
        );
    }
    Ok(report.config)
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let results = match &cfg.command {
        Command::Ingest(args) => return ingest(args).map(Outcome::Summary),
        Command::Test(args) => cmd_test(cfg, args)?,
        Command::Matrix(args) => cmd_matrix(cfg, args)?,
        Command::Power(args) => cmd_power(cfg, args)?,
        Command::Ablate(args) => cmd_ablate(cfg, args)?,
        Command::Perturb(args) => cmd_perturb(cfg, args)?,
        Command::Audit(args) => cmd_audit(args)?,
        Command::Reduce(args) => cmd_reduce(cfg, args)?,
        Command::Ci(args) => cmd_ci(cfg, args)?,
    };
    Ok(Outcome::Report(Report {
        schema_version: SCHEMA_VERSION,
        command: cfg.command.name().to_string(),
        config: cfg.clone(),
        results,
        runtime_ms: start.elapsed().as_millis() as u64,
    }))
}

fn load(path: &Path) -> Result<EmbeddingTable> {
    let fmt = TableFormat::detect(path).with_context(|| format!("opening {}", path.display()))?;
    load_table(path, fmt).with_context(|| format!("loading {}", path.display()))
}

fn load_grouped(path: &Path) -> Result<GroupedDataset> {
    Ok(GroupedDataset::new(load(path)?))
}

fn ingest(args: &IngestArgs) -> Result<String> {
    let table = load(&args.input)?;
    save_table(&table, &args.output, TableFormat::from_extension(&args.output))
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(format!("{} records, dim={}", table.len(), table.dim()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn subset(ds: &GroupedDataset, groups: &[String]) -> Result<GroupedDataset> {
    if groups.is_empty() {
        return Ok(ds.clone());
    }
    for g in groups {
        ds.group(g)?;
    }
    let records = ds
        .table()
        .records()
        .iter()
        .filter(|r| groups.contains(&r.group_label))
        .cloned()
        .collect();
    Ok(GroupedDataset::new(EmbeddingTable::new(
        records,
        ds.table().source_tag(),
    )?))
}

/// PCA fit on every vector of `ds`, applied to all of them.
fn reduce_dataset(ds: &GroupedDataset, dims: Option<usize>) -> Result<GroupedDataset> {
    let Some(d) = dims else {
        return Ok(ds.clone());
    };
    let vectors = ds.table().all_vectors();
    let reduced = Pca::fit(&vectors, d)?.transform(&vectors)?;
    let (ids, labels) = ds
        .table()
        .records()
        .iter()
        .map(|r| (r.id.clone(), r.group_label.clone()))
        .unzip();
    Ok(GroupedDataset::new(EmbeddingTable::from_vectors(
        ids,
        labels,
        &reduced,
        format!("{}+pca{d}", ds.table().source_tag()),
    )?))
}

/// PCA fit on the pooled pair, then split back.
fn reduce_pair(
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    dims: Option<usize>,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let Some(d) = dims else {
        return Ok((x, y));
    };
    let m = x.len();
    let pooled: Vec<Vec<f64>> = x.into_iter().chain(y).collect();
    let mut reduced = Pca::fit(&pooled, d)?.transform(&pooled)?;
    let second = reduced.split_off(m);
    Ok((reduced, second))
}

fn capped(ds: &GroupedDataset, group: &str, cap: Option<usize>, seed: u64) -> Result<Vec<Vec<f64>>> {
    let members = ds.group(group)?;
    let idx = match cap {
        Some(c) if c < members.len() => subsample(ds, group, c, seed)?,
        _ => members.to_vec(),
    };
    Ok(ds.vectors(&idx))
}

/// The two samples for `test` and `ci`. The same group on the same table is
/// split into disjoint halves.
fn two_samples(
    cfg: &RunConfig,
    table: &Path,
    table_b: Option<&Path>,
    a: &str,
    b: &str,
    cap: Option<usize>,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, bool)> {
    let ds = load_grouped(table)?;
    if table_b.is_none() && a == b {
        let (ia, ib) = split_half(&ds, a, cfg.seed)?;
        let take = |mut idx: Vec<usize>| {
            if let Some(c) = cap {
                idx.truncate(c);
            }
            ds.vectors(&idx)
        };
        let (x, y) = reduce_pair(take(ia), take(ib), cfg.reduce_dims)?;
        return Ok((x, y, true));
    }
    let x = capped(&ds, a, cap, cfg.seed)?;
    let y = match table_b {
        Some(p) => capped(&load_grouped(p)?, b, cap, cfg.seed)?,
        None => capped(&ds, b, cap, cfg.seed)?,
    };
    let (x, y) = reduce_pair(x, y, cfg.reduce_dims)?;
    Ok((x, y, false))
}

fn cmd_test(cfg: &RunConfig, args: &TestArgs) -> Result<Value> {
    let (x, y, split) = two_samples(
        cfg,
        &args.table,
        args.table_b.as_deref(),
        &args.a,
        &args.b,
        args.cap,
    )?;
    let result = permutation_test(&x, &y, &cfg.kernel, &cfg.test)?;
    Ok(json!({
        "pair": [args.a, args.b],
        "split_half": split,
        "test": to_json(&result)?,
    }))
}

fn cmd_matrix(cfg: &RunConfig, args: &MatrixArgs) -> Result<Value> {
    let ds = reduce_dataset(&subset(&load_grouped(&args.table)?, &args.groups)?, cfg.reduce_dims)?;
    to_json(&mmd_matrix(&ds, args.cap, &cfg.kernel, &cfg.test)?)
}

fn cmd_power(cfg: &RunConfig, args: &PowerArgs) -> Result<Value> {
    let ds = subset(&load_grouped(&args.table)?, &[args.a.clone(), args.b.clone()])?;
    let ds = reduce_dataset(&ds, cfg.reduce_dims)?;
    let curve = rejection_rate_curve(&ds, &args.a, &args.b, &args.sizes, args.trials, &cfg.kernel, &cfg.test)?;
    Ok(json!({
        "threshold_sample_size": threshold_sample_size(&curve, args.target),
        "target": args.target,
        "curve": to_json(&curve)?,
    }))
}

fn cmd_ablate(cfg: &RunConfig, args: &AblateArgs) -> Result<Value> {
    let ds = load_grouped(&args.table)?;
    let (a, b) = (args.a.as_str(), args.b.as_str());
    let report = match args.mode {
        AblateMode::Kernel => {
            let rbf = KernelSpec {
                family: KernelFamily::Rbf,
                ..cfg.kernel
            };
            kernel_ablation(&ds, a, b, &args.sizes, args.trials, &[rbf, KernelSpec::linear()], &cfg.test)?
        }
        AblateMode::Bandwidth => {
            let reference = match args.reference {
                ReferenceArg::Fixed => BandwidthReference::FixedSample {
                    size: args.reference_size,
                },
                ReferenceArg::PerTrial => BandwidthReference::PerTrial,
            };
            bandwidth_ablation(&ds, a, b, &args.sizes, args.trials, &args.multipliers, reference, &cfg.test)?
        }
        AblateMode::Dimensionality => {
            if args.dims.is_empty() {
                return Err(usage("dimensionality ablation needs --dims"));
            }
            dimensionality_ablation(&ds, a, b, &args.sizes, args.trials, &args.dims, &cfg.kernel, &cfg.test)?
        }
        AblateMode::Representation => {
            if args.representations.is_empty() {
                return Err(usage("representation ablation needs at least one --representation name=path"));
            }
            let mut named = vec![("base".to_string(), ds.clone())];
            for spec in &args.representations {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| usage(format!("expected name=path, got {spec:?}")))?;
                named.push((name.to_string(), load_grouped(Path::new(path))?));
            }
            let refs: Vec<(String, &GroupedDataset)> =
                named.iter().map(|(n, d)| (n.clone(), d)).collect();
            representation_ablation(&refs, a, b, &args.sizes, args.trials, &cfg.kernel, &cfg.test)?
        }
    };
    to_json(&report)
}

fn cmd_perturb(cfg: &RunConfig, args: &PerturbArgs) -> Result<Value> {
    let ds = load_grouped(&args.table)?;
    let clean = capped(&ds, &args.group, args.cap, cfg.seed)?;
    let reducer = cfg.reduce_dims.map(ReducerSpec::pca);
    let kind = match args.kind {
        PerturbKindArg::Noise => PerturbationKind::GaussianNoise,
        PerturbKindArg::Watermark => PerturbationKind::GridWatermark {
            period: args.period,
        },
    };
    let rows = args
        .ratios
        .iter()
        .map(|&ratio| {
            let spec = PerturbationSpec {
                kind,
                ratio,
                seed: cfg.seed,
                signal_scale: args.signal_scale.into(),
            };
            let r = paired_perturbation_test(&clean, &spec, &cfg.kernel, &cfg.test, reducer.as_ref())?;
            Ok(json!({
                "ratio": ratio,
                "observed": r.test.observed,
                "p_value": r.test.p_value,
                "critical_value": r.test.critical_value,
                "reject": r.test.reject,
                "permutations": r.test.permutations,
                "sigma_used": r.test.sigma_used,
            }))
        })
        .collect::<Result<Vec<Value>>>()?;
    let pattern = match args.kind {
        PerturbKindArg::Noise => "iid gaussian noise per coordinate",
        PerturbKindArg::Watermark => {
            "periodic coordinate mask (vector-space analogue of an image grid watermark)"
        }
    };
    Ok(json!({
        "group": args.group,
        "items": clean.len(),
        "ratio_kind": if args.kind == PerturbKindArg::Noise { "snr" } else { "swr" },
        "pattern": pattern,
        "reducer": reducer,
        "rows": rows,
    }))
}

fn cmd_audit(args: &AuditArgs) -> Result<Value> {
    let candidates = load_grouped(&args.candidates)?;
    let reference = load_grouped(&args.reference)?;
    let cfg = AuditConfig {
        threshold_percentile: args.percentile,
        ..AuditConfig::default()
    };
    let report = audit(&candidates, &reference, &cfg)?;
    let mut v = to_json(&report)?;
    // Image-space similarity columns are filled by upstream tooling.
    v["reserved_metrics"] = json!({ "ssim": null, "lpips": null });
    Ok(v)
}

fn cmd_reduce(cfg: &RunConfig, args: &ReduceArgs) -> Result<Value> {
    let ds = load_grouped(&args.table)?;
    let mut out = json!({ "input_dim": ds.table().dim() });
    if let Some(path) = &args.output {
        let d = cfg
            .reduce_dims
            .ok_or_else(|| usage("writing a reduced table needs --reduce-dims"))?;
        let vectors = ds.table().all_vectors();
        let pca = Pca::fit(&vectors, d)?;
        let reduced = reduce_dataset(&ds, Some(d))?;
        save_table(reduced.table(), path, TableFormat::from_extension(path))
            .with_context(|| format!("writing {}", path.display()))?;
        let total: f64 = pca.eigenvalues().iter().map(|v| v.max(0.0)).sum();
        let kept: f64 = pca.eigenvalues()[..d].iter().map(|v| v.max(0.0)).sum();
        out["target_dim"] = json!(d);
        out["output"] = json!(path);
        out["eigenvalues"] = json!(pca.eigenvalues());
        out["explained_variance"] = json!(if total > 0.0 { kept / total } else { 1.0 });
    }
    if let (Some(a), Some(b)) = (&args.a, &args.b) {
        if args.dims.is_empty() {
            return Err(usage("stability analysis needs --dims"));
        }
        let x = ds.vectors(ds.group(a)?);
        let y = ds.vectors(ds.group(b)?);
        let rep = stability_analysis(&x, &y, &args.dims, args.trials, args.sample_size, &cfg.kernel, cfg.seed)?;
        out["stability"] = to_json(&rep)?;
    } else if args.output.is_none() {
        bail!(usage("nothing to do: give --output and/or --a/--b with --dims"));
    }
    Ok(out)
}

fn cmd_ci(cfg: &RunConfig, args: &CiArgs) -> Result<Value> {
    let (x, y, split) = two_samples(cfg, &args.table, None, &args.a, &args.b, args.cap)?;
    let ci = bootstrap_ci(&x, &y, &cfg.kernel, args.iterations, args.level, cfg.seed)
        .map_err(|e| anyhow!(e))?;
    Ok(json!({
        "pair": [args.a, args.b],
        "split_half": split,
        "interval": to_json(&ci)?,
    }))
}
