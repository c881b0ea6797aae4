//! Command-line grammar. Every subcommand's arguments also serialize into the
//! report so a run can be repeated from the report alone.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use distinct_core::robustness::{AblationMode, SignalScale};
use distinct_core::BandwidthRule;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "distinct", version, about = "Kernel two-sample tests over embedding tables")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Significance level.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub alpha: f64,

    /// Number of permutations R.
    #[arg(long, global = true, default_value_t = 500)]
    pub permutations: usize,

    #[arg(long, global = true, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,

    /// median, fixed:<sigma> or scaled:<multiplier>.
    #[arg(long, global = true, default_value = "median")]
    pub bandwidth: BandwidthArg,

    /// Fall back to the smallest positive pairwise distance when the median
    /// distance is zero.
    #[arg(long, global = true)]
    pub degenerate_fallback: bool,

    /// Project onto this many principal components before testing.
    #[arg(long, global = true)]
    pub reduce_dims: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Repeat the run recorded in an earlier JSON report. Analysis flags are
    /// taken from the report; --workers, --format and --out still apply.
    #[arg(long, global = true)]
    pub from_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthArg(pub BandwidthRule);

impl FromStr for BandwidthArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let number = |v: &str, what: &str| -> Result<f64, String> {
            let x: f64 = v
                .parse()
                .map_err(|_| format!("{what} must be a number, got {v:?}"))?;
            if x.is_finite() && x > 0.0 {
                Ok(x)
            } else {
                Err(format!("{what} must be finite and positive, got {v}"))
            }
        };
        let rule = match s.split_once(':') {
            None if s == "median" => BandwidthRule::MedianHeuristic,
            Some(("fixed", v)) => BandwidthRule::Fixed {
                sigma: number(v, "sigma")?,
            },
            Some(("scaled", v)) => BandwidthRule::ScaledMedian {
                multiplier: number(v, "multiplier")?,
            },
            _ => {
                return Err(format!(
                    "expected median, fixed:<sigma> or scaled:<multiplier>, got {s:?}"
                ))
            }
        };
        Ok(Self(rule))
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Validate a table and convert between CSV and binary.
    Ingest(IngestArgs),
    /// Permutation test of one group against another.
    Test(TestArgs),
    /// Pairwise MMD matrix with split-half diagonal controls.
    Matrix(MatrixArgs),
    /// Rejection-rate curve over sample sizes.
    Power(PowerArgs),
    /// Kernel, bandwidth, dimensionality or representation ablation.
    Ablate(AblateArgs),
    /// Paired clean-versus-perturbed tests over perturbation strengths.
    Perturb(PerturbArgs),
    /// Nearest-neighbor memorization audit.
    Audit(AuditArgs),
    /// PCA reduction and dimension-stability analysis.
    Reduce(ReduceArgs),
    /// Bootstrap confidence interval for MMD².
    Ci(CiArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Test(_) => "test",
            Command::Matrix(_) => "matrix",
            Command::Power(_) => "power",
            Command::Ablate(_) => "ablate",
            Command::Perturb(_) => "perturb",
            Command::Audit(_) => "audit",
            Command::Reduce(_) => "reduce",
            Command::Ci(_) => "ci",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Input table (CSV or binary, detected from content).
    pub input: PathBuf,
    /// Output table; `.csv` writes CSV, anything else binary.
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TestArgs {
    pub table: PathBuf,
    /// Group label of the first sample.
    #[arg(long)]
    pub a: String,
    /// Group label of the second sample.
    #[arg(long)]
    pub b: String,
    /// Take group b from this table instead.
    #[arg(long)]
    pub table_b: Option<PathBuf>,
    /// Subsample each group to at most this many items.
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MatrixArgs {
    pub table: PathBuf,
    /// Per-group sample cap.
    #[arg(long, default_value_t = 500)]
    pub cap: usize,
    /// Restrict to these groups (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PowerArgs {
    pub table: PathBuf,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    /// Per-group sample sizes (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Rejection rate that defines the threshold sample size.
    #[arg(long, default_value_t = 0.95)]
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblateMode {
    Kernel,
    Bandwidth,
    Dimensionality,
    Representation,
}

impl From<AblateMode> for AblationMode {
    fn from(m: AblateMode) -> Self {
        match m {
            AblateMode::Kernel => AblationMode::Kernel,
            AblateMode::Bandwidth => AblationMode::Bandwidth,
            AblateMode::Dimensionality => AblationMode::Dimensionality,
            AblateMode::Representation => AblationMode::Representation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceArg {
    /// Median heuristic once on a fixed seeded sample.
    Fixed,
    /// Median heuristic on each trial's pooled sample.
    PerTrial,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    pub table: PathBuf,
    #[arg(long, value_enum)]
    pub mode: AblateMode,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Bandwidth multipliers (bandwidth mode).
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub multipliers: Vec<f64>,
    /// Where the base bandwidth comes from (bandwidth mode).
    #[arg(long, value_enum, default_value_t = ReferenceArg::Fixed)]
    pub reference: ReferenceArg,
    #[arg(long, default_value_t = 200)]
    pub reference_size: usize,
    /// Target dimensions (dimensionality mode).
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    /// Additional `name=path` tables with the same ids (representation mode).
    #[arg(long = "representation")]
    pub representations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKindArg {
    Noise,
    Watermark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalScaleArg {
    Global,
    PerCoordinate,
}

impl From<SignalScaleArg> for SignalScale {
    fn from(s: SignalScaleArg) -> Self {
        match s {
            SignalScaleArg::Global => SignalScale::Global,
            SignalScaleArg::PerCoordinate => SignalScale::PerCoordinate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PerturbArgs {
    pub table: PathBuf,
    /// Group whose items are perturbed and tested against themselves.
    #[arg(long)]
    pub group: String,
    #[arg(long, value_enum)]
    pub kind: PerturbKindArg,
    /// SNR or SWR values (amplitude ratios, comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub ratios: Vec<f64>,
    /// Watermark period in coordinates.
    #[arg(long, default_value_t = 4)]
    pub period: usize,
    #[arg(long, value_enum, default_value_t = SignalScaleArg::Global)]
    pub signal_scale: SignalScaleArg,
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    /// Table of items to audit.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference corpus; labels define strata.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 99.0)]
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReduceArgs {
    pub table: PathBuf,
    /// Write the table reduced to --reduce-dims here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run the stability analysis between groups a and b.
    #[arg(long, requires = "b")]
    pub a: Option<String>,
    #[arg(long, requires = "a")]
    pub b: Option<String>,
    /// Target dimensions for the stability analysis.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 50)]
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CiArgs {
    pub table: PathBuf,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub cap: Option<usize>,
}
