mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cood_core::eval::ScoreField;
use cood_core::theory::ThresholdRule;
use cood_core::{ErrorKind, Variant};

/// Component-based out-of-distribution scoring over precomputed embeddings.
#[derive(Debug, Parser)]
#[command(name = "cood", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every record of a tensor pack or dataset manifest.
    Score(ScoreArgs),
    /// Compute AUROC and FPR at a fixed TPR from score files.
    Eval(EvalArgs),
    /// Coreset operations.
    Coreset {
        #[command(subcommand)]
        command: CoresetCommand,
    },
    /// False-positive-rate analysis of component counting.
    Theory {
        #[command(subcommand)]
        command: TheoryCommand,
    },
    /// Generate a synthetic world with known component structure.
    Synth(SynthArgs),
    /// Build a coreset, score ID and OOD test sets, and report metrics.
    Benchmark(BenchmarkArgs),
    /// Check a dataset manifest against a vocabulary.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Fast,
    McmBaseline,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Fast => Variant::Fast,
            VariantArg::McmBaseline => Variant::McmBaseline,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldArg {
    Cood,
    Css,
    Ccs,
    Mcm,
}

impl From<FieldArg> for ScoreField {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Cood => ScoreField::Cood,
            FieldArg::Css => ScoreField::Css,
            FieldArg::Ccs => ScoreField::Ccs,
            FieldArg::Mcm => ScoreField::Mcm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    /// Smallest threshold whose ID tail is at most lambda.
    TailAtMost,
    /// Largest threshold whose ID tail is at least lambda.
    TprAtLeast,
}

impl From<RuleArg> for ThresholdRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::TailAtMost => ThresholdRule::TailAtMost,
            RuleArg::TprAtLeast => ThresholdRule::TprAtLeast,
        }
    }
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Tensor pack (`.coodt`) or dataset manifest (`.json`).
    #[arg(long)]
    input: PathBuf,
    /// Coreset pack; without it the compositional score is omitted.
    #[arg(long)]
    coreset: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    mask_tau: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    /// Output JSON-lines file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rescale stored vectors that are off unit norm instead of rejecting them.
    #[arg(long)]
    renormalize: bool,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// In-distribution score file.
    #[arg(long)]
    id: PathBuf,
    /// OOD score file; repeat for several sets. Sets are named by file stem.
    #[arg(long, required = true)]
    ood: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    tpr: f64,
    #[arg(long, value_enum, default_value_t = FieldArg::Cood)]
    field: FieldArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CoresetCommand {
    /// Select per-class references by farthest-point sampling.
    Build(CoresetBuildArgs),
}

#[derive(Debug, Args)]
struct CoresetBuildArgs {
    /// Labelled training manifest.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    mask_tau: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Number of components.
    #[arg(long)]
    n: u32,
    #[arg(long)]
    psi_in: f64,
    #[arg(long)]
    psi_out: f64,
    #[arg(long, default_value_t = 0.95)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::TailAtMost)]
    rule: RuleArg,
}

#[derive(Debug, Subcommand)]
enum TheoryCommand {
    /// Exact and normal-approximation FPR for one configuration (CSV).
    Fpr(ModelArgs),
    /// The same row, read for its `delta` column: the exact FPR change from
    /// adding one component (CSV).
    Delta(ModelArgs),
    /// Every combination of the given values (CSV).
    Sweep(SweepArgs),
    /// Monte Carlo estimate of the exact FPR.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u32>,
    #[arg(long, value_delimiter = ',', required = true)]
    psi_in: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    psi_out: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.95")]
    lambda: Vec<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::TailAtMost)]
    rule: RuleArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON generator configuration; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Labelled training manifest.
    #[arg(long)]
    train: PathBuf,
    /// In-distribution test manifest.
    #[arg(long)]
    test: PathBuf,
    /// OOD test manifest; repeat for several sets.
    #[arg(long, required = true)]
    ood: Vec<PathBuf>,
    /// JSON benchmark configuration; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Directory for score files, the coreset and `report.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Dataset manifest.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    renormalize: bool,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Data => 2,
        ErrorKind::Config => 3,
        ErrorKind::Internal => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
