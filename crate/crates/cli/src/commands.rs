use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cood_core::compositional::{CcsParams, Coreset};
use cood_core::eval::{
    evaluate, read_scores, run_benchmark, synth_world, with_threads, write_scores, BenchmarkConfig, Scorer, SynthConfig,
};
use cood_core::store::{
    load_tensor_pack, validate_manifest, ComponentVocabulary, Dataset, EmbeddingRecord, NormPolicy, StoreError,
};
use cood_core::theory::{
    monte_carlo_fpr, sweep, write_sweep_csv, BernoulliComponentModel, SweepRow, ThresholdRule, SWEEP_HEADER,
};
use cood_core::{Error, ScoreConfig, ScoreRecord};

use crate::{
    BenchmarkArgs, Command, CoresetBuildArgs, CoresetCommand, EvalArgs, ModelArgs, ScoreArgs, SweepArgs, SynthArgs,
    TheoryCommand, ValidateArgs,
};

type Result<T> = std::result::Result<T, Error>;

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Coreset {
            command: CoresetCommand::Build(a),
        } => coreset_build(a),
        Command::Theory { command } => theory(command),
        Command::Synth(a) => synth(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Validate(a) => validate(a),
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e {
        CommandError::Findings => Ok(ExitCode::from(2)),
        CommandError::Core(e) => Err(e),
    })
}

enum CommandError {
    /// Validation found problems; they have already been printed.
    Findings,
    Core(Error),
}

impl<E: Into<Error>> From<E> for CommandError {
    fn from(e: E) -> Self {
        CommandError::Core(e.into())
    }
}

type CmdResult = std::result::Result<(), CommandError>;

fn policy(renormalize: bool) -> NormPolicy {
    if renormalize {
        NormPolicy::Renormalize
    } else {
        NormPolicy::Reject
    }
}

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::from(StoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
                // A closed reader (e.g. `| head`) is not an error.
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(|e| io_error(Path::new("<stdout>"), e)),
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_records(path: &Path, policy: NormPolicy) -> Result<Vec<EmbeddingRecord>> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(Dataset::load(path, policy)?.records)
    } else {
        Ok(load_tensor_pack(path, policy)?)
    }
}

fn score(a: ScoreArgs) -> CmdResult {
    let policy = policy(a.renormalize);
    let vocab = ComponentVocabulary::load(&a.vocab, policy)?;
    let coreset = match &a.coreset {
        Some(path) => Some(Coreset::load(path, policy)?),
        None => None,
    };
    let records = load_records(&a.input, policy)?;
    let config = ScoreConfig {
        alpha: a.alpha,
        temperature: a.temperature,
        variant: a.variant.into(),
    };
    let params = CcsParams {
        k: a.k,
        mask_tau: a.mask_tau,
    };
    let scorer = Scorer::new(&vocab, coreset.as_ref(), config, params)?;
    let scores = with_threads(a.threads, || scorer.score_all(&records))??;
    match &a.out {
        Some(path) => write_scores(path, &scores)?,
        None => write_text(None, &score_lines(&scores))?,
    }
    Ok(())
}

fn score_lines(scores: &[ScoreRecord]) -> String {
    scores.iter().map(|s| s.to_json_line() + "\n").collect()
}

fn set_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn eval(a: EvalArgs) -> CmdResult {
    let id = read_scores(&a.id)?;
    let ood = a
        .ood
        .iter()
        .map(|p| Ok((set_name(p), read_scores(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&id, &ood, a.field.into(), a.tpr)?;
    write_text(a.out.as_deref(), &report.to_json_pretty())?;
    Ok(())
}

fn coreset_build(a: CoresetBuildArgs) -> CmdResult {
    let policy = policy(a.renormalize);
    let vocab = ComponentVocabulary::load(&a.vocab, policy)?;
    let train = Dataset::load(&a.train, policy)?;
    let params = CcsParams {
        k: a.k,
        mask_tau: a.mask_tau,
    };
    let coreset = Coreset::build(&train, &vocab, &params, a.fraction)?;
    coreset.save(&a.out)?;
    eprintln!(
        "wrote {} references for {} classes to {}",
        coreset.len(),
        coreset.class_names().count(),
        a.out.display()
    );
    Ok(())
}

fn model(a: &ModelArgs) -> Result<BernoulliComponentModel> {
    Ok(BernoulliComponentModel::new(a.n, a.psi_in, a.psi_out)?)
}

fn theory(command: TheoryCommand) -> CmdResult {
    match command {
        TheoryCommand::Fpr(a) | TheoryCommand::Delta(a) => {
            let row = SweepRow::evaluate(&model(&a)?, a.lambda, a.rule.into())?;
            write_text(None, &format!("{SWEEP_HEADER}\n{}\n", row.csv_line()))?;
        }
        TheoryCommand::Sweep(a) => sweep_csv(a)?,
        TheoryCommand::Simulate { model: a, trials, seed } => {
            let m = model(&a)?;
            let rule: ThresholdRule = a.rule.into();
            let est = monte_carlo_fpr(&m, a.lambda, rule, trials, seed)?;
            let exact = cood_core::theory::fpr_exact(&m, a.lambda, rule)?;
            write_text(
                None,
                &format!(
                    "T,trials,estimate,std_error,fpr_exact\n{},{},{:.12e},{:.12e},{:.12e}\n",
                    est.threshold, est.trials, est.estimate, est.std_error, exact
                ),
            )?;
        }
    }
    Ok(())
}

fn sweep_csv(a: SweepArgs) -> Result<()> {
    let rows = sweep(&a.n, &a.psi_in, &a.psi_out, &a.lambda, a.rule.into())?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows).expect("writing to memory");
    write_text(a.out.as_deref(), &String::from_utf8(buf).expect("CSV is UTF-8"))
}

fn synth(a: SynthArgs) -> CmdResult {
    let mut config: SynthConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let world = synth_world(&config)?;
    let files = world.write(&a.out)?;
    let mut text = format!(
        "vocab {}\nid_train {}\nid_test {}\n",
        files.vocab.display(),
        files.id_train.display(),
        files.id_test.display()
    );
    for p in &files.ood_tests {
        text.push_str(&format!("ood_test {}\n", p.display()));
    }
    write_text(None, &text)?;
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> CmdResult {
    let policy = policy(a.renormalize);
    let config: BenchmarkConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => BenchmarkConfig::default(),
    };
    let vocab = ComponentVocabulary::load(&a.vocab, policy)?;
    let train = Dataset::load(&a.train, policy)?;
    let test = Dataset::load(&a.test, policy)?;
    let ood = a
        .ood
        .iter()
        .map(|p| Dataset::load(p, policy))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let out = run_benchmark(&vocab, &train, &test, &ood, &config, a.threads)?;
    let scores_dir = a.out.join("scores");
    fs::create_dir_all(&scores_dir).map_err(|e| io_error(&scores_dir, e))?;
    write_scores(scores_dir.join(format!("{}.jsonl", test.name)), &out.id_scores)?;
    for (name, scores) in &out.ood_scores {
        write_scores(scores_dir.join(format!("{name}.jsonl")), scores)?;
    }
    if let Some(coreset) = &out.coreset {
        coreset.save(a.out.join("coreset.coodt"))?;
    }
    let report: PathBuf = a.out.join("report.json");
    let text = out.report.to_json_pretty();
    fs::write(&report, &text).map_err(|e| io_error(&report, e))?;
    write_text(None, &text)?;
    Ok(())
}

fn validate(a: ValidateArgs) -> CmdResult {
    let policy = policy(a.renormalize);
    let vocab = ComponentVocabulary::load(&a.vocab, policy)?;
    let dataset = Dataset::load(&a.input, policy)?;
    let findings = validate_manifest(&dataset, &vocab);
    if findings.is_empty() {
        println!("ok: {} records", dataset.records.len());
        return Ok(());
    }
    for f in &findings {
        println!("{f}");
    }
    eprintln!("{} problems found", findings.len());
    Err(CommandError::Findings)
}
