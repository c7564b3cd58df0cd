//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 network error.
//! Every file a subcommand writes gets a `<file>.manifest.json` sibling
//! recording the resolved configuration and the SHA-256 of each input.
//! Settings resolve as flags, then the `--config` JSON document (one
//! object per subcommand under its name), then built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::audit::{audit_model, reference_gpt2, render_report, BiasReport, Scoping};
use crate::baselines::{predict_random, train_baseline, Algo, TrainConfig};
use crate::corpus::{build_corpus, corpus_digest, load_mgs, write_mgs, MgsRecord, Split, SplitSpec, Strictness};
use crate::error::Error;
use crate::evaluation::{
    dimension_subset, eval_dimension, eval_dimension_labels, eval_full, eval_random, render_report as render_eval,
    EvalReport, Projection, ReportConfig,
};
use crate::explain::{agreement, lime_explain, render_attribution, shapley_explain, LimeConfig, ShapleyConfig};
use crate::inference::{load_model, Classifier, LoadedModel};
use crate::labels::{Dimension, Label};
use crate::probe::{
    failures_path, read_passages, run_probe, ApiMode, GenParams, JsonlSink, LlmClient, LlmEndpoint, MockBehavior,
    MockServer, ProbeConfig,
};
use crate::promptgen::{generate_prompts, read_library, write_library, PromptConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "stereoaudit",
    version,
    about = "Multi-grain stereotype detection and bias auditing of text generators"
)]
struct Cli {
    /// JSON document with per-subcommand settings; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corpus construction.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a TF-IDF baseline or the seeded random labeler.
    Train(TrainArgs),
    /// Macro precision/recall/F1 on the test split.
    Eval(EvalArgs),
    /// Prompt library construction.
    #[command(subcommand)]
    Prompts(PromptsCommand),
    /// Send every prompt to a text-generation endpoint.
    Probe(ProbeArgs),
    /// Score generated passages per dimension.
    Audit(AuditArgs),
    /// Token attributions for one sentence.
    Explain(ExplainArgs),
    /// Render bias reports side by side.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum CorpusCommand {
    /// Build the labeled corpus from the raw StereoSet and CrowS-Pairs files.
    Build(CorpusBuildArgs),
}

#[derive(Debug, Subcommand)]
enum PromptsCommand {
    /// Select unrelated-classified prefixes per dimension.
    Gen(PromptsGenArgs),
}

#[derive(Debug, Args)]
struct CorpusBuildArgs {
    /// StereoSet JSON (with `data.intrasentence` and `data.intersentence`).
    #[arg(long)]
    stereoset: PathBuf,
    /// CrowS-Pairs CSV.
    #[arg(long)]
    crowspairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_frac: Option<f64>,
    /// Abort on the first invalid unit instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// logreg, svm or random.
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stratified cap on training records.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train a 3-label model on one dimension's records.
    #[arg(long)]
    dimension: Option<Dimension>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model JSON written by `train`, or an exported `.onnx` model.
    #[arg(long)]
    model: PathBuf,
    /// Tokenizer spec for an `.onnx` model (default: tokenizer_spec.json
    /// beside it).
    #[arg(long)]
    tokenizer_spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    corpus: PathBuf,
    /// Evaluate the three classes of one dimension.
    #[arg(long)]
    dimension: Option<Dimension>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PromptsGenArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    quota: Option<usize>,
    #[arg(long)]
    min_words: Option<usize>,
    /// Keep repeated prefixes within a dimension.
    #[arg(long)]
    no_dedupe: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Chat,
    Completion,
}

impl From<ModeArg> for ApiMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Chat => ApiMode::Chat,
            ModeArg::Completion => ApiMode::Completion,
        }
    }
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Base URL of an OpenAI-compatible server.
    #[arg(long, required_unless_present = "mock")]
    endpoint: Option<String>,
    /// Model name sent to the endpoint and recorded in passages.
    #[arg(long)]
    model: String,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_new_tokens: Option<u32>,
    /// Sampling seed forwarded to the endpoint.
    #[arg(long)]
    gen_seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Serve canned completions from an in-process mock instead.
    #[arg(long)]
    mock: bool,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    passages: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Score every dimension over all passages.
    #[arg(long)]
    all_passages: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Lime,
    Shapley,
    Both,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    text: String,
    /// Target label name, e.g. stereotype_gender.
    #[arg(long)]
    label: String,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON record here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// BiasReport JSON files.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Add the published GPT-2 row for comparison.
    #[arg(long)]
    reference: bool,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Provenance record written beside each output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    /// Input path to hex SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

/// `out.jsonl` -> `out.jsonl.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let name = output
        .file_name()
        .map_or_else(|| "output".into(), |n| n.to_string_lossy().into_owned());
    output.with_file_name(format!("{name}.manifest.json"))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_network() {
                EXIT_NETWORK
            } else {
                EXIT_DATA
            }
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let v: Value =
                serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))?;
            if !v.is_object() {
                return Err(CliError::Usage("the config file must hold a JSON object".into()));
            }
            v
        }
        None => json!({}),
    };
    match cli.command {
        Command::Corpus(CorpusCommand::Build(a)) => corpus_build(a, section(&config, "corpus")?),
        Command::Train(a) => train(a, &config),
        Command::Eval(a) => eval(a, section(&config, "eval")?),
        Command::Prompts(PromptsCommand::Gen(a)) => prompts_gen(a, section(&config, "prompts")?),
        Command::Probe(a) => probe(a, section(&config, "probe")?),
        Command::Audit(a) => audit(a, section(&config, "audit")?),
        Command::Explain(a) => explain(a, section(&config, "explain")?),
        Command::Report(a) => report(a),
    }
}

/// Settings for one subcommand from the config document, defaults filling
/// whatever it leaves out.
fn section<T: DeserializeOwned + Default>(config: &Value, name: &str) -> CliResult<T> {
    match config.get(name) {
        None => Ok(T::default()),
        Some(v) => {
            serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("config section `{name}`: {e}")))
        }
    }
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects input hashes and refuses outputs that would overwrite an input.
struct Inputs(BTreeMap<String, String>, Vec<PathBuf>);

impl Inputs {
    fn new() -> Self {
        Inputs(BTreeMap::new(), Vec::new())
    }

    fn add(&mut self, path: &Path) -> CliResult<()> {
        self.0.insert(path.display().to_string(), sha256_file(path)?);
        self.1.push(path.to_path_buf());
        Ok(())
    }

    fn add_model(&mut self, m: &ModelArgs) -> CliResult<()> {
        self.add(&m.model)?;
        if m.model.extension().is_some_and(|e| e == "onnx") {
            self.add(&tokenizer_spec_path(m))?;
        }
        Ok(())
    }

    fn check_output(&self, out: &Path) -> CliResult<()> {
        let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        if self.1.iter().any(|i| canon(i) == canon(out)) {
            return Err(CliError::Usage(format!(
                "output {} would overwrite an input",
                out.display()
            )));
        }
        Ok(())
    }
}

fn tokenizer_spec_path(m: &ModelArgs) -> PathBuf {
    m.tokenizer_spec
        .clone()
        .unwrap_or_else(|| m.model.with_file_name("tokenizer_spec.json"))
}

fn write_manifest(
    subcommand: &str,
    config: Value,
    inputs: &Inputs,
    outputs: &[&Path],
    summary: Value,
) -> CliResult<()> {
    let Some(first) = outputs.first() else {
        return Ok(());
    };
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        config,
        inputs: inputs.0.clone(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        summary,
    };
    write_json(&manifest_path(first), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Other(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn load_classifier(m: &ModelArgs) -> CliResult<Box<dyn Classifier>> {
    Ok(load_model(&m.model, m.tokenizer_spec.as_deref())?.classifier()?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorpusSettings {
    seed: u64,
    train_frac: f64,
    strict: bool,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        let s = SplitSpec::default();
        CorpusSettings {
            seed: s.seed,
            train_frac: s.train_fraction,
            strict: false,
        }
    }
}

fn corpus_build(a: CorpusBuildArgs, mut s: CorpusSettings) -> CliResult<()> {
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.train_frac {
        s.train_frac = v;
    }
    s.strict |= a.strict;
    if !(s.train_frac > 0.0 && s.train_frac < 1.0) {
        return Err(CliError::Usage(format!(
            "--train-frac must lie in (0, 1), got {}",
            s.train_frac
        )));
    }
    let mut inputs = Inputs::new();
    inputs.add(&a.stereoset)?;
    inputs.add(&a.crowspairs)?;
    inputs.check_output(&a.out)?;

    let strictness = Strictness { strict: s.strict };
    let ss_raw = std::fs::read(&a.stereoset).map_err(|e| Error::io(&a.stereoset, e))?;
    let cp_raw = std::fs::read(&a.crowspairs).map_err(|e| Error::io(&a.crowspairs, e))?;
    let built = build_corpus(
        &ss_raw,
        &cp_raw,
        strictness,
        SplitSpec {
            train_fraction: s.train_frac,
            seed: s.seed,
        },
    )?;
    let records = built.records;
    write_mgs(&a.out, &records)?;
    let train = records.iter().filter(|r| r.split == Some(Split::Train)).count();
    eprintln!(
        "{} records ({} train, {} test), {} units dropped",
        records.len(),
        train,
        records.len() - train,
        built.report.dropped_total()
    );
    let summary = json!({
        "stereoset": built.stereoset,
        "crowspairs": built.crowspairs,
        "build": built.report,
        "train": train,
        "test": records.len() - train,
        "corpus_sha256": corpus_digest(&records),
    });
    write_manifest("corpus build", to_value(&s), &inputs, &[&a.out], summary)
}

fn train(a: TrainArgs, config: &Value) -> CliResult<()> {
    let mut s: TrainConfig = section(config, "train")?;
    let algo_in_config = config.get("train").and_then(|t| t.get("algo")).is_some();
    match a.algo {
        Some(algo) => s.algo = algo,
        None if !algo_in_config => return Err(CliError::Usage("--algo is required (logreg, svm or random)".into())),
        None => {}
    }
    if a.subsample.is_some() {
        s.subsample = a.subsample;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if a.dimension.is_some() {
        s.dimension = a.dimension;
    }
    let mut inputs = Inputs::new();
    inputs.add(&a.corpus)?;
    inputs.check_output(&a.out)?;
    let records = load_mgs(&a.corpus)?;
    let (model, report) = train_baseline(&records, &s)?;
    if !report.converged {
        eprintln!("warning: training stopped before convergence");
    }
    model.save(&a.out)?;
    eprintln!(
        "trained {} on {} of {} training records (vocabulary {})",
        s.algo, report.used_records, report.train_records, report.vocabulary
    );
    write_manifest("train", to_value(&s), &inputs, &[&a.out], to_value(&report))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    dimension: Option<Dimension>,
}

fn test_split(records: Vec<MgsRecord>) -> CliResult<Vec<MgsRecord>> {
    let test: Vec<MgsRecord> = records.into_iter().filter(|r| r.split == Some(Split::Test)).collect();
    if test.is_empty() {
        return Err(Error::InvalidInput("the corpus has no test records".into()).into());
    }
    Ok(test)
}

fn eval(a: EvalArgs, mut s: EvalSettings) -> CliResult<()> {
    if a.dimension.is_some() {
        s.dimension = a.dimension;
    }
    let mut inputs = Inputs::new();
    inputs.add_model(&a.model)?;
    inputs.add(&a.corpus)?;
    if let Some(out) = &a.out {
        inputs.check_output(out)?;
    }
    let records = load_mgs(&a.corpus)?;
    let hash = corpus_digest(&records);
    let test = test_split(records)?;
    let report: EvalReport = match (
        load_model(&a.model.model, a.model.tokenizer_spec.as_deref())?,
        s.dimension,
    ) {
        (LoadedModel::Random(m), None) => eval_random(&m, &test, &hash)?,
        (LoadedModel::Random(m), Some(d)) => {
            let subset = dimension_subset(&test, d);
            let gold: Vec<usize> = subset.iter().map(|r| r.label.code()).collect();
            let pred = predict_random(&m, gold.len());
            eval_dimension_labels(
                &gold,
                &pred,
                d,
                Projection::StrictOther,
                ReportConfig {
                    model_id: format!("random(seed={})", m.seed),
                    corpus_hash: hash.clone(),
                    ..ReportConfig::default()
                },
            )?
        }
        (LoadedModel::Classifier(c), None) => eval_full(c.as_ref(), &test, &hash)?,
        (LoadedModel::Classifier(c), Some(d)) => eval_dimension(c.as_ref(), &test, d, Projection::StrictOther, &hash)?,
    };
    print!("{}", render_eval(&report));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        let m = report.macro_metrics();
        write_manifest("eval", to_value(&s), &inputs, &[out], to_value(&m))?;
    }
    Ok(())
}

fn prompts_gen(a: PromptsGenArgs, mut s: PromptConfig) -> CliResult<()> {
    if let Some(q) = a.quota {
        s.quota = q;
    }
    if let Some(m) = a.min_words {
        s.min_words = m;
    }
    if a.no_dedupe {
        s.dedupe = false;
    }
    if s.quota == 0 {
        return Err(CliError::Usage("--quota must be positive".into()));
    }
    let mut inputs = Inputs::new();
    inputs.add(&a.corpus)?;
    inputs.add_model(&a.model)?;
    inputs.check_output(&a.out)?;
    let records = load_mgs(&a.corpus)?;
    let classifier = load_classifier(&a.model)?;
    let library = generate_prompts(&records, classifier.as_ref(), &s)?;
    write_library(&a.out, &library)?;
    for (d, entries) in &library.entries {
        eprintln!("{d}: {} prompts", entries.len());
    }
    let summary = json!({ "classifier_id": library.classifier_id, "stats": library.stats });
    write_manifest("prompts gen", to_value(&s), &inputs, &[&a.out], summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProbeSettings {
    mode: ModeArg,
    token_env: Option<String>,
    generation: GenParams,
    run: ProbeConfig,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            mode: ModeArg::Chat,
            token_env: None,
            generation: GenParams::default(),
            run: ProbeConfig::default(),
        }
    }
}

fn probe(a: ProbeArgs, mut s: ProbeSettings) -> CliResult<()> {
    if let Some(v) = a.mode {
        s.mode = v;
    }
    if a.token_env.is_some() {
        s.token_env = a.token_env.clone();
    }
    if let Some(v) = a.temperature {
        s.generation.temperature = v;
    }
    if let Some(v) = a.max_new_tokens {
        s.generation.max_new_tokens = v;
    }
    if a.gen_seed.is_some() {
        s.generation.seed = a.gen_seed;
    }
    if let Some(v) = a.parallelism {
        s.run.parallelism = v;
    }
    if let Some(v) = a.max_retries {
        s.run.max_retries = v;
    }
    if let Some(v) = a.timeout_secs {
        s.run.timeout_secs = v;
    }
    if s.run.parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be positive".into()));
    }
    let mut inputs = Inputs::new();
    inputs.add(&a.prompts)?;
    inputs.check_output(&a.out)?;
    let failures = failures_path(&a.out);
    inputs.check_output(&failures)?;
    let library = read_library(&a.prompts)?;

    let mock = if a.mock {
        Some(MockServer::start(MockBehavior::default())?)
    } else {
        None
    };
    let base_url = match (&mock, &a.endpoint) {
        (Some(m), _) => m.base_url(),
        (None, Some(e)) => e.clone(),
        (None, None) => return Err(CliError::Usage("--endpoint is required without --mock".into())),
    };
    let endpoint = LlmEndpoint {
        base_url: base_url.clone(),
        model: a.model.clone(),
        token_env: s.token_env.clone(),
        mode: s.mode.into(),
    };
    let client = LlmClient::new(endpoint, Duration::from_secs(s.run.timeout_secs));
    let mut sink = JsonlSink::create(&a.out, &failures)?;
    let outcome = run_probe(&client, &library, &s.generation, &s.run, &mut sink);
    sink.finish()?;
    drop(mock);
    let summary = outcome?;
    eprintln!(
        "{} passages, {} failures (failures in {})",
        summary.successes(),
        summary.failures(),
        failures.display()
    );
    for (d, c) in &summary.per_dimension {
        if c.unusable {
            eprintln!("warning: every {d} prompt failed");
        }
    }
    let config = json!({
        "endpoint": if a.mock { "mock".to_string() } else { base_url },
        "model": a.model,
        "settings": s,
    });
    write_manifest("probe", config, &inputs, &[&a.out, &failures], to_value(&summary))?;
    if summary.successes() == 0 {
        // Every request failed at the endpoint: report it as a network failure.
        return Err(Error::Retryable(format!("no prompt produced a passage; see {}", failures.display())).into());
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AuditSettings {
    scoping: Scoping,
}

fn audit(a: AuditArgs, mut s: AuditSettings) -> CliResult<()> {
    if a.all_passages {
        s.scoping = Scoping::AllPassages;
    }
    let mut inputs = Inputs::new();
    inputs.add_model(&a.model)?;
    inputs.add(&a.passages)?;
    inputs.check_output(&a.out)?;
    let passages = read_passages(&a.passages)?;
    let classifier = load_classifier(&a.model)?;
    let report = audit_model(classifier.as_ref(), &passages, s.scoping)?;
    write_json(&a.out, &report)?;
    print!("{}", render_report(std::slice::from_ref(&report)));
    write_manifest("audit", to_value(&s), &inputs, &[&a.out], to_value(&report.counters))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExplainSettings {
    method: MethodArg,
    lime: LimeConfig,
    shapley: ShapleyConfig,
    /// Ranks compared when both methods run.
    top_k: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            method: MethodArg::Both,
            lime: LimeConfig::default(),
            shapley: ShapleyConfig::default(),
            top_k: 3,
        }
    }
}

fn explain(a: ExplainArgs, mut s: ExplainSettings) -> CliResult<()> {
    if let Some(m) = a.method {
        s.method = m;
    }
    if let Some(n) = a.samples {
        s.lime.n_samples = n;
    }
    if let Some(n) = a.permutations {
        s.shapley.n_permutations = n;
    }
    if let Some(seed) = a.seed {
        s.lime.seed = seed;
        s.shapley.seed = seed;
    }
    let target = a
        .label
        .parse::<Label>()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .code();
    let mut inputs = Inputs::new();
    inputs.add_model(&a.model)?;
    if let Some(out) = &a.out {
        inputs.check_output(out)?;
    }
    let classifier = load_classifier(&a.model)?;
    let c = classifier.as_ref();
    let (record, rendering) = match s.method {
        MethodArg::Lime => {
            let l = lime_explain(c, &a.text, target, &s.lime)?;
            (to_value(&l), render_attribution(&a.text, &l))
        }
        MethodArg::Shapley => {
            let sh = shapley_explain(c, &a.text, target, &s.shapley)?;
            (to_value(&sh), render_attribution(&a.text, &sh))
        }
        MethodArg::Both => {
            let l = lime_explain(c, &a.text, target, &s.lime)?;
            let sh = shapley_explain(c, &a.text, target, &s.shapley)?;
            let k = s.top_k.min(l.weights.len()).max(1);
            let agree = if l.weights.is_empty() {
                None
            } else {
                Some(agreement(&l, &sh, k)?)
            };
            let text = format!(
                "{}\n{}",
                render_attribution(&a.text, &l),
                render_attribution(&a.text, &sh)
            );
            (json!({ "lime": l, "shapley": sh, "agreement": agree }), text)
        }
    };
    match &a.out {
        Some(out) => {
            write_json(out, &record)?;
            let config = json!({ "text": a.text, "label": a.label, "settings": s });
            write_manifest("explain", config, &inputs, &[out], Value::Null)?;
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(&record).map_err(|e| Error::Other(e.to_string()))?
        ),
    }
    print!("{rendering}");
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let mut inputs = Inputs::new();
    let mut reports = Vec::with_capacity(a.inputs.len() + 1);
    for p in &a.inputs {
        inputs.add(p)?;
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let r: BiasReport =
            serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    if a.reference {
        reports.push(reference_gpt2());
    }
    let table = render_report(&reports);
    match &a.out {
        Some(out) => {
            inputs.check_output(out)?;
            std::fs::write(out, &table).map_err(|e| Error::io(out, e))?;
            let config = json!({ "reference": a.reference });
            write_manifest("report", config, &inputs, &[out], Value::Null)?;
        }
        None => print!("{table}"),
    }
    Ok(())
}
