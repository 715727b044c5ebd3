use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use canontok::analysis::{emit_report, MultiplicityReport, ReportFormat};
use canontok::bpe::train_bpe;
use canontok::generation::{generate, load_source, BigramLm, DistributionSource, PerturbedSource, SamplingMode};
use canontok::records::{append_outputs, read_records, GenerationOutput};
use canontok::unigram::train_unigram;
use canontok::wordpiece::train_wordpiece;
use canontok::{is_canonical, load_spec, save_spec, TokenId, TokenizerSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "canontok", version, about = "Train tokenizers, check canonicity, sample canonically and measure tokenization multiplicity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tokenizer on a corpus with one document per line.
    Train(TrainArgs),
    /// Train a smoothed bigram model on canonical encodings of a corpus.
    TrainLm(TrainLmArgs),
    /// Print the canonical encoding of a string.
    Encode(TextArgs),
    /// Print the string a token sequence decodes to.
    Decode(IdsArgs),
    /// Report whether a token sequence is canonical (exit code 1 if not).
    Check(IdsArgs),
    /// Sample outputs from a model and append them as JSON lines.
    Sample(SampleArgs),
    /// Compute multiplicity and price metrics over generation records.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Bpe,
    Wordpiece,
    Unigram,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of merges (bpe).
    #[arg(long)]
    merges: Option<usize>,
    /// Target vocabulary size (wordpiece, unigram).
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Fraction of removable tokens pruned per round (unigram).
    #[arg(long, default_value_t = 0.2)]
    prune: f64,
    /// Split lines with the built-in pretokenizer before training and encoding.
    #[arg(long)]
    pretokenize: bool,
}

#[derive(Args)]
struct TrainLmArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Add-k smoothing constant.
    #[arg(long, default_value_t = canontok::generation::DEFAULT_SMOOTHING)]
    k: f64,
}

#[derive(Args)]
struct TextArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Input string; read from stdin when absent.
    #[arg(long)]
    text: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct IdsArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Token ids separated by spaces or commas; read from stdin when absent.
    #[arg(long, allow_hyphen_values = true)]
    ids: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Standard,
    Canonical,
    Rejection,
}

impl From<Mode> for SamplingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Standard => SamplingMode::Standard,
            Mode::Canonical => SamplingMode::Canonical,
            Mode::Rejection => SamplingMode::Rejection,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Bigram model JSON or a JSON-lines distribution table.
    #[arg(long)]
    lm: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Canonical)]
    mode: Mode,
    /// Run seed; sample i uses seed + i.
    #[arg(long, env = "CANONTOK_SEED")]
    seed: u64,
    #[arg(short = 'n', long = "num", default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "p0")]
    prompt_id: String,
    /// Prompt text, encoded canonically and given to the model as context.
    #[arg(long, default_value = "")]
    prompt: String,
    /// Move this much probability onto non-canonical extensions before sampling.
    #[arg(long)]
    perturb: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Tokenizer spec; needed for the canonicity and word-consistency metrics.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    records: Vec<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Usage(String),
    Runtime(canontok::Error),
}

impl From<canontok::Error> for Failure {
    fn from(e: canontok::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::TrainLm(a) => train_lm(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Check(a) => check(a),
        Command::Sample(a) => sample(a),
        Command::Analyze(a) => analyze(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_owned).collect())
}

fn stdin_or(arg: Option<String>) -> Result<String, Failure> {
    match arg {
        Some(s) => Ok(s),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s.strip_suffix('\n').map(|t| t.strip_suffix('\r').unwrap_or(t)).unwrap_or(&s).to_owned())
        }
    }
}

fn parse_ids(text: &str) -> Result<Vec<TokenId>, Failure> {
    text.split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Failure::Usage(format!("not a token id: {s:?}"))))
        .collect()
}

fn join_ids(ids: &[TokenId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn surfaces(spec: &TokenizerSpec, ids: &[TokenId]) -> Result<Vec<String>, Failure> {
    ids.iter()
        .map(|&id| Ok(spec.vocab().token(id)?.to_string()))
        .collect()
}

fn train(a: TrainArgs) -> CmdResult {
    let corpus = read_lines(&a.input)?;
    let spec = match a.algo {
        Algo::Bpe => {
            let merges = a.merges.ok_or_else(|| Failure::Usage("--merges is required for bpe".into()))?;
            train_bpe(&corpus, merges, a.pretokenize)?
        }
        Algo::Wordpiece | Algo::Unigram => {
            let size = a
                .vocab_size
                .ok_or_else(|| Failure::Usage("--vocab-size is required for wordpiece and unigram".into()))?;
            if matches!(a.algo, Algo::Wordpiece) {
                train_wordpiece(&corpus, size, a.pretokenize)?
            } else {
                train_unigram(&corpus, size, a.prune, a.pretokenize)?
            }
        }
    };
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    save_spec(&spec, &a.out)?;
    println!(
        "{} tokenizer with {} tokens ({} merges) written to {}",
        spec.kind(),
        spec.vocab_size(),
        spec.merges().len(),
        a.out.display()
    );
    Ok(0)
}

fn train_lm(a: TrainLmArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let corpus = read_lines(&a.input)?;
    let lm = BigramLm::train(&spec, &corpus, a.k)?;
    fs::write(&a.out, lm.to_json()?)?;
    println!("bigram model over {} tokens written to {}", spec.vocab_size(), a.out.display());
    Ok(0)
}

fn encode(a: TextArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let text = stdin_or(a.text)?;
    let ids = spec.encode(&text)?;
    let names = surfaces(&spec, &ids)?;
    match a.format {
        OutputFormat::Text => {
            println!("{}", join_ids(&ids));
            println!("{}", names.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" "));
        }
        OutputFormat::Json => {
            println!("{}", serde_json::json!({ "ids": ids, "tokens": names }));
        }
    }
    Ok(0)
}

fn decode(a: IdsArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let ids = parse_ids(&stdin_or(a.ids)?)?;
    let text = spec.decode(&ids)?;
    match a.format {
        OutputFormat::Text => println!("{text}"),
        OutputFormat::Json => println!("{}", serde_json::json!({ "text": text })),
    }
    Ok(0)
}

fn check(a: IdsArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let ids = parse_ids(&stdin_or(a.ids)?)?;
    let canonical = is_canonical(&spec, &ids)?;
    let reencoded = spec.encode(&spec.decode(&ids)?)?;
    match a.format {
        OutputFormat::Text => {
            println!("{}", if canonical { "canonical" } else { "non-canonical" });
            println!("canonical encoding: {}", join_ids(&reencoded));
        }
        OutputFormat::Json => {
            println!("{}", serde_json::json!({ "canonical": canonical, "canonical_encoding": reencoded }));
        }
    }
    Ok(if canonical { 0 } else { EXIT_NEGATIVE })
}

fn sample(a: SampleArgs) -> CmdResult {
    let spec = load_spec(&a.spec)?;
    let mut source: Box<dyn DistributionSource> = load_source(&a.lm)?;
    if let Some(eps) = a.perturb {
        source = Box::new(PerturbedSource::new(source, spec.clone(), eps)?);
    }
    let prompt = spec.encode(&a.prompt)?;
    let mode = SamplingMode::from(a.mode);
    let mut outputs = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let seed = a.seed.wrapping_add(i as u64);
        let generation = generate(&spec, &source, mode, &prompt, a.max_len, seed)?;
        outputs.push(GenerationOutput::new(&spec, a.prompt_id.clone(), seed, mode, &generation)?);
    }
    append_outputs(&a.out, &outputs)?;
    let non_canonical = outputs.iter().filter(|o| !o.canonical).count();
    println!(
        "{} {mode} samples appended to {} ({non_canonical} non-canonical)",
        outputs.len(),
        a.out.display()
    );
    Ok(0)
}

fn analyze(a: AnalyzeArgs) -> CmdResult {
    let spec = a.spec.as_deref().map(load_spec).transpose()?;
    let mut records = Vec::new();
    for path in &a.records {
        records.extend(read_records(path)?);
    }
    let report = MultiplicityReport::build(&records, spec.as_ref());
    let format = match a.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    let written = emit_report(&report, format, &a.report)?;
    for (metric, value) in report.summary_rows() {
        if let Some(v) = value {
            println!("{metric}: {v}");
        }
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(0)
}
