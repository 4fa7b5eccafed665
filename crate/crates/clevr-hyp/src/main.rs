//! Command-line front end: generate datasets, execute programs against
//! scenes, validate, balance, compute stats, and score predictions.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use clevr_hyp::dataset::{
    compute_stats, read_samples, render_stats, write_samples, DatasetError, ExportMode,
};
use clevr_hyp::executor::{execute_action_sequence, execute_question, ExecError};
use clevr_hyp::eval::{read_predictions, score, EvalError};
use clevr_hyp::generator::{
    balance, generate_split, GenConfig, GenError, Sample, SplitKind,
};
use clevr_hyp::program::{parse_program, Dialect, ParseError, Program};
use clevr_hyp::scene::{validate_scene, Scene};

// exit codes: 2 usage/config, 3 generation, 4 program parse/type,
// 5 execution, 6 evaluation input mismatch
const EXIT_CONFIG: u8 = 2;
const EXIT_GENERATION: u8 = 3;
const EXIT_PROGRAM: u8 = 4;
const EXIT_EXEC: u8 = 5;
const EXIT_EVAL: u8 = 6;

#[derive(Parser)]
#[command(name = "clevr-hyp", about = "Mental-simulation QA dataset toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset split as JSON Lines.
    Generate(GenerateArgs),
    /// Run action/question programs against a scene.
    Exec(ExecArgs),
    /// Score a predictions file against a dataset.
    Eval(EvalArgs),
    /// Summary statistics for a dataset file.
    Stats(StatsArgs),
    /// Check scene invariants or re-verify a dataset's answers.
    Validate(ValidateArgs),
    /// Re-balance a dataset to a uniform answer distribution.
    Balance(BalanceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// original | balanced | 2hop-ta | 2hop-qh
    #[arg(long, default_value = "original")]
    split: String,
    #[arg(long, default_value_t = 100)]
    images: u64,
    /// Master seed; CLEVR_HYP_SEED supplies the default.
    #[arg(long, env = "CLEVR_HYP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Omit scenes and programs from the written records.
    #[arg(long)]
    test_mode: bool,
    /// External command that rewrites each question text (stdin -> stdout).
    #[arg(long)]
    paraphrase_cmd: Option<String>,
    /// Give up on the paraphrase command after this many milliseconds.
    #[arg(long, default_value_t = 5000)]
    paraphrase_timeout_ms: u64,
}

#[derive(Args)]
struct ExecArgs {
    /// Scene JSON file.
    #[arg(long)]
    scene: PathBuf,
    /// Action program(s), applied in order.
    #[arg(long = "action")]
    actions: Vec<String>,
    /// Question program, answered after the actions.
    #[arg(long)]
    question: Option<String>,
    /// Write the post-action scene here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Write the JSON report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Emit JSON instead of the text table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scene JSON file to check.
    #[arg(long, conflicts_with = "dataset")]
    scene: Option<PathBuf>,
    /// Dataset whose answers are re-derived and compared.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct BalanceArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}


/// Prints to stdout, tolerating a closed pipe (e.g. `| head`).
fn emit(args: std::fmt::Arguments<'_>) {
    let _ = std::io::stdout().write_fmt(args);
    let _ = writeln!(std::io::stdout());
}

macro_rules! emit {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> CliError {
        CliError { code, message: message.into() }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> CliError {
        CliError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> CliError {
        CliError::new(EXIT_GENERATION, e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> CliError {
        CliError::new(EXIT_PROGRAM, e.to_string())
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> CliError {
        CliError::new(EXIT_EXEC, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        CliError::new(EXIT_EVAL, e.to_string())
    }
}

fn config_io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| config_io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| config_io(path, e))
}

/// Pipes `text` through an external command; falls back to the original on
/// any failure or timeout.
fn paraphrase(cmd: &str, text: &str, timeout: Duration) -> Option<String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .ok()?;
    child.stdin.take()?.write_all(text.as_bytes()).ok()?;
    let mut stdout = child.stdout.take()?;
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) if status.success() => break,
            Ok(Some(_)) => return None,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return None;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(_) => return None,
        }
    }
    let mut out = String::new();
    stdout.read_to_string(&mut out).ok()?;
    let line = out.lines().next()?.trim();
    (!line.is_empty()).then(|| line.to_string())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let split = SplitKind::parse(&args.split)
        .ok_or_else(|| CliError::new(EXIT_CONFIG, format!("unknown split `{}`", args.split)))?;
    let cfg = GenConfig { seed: args.seed, n_images: args.images, split };
    let mut samples = generate_split(&cfg)?;
    if split == SplitKind::Balanced {
        samples = balance(&samples)?;
    }
    if let Some(cmd) = &args.paraphrase_cmd {
        let timeout = Duration::from_millis(args.paraphrase_timeout_ms);
        let mut failures = 0usize;
        for s in &mut samples {
            match paraphrase(cmd, &s.question_text, timeout) {
                Some(p) => s.question_text = p,
                None => failures += 1,
            }
        }
        if failures > 0 {
            eprintln!("paraphrase command failed for {failures} sample(s); originals kept");
        }
    }
    let mode = if args.test_mode { ExportMode::Test } else { ExportMode::Full };
    write_samples(&args.out, &samples, mode)?;
    let stats = compute_stats(&samples);
    let stats_path = sidecar(&args.out, "stats.json");
    let json = serde_json::to_vec_pretty(&stats)
        .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    write_atomic(&stats_path, &json)?;
    if args.test_mode {
        // gold scenes move to a sidecar so graders keep access to them
        let scenes: Vec<serde_json::Value> = dedup_scenes(&samples);
        let json = serde_json::to_vec_pretty(&scenes)
            .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
        write_atomic(&sidecar(&args.out, "scenes.json"), &json)?;
    }
    eprintln!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    name.push('.');
    name.push_str(suffix);
    out.with_file_name(name)
}

fn dedup_scenes(samples: &[Sample]) -> Vec<serde_json::Value> {
    let mut seen = std::collections::BTreeSet::new();
    samples
        .iter()
        .filter(|s| seen.insert(s.image_id))
        .map(|s| serde_json::json!({ "image_id": s.image_id, "scene": s.scene }))
        .collect()
}

fn read_scene(path: &Path) -> Result<Scene, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| config_io(path, e))
}

fn cmd_exec(args: ExecArgs) -> Result<(), CliError> {
    let scene = read_scene(&args.scene)?;
    let violations = validate_scene(&scene);
    if !violations.is_empty() {
        return Err(CliError::new(EXIT_CONFIG, format!("invalid scene: {violations:?}")));
    }
    let mut actions: Vec<Program> = Vec::new();
    for a in &args.actions {
        let p = parse_program(a)?;
        if p.dialect != Dialect::Action {
            return Err(CliError::new(EXIT_PROGRAM, format!("not an action program: {a}")));
        }
        actions.push(p);
    }
    let post = execute_action_sequence(&actions, &scene)?;
    if let Some(q) = &args.question {
        let p = parse_program(q)?;
        if p.dialect != Dialect::Question {
            return Err(CliError::new(EXIT_PROGRAM, format!("not a question program: {q}")));
        }
        let answer = execute_question(&p, &post)?;
        emit!("{answer}");
    }
    let json = serde_json::to_string_pretty(&post)
        .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    match &args.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None if args.question.is_none() => emit!("{json}"),
        None => {}
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let samples =
        read_samples(&args.dataset).map_err(|e| CliError::new(EXIT_EVAL, e.to_string()))?;
    let predictions = read_predictions(&args.predictions)?;
    let report = score(&samples, &predictions)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    emit!("{json}");
    if let Some(path) = &args.out {
        write_atomic(path, json.as_bytes())?;
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let samples = read_samples(&args.dataset)?;
    let stats = compute_stats(&samples);
    let rendered = if args.json {
        serde_json::to_string_pretty(&stats).map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?
    } else {
        render_stats(&stats)
    };
    emit!("{rendered}");
    if let Some(path) = &args.out {
        write_atomic(path, rendered.as_bytes())?;
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    if let Some(path) = &args.scene {
        let scene = read_scene(path)?;
        let violations = validate_scene(&scene);
        if violations.is_empty() {
            emit!("scene ok: {} object(s)", scene.objects.len());
            return Ok(());
        }
        return Err(CliError::new(EXIT_CONFIG, format!("invalid scene: {violations:?}")));
    }
    let Some(path) = &args.dataset else {
        return Err(CliError::new(EXIT_CONFIG, "pass --scene or --dataset"));
    };
    let samples = read_samples(path)?;
    for s in &samples {
        let mut actions = Vec::new();
        for a in &s.action_programs {
            actions.push(parse_program(a)?);
        }
        let post = execute_action_sequence(&actions, &s.scene)?;
        let q = parse_program(&s.question_program)?;
        let answer = execute_question(&q, &post)?;
        if answer != s.answer {
            return Err(CliError::new(
                EXIT_EVAL,
                format!(
                    "image {} pair {}: stored answer {} but execution yields {answer}",
                    s.image_id, s.pair_index, s.answer
                ),
            ));
        }
    }
    emit!("dataset ok: {} sample(s) re-verified", samples.len());
    Ok(())
}

fn cmd_balance(args: BalanceArgs) -> Result<(), CliError> {
    let samples = read_samples(&args.dataset)?;
    let balanced = balance(&samples)?;
    write_samples(&args.out, &balanced, ExportMode::Full)?;
    eprintln!("kept {} of {} samples", balanced.len(), samples.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Exec(a) => cmd_exec(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Stats(a) => cmd_stats(a),
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Balance(a) => cmd_balance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
