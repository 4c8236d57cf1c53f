//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/output error, 3 scoring
//! error (including a failed self-test).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::{
    brute_force_assignment, min_assignment, score_session_with, AlignError, AssignmentAlgorithm,
    CostMatrix, BRUTE_FORCE_MAX_SPEAKERS,
};
use crate::corpus::{pair_corpora, Corpus, CorpusError, InputFormat};
use crate::editdist::{edit_distance_dp, edit_distance_fast};
use crate::report::{emit_report, EmitOptions, Report, ReportFormat, SessionScore};
use crate::textnorm::{NormalizationConfig, TokenSequence};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SCORING: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "cpcer",
    version,
    about = "Speaker-attributed character error rate (cpCER) scorer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a hypothesis transcript against a reference.
    Score(ScoreArgs),
    /// Check the fast paths against their exhaustive oracles on random inputs.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportArg {
    Json,
    Tsv,
    Pretty,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Hungarian,
    Bruteforce,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Reference transcript.
    #[arg(long = "ref", value_name = "PATH")]
    ref_path: PathBuf,
    /// Hypothesis transcript.
    #[arg(long = "hyp", value_name = "PATH")]
    hyp_path: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    input_format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long, short = 'o', value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pretty")]
    report_format: ReportArg,
    #[arg(long, value_enum, default_value = "hungarian")]
    algorithm: AlgorithmArg,
    /// Skip Unicode compatibility normalization (NFKC).
    #[arg(long)]
    no_compat_normalization: bool,
    /// Keep whitespace characters as tokens.
    #[arg(long)]
    keep_whitespace: bool,
    /// Drop Unicode punctuation before scoring.
    #[arg(long)]
    strip_punctuation: bool,
    /// Lowercase Latin letters before scoring.
    #[arg(long)]
    case_fold_latin: bool,
    /// Include one row per session.
    #[arg(long)]
    per_session: bool,
    /// Report only the overall group.
    #[arg(long)]
    no_group_by_speakers: bool,
    /// Worker threads; defaults to the number of available processors.
    #[arg(long, short = 'j')]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Random instances per check.
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] CorpusError),
    #[error("{}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scoring(#[from] AlignError),
    #[error("self-test failed: {0}")]
    Selftest(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) | CliError::Output { .. } => EXIT_INPUT,
            CliError::Scoring(_) | CliError::Selftest(_) => EXIT_SCORING,
        }
    }
}

/// Parses `argv` (program name first) and runs the requested command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Score(args) => score(&args, stdout, stderr),
        Command::Selftest(args) => selftest(&args, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn score(args: &ScoreArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let jobs = match args.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let cfg = NormalizationConfig {
        apply_compatibility_normalization: !args.no_compat_normalization,
        strip_whitespace: !args.keep_whitespace,
        strip_punctuation: args.strip_punctuation,
        case_fold_latin: args.case_fold_latin,
    };
    let format = match args.input_format {
        FormatArg::Tsv => InputFormat::Tsv,
        FormatArg::Json => InputFormat::Json,
    };
    let algorithm = match args.algorithm {
        AlgorithmArg::Hungarian => AssignmentAlgorithm::Hungarian,
        AlgorithmArg::Bruteforce => AssignmentAlgorithm::BruteForce,
    };

    let reference = Corpus::load(&args.ref_path, format, cfg)?;
    let hypothesis = Corpus::load(&args.hyp_path, format, cfg)?;
    for (side, c) in [("reference", &reference), ("hypothesis", &hypothesis)] {
        if c.duplicates_removed > 0 {
            let _ = writeln!(
                stderr,
                "warning: {side}: dropped {} duplicate segment(s)",
                c.duplicates_removed
            );
        }
    }
    let pairing = pair_corpora(&reference, &hypothesis);
    for w in pairing.warnings() {
        let _ = writeln!(stderr, "warning: {w}");
    }

    if algorithm == AssignmentAlgorithm::BruteForce {
        if let Some(p) = pairing
            .pairs
            .iter()
            .find(|p| p.padded_size() > BRUTE_FORCE_MAX_SPEAKERS)
        {
            return Err(AlignError::TooManySpeakers {
                speakers: p.padded_size(),
                limit: BRUTE_FORCE_MAX_SPEAKERS,
            }
            .into());
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    let outcomes: Vec<Result<SessionScore, AlignError>> = pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .map(|p| score_session_with(p, algorithm).map(|o| SessionScore::from(&o)))
            .collect()
    });
    // Pairs are in session-id order, so the first error is deterministic.
    let scores = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let report = Report::build(scores, !args.no_group_by_speakers);
    let report_format = match args.report_format {
        ReportArg::Json => ReportFormat::Json,
        ReportArg::Tsv => ReportFormat::Tsv,
        ReportArg::Pretty => ReportFormat::Pretty,
    };
    let options = EmitOptions {
        per_session: args.per_session,
    };
    match &args.output {
        Some(path) => {
            let mut file = std::fs::File::create(path).map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
            emit_report(&report, report_format, options, &mut file).map_err(|source| {
                CliError::Output {
                    path: path.clone(),
                    source,
                }
            })
        }
        None => emit_report(&report, report_format, options, stdout).map_err(|source| {
            CliError::Output {
                path: PathBuf::from("<stdout>"),
                source,
            }
        }),
    }
}

const SELFTEST_ALPHABET: &[char] = &[
    'a', 'b', 'c', 'x', 'y', ' ', '你', '好', '们', '世', '界', '。',
];

fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize) -> TokenSequence {
    let len = rng.gen_range(0..=max_len);
    let alphabet = &SELFTEST_ALPHABET[..rng.gen_range(1..=SELFTEST_ALPHABET.len())];
    TokenSequence::new(
        (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect(),
    )
}

fn selftest(args: &SelftestArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let started = Instant::now();

    for i in 0..args.iterations {
        let a = random_tokens(&mut rng, 512);
        let b = random_tokens(&mut rng, 512);
        let (fast, slow) = (edit_distance_fast(&a, &b), edit_distance_dp(&a, &b));
        if fast != slow {
            return Err(CliError::Selftest(format!(
                "edit distance instance {i}: fast {} vs dp {}",
                fast.distance, slow.distance
            )));
        }
    }
    let _ = writeln!(stdout, "edit distance: {} pairs agree", args.iterations);

    for i in 0..args.iterations {
        let n = rng.gen_range(1..=7);
        let rows: Vec<Vec<u64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(0..=10_000)).collect())
            .collect();
        let m = CostMatrix::from_rows(&rows);
        let fast = min_assignment(&m);
        let exhaustive = brute_force_assignment(&m)?;
        if fast != exhaustive {
            return Err(CliError::Selftest(format!(
                "assignment instance {i} ({n}x{n}): hungarian {} vs enumeration {}",
                fast.total, exhaustive.total
            )));
        }
    }
    let _ = writeln!(stdout, "assignment: {} matrices agree", args.iterations);
    let _ = writeln!(stdout, "selftest passed in {:.2?}", started.elapsed());
    Ok(())
}
