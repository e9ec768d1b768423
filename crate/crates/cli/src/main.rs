//! Batch command-line front end: corpus inspection (parse, apply, stats)
//! and hypothesis scoring with the MaxMatch, I-measure, BLEU and GLEU
//! metrics.
//!
//! Reports go to standard output. Exit status 0 on success, 1 with a
//! diagnostic naming file, line and error kind on input failures, 2 on
//! bad flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use geceval::imeasure::{self, ImSentence, SopCosts};
use geceval::m2::{self, AnnotationBlock, Token};
use geceval::maxmatch::{self, AnnotatorChoice, ScoredSentence, SystemEdit};
use geceval::ngram;

#[derive(Parser)]
#[command(
    name = "geceval",
    version,
    about = "Corpus tools and scorers for error correction"
)]
struct Cli {
    /// Output format: human-readable text or flat key-value lines.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Worker threads for corpus scoring (0 = automatic). Results are
    /// identical at any setting.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a gold annotation corpus, printing a summary
    /// per block.
    Parse {
        /// Gold annotation file (m2 format).
        #[arg(long)]
        gold: PathBuf,
    },
    /// Apply gold edits and print the corrected sentences.
    Apply {
        #[arg(long)]
        gold: PathBuf,
        /// Annotator whose edits are applied.
        #[arg(long, default_value_t = 0)]
        annotator: usize,
    },
    /// Corpus statistics: action counts, character inventory, word
    /// frequency histogram and error density.
    Stats {
        #[arg(long)]
        gold: PathBuf,
    },
    /// Score a hypothesis with the MaxMatch edit-overlap method.
    ScoreM2(ScoreM2Args),
    /// Score a hypothesis with the I-measure alignment method.
    ScoreImeasure(ScoreImeasureArgs),
    /// Corpus BLEU over aligned hypothesis/reference files.
    ScoreBleu {
        /// Hypothesis file, one tokenized sentence per line.
        #[arg(long)]
        hyp: PathBuf,
        /// Reference file, aligned line by line.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Maximum n-gram order.
        #[arg(long, default_value_t = 4)]
        ngram_order: usize,
        /// Add-one smoothing for orders above 1.
        #[arg(long, default_value_t = false)]
        smooth: bool,
    },
    /// Corpus GLEU over aligned hypothesis/reference/source files.
    ScoreGleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Source file (the uncorrected input), aligned line by line.
        #[arg(long)]
        src: PathBuf,
        #[arg(long, default_value_t = 4)]
        ngram_order: usize,
        /// Penalty rate for source n-grams the reference removed.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value_t = false)]
        smooth: bool,
    },
}

#[derive(Args)]
struct ScoreM2Args {
    /// Source sentences (.sent). Optional: sources come from the gold
    /// file; when given, the file is checked against it.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Hypothesis sentences (.sent), one per gold block.
    #[arg(long)]
    hyp: PathBuf,
    /// Gold annotation file (m2 format).
    #[arg(long)]
    gold: PathBuf,
    /// Precision weight in the F measure.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Transitive-edit window: merged edits span at most this many
    /// unchanged-or-changed operations plus one.
    #[arg(long, default_value_t = 2)]
    max_unchanged: usize,
    /// Annotator whose gold edits are scored against.
    #[arg(long, default_value_t = 0)]
    annotator: usize,
    /// Pick, per sentence, the annotator maximizing F.
    #[arg(long, default_value_t = false, conflicts_with = "annotator")]
    best_annotator: bool,
}

#[derive(Args)]
struct ScoreImeasureArgs {
    /// Source sentences (.sent). Optional consistency check, as above.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Hypothesis sentences (.sent), one per gold sentence.
    #[arg(long)]
    hyp: PathBuf,
    /// Gold annotations: m2 format, or the sentence/error-list xml scheme
    /// (picked by file extension, override with --gold-format).
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum)]
    gold_format: Option<GoldFormat>,
    /// Weight of true positives in the weighted accuracy.
    #[arg(long, default_value_t = 2.0)]
    w: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Alignment cost of a token match.
    #[arg(long, default_value_t = 0.0)]
    c_match: f64,
    /// Alignment cost of a gap.
    #[arg(long, default_value_t = 2.0)]
    c_gap: f64,
    /// Alignment cost of a substitution.
    #[arg(long, default_value_t = 3.0)]
    c_mismatch: f64,
    #[arg(long, default_value_t = 0)]
    annotator: usize,
    /// Omit the improvement (I) row from the report.
    #[arg(long, default_value_t = false)]
    no_improvement: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GoldFormat {
    M2,
    Xml,
}

/// A diagnosed failure: optional file context plus a kind and message.
struct Failure {
    file: Option<PathBuf>,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(file: &Path, kind: &'static str, message: impl fmt::Display) -> Failure {
        Failure {
            file: Some(file.to_path_buf()),
            kind,
            message: message.to_string(),
        }
    }

    fn bare(kind: &'static str, message: impl fmt::Display) -> Failure {
        Failure {
            file: None,
            kind,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(path) => write!(
                f,
                "error: {}: {}: {}",
                path.display(),
                self.kind,
                self.message
            ),
            None => write!(f, "error: {}: {}", self.kind, self.message),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // Thread count only affects wall time; aggregation is
        // order-independent.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match run(&cli) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Parse { gold } => cmd_parse(gold, cli.format),
        Command::Apply { gold, annotator } => cmd_apply(gold, *annotator, cli.format),
        Command::Stats { gold } => cmd_stats(gold, cli.format),
        Command::ScoreM2(args) => cmd_score_m2(args, cli.format),
        Command::ScoreImeasure(args) => cmd_score_imeasure(args, cli.format),
        Command::ScoreBleu {
            hyp,
            reference,
            ngram_order,
            smooth,
        } => cmd_score_bleu(hyp, reference, *ngram_order, *smooth, cli.format),
        Command::ScoreGleu {
            hyp,
            reference,
            src,
            ngram_order,
            lambda,
            smooth,
        } => cmd_score_gleu(
            hyp,
            reference,
            src,
            *ngram_order,
            *lambda,
            *smooth,
            cli.format,
        ),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(path, "Io", e))
}

fn load_blocks(path: &Path) -> Result<Vec<AnnotationBlock>, Failure> {
    let text = read_file(path)?;
    m2::parse_m2(&text).map_err(|e| Failure::new(path, e.kind(), e))
}

fn load_sent(path: &Path) -> Result<Vec<(String, Vec<Token>)>, Failure> {
    let text = read_file(path)?;
    m2::read_sent(&text).map_err(|e| Failure::new(path, e.kind(), e))
}

/// Plain tokenized text, one sentence per line.
fn load_plain(path: &Path) -> Result<Vec<Vec<String>>, Failure> {
    let text = read_file(path)?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

fn token_strings(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(|t| t.as_str().to_string()).collect()
}

/// Pairs hypothesis sentences with gold blocks by position and validates
/// counts, plus the optional source file against the gold sources.
fn paired_hypotheses(
    blocks_len: usize,
    sources: impl Iterator<Item = Vec<String>>,
    hyp_path: &Path,
    src: &Option<PathBuf>,
) -> Result<Vec<Vec<String>>, Failure> {
    let hyps = load_sent(hyp_path)?;
    if hyps.len() != blocks_len {
        return Err(Failure::new(
            hyp_path,
            "LengthMismatch",
            format!(
                "{} hypothesis sentences for {} gold blocks",
                hyps.len(),
                blocks_len
            ),
        ));
    }
    if let Some(src_path) = src {
        let given = load_sent(src_path)?;
        if given.len() != blocks_len {
            return Err(Failure::new(
                src_path,
                "LengthMismatch",
                format!(
                    "{} source sentences for {} gold blocks",
                    given.len(),
                    blocks_len
                ),
            ));
        }
        for (i, (gold_tokens, (id, tokens))) in sources.zip(&given).enumerate() {
            if token_strings_ref(tokens) != gold_tokens {
                return Err(Failure::new(
                    src_path,
                    "SourceMismatch",
                    format!("sentence {} (id {id}) differs from the gold source", i + 1),
                ));
            }
        }
    }
    Ok(hyps
        .into_iter()
        .map(|(_, tokens)| token_strings(&tokens))
        .collect())
}

fn token_strings_ref(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(|t| t.as_str().to_string()).collect()
}

fn cmd_parse(gold: &Path, format: Format) -> Result<String, Failure> {
    let blocks = load_blocks(gold)?;
    let mut out = String::new();
    for block in &blocks {
        match format {
            Format::Text => out.push_str(&format!(
                "block {}: {} tokens, {} edits, {} annotators\n",
                block.id,
                block.source.len(),
                block.edits.len(),
                block.annotators().len()
            )),
            Format::Kv => out.push_str(&format!(
                "id={} tokens={} edits={} annotators={}\n",
                block.id,
                block.source.len(),
                block.edits.len(),
                block.annotators().len()
            )),
        }
    }
    if format == Format::Text {
        out.push_str(&format!("{} blocks parsed\n", blocks.len()));
    }
    Ok(out)
}

fn cmd_apply(gold: &Path, annotator: usize, format: Format) -> Result<String, Failure> {
    let blocks = load_blocks(gold)?;
    let mut out = String::new();
    for block in &blocks {
        let corrected =
            m2::apply_edits(block, annotator).map_err(|e| Failure::new(gold, e.kind(), e))?;
        let sentence = corrected
            .iter()
            .map(Token::as_str)
            .collect::<Vec<_>>()
            .join(" ");
        match format {
            Format::Text => out.push_str(&format!("{sentence}\n")),
            Format::Kv => out.push_str(&format!("id={} corrected={sentence}\n", block.id)),
        }
    }
    Ok(out)
}

fn cmd_stats(gold: &Path, format: Format) -> Result<String, Failure> {
    let blocks = load_blocks(gold)?;
    let stats = m2::corpus_stats(&blocks).map_err(|e| Failure::new(gold, e.kind(), e))?;
    let mut out = String::new();
    match format {
        Format::Text => {
            out.push_str(&format!("blocks : {}\n", blocks.len()));
            out.push_str(&format!("tokens : {}\n", stats.token_count));
            out.push_str(&format!("unique tokens : {}\n", stats.unique_tokens()));
            out.push_str(&format!(
                "characters (incl. space) : {}\n",
                stats.char_inventory.len()
            ));
            out.push_str(&format!(
                "error density : {:.2} edits/block\n",
                stats.error_density
            ));
            out.push_str("action counts :\n");
            for (action, count) in &stats.action_counts {
                out.push_str(&format!("  {action} : {count}\n"));
            }
            out.push_str("word frequency histogram :\n");
            for (freq, words) in &stats.word_frequency {
                out.push_str(&format!("  {freq} : {words}\n"));
            }
        }
        Format::Kv => {
            out.push_str(&format!(
                "blocks={} tokens={} unique_tokens={} characters={} error_density={:.4}",
                blocks.len(),
                stats.token_count,
                stats.unique_tokens(),
                stats.char_inventory.len(),
                stats.error_density
            ));
            for (action, count) in &stats.action_counts {
                out.push_str(&format!(" action_{action}={count}"));
            }
            for (freq, words) in &stats.word_frequency {
                out.push_str(&format!(" freq_{freq}={words}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

fn cmd_score_m2(args: &ScoreM2Args, format: Format) -> Result<String, Failure> {
    let blocks = load_blocks(&args.gold)?;
    let hyps = paired_hypotheses(
        blocks.len(),
        blocks.iter().map(|b| token_strings(&b.source)),
        &args.hyp,
        &args.src,
    )?;
    let sentences: Vec<ScoredSentence> = blocks
        .iter()
        .zip(hyps)
        .map(|(block, hyp)| ScoredSentence::from_block(block, hyp))
        .collect();
    let choice = if args.best_annotator {
        AnnotatorChoice::Best
    } else {
        AnnotatorChoice::Fixed(args.annotator)
    };
    if !args.beta.is_finite() || args.beta <= 0.0 {
        return Err(Failure::bare("InvalidParameter", "beta must be positive"));
    }
    let report = maxmatch::score_corpus(&sentences, args.beta, args.max_unchanged, choice);
    Ok(match format {
        Format::Text => report.text(),
        Format::Kv => report.kv(),
    })
}

fn cmd_score_imeasure(args: &ScoreImeasureArgs, format: Format) -> Result<String, Failure> {
    let costs = SopCosts::new(args.c_match, args.c_gap, args.c_mismatch)
        .map_err(|e| Failure::bare(e.kind(), e))?;
    let gold_format =
        args.gold_format
            .unwrap_or_else(|| match args.gold.extension().and_then(|e| e.to_str()) {
                Some("xml") => GoldFormat::Xml,
                _ => GoldFormat::M2,
            });

    let (sources, gold_edit_sets): (Vec<Vec<String>>, Vec<Vec<SystemEdit>>) = match gold_format {
        GoldFormat::M2 => {
            let blocks = load_blocks(&args.gold)?;
            let sources: Vec<Vec<String>> =
                blocks.iter().map(|b| token_strings(&b.source)).collect();
            let golds = blocks
                .iter()
                .map(|b| maxmatch::gold_edits(b, args.annotator))
                .collect();
            (sources, golds)
        }
        GoldFormat::Xml => {
            let text = read_file(&args.gold)?;
            let sentences =
                imeasure::read_xml(&text).map_err(|e| Failure::new(&args.gold, e.kind(), e))?;
            let sources = sentences.iter().map(|s| s.tokens.clone()).collect();
            let golds = sentences
                .iter()
                .map(|s| s.gold_edits(args.annotator))
                .collect();
            (sources, golds)
        }
    };

    let hyps = paired_hypotheses(sources.len(), sources.iter().cloned(), &args.hyp, &args.src)?;
    let sentences: Vec<ImSentence> = sources
        .into_iter()
        .zip(hyps)
        .zip(gold_edit_sets)
        .map(|((source, hypothesis), gold_edits)| ImSentence {
            source,
            hypothesis,
            gold_edits,
        })
        .collect();
    let report = imeasure::score_corpus(&sentences, &costs, args.w, args.beta)
        .map_err(|e| Failure::bare(e.kind(), e))?;
    let mut out = match format {
        Format::Text => report.table(),
        Format::Kv => report.kv(),
    };
    if args.no_improvement {
        out = match format {
            // Drop the improvement row, keeping the table layout intact.
            Format::Text => out
                .lines()
                .filter(|l| !l.starts_with("I "))
                .map(|l| format!("{l}\n"))
                .collect(),
            // Strip the improvement keys from the record.
            Format::Kv => {
                out.split_whitespace()
                    .filter(|kv| {
                        !kv.starts_with("detection_i=") && !kv.starts_with("correction_i=")
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
                    + "\n"
            }
        };
    }
    Ok(out)
}

fn cmd_score_bleu(
    hyp: &Path,
    reference: &Path,
    ngram_order: usize,
    smooth: bool,
    format: Format,
) -> Result<String, Failure> {
    if ngram_order == 0 {
        return Err(Failure::bare(
            "InvalidParameter",
            "ngram order must be at least 1",
        ));
    }
    let hyps = load_plain(hyp)?;
    let refs = load_plain(reference)?;
    let report = ngram::bleu(&hyps, &refs, ngram_order, smooth)
        .map_err(|e| Failure::new(hyp, e.kind(), e))?;
    Ok(match format {
        Format::Text => report.text(),
        Format::Kv => report.kv(),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_score_gleu(
    hyp: &Path,
    reference: &Path,
    src: &Path,
    ngram_order: usize,
    lambda: f64,
    smooth: bool,
    format: Format,
) -> Result<String, Failure> {
    if ngram_order == 0 {
        return Err(Failure::bare(
            "InvalidParameter",
            "ngram order must be at least 1",
        ));
    }
    if lambda < 0.0 {
        return Err(Failure::bare(
            "InvalidParameter",
            "lambda must be non-negative",
        ));
    }
    let hyps = load_plain(hyp)?;
    let refs = load_plain(reference)?;
    let srcs = load_plain(src)?;
    let report = ngram::gleu(&hyps, &refs, &srcs, ngram_order, lambda, smooth)
        .map_err(|e| Failure::new(hyp, e.kind(), e))?;
    Ok(match format {
        Format::Text => report.text(),
        Format::Kv => report.kv(),
    })
}
