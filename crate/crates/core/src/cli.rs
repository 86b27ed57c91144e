//! Command-line pipeline: preprocess, report-ads, build-vocab, train,
//! generate, evaluate, ablate.
//!
//! Machine output (logs, reports, batch generation) is JSON-Lines on
//! stdout; human-oriented tables and progress go to stderr. Any run-config
//! key can follow the subcommand's own flags as `--key value`.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::ablation::{encode_all, run_variant, AblationData, AblationSetup};
use crate::checkpoint::{Checkpoint, TrainingMeta};
use crate::config::{RunConfig, SEED_ENV};
use crate::corpus::{
    ad_report, filter_ads, load_corpus, normalize_record, read_blocklist, split_corpus, write_corpus, CorpusFormat,
    ReviewRecord, Splits, Vocabulary,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    config_digest, corpus_bleu, evaluate_model, format_table, random_selection_baseline, reference_tokens, EvalReport,
};
use crate::generation::{decode, postprocess};
use crate::model::{FusionVariant, Transformer};
use crate::training::train;

#[derive(Debug, Parser)]
#[command(name = "trrgen", version, about = "Feature-conditioned Transformer for app-review responses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a raw corpus (placeholders, lowercasing, optional ad filtering).
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Expressions to strip from responses, one per line.
        #[arg(long)]
        blocklist: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Count mid-sentence n-grams in responses to spot template text (TSV).
    ReportAds {
        #[arg(long)]
        input: PathBuf,
        /// Only print expressions above the flag threshold.
        #[arg(long)]
        flagged_only: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build a vocabulary file from a preprocessed corpus.
    BuildVocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        min_freq: Option<usize>,
    },
    /// Train a model and write the best-validation checkpoint.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Also append the JSON-Lines log to this file.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a response for one review, or for every line of `--batch`.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required_unless_present = "batch")]
        review: Option<String>,
        #[arg(long, required_unless_present = "batch")]
        rating: Option<i64>,
        #[arg(long, required_unless_present = "batch")]
        category: Option<String>,
        #[arg(long, default_value = "")]
        app_name: String,
        /// JSON-Lines input with review, rating, category (and app_name).
        #[arg(long, conflicts_with_all = ["review", "rating", "category"])]
        batch: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Decode a test corpus and report corpus BLEU-4.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Train and evaluate one model per fusion variant on a shared split.
    Ablate {
        /// Comma-separated fusion variants.
        #[arg(long, value_delimiter = ',', default_values_t = default_variants())]
        variants: Vec<FusionVariant>,
        /// Also score the random-selection baseline.
        #[arg(long)]
        baseline: bool,
        /// Write one checkpoint per variant here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn default_variants() -> Vec<FusionVariant> {
    vec![
        FusionVariant::Vanilla,
        FusionVariant::RatingOnly,
        FusionVariant::CategoryOnly,
        FusionVariant::TrrgenConcat,
    ]
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Field overrides: `--learning_rate 3e-3 --fusion_variant trrgen_sum`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Decoding overrides (`--strategy beam --beam_width 4 --max_decode_len 40`).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let env = std::env::var(SEED_ENV).ok();
        RunConfig::resolve(self.config.as_deref(), env.as_deref(), &parse_overrides(&self.overrides)?)
    }
}

/// `--key value` and `--key=value` pairs; dashes in keys become
/// underscores.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Usage(format!("expected --key, found {arg:?}")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_owned(), v.to_owned()),
            None => {
                let v = it.next().ok_or_else(|| Error::Usage(format!("--{key} needs a value")))?;
                (key.to_owned(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Parse arguments and run. Errors come back to the caller; clap's own
/// usage errors are mapped to [`Error::Usage`].
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}").map_err(io_err)?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return Err(Error::Usage(first.trim_start_matches("error: ").to_owned()));
        }
    };
    match cli.command {
        Command::Preprocess {
            input,
            output,
            blocklist,
            run,
        } => cmd_preprocess(&input, &output, blocklist.as_deref(), &run.resolve()?, stdout),
        Command::ReportAds {
            input,
            flagged_only,
            run,
        } => cmd_report_ads(&input, flagged_only, &run.resolve()?, stdout),
        Command::BuildVocab {
            input,
            output,
            min_freq,
        } => cmd_build_vocab(&input, &output, min_freq.unwrap_or(RunConfig::default().min_freq), stdout),
        Command::Train { out, log, run } => cmd_train(&run.resolve()?, &out, log.as_deref(), stdout, stderr),
        Command::Generate {
            checkpoint,
            review,
            rating,
            category,
            app_name,
            batch,
            decode,
        } => {
            let ckpt = load_with_decode(&checkpoint, &decode)?;
            match batch {
                Some(path) => cmd_generate_batch(&ckpt, &path, stdout),
                None => {
                    let input = GenerateInput {
                        app_name,
                        category: category.expect("required by clap"),
                        rating: rating.expect("required by clap"),
                        review: review.expect("required by clap"),
                    };
                    let text = generate_one(&ckpt, &input)?;
                    writeln!(stdout, "{text}").map_err(io_err)
                }
            }
        }
        Command::Evaluate {
            checkpoint,
            test,
            decode,
        } => {
            let ckpt = load_with_decode(&checkpoint, &decode)?;
            cmd_evaluate(&ckpt, &test, stdout, stderr)
        }
        Command::Ablate {
            variants,
            baseline,
            out_dir,
            run,
        } => cmd_ablate(&run.resolve()?, &variants, baseline, out_dir.as_deref(), stdout, stderr),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn load(path: &Path) -> Result<Vec<ReviewRecord>> {
    load_corpus(path, CorpusFormat::from_path(path))
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out).map_err(io_err)
}

pub fn cmd_preprocess(
    input: &Path,
    output: &Path,
    blocklist: Option<&Path>,
    config: &RunConfig,
    stdout: &mut dyn Write,
) -> Result<()> {
    let pre = config.preprocess_config();
    let raw = load(input)?;
    let normalized: Vec<ReviewRecord> = raw.iter().map(|r| normalize_record(r, &pre)).collect();
    let (mut kept, dropped): (Vec<_>, Vec<_>) = normalized.into_iter().partition(|r| !r.review_text.is_empty());

    let mut blocked: HashSet<Vec<String>> = HashSet::new();
    if let Some(path) = blocklist {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        blocked.extend(read_blocklist(BufReader::new(file), pre.ad_ngram_n)?);
    }
    if config.filter_ads {
        blocked.extend(ad_report(&kept, &pre).flagged().map(|e| e.expression.clone()));
    }
    let before = kept.len();
    if !blocked.is_empty() {
        kept = filter_ads(&kept, &blocked, pre.ad_ngram_n);
    }
    let mut out = create(output)?;
    write_corpus(&mut out, &kept, CorpusFormat::from_path(output)).map_err(|e| Error::io(output, e))?;
    out.flush().map_err(|e| Error::io(output, e))?;
    write_json(
        stdout,
        &serde_json::json!({
            "input": raw.len(),
            "written": kept.len(),
            "dropped_empty_review": dropped.len(),
            "dropped_empty_response": before - kept.len(),
            "blocked_expressions": blocked.len(),
        }),
    )
}

pub fn cmd_report_ads(input: &Path, flagged_only: bool, config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let corpus = load(input)?;
    ad_report(&corpus, &config.preprocess_config())
        .write_tsv(stdout, flagged_only)
        .map_err(io_err)
}

pub fn cmd_build_vocab(input: &Path, output: &Path, min_freq: usize, stdout: &mut dyn Write) -> Result<()> {
    let vocab = Vocabulary::build(&load(input)?, min_freq);
    let mut out = create(output)?;
    vocab.write(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(output, e))?;
    write_json(
        stdout,
        &serde_json::json!({ "tokens": vocab.len(), "categories": vocab.categories(), "min_freq": min_freq }),
    )
}

/// Train/valid/test records from explicit paths, or a seeded split of
/// `train_path` when the others are absent.
pub fn load_splits(config: &RunConfig) -> Result<Splits<ReviewRecord>> {
    let train_path = config
        .train_path
        .as_deref()
        .ok_or_else(|| Error::Config("train_path is required".into()))?;
    let corpus = load(train_path)?;
    let mut splits = if config.valid_path.is_none() && config.test_path.is_none() {
        split_corpus(corpus, config.seed, config.split_ratios)?
    } else {
        Splits {
            train: corpus,
            valid: Vec::new(),
            test: Vec::new(),
        }
    };
    if let Some(p) = &config.valid_path {
        splits.valid = load(p)?;
    }
    if let Some(p) = &config.test_path {
        splits.test = load(p)?;
    }
    if splits.train.is_empty() {
        return Err(Error::Empty("training corpus is empty"));
    }
    Ok(splits)
}

fn vocabulary_for(config: &RunConfig, train: &[ReviewRecord]) -> Result<Vocabulary> {
    match &config.vocab_path {
        Some(p) => {
            let file = File::open(p).map_err(|e| Error::io(p, e))?;
            Vocabulary::read(BufReader::new(file), config.min_freq)
        }
        None => Ok(Vocabulary::build(train, config.min_freq)),
    }
}

pub fn cmd_train(
    config: &RunConfig,
    out: &Path,
    log: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let splits = load_splits(config)?;
    let vocab = vocabulary_for(config, &splits.train)?;
    let pre = config.preprocess_config();
    let train_set = encode_all(&splits.train, &vocab, &pre)?;
    let valid_set = encode_all(&splits.valid, &vocab, &pre)?;
    let mut model = Transformer::new(config.model_config(vocab.len()))?;
    let _ = writeln!(
        stderr,
        "training {} on {} pairs ({} validation), {} parameters",
        config.fusion_variant,
        train_set.len(),
        valid_set.len(),
        model.params.scalar_count()
    );

    let mut log_file = log.map(create).transpose()?;
    let mut write_err = None;
    let outcome = train(&mut model, &train_set, &valid_set, &config.train_config(), |entry| {
        let mut result = write_json(stdout, entry);
        if let (Ok(()), Some(f)) = (&result, log_file.as_mut()) {
            result = write_json(f, entry);
        }
        match result {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                write_err = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let (Some(f), Some(path)) = (log_file.as_mut(), log) {
        f.flush().map_err(|e| Error::io(path, e))?;
    }
    let meta = TrainingMeta {
        epoch: outcome.best_epoch,
        best_valid_loss: outcome.best_valid_loss,
    };
    Checkpoint::new(config.clone(), vocab, model, meta)?.save(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateInput {
    #[serde(default)]
    pub app_name: String,
    pub category: String,
    pub rating: i64,
    pub review: String,
}

#[derive(Serialize)]
struct GenerateOutput<'a> {
    input: &'a GenerateInput,
    response: String,
}

fn load_with_decode(path: &Path, decode: &DecodeArgs) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::load(path)?;
    for (k, v) in parse_overrides(&decode.overrides)? {
        if !matches!(k.as_str(), "strategy" | "beam_width" | "max_decode_len" | "length_penalty") {
            return Err(Error::Usage(format!("--{k} cannot be changed after training")));
        }
        ckpt.run.set(&k, &v)?;
    }
    ckpt.run.decode_config().validate()?;
    Ok(ckpt)
}

/// Normalize, encode, decode and postprocess one review.
pub fn generate_one(ckpt: &Checkpoint, input: &GenerateInput) -> Result<String> {
    let pre = ckpt.run.preprocess_config();
    let record = ReviewRecord::new(&input.app_name, &input.category, input.rating, &input.review, "");
    record.check().map_err(Error::Config)?;
    let record = normalize_record(&record, &pre);
    let review = crate::corpus::encode_review(&record, &ckpt.vocab, &pre)?;
    let ids = decode(&ckpt.model, &review, &ckpt.run.decode_config())?;
    postprocess(&ids, &ckpt.vocab)
}

fn cmd_generate_batch(ckpt: &Checkpoint, path: &Path, stdout: &mut dyn Write) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let input: GenerateInput = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let response = generate_one(ckpt, &input)?;
        write_json(stdout, &GenerateOutput { input: &input, response })?;
    }
    Ok(())
}

fn cmd_evaluate(ckpt: &Checkpoint, test: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let records = load(test)?;
    let pre = ckpt.run.preprocess_config();
    let eval = evaluate_model(&ckpt.model, &ckpt.vocab, &records, &ckpt.run.decode_config(), &pre)?;
    let report = EvalReport::new(
        ckpt.model.config.fusion_variant.as_str(),
        records.len(),
        eval.bleu,
        config_digest(&ckpt.run)?,
    );
    write_json(stdout, &report)?;
    let _ = write!(stderr, "{}", format_table(std::slice::from_ref(&report)));
    Ok(())
}

fn cmd_ablate(
    config: &RunConfig,
    variants: &[FusionVariant],
    baseline: bool,
    out_dir: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    if variants.is_empty() {
        return Err(Error::Empty("variant list"));
    }
    let splits = load_splits(config)?;
    if splits.test.is_empty() {
        return Err(Error::Empty("test split is empty"));
    }
    let vocab = vocabulary_for(config, &splits.train)?;
    let setup = AblationSetup {
        model: config.model_config(vocab.len()),
        train: config.train_config(),
        decode: config.decode_config(),
        preprocess: config.preprocess_config(),
    };
    let data = AblationData {
        train: &splits.train,
        valid: &splits.valid,
        test: &splits.test,
        vocab: &vocab,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut reports = Vec::new();
    for &variant in variants {
        let _ = writeln!(stderr, "ablate: training {variant}");
        let run = run_variant(&data, &setup, variant, |_| ControlFlow::Continue(()))?;
        if let Some(dir) = out_dir {
            let mut run_config = config.clone();
            run_config.fusion_variant = variant;
            let meta = TrainingMeta {
                epoch: run.outcome.best_epoch,
                best_valid_loss: run.outcome.best_valid_loss,
            };
            Checkpoint::new(run_config, vocab.clone(), run.model, meta)?.save(&dir.join(format!("{variant}.ckpt")))?;
        }
        write_json(stdout, &run.report)?;
        reports.push(run.report);
    }
    if baseline {
        let pool: Vec<Vec<String>> = splits.train.iter().map(reference_tokens).collect();
        let refs: Vec<Vec<String>> = splits.test.iter().map(reference_tokens).collect();
        let candidates = random_selection_baseline(&pool, refs.len(), config.seed)?;
        let report = EvalReport::new("random_selection", refs.len(), corpus_bleu(&candidates, &refs)?, config_digest(config)?);
        write_json(stdout, &report)?;
        reports.push(report);
    }
    let _ = write!(stderr, "{}", format_table(&reports));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_pairs() {
        let args: Vec<String> = ["--d-model", "8", "--seed=3", "--fusion_variant", "vanilla"]
            .map(String::from)
            .to_vec();
        assert_eq!(
            parse_overrides(&args).unwrap(),
            vec![
                ("d_model".to_owned(), "8".to_owned()),
                ("seed".to_owned(), "3".to_owned()),
                ("fusion_variant".to_owned(), "vanilla".to_owned())
            ]
        );
        assert!(parse_overrides(&["--seed".to_owned()]).is_err());
        assert!(parse_overrides(&["seed".to_owned()]).is_err());
    }

    #[test]
    fn clap_accepts_trailing_overrides() {
        let cli = Cli::try_parse_from(["trrgen", "train", "--out", "m.ckpt", "--config", "c.toml", "--d_model", "8"]).unwrap();
        match cli.command {
            Command::Train { out, run, .. } => {
                assert_eq!(out, PathBuf::from("m.ckpt"));
                assert_eq!(run.config, Some(PathBuf::from("c.toml")));
                assert_eq!(run.overrides, vec!["--d_model", "8"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_are_single_line() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let e = run(["trrgen", "frobnicate"], &mut out, &mut err).unwrap_err();
        assert_eq!(e.kind(), "usage");
        assert!(!e.to_string().contains('\n'));
        run(["trrgen", "--help"], &mut out, &mut err).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("ablate"));
    }
}
