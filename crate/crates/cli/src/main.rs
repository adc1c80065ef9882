mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use occupronoun::metrics::{
    classification_metrics, cohen_kappa, disagreements, resolution_accuracy, LabelSequencePair,
};
use occupronoun::mlm::{
    build_mask_tests, compare_models, render_comparison, run_masking_eval, top_terms, EvalReport, HttpScorer,
    MaskTestCase, Scorer, ScriptedScorer,
};
use occupronoun::model::Validate;
use occupronoun::neutralizer::{EditRecord, NeutralizeOptions};
use occupronoun::oracle::BackendKind;
use occupronoun::scanner::in_year_range;
use occupronoun::{Abstract, ClassifiedInstance, Exec, PronounInstance, ResolvedInstance};
use serde::{Deserialize, Serialize};

use config::{Loaded, PipelineConfig, YearRange};
use stages::{read_jsonl, write_json, write_jsonl, OracleRun, Summary};

/// Rewrites gendered pronouns that refer to occupations in abstract corpora,
/// and evaluates the result.
#[derive(Parser)]
#[command(name = "occupronoun", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for corpus stages.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Instance-level failures tolerated before exiting with status 2.
    #[arg(long, global = true, default_value_t = 0)]
    max_failures: usize,
    #[arg(long, global = true)]
    pronouns: Option<PathBuf>,
    #[arg(long, global = true)]
    occupations: Option<PathBuf>,
    /// Publication years to keep, e.g. 1965-1980 or 1981-.
    #[arg(long, global = true)]
    years: Option<YearRange>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args, Default)]
struct BackendArgs {
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Transcript to replay from.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Write every oracle reply to this transcript.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Reply cache, read if present and rewritten afterwards.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RewriteArgs {
    #[arg(long)]
    no_verb_agreement: bool,
    /// Leave pronouns alone when the antecedent names a sex.
    #[arg(long)]
    gender_guard: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract gendered-pronoun instances from abstracts.
    Scan {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_merge_compounds: bool,
    },
    /// Ask the oracle for each instance's antecedent.
    Resolve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        abstracts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        failures: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Ask the oracle for each antecedent's label.
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        abstracts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        failures: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Keep resolved instances whose antecedent has an occupational term.
    FilterOcc {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite occupation-linked pronouns.
    Neutralize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        classified: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        edits: Option<PathBuf>,
        #[command(flatten)]
        rewrite: RewriteArgs,
    },
    /// Cohen's kappa between two labelled instance files.
    Kappa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        disagreements: Option<PathBuf>,
    },
    /// Classification and resolution metrics against gold labels.
    Metrics {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        strict_match: bool,
    },
    /// Sample masked-sentence test cases per occupational term.
    BuildTests {
        #[arg(long)]
        classified: PathBuf,
        #[arg(long)]
        abstracts: PathBuf,
        /// Comma-separated terms; otherwise the top --k terms in --edits.
        #[arg(long, value_delimiter = ',')]
        terms: Option<Vec<String>>,
        #[arg(long)]
        edits: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        n_per_term: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        terms_out: Option<PathBuf>,
    },
    /// Score test cases against one model.
    EvalMlm {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long, conflicts_with = "script")]
        scorer_url: Option<String>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        model_name: String,
        /// Term frequencies written by build-tests.
        #[arg(long)]
        terms: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reference overall rate to print next to the measured ones.
        #[arg(long)]
        reference_rate: Option<f64>,
        #[arg(long, default_value_t = 120)]
        timeout_secs: u64,
    },
    /// Rank evaluation reports by inclusive rate.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// scan, resolve, classify and neutralize in one run.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        edits: Option<PathBuf>,
        /// Keep the intermediate files here.
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long)]
        failures: Option<PathBuf>,
        #[arg(long)]
        no_merge_compounds: bool,
        /// Drop non-occupational antecedents before classification.
        #[arg(long)]
        filter_occ: bool,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        rewrite: RewriteArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scan { .. } => "scan",
            Command::Resolve { .. } => "resolve",
            Command::Classify { .. } => "classify",
            Command::FilterOcc { .. } => "filter-occ",
            Command::Neutralize { .. } => "neutralize",
            Command::Kappa { .. } => "kappa",
            Command::Metrics { .. } => "metrics",
            Command::BuildTests { .. } => "build-tests",
            Command::EvalMlm { .. } => "eval-mlm",
            Command::Compare { .. } => "compare",
            Command::Pipeline { .. } => "pipeline",
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = match self {
            Command::Scan { input, .. } | Command::FilterOcc { input, .. } | Command::Pipeline { input, .. } => {
                vec![input]
            }
            Command::Resolve { input, abstracts, .. } | Command::Classify { input, abstracts, .. } => {
                vec![input, abstracts]
            }
            Command::Neutralize { input, classified, .. } => vec![input, classified],
            Command::Kappa { a, b, .. } => vec![a, b],
            Command::Metrics { predicted, gold, .. } => vec![predicted, gold],
            Command::BuildTests { classified, abstracts, edits, .. } => {
                let mut v: Vec<&Path> = vec![classified, abstracts];
                v.extend(edits.as_deref());
                v
            }
            Command::EvalMlm { cases, script, terms, .. } => {
                let mut v: Vec<&Path> = vec![cases];
                v.extend(script.as_deref());
                v.extend(terms.as_deref());
                v
            }
            Command::Compare { reports, .. } => reports.iter().map(PathBuf::as_path).collect(),
        };
        v.dedup();
        v
    }
}

impl BackendArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let b = &mut cfg.backend;
        if let Some(k) = self.backend {
            b.kind = k;
        }
        if let Some(e) = &self.endpoint {
            b.endpoint = Some(e.clone());
        }
        if let Some(m) = &self.model {
            b.model_name = Some(m.clone());
        }
        if let Some(t) = &self.transcript {
            b.transcript = Some(t.clone());
        }
        if let Some(s) = &self.mock_script {
            b.mock_script = Some(s.clone());
        }
        if let Some(p) = &self.background {
            cfg.background = Some(p.clone());
        }
        if let Some(p) = &self.rules {
            cfg.rules = Some(p.clone());
        }
    }
}

impl RewriteArgs {
    fn options(&self, cfg: &PipelineConfig) -> NeutralizeOptions {
        NeutralizeOptions {
            verb_agreement: cfg.verb_agreement && !self.no_verb_agreement,
            gender_guard: cfg.gender_guard || self.gender_guard,
        }
    }
}

/// `{term, frequency}` lines passed from build-tests to eval-mlm.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermFrequency {
    term: String,
    frequency: usize,
}

impl Validate for TermFrequency {
    fn validate(&self) -> Result<(), String> {
        if self.term.trim().is_empty() {
            return Err("empty term".into());
        }
        Ok(())
    }
}

fn exec_for(workers: usize) -> Exec {
    if workers <= 1 {
        return Exec::Sequential;
    }
    #[cfg(feature = "parallel")]
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
        Exec::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    {
        log::warn!("built without the parallel feature; --workers {workers} ignored");
        Exec::Sequential
    }
}

fn load_config(global: &GlobalArgs, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &global.pronouns {
        cfg.pronoun_lexicon = Some(p.clone());
    }
    if let Some(p) = &global.occupations {
        cfg.occupation_lexicon = Some(p.clone());
    }
    if let Some(y) = global.years {
        cfg.year_from = y.from;
        cfg.year_to = y.to;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    match command {
        Command::Resolve { backend, .. } | Command::Classify { backend, .. } | Command::Pipeline { backend, .. } => {
            backend.apply(&mut cfg)
        }
        Command::Metrics { strict_match: true, .. } => cfg.strict_match = true,
        _ => {}
    }
    Ok(cfg)
}

fn check_inputs(command: &Command) -> Result<()> {
    for p in command.inputs() {
        if !p.is_file() {
            bail!("input {} does not exist", p.display());
        }
    }
    Ok(())
}

fn write_failures(path: Option<&Path>, failures: &[occupronoun::oracle::InstanceFailure]) -> Result<()> {
    if let Some(p) = path {
        write_jsonl(failures, p)?;
    }
    Ok(())
}

fn run(cli: Cli, summary: &mut Summary) -> Result<()> {
    let cfg = load_config(&cli.global, &cli.command)?;
    check_inputs(&cli.command)?;
    let ctx = Loaded::new(cfg)?;
    if matches!(cli.command, Command::Resolve { .. } | Command::Classify { .. } | Command::Pipeline { .. }) {
        ctx.cfg.backend.validate()?;
    }
    let exec = exec_for(cli.global.workers);

    match &cli.command {
        Command::Scan { input, out, no_merge_compounds } => {
            let abstracts: Vec<Abstract> = read_jsonl(input, summary)?;
            let found = stages::scan(&ctx, &abstracts, !no_merge_compounds, exec);
            summary.stage("scan", abstracts.len(), found.len());
            write_jsonl(&found, out)?;
        }
        Command::Resolve { input, abstracts, out, failures, backend } => {
            let instances: Vec<PronounInstance> = read_jsonl(input, summary)?;
            let abstracts: Vec<Abstract> = read_jsonl(abstracts, summary)?;
            let run = OracleRun::new(&ctx, backend.cache.as_deref(), backend.record.as_deref())?;
            let (ok, failed) = stages::resolve(&run, &instances, &abstracts, exec, summary);
            write_jsonl(&ok, out)?;
            write_failures(failures.as_deref(), &failed)?;
            run.persist()?;
        }
        Command::Classify { input, abstracts, out, failures, backend } => {
            let resolved: Vec<ResolvedInstance> = read_jsonl(input, summary)?;
            let abstracts: Vec<Abstract> = read_jsonl(abstracts, summary)?;
            let run = OracleRun::new(&ctx, backend.cache.as_deref(), backend.record.as_deref())?;
            let (ok, failed) = stages::classify(&run, &resolved, &abstracts, exec, summary);
            write_jsonl(&ok, out)?;
            write_failures(failures.as_deref(), &failed)?;
            run.persist()?;
        }
        Command::FilterOcc { input, out } => {
            let resolved: Vec<ResolvedInstance> = read_jsonl(input, summary)?;
            let kept = stages::filter_occ(&resolved, &ctx.occupations);
            summary.stage("filter-occ", resolved.len(), kept.len());
            write_jsonl(kept, out)?;
        }
        Command::Neutralize { input, classified, out, edits, rewrite } => {
            let abstracts: Vec<Abstract> = read_jsonl(input, summary)?;
            let classified: Vec<ClassifiedInstance> = read_jsonl(classified, summary)?;
            let (new, edit_log) = stages::neutralize(&abstracts, &classified, rewrite.options(&ctx.cfg), exec, summary)?;
            write_jsonl(&new, out)?;
            if let Some(p) = edits {
                write_jsonl(&edit_log, p)?;
            }
        }
        Command::Kappa { a, b, disagreements: dis_out } => {
            let a: Vec<ClassifiedInstance> = read_jsonl(a, summary)?;
            let b: Vec<ClassifiedInstance> = read_jsonl(b, summary)?;
            let (pair, unmatched) = LabelSequencePair::align(&a, &b);
            if !unmatched.is_empty() {
                log::warn!("{} instance(s) labelled on one side only were left out", unmatched.len());
            }
            let pair = pair?;
            let k = cohen_kappa(&pair)?;
            println!(
                "kappa {:.4} (observed {:.4}, expected {:.4}, n {})",
                k.kappa, k.observed_agreement, k.expected_agreement, k.n
            );
            let dis = disagreements(&pair);
            summary.note("unmatched", unmatched.len());
            summary.note("disagreements", dis.len());
            if let Some(p) = dis_out {
                write_jsonl(&dis, p)?;
            }
        }
        Command::Metrics { predicted, gold, report, .. } => {
            let predicted: Vec<ClassifiedInstance> = read_jsonl(predicted, summary)?;
            let gold: Vec<ClassifiedInstance> = read_jsonl(gold, summary)?;
            let (pair, unmatched) = LabelSequencePair::align(&predicted, &gold);
            if !unmatched.is_empty() {
                log::warn!("{} instance(s) present on one side only were left out", unmatched.len());
            }
            let pair = pair?;
            let metrics = classification_metrics(&pair.labels_a, &pair.labels_b)?;
            let gold_text: std::collections::HashMap<&str, &str> =
                gold.iter().map(|c| (c.instance_id(), c.resolved.antecedent_text.as_str())).collect();
            let (p_ant, g_ant): (Vec<&str>, Vec<&str>) = predicted
                .iter()
                .filter_map(|c| gold_text.get(c.instance_id()).map(|g| (c.resolved.antecedent_text.as_str(), *g)))
                .unzip();
            let accuracy = resolution_accuracy(&p_ant, &g_ant, ctx.cfg.strict_match)?;
            print!("{}", metrics.render_table());
            let mode = if ctx.cfg.strict_match { "strict" } else { "normalized" };
            println!("resolution accuracy {accuracy:.4} ({mode}, n {})", p_ant.len());
            summary.note("unmatched", unmatched.len());
            if let Some(p) = report {
                write_json(&serde_json::json!({ "classification": metrics, "resolution_accuracy": accuracy }), p)?;
            }
        }
        Command::BuildTests { classified, abstracts, terms, edits, k, n_per_term, out, terms_out } => {
            let classified: Vec<ClassifiedInstance> = read_jsonl(classified, summary)?;
            let mut abstracts: Vec<Abstract> = read_jsonl(abstracts, summary)?;
            let years = ctx.cfg.years().map(|y| y.range());
            abstracts.retain(|a| in_year_range(a, years.as_ref()));
            let ranked: Vec<(String, usize)> = match (terms, edits) {
                (Some(t), _) => t.iter().map(|t| (t.trim().to_string(), 0)).collect(),
                (None, Some(e)) => {
                    let edit_log: Vec<EditRecord> = read_jsonl(e, summary)?;
                    top_terms(&edit_log, &ctx.occupations, *k)
                }
                (None, None) => bail!("build-tests needs --terms or --edits"),
            };
            let names: Vec<String> = ranked.iter().map(|(t, _)| t.clone()).collect();
            let build = build_mask_tests(&classified, &abstracts, &names, *n_per_term, ctx.cfg.seed);
            for s in &build.shortfalls {
                log::warn!("term {:?}: {} of {} requested cases available", s.term, s.available, s.requested);
            }
            summary.stage("build-tests", classified.len(), build.cases.len());
            summary.note("shortfalls", &build.shortfalls);
            write_jsonl(&build.cases, out)?;
            if let Some(p) = terms_out {
                let rows: Vec<TermFrequency> =
                    ranked.into_iter().map(|(term, frequency)| TermFrequency { term, frequency }).collect();
                write_jsonl(&rows, p)?;
            }
        }
        Command::EvalMlm { cases, scorer_url, script, model_name, terms, out, reference_rate, timeout_secs } => {
            let cases: Vec<MaskTestCase> = read_jsonl(cases, summary)?;
            let scorer: Box<dyn Scorer> = match (scorer_url, script) {
                (Some(url), _) => Box::new(HttpScorer::new(url, Duration::from_secs(*timeout_secs))),
                (None, Some(p)) => {
                    Box::new(ScriptedScorer::load(p).with_context(|| format!("loading script {}", p.display()))?)
                }
                (None, None) => bail!("eval-mlm needs --scorer-url or --script"),
            };
            let freqs: Vec<(String, usize)> = match terms {
                Some(p) => read_jsonl::<TermFrequency>(p, summary)?.into_iter().map(|t| (t.term, t.frequency)).collect(),
                None => Vec::new(),
            };
            let report = run_masking_eval(&cases, scorer.as_ref(), model_name, &freqs, exec);
            summary.stage("eval-mlm", cases.len(), report.n_cases);
            summary.failures += report.n_unscored;
            print!("{}", report.render_table());
            if let Some(r) = reference_rate {
                println!(
                    "reference {r:.1}%: direct {:.1}% ({:+.1}), per-term mean {:.1}% ({:+.1})",
                    report.inclusive_rate,
                    report.inclusive_rate - r,
                    report.per_term_mean_rate,
                    report.per_term_mean_rate - r
                );
            }
            if let Some(p) = out {
                write_json(&report, p)?;
            }
        }
        Command::Compare { reports, out } => {
            let mut loaded = Vec::new();
            for p in reports {
                let raw = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let r: EvalReport = serde_json::from_str(&raw).with_context(|| format!("parsing {}", p.display()))?;
                loaded.push(r);
            }
            let rows = compare_models(&loaded)?;
            print!("{}", render_comparison(&rows));
            if let Some(p) = out {
                write_json(&rows, p)?;
            }
        }
        Command::Pipeline { input, out, edits, work_dir, failures, no_merge_compounds, filter_occ, backend, rewrite } => {
            let abstracts: Vec<Abstract> = read_jsonl(input, summary)?;
            if let Some(d) = work_dir {
                std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            }
            let keep = |name: &str| work_dir.as_ref().map(|d| d.join(name));

            let found = stages::scan(&ctx, &abstracts, !no_merge_compounds, exec);
            summary.stage("scan", abstracts.len(), found.len());
            if let Some(p) = keep("instances.jsonl") {
                write_jsonl(&found, &p)?;
            }

            let run = OracleRun::new(&ctx, backend.cache.as_deref(), backend.record.as_deref())?;
            let (mut resolved, mut failed) = stages::resolve(&run, &found, &abstracts, exec, summary);
            if let Some(p) = keep("resolved.jsonl") {
                write_jsonl(&resolved, &p)?;
            }
            if *filter_occ {
                let before = resolved.len();
                resolved = stages::filter_occ(&resolved, &ctx.occupations).into_iter().cloned().collect();
                summary.stage("filter-occ", before, resolved.len());
                if let Some(p) = keep("filtered.jsonl") {
                    write_jsonl(&resolved, &p)?;
                }
            }

            let (classified, cls_failed) = stages::classify(&run, &resolved, &abstracts, exec, summary);
            failed.extend(cls_failed);
            if let Some(p) = keep("classified.jsonl") {
                write_jsonl(&classified, &p)?;
            }
            run.persist()?;

            let (new, edit_log) = stages::neutralize(&abstracts, &classified, rewrite.options(&ctx.cfg), exec, summary)?;
            write_jsonl(&new, out)?;
            if let Some(p) = edits.clone().or_else(|| keep("edits.jsonl")) {
                write_jsonl(&edit_log, &p)?;
            }
            write_failures(failures.as_deref(), &failed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let max_failures = cli.global.max_failures;
    let mut summary = Summary::new(cli.command.name());
    let result = run(cli, &mut summary);
    summary.emit();
    match result {
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Ok(()) if summary.failures + summary.malformed_records > max_failures => {
            eprintln!(
                "error: {} failure(s) exceed --max-failures {max_failures}",
                summary.failures + summary.malformed_records
            );
            ExitCode::from(2)
        }
        Ok(()) => ExitCode::SUCCESS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "occupronoun",
            "--seed",
            "7",
            "--years",
            "1981-",
            "pipeline",
            "--in",
            "a",
            "--out",
            "b",
            "--backend",
            "replay",
            "--transcript",
            "t",
        ])
        .unwrap();
        let cfg = load_config(&cli.global, &cli.command).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.year_from, Some(1981));
        assert_eq!(cfg.backend.kind, BackendKind::Replay);
        assert_eq!(cfg.backend.transcript.as_deref(), Some(Path::new("t")));
    }

    #[test]
    fn inputs_are_listed_once() {
        let cli = Cli::try_parse_from(["occupronoun", "kappa", "--a", "x", "--b", "x"]).unwrap();
        assert_eq!(cli.command.inputs(), [Path::new("x")]);
    }
}
