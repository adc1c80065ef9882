//! Stage bodies shared by the single-stage commands and `pipeline`, plus
//! JSONL plumbing and the run summary.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use occupronoun::jsonl::{read_records_file, write_records_file};
use occupronoun::model::Validate;
use occupronoun::neutralizer::{detect_compounds, neutralize_corpus, EditRecord, NeutralizeOptions};
use occupronoun::oracle::{
    load_transcript, save_transcript, BatchOutcome, Cached, InstanceFailure, Oracle, OracleBackend,
};
use occupronoun::scanner::{in_year_range, scan_abstract};
use occupronoun::{Abstract, ClassifiedInstance, Exec, Lexicon, PronounInstance, ResolvedInstance};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::Loaded;

#[derive(Debug, Serialize)]
pub struct StageCount {
    pub stage: &'static str,
    #[serde(rename = "in")]
    pub input: usize,
    pub out: usize,
}

/// Written to stderr as one JSON object when a command finishes.
#[derive(Debug, Default, Serialize)]
pub struct Summary {
    pub command: String,
    pub stages: Vec<StageCount>,
    pub malformed_records: usize,
    pub failures: usize,
    pub suspicious: usize,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<&'static str, serde_json::Value>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        Summary { command: command.to_string(), ..Default::default() }
    }

    pub fn stage(&mut self, stage: &'static str, input: usize, out: usize) {
        self.stages.push(StageCount { stage, input, out });
    }

    pub fn note(&mut self, key: &'static str, value: impl Serialize) {
        self.notes.insert(key, serde_json::to_value(value).expect("serializable"));
    }

    pub fn emit(&self) {
        eprintln!("{}", serde_json::to_string(self).expect("serializable"));
    }
}

/// Reads a JSONL file, logging and counting malformed lines.
pub fn read_jsonl<T>(path: &Path, summary: &mut Summary) -> Result<Vec<T>>
where
    T: DeserializeOwned + Validate,
{
    let outcome = read_records_file::<T>(path).with_context(|| format!("reading {}", path.display()))?;
    for e in &outcome.errors {
        log::warn!("{}: {e}", path.display());
    }
    summary.malformed_records += outcome.errors.len();
    Ok(outcome.records)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>, path: &Path) -> Result<usize> {
    write_records_file(records, path).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn by_pmid(abstracts: &[Abstract]) -> HashMap<&str, &Abstract> {
    abstracts.iter().map(|a| (a.pmid.as_str(), a)).collect()
}

pub fn scan(ctx: &Loaded, abstracts: &[Abstract], merge_compounds: bool, exec: Exec) -> Vec<PronounInstance> {
    let years = ctx.cfg.years().map(|y| y.range());
    exec.flat_map(abstracts, |abs| {
        if !in_year_range(abs, years.as_ref()) {
            return Vec::new();
        }
        let found = scan_abstract(abs, &ctx.pronouns);
        if merge_compounds {
            detect_compounds(&abs.text, &found)
        } else {
            found
        }
    })
}

/// Oracle plus where to persist its reply cache afterwards.
pub struct OracleRun {
    pub oracle: Oracle<Cached<Box<dyn OracleBackend>>>,
    save_to: Vec<PathBuf>,
}

impl OracleRun {
    /// `cache` is preloaded when it exists and rewritten afterwards;
    /// `record` is only written.
    pub fn new(ctx: &Loaded, cache: Option<&Path>, record: Option<&Path>) -> Result<Self> {
        let backend = ctx.cfg.backend.build(&ctx.occupations)?;
        let preload = match cache {
            Some(p) if p.is_file() => {
                load_transcript(p).with_context(|| format!("loading cache {}", p.display()))?
            }
            _ => HashMap::new(),
        };
        let oracle = Oracle::new(Cached::with_entries(backend, preload))
            .with_background(ctx.background.clone())
            .with_rules(ctx.rules.clone());
        let save_to = cache.into_iter().chain(record).map(Path::to_path_buf).collect();
        Ok(OracleRun { oracle, save_to })
    }

    pub fn persist(&self) -> Result<()> {
        if self.save_to.is_empty() {
            return Ok(());
        }
        let snapshot = self.oracle.backend().snapshot();
        for p in &self.save_to {
            save_transcript(&snapshot, p).with_context(|| format!("writing transcript {}", p.display()))?;
        }
        Ok(())
    }
}

fn account<T>(summary: &mut Summary, stage: &'static str, input: usize, out: &BatchOutcome<T>) {
    summary.stage(stage, input, out.ok.len());
    summary.failures += out.failures.len();
    summary.suspicious += out.suspicious;
    for f in &out.failures {
        log::warn!("{}: {:?} failed: {}", f.instance_id, f.stage, f.reason);
    }
}

pub fn resolve(
    run: &OracleRun,
    instances: &[PronounInstance],
    abstracts: &[Abstract],
    exec: Exec,
    summary: &mut Summary,
) -> (Vec<ResolvedInstance>, Vec<InstanceFailure>) {
    let out = run.oracle.resolve_batch(instances, &by_pmid(abstracts), exec);
    account(summary, "resolve", instances.len(), &out);
    (out.ok, out.failures)
}

pub fn classify(
    run: &OracleRun,
    resolved: &[ResolvedInstance],
    abstracts: &[Abstract],
    exec: Exec,
    summary: &mut Summary,
) -> (Vec<ClassifiedInstance>, Vec<InstanceFailure>) {
    let out = run.oracle.classify_batch(resolved, &by_pmid(abstracts), exec);
    account(summary, "classify", resolved.len(), &out);
    (out.ok, out.failures)
}

/// Keeps resolved instances whose antecedent contains an occupational term.
pub fn filter_occ<'a>(resolved: &'a [ResolvedInstance], occupations: &Lexicon) -> Vec<&'a ResolvedInstance> {
    resolved.iter().filter(|r| occupations.contains_term(&r.antecedent_text)).collect()
}

pub fn neutralize(
    abstracts: &[Abstract],
    classified: &[ClassifiedInstance],
    opts: NeutralizeOptions,
    exec: Exec,
    summary: &mut Summary,
) -> Result<(Vec<Abstract>, Vec<EditRecord>)> {
    let (out, edits) = neutralize_corpus(abstracts, classified, opts, exec)?;
    summary.stage("neutralize", abstracts.len(), out.len());
    summary.note("edits", edits.len());
    Ok((out, edits))
}
