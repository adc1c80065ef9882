//! Scoring runs and their summaries.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::scorer::{ScoreResponse, Scorer};
use super::MaskTestCase;
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Masculine,
    Feminine,
    Inclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub term: String,
    pub choice: Choice,
    pub token: String,
    /// More than one candidate shared the top score.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermResult {
    pub term: String,
    pub frequency: usize,
    pub n_cases: usize,
    pub inclusive: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    /// Scored cases; unscored ones are excluded from every rate.
    pub n_cases: usize,
    pub n_unscored: usize,
    pub n_ties: usize,
    /// Inclusive choices over all scored cases, in percent.
    pub inclusive_rate: f64,
    /// Mean of the per-term percentages.
    pub per_term_mean_rate: f64,
    pub per_term: Vec<TermResult>,
    /// Every case id submitted, scored or not, sorted.
    pub case_ids: Vec<String>,
    pub outcomes: Vec<CaseOutcome>,
}

fn percent(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

/// Argmax over the candidates in masculine, feminine, inclusive order; the
/// first maximum wins.
fn pick(case: &MaskTestCase, resp: &ScoreResponse) -> (Choice, String, bool) {
    let slots = [Choice::Masculine, Choice::Feminine, Choice::Inclusive];
    let tokens = case.candidates.ordered();
    let scores: Vec<f64> = tokens.iter().map(|t| resp.scores[*t]).collect();
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let tie = scores.iter().filter(|&&s| s == scores[best]).count() > 1;
    (slots[best], tokens[best].to_string(), tie)
}

/// Scores every case and summarizes inclusive choices overall and per term.
/// `term_frequencies` supplies the training-edit counts shown per term.
pub fn run_masking_eval<S: Scorer + ?Sized>(
    cases: &[MaskTestCase],
    scorer: &S,
    model_name: &str,
    term_frequencies: &[(String, usize)],
    exec: Exec,
) -> EvalReport {
    let responses = exec.map(cases, |case| scorer.score(case).and_then(|r| r.check(case).map(|()| r)));
    let mut outcomes = Vec::new();
    let mut n_unscored = 0;
    for (case, resp) in cases.iter().zip(responses) {
        match resp {
            Ok(r) => {
                let (choice, token, tie) = pick(case, &r);
                if tie {
                    log::info!("{}: tied scores, picked {token}", case.case_id);
                }
                outcomes.push(CaseOutcome { case_id: case.case_id.clone(), term: case.occupational_term.clone(), choice, token, tie });
            }
            Err(e) => {
                log::warn!("{}: unscored ({e})", case.case_id);
                n_unscored += 1;
            }
        }
    }

    let mut terms: Vec<&str> = Vec::new();
    for c in cases {
        if !terms.contains(&c.occupational_term.as_str()) {
            terms.push(&c.occupational_term);
        }
    }
    let per_term: Vec<TermResult> = terms
        .iter()
        .map(|&term| {
            let mine: Vec<&CaseOutcome> = outcomes.iter().filter(|o| o.term == term).collect();
            let inclusive = mine.iter().filter(|o| o.choice == Choice::Inclusive).count();
            TermResult {
                term: term.to_string(),
                frequency: term_frequencies.iter().find(|(t, _)| t == term).map_or(0, |(_, f)| *f),
                n_cases: mine.len(),
                inclusive,
                accuracy: percent(inclusive, mine.len()),
            }
        })
        .collect();

    let inclusive = outcomes.iter().filter(|o| o.choice == Choice::Inclusive).count();
    let per_term_mean_rate = if per_term.is_empty() {
        0.0
    } else {
        per_term.iter().map(|t| t.accuracy).sum::<f64>() / per_term.len() as f64
    };
    let mut case_ids: Vec<String> = cases.iter().map(|c| c.case_id.clone()).collect();
    case_ids.sort();
    EvalReport {
        model_name: model_name.to_string(),
        n_cases: outcomes.len(),
        n_unscored,
        n_ties: outcomes.iter().filter(|o| o.tie).count(),
        inclusive_rate: percent(inclusive, outcomes.len()),
        per_term_mean_rate,
        per_term,
        case_ids,
        outcomes,
    }
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model_name);
        let _ = writeln!(
            out,
            "cases scored: {}  unscored: {}  ties: {}",
            self.n_cases, self.n_unscored, self.n_ties
        );
        let _ = writeln!(out, "inclusive rate: {:.1}%  (per-term mean {:.1}%)", self.inclusive_rate, self.per_term_mean_rate);
        let _ = writeln!(out, "{:<16} {:>9} {:>6} {:>10}", "term", "frequency", "cases", "inclusive%");
        for t in &self.per_term {
            let _ = writeln!(out, "{:<16} {:>9} {:>6} {:>10.1}", t.term, t.frequency, t.n_cases, t.accuracy);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("no reports to compare")]
    Empty,
    #[error("report {0:?} was run on a different case set than {1:?}")]
    CaseSetMismatch(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_name: String,
    pub inclusive_rate: f64,
    pub n_cases: usize,
}

/// Ranks models by inclusive rate, highest first. All reports must cover the
/// same case ids.
pub fn compare_models(reports: &[EvalReport]) -> Result<Vec<ComparisonRow>, CompareError> {
    let first = reports.first().ok_or(CompareError::Empty)?;
    let reference: BTreeSet<&String> = first.case_ids.iter().collect();
    for r in &reports[1..] {
        if r.case_ids.iter().collect::<BTreeSet<_>>() != reference {
            return Err(CompareError::CaseSetMismatch(r.model_name.clone(), first.model_name.clone()));
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow { model_name: r.model_name.clone(), inclusive_rate: r.inclusive_rate, n_cases: r.n_cases })
        .collect();
    rows.sort_by(|a, b| b.inclusive_rate.total_cmp(&a.inclusive_rate));
    Ok(rows)
}

pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.model_name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$} {:>10}\n", "model", "inclusive%");
    for r in rows {
        let _ = writeln!(out, "{:<width$} {:>10.1}", r.model_name, r.inclusive_rate);
    }
    out
}
