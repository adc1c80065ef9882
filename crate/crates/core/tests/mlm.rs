mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use occupronoun::jsonl::read_records_file;
use occupronoun::mlm::{
    build_mask_tests, compare_models, run_masking_eval, top_terms, Candidates, Choice, CompareError, HttpScorer,
    MaskTestCase, ScoreResponse, Scorer, ScorerError, ScriptEntry, ScriptedScorer,
};
use occupronoun::model::Validate;
use occupronoun::neutralizer::{EditRecord, PronounRole};
use occupronoun::{Abstract, ClassifiedInstance, Exec, Lexicon};
use proptest::prelude::*;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
const TERMS: [&str; 5] = ["physician", "surgeon", "doctor", "practitioner", "nurse"];

fn fixture_corpus() -> (Vec<Abstract>, Vec<ClassifiedInstance>) {
    let abs = read_records_file::<Abstract>(format!("{FIXTURES}/mask_abstracts.jsonl")).unwrap();
    let cls = read_records_file::<ClassifiedInstance>(format!("{FIXTURES}/mask_classified.jsonl")).unwrap();
    assert!(abs.errors.is_empty() && cls.errors.is_empty());
    (abs.records, cls.records)
}

fn terms() -> Vec<String> {
    TERMS.iter().map(|t| t.to_string()).collect()
}

fn fifty_cases() -> Vec<MaskTestCase> {
    let (abs, cls) = fixture_corpus();
    let built = build_mask_tests(&cls, &abs, &terms(), 10, 7);
    assert!(built.shortfalls.is_empty());
    built.cases
}

/// Chooses inclusive for the first `k` cases (by sorted id), masculine after.
fn first_k_inclusive(cases: &[MaskTestCase], k: usize) -> ScriptedScorer {
    let mut ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    ids.sort();
    ScriptedScorer::new(ids.iter().enumerate().map(|(i, id)| ScriptEntry {
        case_id: id.to_string(),
        choice: if i < k { "inclusive" } else { "masculine" }.into(),
    }))
}

#[test]
fn fifty_cases_ten_per_term() {
    let cases = fifty_cases();
    assert_eq!(cases.len(), 50);
    for term in TERMS {
        assert_eq!(cases.iter().filter(|c| c.occupational_term == term).count(), 10, "{term}");
    }
    for c in &cases {
        c.validate().unwrap();
        assert_eq!(c.candidates, Candidates::for_role(c.role));
    }
    let mut ids: Vec<_> = cases.iter().map(|c| c.case_id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 50);
}

#[test]
fn reference_masking_examples_are_built() {
    let cases = fifty_cases();
    let doctor = cases.iter().find(|c| c.pmid == "7470698").expect("doctor example");
    assert_eq!(
        doctor.sentence,
        "Although a doctor may not be continually aware of it, [MASK] medical activity is firmly rooted in the moral principles of the medical profession."
    );
    assert_eq!(doctor.role, PronounRole::PossessiveDeterminer);
    assert_eq!(doctor.candidates.ordered(), ["his", "her", "their"]);

    let physician = cases.iter().find(|c| c.pmid == "12835877").expect("physician example");
    assert!(physician.sentence.ends_with("to carry a mobile computer with [MASK] all the time."));
    assert_eq!(physician.role, PronounRole::Object);
    assert_eq!(physician.candidates.ordered(), ["him", "her", "them"]);
}

#[test]
fn sampling_is_seeded() {
    let (abs, cls) = fixture_corpus();
    let a = build_mask_tests(&cls, &abs, &terms(), 10, 7);
    let b = build_mask_tests(&cls, &abs, &terms(), 10, 7);
    assert_eq!(a, b);
    let mut reversed = cls.clone();
    reversed.reverse();
    assert_eq!(build_mask_tests(&reversed, &abs, &terms(), 10, 7), a);
    let nurses = |seed| {
        build_mask_tests(&cls, &abs, &terms(), 10, seed)
            .cases
            .into_iter()
            .filter(|c| c.occupational_term == "nurse")
            .map(|c| c.case_id)
            .collect::<Vec<_>>()
    };
    assert!((0..20).any(|s| nurses(s) != nurses(7)), "nurse pool of 12 never resampled");
}

#[test]
fn shortfall_is_reported() {
    let (abs, cls) = fixture_corpus();
    let built = build_mask_tests(&cls, &abs, &terms(), 12, 1);
    assert_eq!(built.cases.len(), 4 * 10 + 12);
    assert_eq!(built.shortfalls.len(), 4);
    assert!(built.shortfalls.iter().all(|s| s.available == 10 && s.requested == 12));

    let built = build_mask_tests(&cls[..3], &abs, &["physician".to_string()], 10, 1);
    assert_eq!(built.cases.len(), built.shortfalls[0].available);
    assert!(built.cases.len() < 10);
}

fn edit(antecedent: &str) -> EditRecord {
    EditRecord {
        pmid: "1".into(),
        start: 0,
        end: 2,
        before: "he".into(),
        after: "they".into(),
        role: PronounRole::Subject,
        antecedent_text: antecedent.into(),
        verb_fix: None,
    }
}

#[test]
fn top_terms_counts_and_ties() {
    let lex = Lexicon::default_occupations();
    let edits = vec![edit("the physician"), edit("a physician"), edit("any physician"), edit("the nurse")];
    assert_eq!(top_terms(&edits, &lex, 2), vec![("physician".to_string(), 3), ("nurse".to_string(), 1)]);
    assert!(top_terms(&[], &lex, 5).is_empty());
    let ab = Lexicon::from_terms("ab", [("a", false), ("b", false)]).unwrap();
    assert_eq!(top_terms(&[edit("a b"), edit("b a")], &ab, 1), vec![("a".to_string(), 2)]);
}

#[test]
fn reference_model_rates_and_ordering() {
    let cases = fifty_cases();
    let runs = [("general-base", 20), ("domain-base", 10), ("historical", 2), ("neutralized", 35)];
    let reports: Vec<_> = runs
        .iter()
        .map(|(name, k)| run_masking_eval(&cases, &first_k_inclusive(&cases, *k), name, &[], Exec::Parallel))
        .collect();
    let rates: Vec<f64> = reports.iter().map(|r| r.inclusive_rate).collect();
    assert_eq!(rates, [40.0, 20.0, 4.0, 70.0]);
    let order: Vec<_> = compare_models(&reports).unwrap().into_iter().map(|r| r.model_name).collect();
    assert_eq!(order, ["neutralized", "general-base", "domain-base", "historical"]);
    assert_eq!(compare_models(&reports[..1]).unwrap().len(), 1);
}

#[test]
fn per_term_rates() {
    let cases = fifty_cases();
    let wanted = [("physician", 10), ("surgeon", 10), ("doctor", 7), ("practitioner", 6), ("nurse", 3)];
    let mut entries = Vec::new();
    for (term, k) in wanted {
        let mut ids: Vec<_> = cases.iter().filter(|c| c.occupational_term == term).map(|c| c.case_id.clone()).collect();
        ids.sort();
        for (i, id) in ids.into_iter().enumerate() {
            entries.push(ScriptEntry { case_id: id, choice: if i < k { "inclusive" } else { "feminine" }.into() });
        }
    }
    let freqs: Vec<(String, usize)> =
        [("physician", 298), ("surgeon", 135), ("doctor", 89), ("practitioner", 68), ("nurse", 64)]
            .iter()
            .map(|(t, f)| (t.to_string(), *f))
            .collect();
    let r = run_masking_eval(&cases, &ScriptedScorer::new(entries), "neutralized", &freqs, Exec::Sequential);
    let got: Vec<(String, usize, f64)> = r.per_term.iter().map(|t| (t.term.clone(), t.frequency, t.accuracy)).collect();
    assert_eq!(
        got,
        [
            ("physician".to_string(), 298, 100.0),
            ("surgeon".to_string(), 135, 100.0),
            ("doctor".to_string(), 89, 70.0),
            ("practitioner".to_string(), 68, 60.0),
            ("nurse".to_string(), 64, 30.0),
        ]
    );
    assert_eq!(r.inclusive_rate, 72.0);
    assert_eq!(r.per_term_mean_rate, 72.0);
    assert_eq!(r.per_term.iter().map(|t| t.n_cases).sum::<usize>(), r.n_cases);
    assert!(r.render_table().contains("nurse"));
}

#[test]
fn always_masculine_scores_zero_and_unscored_are_excluded() {
    let cases = fifty_cases();
    let r = run_masking_eval(&cases, &first_k_inclusive(&cases, 0), "m", &[], Exec::Sequential);
    assert_eq!(r.inclusive_rate, 0.0);

    let partial = ScriptedScorer::new(cases.iter().skip(5).map(|c| ScriptEntry {
        case_id: c.case_id.clone(),
        choice: "inclusive".into(),
    }));
    let r = run_masking_eval(&cases, &partial, "p", &[], Exec::Sequential);
    assert_eq!((r.n_cases, r.n_unscored), (45, 5));
    assert_eq!(r.inclusive_rate, 100.0);
    assert_eq!(r.case_ids.len(), 50);
}

struct Fixed([f64; 3]);

impl Scorer for Fixed {
    fn score(&self, case: &MaskTestCase) -> Result<ScoreResponse, ScorerError> {
        let scores: BTreeMap<String, f64> =
            case.candidates.ordered().iter().zip(self.0).map(|(t, s)| (t.to_string(), s)).collect();
        Ok(ScoreResponse { case_id: case.case_id.clone(), scores })
    }
}

#[test]
fn ties_break_toward_masculine_then_feminine() {
    let cases = &fifty_cases()[..4];
    let r = run_masking_eval(cases, &Fixed([0.3, 0.3, 0.3]), "tie", &[], Exec::Sequential);
    assert!(r.outcomes.iter().all(|o| o.tie && o.choice == Choice::Masculine));
    assert_eq!(r.n_ties, 4);
    let r = run_masking_eval(cases, &Fixed([0.1, 0.5, 0.5]), "tie", &[], Exec::Sequential);
    assert!(r.outcomes.iter().all(|o| o.tie && o.choice == Choice::Feminine));
    let r = run_masking_eval(cases, &Fixed([-3.0, -2.0, -1.0]), "logits", &[], Exec::Sequential);
    assert!(r.outcomes.iter().all(|o| !o.tie && o.choice == Choice::Inclusive));
}

#[test]
fn non_finite_scores_leave_case_unscored() {
    let cases = &fifty_cases()[..3];
    let r = run_masking_eval(cases, &Fixed([f64::NAN, 0.0, 1.0]), "nan", &[], Exec::Sequential);
    assert_eq!((r.n_cases, r.n_unscored), (0, 3));
    assert_eq!(r.inclusive_rate, 0.0);
}

#[test]
fn compare_rejects_different_case_sets() {
    let cases = fifty_cases();
    let a = run_masking_eval(&cases, &first_k_inclusive(&cases, 1), "a", &[], Exec::Sequential);
    let b = run_masking_eval(&cases[1..], &first_k_inclusive(&cases, 1), "b", &[], Exec::Sequential);
    assert!(matches!(compare_models(&[a, b]), Err(CompareError::CaseSetMismatch(..))));
    assert_eq!(compare_models(&[]), Err(CompareError::Empty));
}

#[test]
fn http_scorer_speaks_the_wire_protocol() {
    let cases = fifty_cases();
    let server = common::Server::start(2, |req| {
        let cands = req["candidates"].as_array().unwrap();
        let scores: serde_json::Map<_, _> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str().unwrap().to_string(), serde_json::json!(i as f64)))
            .collect();
        (200, serde_json::json!({"case_id": req["case_id"], "scores": scores}).to_string())
    });
    let scorer = HttpScorer::new(&format!("{}/", server.url), Duration::from_secs(5));
    assert!(scorer.url().ends_with("/score"));
    let r = run_masking_eval(&cases[..2], &scorer, "http", &[], Exec::Sequential);
    assert_eq!(r.inclusive_rate, 100.0);
    let reqs = server.join();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[0].path, "/score");
    let body = &reqs[0].body;
    assert_eq!(body["mask_token"], "[MASK]");
    assert_eq!(body["case_id"], cases[0].case_id.as_str());
    assert_eq!(body["sentence"], cases[0].sentence.as_str());
    assert_eq!(body["candidates"].as_array().unwrap().len(), 3);
}

#[test]
fn http_scorer_rejects_incomplete_scores() {
    let cases = fifty_cases();
    let server = common::Server::start(1, |req| (200, serde_json::json!({"case_id": req["case_id"], "scores": {"his": 1.0}}).to_string()));
    let scorer = HttpScorer::new(&server.url, Duration::from_secs(5));
    assert!(matches!(scorer.score(&cases[0]), Err(ScorerError::BadResponse(_))));
    server.join();
}

proptest! {
    #[test]
    fn argmax_is_invariant_under_monotone_maps(raw in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 1..40)) {
        let cases = fifty_cases();
        let n = raw.len().min(cases.len());
        let cases = &cases[..n];
        let base: Vec<Choice> = cases.iter().zip(&raw).map(|(c, s)| {
            run_masking_eval(std::slice::from_ref(c), &Fixed(*s), "x", &[], Exec::Sequential).outcomes[0].choice
        }).collect();
        let mapped: Vec<Choice> = cases.iter().zip(&raw).map(|(c, s)| {
            let t = s.map(|v| (v / 10.0).exp() * 3.0 + 7.0);
            run_masking_eval(std::slice::from_ref(c), &Fixed(t), "x", &[], Exec::Sequential).outcomes[0].choice
        }).collect();
        prop_assert_eq!(base, mapped);
    }
}
