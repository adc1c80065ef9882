use occupronoun::jsonl::read_records_file;
use occupronoun::neutralizer::{assign_role, detect_compounds, neutralize_abstract, NeutralizeOptions, PronounRole};
use occupronoun::oracle::{MockBackend, Oracle};
use occupronoun::scanner::scan_abstract;
use occupronoun::{Abstract, AntecedentLabel, ClassifiedInstance, LabelSource, Lexicon, PronounInstance, ResolvedInstance};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn tsv_rows(name: &str) -> Vec<(String, String)> {
    let raw = std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap();
    raw.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once('\t').expect("two tab-separated columns");
            (a.to_string(), b.to_string())
        })
        .collect()
}

/// Strips the `{...}` marker and returns the plain text plus the marked char offset.
fn unbrace(s: &str) -> (String, usize) {
    let open = s.find('{').expect("marker");
    let offset = s[..open].chars().count();
    (s.replacen('{', "", 1).replacen('}', "", 1), offset)
}

fn marked_instance(text: &str, offset: usize) -> (Abstract, PronounInstance) {
    let abs = Abstract::new("1", text);
    let found = scan_abstract(&abs, &Lexicon::default_pronouns());
    let inst = detect_compounds(text, &found)
        .into_iter()
        .find(|i| i.offset == offset)
        .unwrap_or_else(|| panic!("no pronoun at {offset} in {text:?}"));
    (abs, inst)
}

fn occupation(inst: PronounInstance) -> ClassifiedInstance {
    ClassifiedInstance {
        resolved: ResolvedInstance { instance: inst, antecedent_text: "the clinician".into(), antecedent_span: None },
        label: AntecedentLabel::Occupation,
        label_source: LabelSource::HumanAnnotation,
    }
}

#[test]
fn role_tagger_accuracy_on_hand_judged_sentences() {
    let rows = tsv_rows("role_judgments.tsv");
    assert_eq!(rows.len(), 50);
    let mut misses = Vec::new();
    for (sentence, want) in &rows {
        let want: PronounRole = want.parse().unwrap();
        let (text, offset) = unbrace(sentence);
        let (_, inst) = marked_instance(&text, offset);
        let got = assign_role(&text, &inst);
        if got != want {
            misses.push(format!("{sentence}: got {got}, want {want}"));
        }
    }
    let accuracy = 1.0 - misses.len() as f64 / rows.len() as f64;
    eprintln!("role accuracy {accuracy:.2}; misses: {misses:#?}");
    assert!(accuracy >= 0.9, "role accuracy {accuracy:.2}");
}

#[test]
fn verb_agreement_on_hand_checked_sentences() {
    let rows = tsv_rows("verb_agreement.tsv");
    assert_eq!(rows.len(), 30);
    let mut misses = Vec::new();
    for (sentence, want) in &rows {
        let (text, offset) = unbrace(sentence);
        let (abs, inst) = marked_instance(&text, offset);
        let out = neutralize_abstract(&abs, &[occupation(inst)], NeutralizeOptions::default()).unwrap();
        if &out.text != want {
            misses.push(format!("{sentence}: got {:?}", out.text));
        }
    }
    eprintln!("verb agreement misses: {misses:#?}");
    assert!(misses.len() <= 2, "{} misses", misses.len());
}

fn patient_abstracts() -> Vec<Abstract> {
    let outcome = read_records_file::<Abstract>(format!("{FIXTURES}/patient_preservation.jsonl")).unwrap();
    assert!(outcome.errors.is_empty());
    outcome.records
}

#[test]
fn patient_labelled_text_is_byte_identical() {
    let lex = Lexicon::default_pronouns();
    for abs in patient_abstracts() {
        let found = scan_abstract(&abs, &lex);
        assert!(!found.is_empty(), "{}", abs.pmid);
        let classified: Vec<_> = detect_compounds(&abs.text, &found)
            .into_iter()
            .map(|i| ClassifiedInstance { label: AntecedentLabel::PatientTrialParticipant, ..occupation(i) })
            .collect();
        let out = neutralize_abstract(&abs, &classified, NeutralizeOptions::default()).unwrap();
        assert_eq!(out.text.as_bytes(), abs.text.as_bytes());
        assert!(out.edits.is_empty());
    }
}

#[test]
fn patient_abstracts_survive_mock_pipeline() {
    let oracle = Oracle::new(MockBackend::new(Lexicon::default_occupations()));
    let lex = Lexicon::default_pronouns();
    for abs in patient_abstracts() {
        let found = detect_compounds(&abs.text, &scan_abstract(&abs, &lex));
        let classified: Vec<_> = found
            .iter()
            .map(|i| {
                let r = oracle.resolve(i, &abs).unwrap().resolved;
                oracle.classify(&r, &abs).unwrap()
            })
            .collect();
        assert!(classified.iter().all(|c| c.label != AntecedentLabel::Occupation), "{}", abs.pmid);
        let out = neutralize_abstract(&abs, &classified, NeutralizeOptions::default()).unwrap();
        assert_eq!(out.text, abs.text);
    }
}

#[test]
fn gold_occupation_antecedents_hit_default_lexicon() {
    let lex = Lexicon::default_occupations();
    let rows = tsv_rows("gold_antecedents.tsv");
    let occ: Vec<_> = rows.iter().filter(|(_, l)| l == "occupation").collect();
    assert!(!occ.is_empty());
    let missed: Vec<_> = occ.iter().filter(|(a, _)| !lex.contains_term(a)).collect();
    assert!(missed.is_empty(), "{missed:?}");
}
