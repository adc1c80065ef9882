mod common;

use std::collections::HashMap;
use std::time::Duration;

use occupronoun::jsonl::read_records_file;
use occupronoun::neutralizer::{detect_compounds, neutralize_corpus, NeutralizeOptions};
use occupronoun::oracle::{
    build_resolution_prompt, save_transcript, BackendError, Cached, MockBackend, Oracle, OracleBackend,
    RemoteBackend, ReplayBackend, Retrying,
};
use occupronoun::scanner::scan_corpus;
use occupronoun::{Abstract, AntecedentLabel, Exec, Lexicon};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn worked() -> Vec<Abstract> {
    read_records_file::<Abstract>(format!("{FIXTURES}/worked_abstracts.jsonl")).unwrap().records
}

fn scripted_mock() -> MockBackend {
    let script = MockBackend::load_script(format!("{FIXTURES}/worked_mock_script.jsonl")).unwrap();
    MockBackend::new(Lexicon::default_occupations()).with_script(script)
}

fn chat_reply(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn remote_backend_posts_chat_request() {
    let server = common::Server::start(1, |_| (200, chat_reply("the surgeon")));
    let backend = RemoteBackend::new(server.url.clone(), "llama".into(), Some("k3y".into()), Duration::from_secs(5));
    let abs = &worked()[0];
    let inst = scan_corpus(std::slice::from_ref(abs), &Lexicon::default_pronouns(), None, Exec::Sequential).remove(0);
    let prompt = build_resolution_prompt(&inst, abs, "rules").unwrap();
    assert_eq!(backend.complete(&prompt).unwrap(), "the surgeon");

    let reqs = server.join();
    let body = &reqs[0].body;
    assert_eq!(body["model"], "llama");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], prompt.system_content.as_str());
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], prompt.user_content.as_str());
    assert!(reqs[0].headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer k3y"));
}

#[test]
fn server_errors_are_retried_client_errors_are_not() {
    let mut calls = 0;
    let server = common::Server::start(2, move |_| {
        calls += 1;
        if calls == 1 { (503, "{}".into()) } else { (200, chat_reply("occupation")) }
    });
    let remote = RemoteBackend::new(server.url.clone(), "m".into(), None, Duration::from_secs(5));
    let backend = Retrying::new(remote, 3).with_base_delay(Duration::from_millis(1));
    let abs = &worked()[0];
    let inst = scan_corpus(std::slice::from_ref(abs), &Lexicon::default_pronouns(), None, Exec::Sequential).remove(0);
    let prompt = build_resolution_prompt(&inst, abs, "").unwrap();
    assert_eq!(backend.complete(&prompt).unwrap(), "occupation");
    assert_eq!(server.join().len(), 2);

    let server = common::Server::start(1, |_| (400, "{\"error\": \"bad\"}".into()));
    let remote = RemoteBackend::new(server.url.clone(), "m".into(), None, Duration::from_secs(5));
    let backend = Retrying::new(remote, 3).with_base_delay(Duration::from_millis(1));
    assert!(matches!(backend.complete(&prompt), Err(BackendError::Rejected(_))));
    assert_eq!(server.join().len(), 1);
}

#[test]
fn worked_examples_end_to_end_with_scripted_mock() {
    let abstracts = worked();
    let scanned = scan_corpus(&abstracts, &Lexicon::default_pronouns(), None, Exec::Sequential);
    let instances: Vec<_> = abstracts
        .iter()
        .flat_map(|a| {
            let mine: Vec<_> = scanned.iter().filter(|i| i.pmid == a.pmid).cloned().collect();
            detect_compounds(&a.text, &mine)
        })
        .collect();
    assert_eq!(instances.len(), 3);
    let by_pmid: HashMap<&str, &Abstract> = abstracts.iter().map(|a| (a.pmid.as_str(), a)).collect();
    let oracle = Oracle::new(scripted_mock());
    let resolved = oracle.resolve_batch(&instances, &by_pmid, Exec::Parallel);
    assert!(resolved.failures.is_empty());
    let antecedents: Vec<_> = resolved.ok.iter().map(|r| r.antecedent_text.as_str()).collect();
    assert_eq!(antecedents, ["the surgeon", "any physician", "Dr. Mora"]);
    let classified = oracle.classify_batch(&resolved.ok, &by_pmid, Exec::Parallel);
    let labels: Vec<_> = classified.ok.iter().map(|c| c.label).collect();
    assert_eq!(labels, [AntecedentLabel::Occupation, AntecedentLabel::Occupation, AntecedentLabel::NamedIndividual]);

    let (out, edits) = neutralize_corpus(&abstracts, &classified.ok, NeutralizeOptions::default(), Exec::Sequential).unwrap();
    assert_eq!(edits.len(), 2);
    assert!(out[0].text.contains("of the surgeon to spend most of their time performing abortions"));
    assert!(out[1].text.contains("by this method, they should observe its performance by an experienced operator."));
    assert_eq!(out[2].text, abstracts[2].text);
}

#[test]
fn recorded_transcript_replays_identically() {
    let abstracts = worked();
    let by_pmid: HashMap<&str, &Abstract> = abstracts.iter().map(|a| (a.pmid.as_str(), a)).collect();
    let instances = scan_corpus(&abstracts, &Lexicon::default_pronouns(), None, Exec::Sequential);

    let recorder = Oracle::new(Cached::new(scripted_mock()));
    let first = recorder.resolve_batch(&instances, &by_pmid, Exec::Sequential);
    let first_cls = recorder.classify_batch(&first.ok, &by_pmid, Exec::Sequential);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    let n = save_transcript(&recorder.backend().snapshot(), &path).unwrap();
    assert_eq!(n, instances.len() * 2);

    let replay = Oracle::new(ReplayBackend::from_file(&path).unwrap());
    let second = replay.resolve_batch(&instances, &by_pmid, Exec::Parallel);
    let second_cls = replay.classify_batch(&second.ok, &by_pmid, Exec::Parallel);
    assert_eq!(first.ok, second.ok);
    assert_eq!(first_cls.ok, second_cls.ok);

    let changed = Oracle::new(ReplayBackend::from_file(&path).unwrap()).with_background("different");
    let miss = changed.resolve_batch(&instances, &by_pmid, Exec::Sequential);
    assert_eq!(miss.failures.len(), instances.len());
}
