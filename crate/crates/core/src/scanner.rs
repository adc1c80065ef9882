//! Gendered-pronoun instance extraction.

use std::ops::RangeInclusive;

use crate::exec::Exec;
use crate::lexicon::Lexicon;
use crate::model::{Abstract, Gender, PronounInstance};

/// One instance per lexicon match, in offset order.
pub fn scan_abstract(abs: &Abstract, pronouns: &Lexicon) -> Vec<PronounInstance> {
    pronouns
        .match_terms(&abs.text)
        .into_iter()
        .filter_map(|m| {
            let lemma = m.surface.to_lowercase();
            let Some(gender) = Gender::of_lemma(&lemma) else {
                log::debug!("{}: lexicon term {:?} is not a known pronoun, skipped", abs.pmid, m.term);
                return None;
            };
            Some(PronounInstance {
                instance_id: PronounInstance::make_id(&abs.pmid, m.start),
                pmid: abs.pmid.clone(),
                offset: m.start,
                surface: m.surface,
                lemma,
                gender,
            })
        })
        .collect()
}

/// Whether an abstract passes an optional inclusive year filter. Undated
/// abstracts pass only when there is no filter.
pub fn in_year_range(abs: &Abstract, years: Option<&RangeInclusive<i32>>) -> bool {
    match years {
        None => true,
        Some(r) => abs.year().is_some_and(|y| r.contains(&y)),
    }
}

/// Scans every abstract that passes the year filter. Output is in input
/// order whichever `exec` is used.
pub fn scan_corpus(
    abstracts: &[Abstract],
    pronouns: &Lexicon,
    years: Option<&RangeInclusive<i32>>,
    exec: Exec,
) -> Vec<PronounInstance> {
    exec.flat_map(abstracts, |abs| {
        if in_year_range(abs, years) {
            scan_abstract(abs, pronouns)
        } else {
            Vec::new()
        }
    })
}
