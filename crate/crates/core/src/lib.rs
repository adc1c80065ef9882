//! Corpus pipeline for neutralizing occupation-linked gendered pronouns in
//! biomedical abstracts.
//!
//! The stages are: scan abstracts for gendered pronouns ([`scanner`]), resolve
//! and classify each pronoun's antecedent through a pluggable oracle
//! ([`oracle`]), rewrite only the pronouns whose antecedent is an occupation
//! ([`neutralizer`]), and evaluate with agreement/classification metrics
//! ([`metrics`]) and a masked-language-model probe harness ([`mlm`]).
//!
//! With the default `parallel` feature, corpus-level operations fan out over
//! rayon. Every such operation takes an [`Exec`] so callers can force the
//! sequential path; output order never depends on the choice.

pub mod exec;
pub mod jsonl;
pub mod lexicon;
pub mod metrics;
pub mod mlm;
pub mod model;
pub mod neutralizer;
pub mod oracle;
pub mod scanner;
pub mod text;

pub use exec::Exec;
pub use lexicon::{Lexicon, LexiconEntry, LexiconError, TermMatch};
pub use model::{
    Abstract, AntecedentLabel, ClassifiedInstance, Gender, LabelSource, PronounInstance,
    ResolvedInstance,
};
