//! Inter-annotator agreement and classification quality metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{AntecedentLabel, ClassifiedInstance};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no items to score")]
    Empty,
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Two annotators' labels over the same instances, aligned by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequencePair {
    pub ids: Vec<String>,
    pub labels_a: Vec<AntecedentLabel>,
    pub labels_b: Vec<AntecedentLabel>,
}

impl LabelSequencePair {
    pub fn new(
        ids: Vec<String>,
        labels_a: Vec<AntecedentLabel>,
        labels_b: Vec<AntecedentLabel>,
    ) -> Result<Self, MetricsError> {
        check_lengths(labels_a.len(), labels_b.len())?;
        check_lengths(ids.len(), labels_a.len())?;
        Ok(LabelSequencePair { ids, labels_a, labels_b })
    }

    /// Pairs up two annotation sets by instance id, in `a`'s order. Ids
    /// present on only one side are returned separately.
    pub fn align(a: &[ClassifiedInstance], b: &[ClassifiedInstance]) -> (Result<Self, MetricsError>, Vec<String>) {
        let by_id: HashMap<&str, AntecedentLabel> = b.iter().map(|c| (c.instance_id(), c.label)).collect();
        let mut ids = Vec::new();
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        let mut unmatched = Vec::new();
        for c in a {
            match by_id.get(c.instance_id()) {
                Some(&label) => {
                    ids.push(c.instance_id().to_string());
                    la.push(c.label);
                    lb.push(label);
                }
                None => unmatched.push(c.instance_id().to_string()),
            }
        }
        let in_a: std::collections::HashSet<&str> = a.iter().map(|c| c.instance_id()).collect();
        unmatched.extend(b.iter().filter(|c| !in_a.contains(c.instance_id())).map(|c| c.instance_id().to_string()));
        (LabelSequencePair::new(ids, la, lb), unmatched)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n: usize,
}

/// Cohen's kappa over any label type.
pub fn kappa_of<T: Ord>(a: &[T], b: &[T]) -> Result<AgreementResult, MetricsError> {
    check_lengths(a.len(), b.len())?;
    let n = a.len();
    let nf = n as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
    }
    let expected: f64 = marg_a
        .iter()
        .map(|(k, &ca)| ca as f64 * marg_b.get(k).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (nf * nf);
    let observed = agree as f64 / nf;
    let kappa = if (1.0 - expected).abs() < f64::EPSILON {
        log::warn!("kappa undefined (expected agreement is 1); reporting 1.0");
        1.0
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(AgreementResult { kappa, observed_agreement: observed, expected_agreement: expected, n })
}

pub fn cohen_kappa(pair: &LabelSequencePair) -> Result<AgreementResult, MetricsError> {
    kappa_of(&pair.labels_a, &pair.labels_b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub instance_id: String,
    pub label_a: AntecedentLabel,
    pub label_b: AntecedentLabel,
}

/// Instances the two annotators labelled differently, for reconciliation.
pub fn disagreements(pair: &LabelSequencePair) -> Vec<Disagreement> {
    pair.ids
        .iter()
        .zip(pair.labels_a.iter().zip(&pair.labels_b))
        .filter(|(_, (a, b))| a != b)
        .map(|(id, (&a, &b))| Disagreement { instance_id: id.clone(), label_a: a, label_b: b })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: AntecedentLabel,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    pub fn from_counts(label: AntecedentLabel, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        ClassMetrics { label, support: tp + fn_, tp, fp, fn_, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

impl MetricsReport {
    /// Support-weighted averages over the given classes.
    pub fn from_class_metrics(per_class: Vec<ClassMetrics>) -> Result<Self, MetricsError> {
        let total: usize = per_class.iter().map(|c| c.support).sum();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            per_class.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64
        };
        Ok(MetricsReport {
            weighted_precision: weighted(|c| c.precision),
            weighted_recall: weighted(|c| c.recall),
            weighted_f1: weighted(|c| c.f1),
            per_class,
        })
    }

    /// Plain-text table, one row per class plus the weighted row.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>7} {:>9} {:>9} {:>9}", "label", "support", "precision", "recall", "f1");
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<24} {:>7} {:>9.4} {:>9.4} {:>9.4}",
                c.label.display_name(),
                c.support,
                c.precision,
                c.recall,
                c.f1
            );
        }
        let support: usize = self.per_class.iter().map(|c| c.support).sum();
        let _ = writeln!(
            out,
            "{:<24} {:>7} {:>9.4} {:>9.4} {:>9.4}",
            "weighted avg", support, self.weighted_precision, self.weighted_recall, self.weighted_f1
        );
        out
    }
}

/// Counts indexed `[gold][predicted]` by [`AntecedentLabel::index`].
pub fn confusion_matrix(
    predicted: &[AntecedentLabel],
    gold: &[AntecedentLabel],
) -> Result<[[usize; 6]; 6], MetricsError> {
    check_lengths(predicted.len(), gold.len())?;
    let mut m = [[0usize; 6]; 6];
    for (p, g) in predicted.iter().zip(gold) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Per-label precision/recall/F1 for all six labels, with support-weighted
/// averages. Labels with zero support are listed with zero metrics.
pub fn classification_metrics(
    predicted: &[AntecedentLabel],
    gold: &[AntecedentLabel],
) -> Result<MetricsReport, MetricsError> {
    let m = confusion_matrix(predicted, gold)?;
    let per_class = AntecedentLabel::ALL
        .iter()
        .map(|&label| {
            let k = label.index();
            let tp = m[k][k];
            let fp = (0..6).map(|g| m[g][k]).sum::<usize>() - tp;
            let fn_ = m[k].iter().sum::<usize>() - tp;
            ClassMetrics::from_counts(label, tp, fp, fn_)
        })
        .collect();
    MetricsReport::from_class_metrics(per_class)
}

const ARTICLES: [&str; 3] = ["the", "a", "an"];

/// Lowercases, collapses whitespace and drops one leading article.
pub fn normalize_antecedent(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut words: Vec<&str> = lowered.split_whitespace().collect();
    if words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

/// Fraction of positions whose antecedents match, either exactly (`strict`)
/// or after [`normalize_antecedent`].
pub fn resolution_accuracy<S: AsRef<str>>(predicted: &[S], gold: &[S], strict: bool) -> Result<f64, MetricsError> {
    check_lengths(predicted.len(), gold.len())?;
    let hits = predicted
        .iter()
        .zip(gold)
        .filter(|(p, g)| {
            if strict {
                p.as_ref() == g.as_ref()
            } else {
                normalize_antecedent(p.as_ref()) == normalize_antecedent(g.as_ref())
            }
        })
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}
