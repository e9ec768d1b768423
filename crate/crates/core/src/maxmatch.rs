//! MaxMatch scoring.
//!
//! The scorer extracts, for each source/hypothesis pair, the sequence of
//! phrase-level system edits with the maximum overlap with the
//! gold-standard edits: edges of the edit lattice whose phrase pair equals
//! a gold edit are reweighted to `-(u + 1) * |E|`, and a single-source
//! shortest path across the DAG selects the edit sequence. The lattice is
//! acyclic, so relaxation in topological order computes the same result as
//! Bellman-Ford with negative edges. Extracted edits are then scored with
//! micro-averaged precision, recall and F-beta over the corpus.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::align::build_lattice;
use crate::m2::{ActionKind, AnnotationBlock, Edit};

/// A phrase-level edit: replace the source span `start..end` by
/// `replacement` (empty for a deletion, zero-width span for an insertion).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemEdit {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

impl SystemEdit {
    pub fn new(start: usize, end: usize, replacement: &str) -> SystemEdit {
        SystemEdit {
            start,
            end,
            replacement: normalize(replacement),
        }
    }

    /// Converts a gold annotation into span form. `Add_after` edits move
    /// to their insertion point `start + 1`; replacements are whitespace
    /// normalized so lattice phrases compare exactly.
    pub fn from_m2(edit: &Edit) -> SystemEdit {
        let (start, end) = if edit.action == ActionKind::AddAfter {
            (edit.start + 1, edit.start + 1)
        } else {
            (edit.start, edit.end)
        };
        SystemEdit {
            start,
            end,
            replacement: normalize(&edit.correction),
        }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Gold edits of one annotator in span form.
pub fn gold_edits(block: &AnnotationBlock, annotator: usize) -> Vec<SystemEdit> {
    block
        .edits_for(annotator)
        .map(SystemEdit::from_m2)
        .collect()
}

/// Extracts the system edits between `source` and `hypothesis` that
/// maximally overlap `gold`, by shortest path over the reweighted lattice.
pub fn extract_edits(
    source: &[&str],
    hypothesis: &[&str],
    gold: &[SystemEdit],
    u: usize,
) -> Vec<SystemEdit> {
    let lattice = build_lattice(source, hypothesis, u);
    let reweight = -((u as i64 + 1) * lattice.edge_count() as i64);
    let costs: Vec<i64> = lattice
        .edges()
        .iter()
        .map(|e| {
            let matches_gold = e.is_change()
                && gold
                    .iter()
                    .any(|g| (g.start, g.end) == e.src_span() && g.replacement == e.tgt_phrase);
            if matches_gold {
                reweight
            } else {
                e.cost
            }
        })
        .collect();

    // Single-source shortest path in topological order. Ties prefer fewer
    // changed edges, then more hops (narrower edges, so unmatched changes
    // do not swallow surrounding match context), keeping extraction
    // deterministic.
    type Dist = (i64, usize, std::cmp::Reverse<usize>);
    let mut dist: HashMap<(usize, usize), Dist> = HashMap::new();
    let mut pred: HashMap<(usize, usize), usize> = HashMap::new();
    dist.insert((0, 0), (0, 0, std::cmp::Reverse(0)));
    for &v in lattice.vertices() {
        let Some(&(cost, changed, std::cmp::Reverse(hops))) = dist.get(&v) else {
            continue;
        };
        for &idx in lattice.outgoing(v) {
            let e = &lattice.edges()[idx];
            let cand = (
                cost + costs[idx],
                changed + usize::from(e.is_change()),
                std::cmp::Reverse(hops + 1),
            );
            let better = match dist.get(&e.to) {
                None => true,
                Some(old) => cand < *old,
            };
            if better {
                dist.insert(e.to, cand);
                pred.insert(e.to, idx);
            }
        }
    }

    let mut path = Vec::new();
    let mut at = lattice.terminal();
    while at != (0, 0) {
        let idx = pred[&at];
        let e = &lattice.edges()[idx];
        if e.is_change() {
            let (start, end) = e.src_span();
            path.push(SystemEdit {
                start,
                end,
                replacement: e.tgt_phrase.clone(),
            });
        }
        at = e.from;
    }
    path.reverse();
    path
}

/// Applies span edits to a source sequence. Edits must be non-overlapping;
/// same-point insertions apply in the given order.
pub fn apply_span_edits(source: &[&str], edits: &[SystemEdit]) -> Vec<String> {
    let mut indexed: Vec<(usize, &SystemEdit)> = edits.iter().enumerate().collect();
    // Right to left; at one point keep the original relative order.
    indexed.sort_by(|(ia, a), (ib, b)| (b.start, b.end, ib).cmp(&(a.start, a.end, ia)));
    let mut tokens: Vec<String> = source.iter().map(|s| s.to_string()).collect();
    for (_, e) in indexed {
        let replacement: Vec<String> = e
            .replacement
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let start = e.start.min(tokens.len());
        let end = e.end.min(tokens.len());
        tokens.splice(start..end, replacement);
    }
    tokens
}

/// Raw overlap counts of one or more sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EditCounts {
    fn add(&mut self, other: EditCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Matches predicted edits against gold edits, multiset style: every gold
/// edit can confirm at most one prediction.
pub fn count_overlap(gold: &[SystemEdit], predicted: &[SystemEdit]) -> EditCounts {
    let mut remaining: BTreeMap<&SystemEdit, usize> = BTreeMap::new();
    for g in gold {
        *remaining.entry(g).or_insert(0) += 1;
    }
    let mut tp = 0usize;
    for p in predicted {
        if let Some(n) = remaining.get_mut(p) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    EditCounts {
        tp,
        fp: predicted.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Micro-averaged scoring report.
///
/// Precision is `tp / (tp + fp)` and defaults to 1.0 when nothing was
/// predicted; recall is `tp / (tp + fn)` and defaults to 0.0 when there is
/// no gold edit. `F_beta` is 0 whenever either factor vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct M2Report {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
}

impl M2Report {
    pub fn from_counts(counts: EditCounts, beta: f64) -> M2Report {
        let precision = if counts.tp + counts.fp == 0 {
            1.0
        } else {
            counts.tp as f64 / (counts.tp + counts.fp) as f64
        };
        let recall = if counts.tp + counts.fn_ == 0 {
            0.0
        } else {
            counts.tp as f64 / (counts.tp + counts.fn_) as f64
        };
        M2Report {
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            precision,
            recall,
            f_beta: f_beta(precision, recall, beta),
            beta,
        }
    }

    /// Plain-text report.
    pub fn text(&self) -> String {
        format!(
            "Precision : {:.4}\nRecall : {:.4}\nF_{} : {:.4}\n",
            self.precision,
            self.recall,
            trim_float(self.beta),
            self.f_beta
        )
    }

    /// Flat key-value record.
    pub fn kv(&self) -> String {
        format!(
            "tp={} fp={} fn={} precision={:.4} recall={:.4} f_beta={:.4} beta={}\n",
            self.tp,
            self.fp,
            self.fn_,
            self.precision,
            self.recall,
            self.f_beta,
            trim_float(self.beta)
        )
    }
}

pub(crate) fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    if precision * recall == 0.0 {
        0.0
    } else {
        let b2 = beta * beta;
        (1.0 + b2) * precision * recall / (b2 * precision + recall)
    }
}

pub(crate) fn trim_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Scores pairs of (gold, predicted) edit sets with the standard
/// micro-averaged metrics, without any extraction step.
pub fn score_edit_sets(pairs: &[(Vec<SystemEdit>, Vec<SystemEdit>)], beta: f64) -> M2Report {
    let mut totals = EditCounts::default();
    for (gold, predicted) in pairs {
        totals.add(count_overlap(gold, predicted));
    }
    M2Report::from_counts(totals, beta)
}

/// Which annotator's gold edits a sentence is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotatorChoice {
    /// Always this annotator; sentences without edits from it count as
    /// having an empty gold set.
    Fixed(usize),
    /// Per sentence, the annotator maximizing the sentence-level F-beta
    /// (ties resolve to the smallest id).
    Best,
}

/// One scorable sentence: source, hypothesis and gold edits per annotator.
#[derive(Debug, Clone)]
pub struct ScoredSentence {
    pub source: Vec<String>,
    pub hypothesis: Vec<String>,
    pub gold_by_annotator: BTreeMap<usize, Vec<SystemEdit>>,
}

impl ScoredSentence {
    /// Builds scoring input from an annotation block and a hypothesis.
    pub fn from_block(block: &AnnotationBlock, hypothesis: Vec<String>) -> ScoredSentence {
        let mut gold_by_annotator: BTreeMap<usize, Vec<SystemEdit>> = BTreeMap::new();
        for annotator in block.annotators() {
            gold_by_annotator.insert(annotator, gold_edits(block, annotator));
        }
        ScoredSentence {
            source: block
                .source
                .iter()
                .map(|t| t.as_str().to_string())
                .collect(),
            hypothesis,
            gold_by_annotator,
        }
    }
}

/// Scores a corpus: per-sentence extraction (in parallel), micro-averaged
/// totals. Order-independent integer sums keep the result deterministic at
/// any parallelism level.
pub fn score_corpus(
    sentences: &[ScoredSentence],
    beta: f64,
    u: usize,
    choice: AnnotatorChoice,
) -> M2Report {
    let per_sentence: Vec<EditCounts> = sentences
        .par_iter()
        .map(|s| sentence_counts(s, beta, u, choice))
        .collect();
    let mut totals = EditCounts::default();
    for c in per_sentence {
        totals.add(c);
    }
    M2Report::from_counts(totals, beta)
}

fn sentence_counts(
    sentence: &ScoredSentence,
    beta: f64,
    u: usize,
    choice: AnnotatorChoice,
) -> EditCounts {
    let source: Vec<&str> = sentence.source.iter().map(String::as_str).collect();
    let hypothesis: Vec<&str> = sentence.hypothesis.iter().map(String::as_str).collect();
    let empty = Vec::new();
    match choice {
        AnnotatorChoice::Fixed(id) => {
            let gold = sentence.gold_by_annotator.get(&id).unwrap_or(&empty);
            let predicted = extract_edits(&source, &hypothesis, gold, u);
            count_overlap(gold, &predicted)
        }
        AnnotatorChoice::Best => {
            let mut best: Option<(f64, usize, EditCounts)> = None;
            let fallback = [(0usize, empty)];
            let candidates: Vec<(usize, &Vec<SystemEdit>)> =
                if sentence.gold_by_annotator.is_empty() {
                    fallback.iter().map(|(id, g)| (*id, g)).collect()
                } else {
                    sentence
                        .gold_by_annotator
                        .iter()
                        .map(|(id, g)| (*id, g))
                        .collect()
                };
            for (id, gold) in candidates {
                let predicted = extract_edits(&source, &hypothesis, gold, u);
                let counts = count_overlap(gold, &predicted);
                let report = M2Report::from_counts(counts, beta);
                let better = match &best {
                    None => true,
                    Some((f, _, _)) => report.f_beta > *f + 1e-12,
                };
                if better {
                    best = Some((report.f_beta, id, counts));
                }
            }
            best.map(|(_, _, c)| c).unwrap_or_default()
        }
    }
}
