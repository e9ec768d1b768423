//! I-measure scoring.
//!
//! The hypothesis is judged through a globally optimal three-way alignment
//! of source, hypothesis and gold tokens, computed with a sum-of-pairs
//! dynamic program: each alignment column costs the sum of its three
//! pairwise match/mismatch/gap costs. Every column is then classified by
//! the extended writer-annotator-system table into detection and correction
//! outcomes, including the FPN case (source, hypothesis and gold all
//! disagree), which counts as a simultaneous false positive and false
//! negative. Aggregated counts yield precision, recall, F-beta, accuracy
//! and a weighted accuracy that rewards correction over preservation, plus
//! an improvement score against the do-nothing baseline.

use rayon::prelude::*;
use thiserror::Error;

use crate::maxmatch::{apply_span_edits, f_beta, trim_float, SystemEdit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImError {
    #[error("invalid alignment costs: {reason}")]
    InvalidCosts { reason: String },
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
    #[error("malformed annotation xml at line {line}: {reason}")]
    MalformedXml { line: usize, reason: String },
}

impl ImError {
    /// Stable machine-readable error kind for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            ImError::InvalidCosts { .. } => "InvalidCosts",
            ImError::InvalidParameter { .. } => "InvalidParameter",
            ImError::MalformedXml { .. } => "MalformedXml",
        }
    }
}

/// Pairwise costs of the sum-of-pairs alignment. Validated so that gaps
/// cost more than matches, substitutions more than gaps, and one
/// substitution less than two gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SopCosts {
    pub c_match: f64,
    pub c_gap: f64,
    pub c_mismatch: f64,
}

impl SopCosts {
    pub fn new(c_match: f64, c_gap: f64, c_mismatch: f64) -> Result<SopCosts, ImError> {
        if c_match < 0.0 || c_gap <= c_match {
            return Err(ImError::InvalidCosts {
                reason: format!("need 0 <= c_match < c_gap, got {c_match} and {c_gap}"),
            });
        }
        if c_mismatch <= c_gap {
            return Err(ImError::InvalidCosts {
                reason: format!("need c_mismatch > c_gap, got {c_mismatch} and {c_gap}"),
            });
        }
        if 2.0 * c_gap <= c_mismatch {
            return Err(ImError::InvalidCosts {
                reason: format!("need 2 * c_gap > c_mismatch, got {c_gap} and {c_mismatch}"),
            });
        }
        Ok(SopCosts {
            c_match,
            c_gap,
            c_mismatch,
        })
    }

    fn pair(&self, a: Option<&str>, b: Option<&str>) -> f64 {
        match (a, b) {
            (Some(x), Some(y)) => {
                if x == y {
                    self.c_match
                } else {
                    self.c_mismatch
                }
            }
            (None, None) => 0.0,
            _ => self.c_gap,
        }
    }
}

impl Default for SopCosts {
    fn default() -> SopCosts {
        SopCosts {
            c_match: 0.0,
            c_gap: 2.0,
            c_mismatch: 3.0,
        }
    }
}

/// One column of the three-way alignment; `None` is a gap. Never all gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentColumn {
    pub source: Option<String>,
    pub hypothesis: Option<String>,
    pub gold: Option<String>,
}

/// A finished alignment with its total sum-of-pairs cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub columns: Vec<AlignmentColumn>,
    pub cost: f64,
}

/// Backtrack preference: triple match first, then source/hypothesis
/// match, then fewer gaps, then a fixed move order.
type MoveRank = (u8, u8, u8, usize);

/// The seven ways a column can advance the three sequences.
const MOVES: [(bool, bool, bool); 7] = [
    (true, true, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, false, false),
    (false, true, false),
    (false, false, true),
];

/// Globally minimal three-way alignment. Cost ties during backtrack prefer
/// triple matches, then source/hypothesis matches, then fewer gaps, so the
/// alignment is deterministic.
pub fn sop_align(
    source: &[&str],
    hypothesis: &[&str],
    gold: &[&str],
    costs: &SopCosts,
) -> Alignment {
    let (a, b, c) = (source.len(), hypothesis.len(), gold.len());
    let dim = (b + 1) * (c + 1);
    let idx = |i: usize, j: usize, k: usize| i * dim + j * (c + 1) + k;
    let mut cost = vec![f64::INFINITY; (a + 1) * dim];
    cost[0] = 0.0;

    let col_cost = |s: Option<&str>, h: Option<&str>, g: Option<&str>| {
        costs.pair(s, h) + costs.pair(s, g) + costs.pair(h, g)
    };

    for i in 0..=a {
        for j in 0..=b {
            for k in 0..=c {
                let here = cost[idx(i, j, k)];
                if !here.is_finite() {
                    continue;
                }
                for &(ds, dh, dg) in &MOVES {
                    let (ni, nj, nk) = (
                        i + usize::from(ds),
                        j + usize::from(dh),
                        k + usize::from(dg),
                    );
                    if ni > a || nj > b || nk > c {
                        continue;
                    }
                    let s = ds.then(|| source[i]);
                    let h = dh.then(|| hypothesis[j]);
                    let g = dg.then(|| gold[k]);
                    let next = here + col_cost(s, h, g);
                    let slot = &mut cost[idx(ni, nj, nk)];
                    if next < *slot {
                        *slot = next;
                    }
                }
            }
        }
    }

    // Backtrack with deterministic tie-breaking.
    let mut columns = Vec::new();
    let (mut i, mut j, mut k) = (a, b, c);
    while (i, j, k) != (0, 0, 0) {
        let here = cost[idx(i, j, k)];
        let mut best: Option<MoveRank> = None;
        let mut best_col: Option<((usize, usize, usize), AlignmentColumn)> = None;
        for (move_id, &(ds, dh, dg)) in MOVES.iter().enumerate() {
            if (ds && i == 0) || (dh && j == 0) || (dg && k == 0) {
                continue;
            }
            let (pi, pj, pk) = (
                i - usize::from(ds),
                j - usize::from(dh),
                k - usize::from(dg),
            );
            let s = ds.then(|| source[pi]);
            let h = dh.then(|| hypothesis[pj]);
            let g = dg.then(|| gold[pk]);
            if (cost[idx(pi, pj, pk)] + col_cost(s, h, g) - here).abs() > 1e-9 {
                continue;
            }
            let triple = u8::from(!(s.is_some() && s == h && h == g));
            let sh = u8::from(!(s.is_some() && s == h));
            let gaps = 3 - (u8::from(ds) + u8::from(dh) + u8::from(dg));
            let rank = (triple, sh, gaps, move_id);
            if best.is_none() || rank < best.unwrap() {
                best = Some(rank);
                best_col = Some((
                    (pi, pj, pk),
                    AlignmentColumn {
                        source: s.map(str::to_string),
                        hypothesis: h.map(str::to_string),
                        gold: g.map(str::to_string),
                    },
                ));
            }
        }
        let ((pi, pj, pk), col) = best_col.expect("alignment backtrack dead end");
        columns.push(col);
        (i, j, k) = (pi, pj, pk);
    }
    columns.reverse();
    Alignment {
        columns,
        cost: cost[idx(a, b, c)],
    }
}

/// Detection outcome of one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionClass {
    Tp,
    Tn,
    Fp,
    Fn,
}

/// Correction outcome of one column. `Fpn` counts as a false positive and
/// a false negative at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionClass {
    Tp,
    Tn,
    Fp,
    Fn,
    Fpn,
}

/// Classifies one alignment column by the extended
/// writer-annotator-system table.
pub fn was_classify(col: &AlignmentColumn) -> (DetectionClass, CorrectionClass) {
    use CorrectionClass as C;
    use DetectionClass as D;
    let s = col.source.as_deref();
    let h = col.hypothesis.as_deref();
    let g = col.gold.as_deref();
    match (s, h, g) {
        (Some(s), Some(h), Some(g)) => {
            if s == h && h == g {
                (D::Tn, C::Tn)
            } else if s == h {
                // a a b
                (D::Fn, C::Fn)
            } else if h == g {
                // a b b
                (D::Tp, C::Tp)
            } else if s == g {
                // a b a
                (D::Fp, C::Fp)
            } else {
                // a b c
                (D::Tp, C::Fpn)
            }
        }
        (Some(s), Some(h), None) => {
            if s == h {
                // a a -
                (D::Fn, C::Fn)
            } else {
                // a b -
                (D::Tp, C::Fpn)
            }
        }
        (Some(s), None, Some(g)) => {
            if s == g {
                // a - a
                (D::Fp, C::Fp)
            } else {
                // a - b
                (D::Tp, C::Fpn)
            }
        }
        // a - -
        (Some(_), None, None) => (D::Tp, C::Tp),
        (None, Some(h), Some(g)) => {
            if h == g {
                // - a a
                (D::Tp, C::Tp)
            } else {
                // - a b
                (D::Tp, C::Fpn)
            }
        }
        // - a -
        (None, Some(_), None) => (D::Fp, C::Fp),
        // - - a
        (None, None, Some(_)) => (D::Fn, C::Fn),
        (None, None, None) => unreachable!("alignment column cannot be all gaps"),
    }
}

/// Aggregated outcome counts of one evaluation track.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub fpn: u64,
}

impl Tally {
    fn add(&mut self, other: &Tally) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.fpn += other.fpn;
    }
}

/// Detection and correction tallies of an aligned corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WasCounts {
    pub detection: Tally,
    pub correction: Tally,
}

impl WasCounts {
    fn add(&mut self, other: &WasCounts) {
        self.detection.add(&other.detection);
        self.correction.add(&other.correction);
    }

    fn observe(&mut self, col: &AlignmentColumn) {
        let (det, corr) = was_classify(col);
        match det {
            DetectionClass::Tp => self.detection.tp += 1,
            DetectionClass::Tn => self.detection.tn += 1,
            DetectionClass::Fp => self.detection.fp += 1,
            DetectionClass::Fn => self.detection.fn_ += 1,
        }
        match corr {
            CorrectionClass::Tp => self.correction.tp += 1,
            CorrectionClass::Tn => self.correction.tn += 1,
            CorrectionClass::Fp => self.correction.fp += 1,
            CorrectionClass::Fn => self.correction.fn_ += 1,
            CorrectionClass::Fpn => {
                self.correction.fp += 1;
                self.correction.fn_ += 1;
                self.correction.fpn += 1;
            }
        }
    }
}

/// Per-track metrics. Fractions in [0, 1]; the text table prints
/// percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub counts: Tally,
    pub p: f64,
    pub r: f64,
    pub f_beta: f64,
    pub acc: f64,
    pub acc_b: f64,
    pub wacc: f64,
    pub wacc_b: f64,
    pub i_score: f64,
}

/// Full I-measure report over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct IMeasureReport {
    pub detection: TrackReport,
    pub correction: TrackReport,
    pub w: f64,
    pub beta: f64,
}

/// One scorable sentence: source and hypothesis tokens plus the gold edits
/// (span form). The gold sentence is the edits applied to the source.
#[derive(Debug, Clone)]
pub struct ImSentence {
    pub source: Vec<String>,
    pub hypothesis: Vec<String>,
    pub gold_edits: Vec<SystemEdit>,
}

/// Accuracy with the FPN discount: FPN columns were counted in both fp and
/// fn, so the total subtracts them once to count columns exactly once.
fn accuracy(t: &Tally) -> f64 {
    let denom = (t.tp + t.tn + t.fp + t.fn_) as f64 - t.fpn as f64;
    if denom == 0.0 {
        0.0
    } else {
        (t.tp + t.tn) as f64 / denom
    }
}

/// Weighted accuracy rewarding correction over preservation (`w > 1`).
fn weighted_accuracy(t: &Tally, w: f64) -> f64 {
    let denom =
        w * (t.tp + t.fp) as f64 + t.tn as f64 + t.fn_ as f64 - (w + 1.0) * t.fpn as f64 / 2.0;
    if denom == 0.0 {
        0.0
    } else {
        (w * t.tp as f64 + t.tn as f64) / denom
    }
}

/// Improvement over the baseline: positive iff the weighted accuracy beats
/// the do-nothing baseline's.
fn improvement(wacc: f64, wacc_b: f64) -> f64 {
    if (wacc - wacc_b).abs() < 1e-12 {
        0.0
    } else if wacc > wacc_b {
        (wacc - wacc_b) / (1.0 - wacc_b)
    } else {
        wacc / wacc_b - 1.0
    }
}

fn track_report(counts: Tally, baseline: Tally, w: f64, beta: f64) -> TrackReport {
    let p = if counts.tp + counts.fp == 0 {
        1.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    };
    let r = if counts.tp + counts.fn_ == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fn_) as f64
    };
    let wacc = weighted_accuracy(&counts, w);
    let wacc_b = weighted_accuracy(&baseline, w);
    TrackReport {
        counts,
        p,
        r,
        f_beta: f_beta(p, r, beta),
        acc: accuracy(&counts),
        acc_b: accuracy(&baseline),
        wacc,
        wacc_b,
        i_score: improvement(wacc, wacc_b),
    }
}

/// Aligns and classifies one sentence; returns system and baseline counts.
pub fn sentence_counts(sentence: &ImSentence, costs: &SopCosts) -> (WasCounts, WasCounts) {
    let source: Vec<&str> = sentence.source.iter().map(String::as_str).collect();
    let hypothesis: Vec<&str> = sentence.hypothesis.iter().map(String::as_str).collect();
    let gold_owned = apply_span_edits(&source, &sentence.gold_edits);
    let gold: Vec<&str> = gold_owned.iter().map(String::as_str).collect();

    let mut counts = WasCounts::default();
    for col in sop_align(&source, &hypothesis, &gold, costs).columns {
        counts.observe(&col);
    }
    let mut baseline = WasCounts::default();
    for col in sop_align(&source, &source, &gold, costs).columns {
        baseline.observe(&col);
    }
    (counts, baseline)
}

/// Scores a corpus. Sentences align in parallel; tallies are summed in
/// input order, so the report is deterministic.
pub fn score_corpus(
    sentences: &[ImSentence],
    costs: &SopCosts,
    w: f64,
    beta: f64,
) -> Result<IMeasureReport, ImError> {
    if !w.is_finite() || w <= 1.0 {
        return Err(ImError::InvalidParameter {
            reason: format!("weighted accuracy needs a finite w > 1, got {w}"),
        });
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(ImError::InvalidParameter {
            reason: format!("F-beta needs a finite beta > 0, got {beta}"),
        });
    }
    let per_sentence: Vec<(WasCounts, WasCounts)> = sentences
        .par_iter()
        .map(|s| sentence_counts(s, costs))
        .collect();
    let mut counts = WasCounts::default();
    let mut baseline = WasCounts::default();
    for (c, b) in &per_sentence {
        counts.add(c);
        baseline.add(b);
    }
    Ok(IMeasureReport {
        detection: track_report(counts.detection, baseline.detection, w, beta),
        correction: track_report(counts.correction, baseline.correction, w, beta),
        w,
        beta,
    })
}

impl IMeasureReport {
    /// Two-column table in the usual layout, metrics as percentages.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8}{:>14}{:>14}\n",
            "", "Detection", "Correction"
        ));
        type CountGetter = fn(&Tally) -> u64;
        let count_rows: [(&str, CountGetter); 5] = [
            ("TP", |t| t.tp),
            ("TN", |t| t.tn),
            ("FP", |t| t.fp),
            ("FN", |t| t.fn_),
            ("FPN", |t| t.fpn),
        ];
        for (name, get) in count_rows {
            out.push_str(&format!(
                "{:<8}{:>14}{:>14}\n",
                name,
                get(&self.detection.counts),
                get(&self.correction.counts)
            ));
        }
        let beta_name = format!("F_{}", trim_float(self.beta));
        type MetricGetter = fn(&TrackReport) -> f64;
        let metric_rows: [(&str, MetricGetter); 8] = [
            ("P", |t| t.p),
            ("R", |t| t.r),
            ("F", |t| t.f_beta),
            ("Acc", |t| t.acc),
            ("Acc_b", |t| t.acc_b),
            ("WAcc", |t| t.wacc),
            ("WAcc_b", |t| t.wacc_b),
            ("I", |t| t.i_score),
        ];
        for (name, get) in metric_rows {
            let label = if name == "F" {
                beta_name.as_str()
            } else {
                name
            };
            out.push_str(&format!(
                "{:<8}{:>14.2}{:>14.2}\n",
                label,
                get(&self.detection) * 100.0,
                get(&self.correction) * 100.0
            ));
        }
        out
    }

    /// Flat key-value record.
    pub fn kv(&self) -> String {
        let track = |name: &str, t: &TrackReport| {
            format!(
                "{name}_tp={} {name}_tn={} {name}_fp={} {name}_fn={} {name}_fpn={} \
                 {name}_p={:.2} {name}_r={:.2} {name}_f={:.2} {name}_acc={:.2} \
                 {name}_acc_b={:.2} {name}_wacc={:.2} {name}_wacc_b={:.2} {name}_i={:.2}",
                t.counts.tp,
                t.counts.tn,
                t.counts.fp,
                t.counts.fn_,
                t.counts.fpn,
                t.p * 100.0,
                t.r * 100.0,
                t.f_beta * 100.0,
                t.acc * 100.0,
                t.acc_b * 100.0,
                t.wacc * 100.0,
                t.wacc_b * 100.0,
                t.i_score * 100.0
            )
        };
        format!(
            "{} {} w={} beta={}\n",
            track("detection", &self.detection),
            track("correction", &self.correction),
            trim_float(self.w),
            trim_float(self.beta)
        )
    }
}

// ---------------------------------------------------------------------------
// Gold annotations in the sentence/error-list xml scheme
// ---------------------------------------------------------------------------

/// One sentence of the xml annotation scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct XmlSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub errors: Vec<XmlErrorAnn>,
}

/// One annotated error with its alternative corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct XmlErrorAnn {
    pub id: String,
    pub required: bool,
    pub kind: String,
    pub alternatives: Vec<XmlAlt>,
}

/// One annotator's correction set for an error.
#[derive(Debug, Clone, PartialEq)]
pub struct XmlAlt {
    pub annotator: usize,
    pub edits: Vec<SystemEdit>,
}

impl XmlSentence {
    /// Gold edits of one annotator, across all errors. Errors without an
    /// alternative from that annotator contribute nothing. The `required`
    /// flag is carried for inspection; scoring treats every selected edit
    /// as required.
    pub fn gold_edits(&self, annotator: usize) -> Vec<SystemEdit> {
        let mut edits = Vec::new();
        for error in &self.errors {
            if let Some(alt) = error.alternatives.iter().find(|a| a.annotator == annotator) {
                edits.extend(alt.edits.iter().cloned());
            }
        }
        edits
    }
}

/// Reads the xml annotation scheme: `scripts`/`script`/`sentence` with a
/// `text` node and an `error-list` of `error`/`alt`/`c` entries.
pub fn read_xml(text: &str) -> Result<Vec<XmlSentence>, ImError> {
    let mut parser = XmlParser::new(text);
    let mut sentences = Vec::new();
    parser.skip_prolog()?;
    let root = parser.expect_open("scripts")?;
    if root.self_closing {
        return Ok(sentences);
    }
    loop {
        match parser.next_tag()? {
            Tag::Close(name) if name == "scripts" => break,
            Tag::Open(el) if el.name == "script" => {
                if el.self_closing {
                    continue;
                }
                loop {
                    match parser.next_tag()? {
                        Tag::Close(name) if name == "script" => break,
                        Tag::Open(el) if el.name == "sentence" => {
                            sentences.push(parser.read_sentence(el)?);
                        }
                        other => return parser.unexpected(other),
                    }
                }
            }
            other => return parser.unexpected(other),
        }
    }
    Ok(sentences)
}

#[derive(Debug)]
struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    self_closing: bool,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug)]
enum Tag {
    Open(Element),
    Close(String),
}

struct XmlParser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> XmlParser<'a> {
    fn new(text: &'a str) -> XmlParser<'a> {
        XmlParser { text, pos: 0 }
    }

    fn line(&self) -> usize {
        self.text[..self.pos].matches('\n').count() + 1
    }

    fn error<T>(&self, reason: impl Into<String>) -> Result<T, ImError> {
        Err(ImError::MalformedXml {
            line: self.line(),
            reason: reason.into(),
        })
    }

    fn unexpected<T>(&self, tag: Tag) -> Result<T, ImError> {
        self.error(format!("unexpected tag {tag:?}"))
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn skip_prolog(&mut self) -> Result<(), ImError> {
        self.skip_ws();
        if self.rest().starts_with("<?") {
            match self.rest().find("?>") {
                Some(end) => self.pos += end + 2,
                None => return self.error("unterminated xml declaration"),
            }
        }
        Ok(())
    }

    /// Text content up to the next `<`.
    fn take_text(&mut self) -> Result<String, ImError> {
        let end = match self.rest().find('<') {
            Some(e) => e,
            None => return self.error("text not closed by any tag"),
        };
        let raw = &self.rest()[..end];
        self.pos += end;
        Ok(decode_entities(raw.trim()))
    }

    fn next_tag(&mut self) -> Result<Tag, ImError> {
        self.skip_ws();
        if !self.rest().starts_with('<') {
            return self.error("expected a tag");
        }
        let close = self.rest().starts_with("</");
        let end = match self.rest().find('>') {
            Some(e) => e,
            None => return self.error("unterminated tag"),
        };
        let inner = &self.rest()[if close { 2 } else { 1 }..end];
        self.pos += end + 1;
        if close {
            return Ok(Tag::Close(inner.trim().to_string()));
        }
        let self_closing = inner.trim_end().ends_with('/');
        let inner = inner.trim_end();
        let inner = inner.strip_suffix('/').unwrap_or(inner).trim();
        let (name, attr_text) = match inner.find(char::is_whitespace) {
            Some(sp) => (&inner[..sp], &inner[sp..]),
            None => (inner, ""),
        };
        if name.is_empty() {
            return self.error("empty tag name");
        }
        let attrs = parse_attrs(attr_text).map_err(|reason| ImError::MalformedXml {
            line: self.line(),
            reason,
        })?;
        Ok(Tag::Open(Element {
            name: name.to_string(),
            attrs,
            self_closing,
        }))
    }

    fn expect_open(&mut self, name: &str) -> Result<Element, ImError> {
        match self.next_tag()? {
            Tag::Open(el) if el.name == name => Ok(el),
            other => self.unexpected(other),
        }
    }

    fn expect_close(&mut self, name: &str) -> Result<(), ImError> {
        match self.next_tag()? {
            Tag::Close(n) if n == name => Ok(()),
            other => self.unexpected(other),
        }
    }

    fn read_sentence(&mut self, el: Element) -> Result<XmlSentence, ImError> {
        let id = el.attr("id").unwrap_or_default().to_string();
        let text_el = self.expect_open("text")?;
        let tokens: Vec<String> = if text_el.self_closing {
            Vec::new()
        } else {
            let content = self.take_text()?;
            self.expect_close("text")?;
            content.split_whitespace().map(str::to_string).collect()
        };
        let mut errors = Vec::new();
        loop {
            match self.next_tag()? {
                Tag::Close(name) if name == "sentence" => break,
                Tag::Open(list) if list.name == "error-list" => {
                    if list.self_closing {
                        continue;
                    }
                    loop {
                        match self.next_tag()? {
                            Tag::Close(name) if name == "error-list" => break,
                            Tag::Open(err) if err.name == "error" => {
                                errors.push(self.read_error(err)?);
                            }
                            other => return self.unexpected(other),
                        }
                    }
                }
                other => return self.unexpected(other),
            }
        }
        Ok(XmlSentence { id, tokens, errors })
    }

    fn read_error(&mut self, el: Element) -> Result<XmlErrorAnn, ImError> {
        let id = el.attr("id").unwrap_or_default().to_string();
        let required = el.attr("req").is_none_or(|v| v == "yes");
        let kind = el.attr("type").unwrap_or_default().to_string();
        let mut alternatives = Vec::new();
        if !el.self_closing {
            loop {
                match self.next_tag()? {
                    Tag::Close(name) if name == "error" => break,
                    Tag::Open(alt) if alt.name == "alt" => {
                        let annotator = match alt.attr("ann").map(str::parse) {
                            Some(Ok(n)) => n,
                            _ => return self.error("alt tag needs a numeric ann attribute"),
                        };
                        let mut edits = Vec::new();
                        if !alt.self_closing {
                            loop {
                                match self.next_tag()? {
                                    Tag::Close(name) if name == "alt" => break,
                                    Tag::Open(c) if c.name == "c" => {
                                        edits.push(self.read_correction(c)?);
                                    }
                                    other => return self.unexpected(other),
                                }
                            }
                        }
                        alternatives.push(XmlAlt { annotator, edits });
                    }
                    other => return self.unexpected(other),
                }
            }
        }
        Ok(XmlErrorAnn {
            id,
            required,
            kind,
            alternatives,
        })
    }

    fn read_correction(&mut self, el: Element) -> Result<SystemEdit, ImError> {
        let parse_attr = |name: &str| -> Result<usize, ImError> {
            match el.attr(name).map(str::parse) {
                Some(Ok(v)) => Ok(v),
                _ => Err(ImError::MalformedXml {
                    line: self.line(),
                    reason: format!("c tag needs a numeric {name} attribute"),
                }),
            }
        };
        let start = parse_attr("start")?;
        let end = parse_attr("end")?;
        if start > end {
            return self.error(format!("correction span {start}..{end} is inverted"));
        }
        let replacement = if el.self_closing {
            String::new()
        } else {
            let content = self.take_text()?;
            self.expect_close("c")?;
            content
        };
        Ok(SystemEdit::new(start, end, &replacement))
    }
}

fn parse_attrs(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut attrs = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| format!("attribute without value near `{rest}`"))?;
        let name = rest[..eq].trim();
        rest = rest[eq + 1..].trim_start();
        let quote = rest
            .chars()
            .next()
            .filter(|c| *c == '"' || *c == '\'')
            .ok_or_else(|| format!("unquoted attribute value near `{rest}`"))?;
        let end = rest[1..]
            .find(quote)
            .ok_or_else(|| format!("unterminated attribute value near `{rest}`"))?;
        attrs.push((name.to_string(), decode_entities(&rest[1..=end])));
        rest = rest[end + 2..].trim_start();
    }
    Ok(attrs)
}

fn decode_entities(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn owned(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn col(s: Option<&str>, h: Option<&str>, g: Option<&str>) -> AlignmentColumn {
        AlignmentColumn {
            source: s.map(str::to_string),
            hypothesis: h.map(str::to_string),
            gold: g.map(str::to_string),
        }
    }

    #[test]
    fn cost_constraints_are_enforced() {
        assert!(SopCosts::new(0.0, 2.0, 3.0).is_ok());
        assert!(SopCosts::new(2.0, 2.0, 3.0).is_err());
        assert!(SopCosts::new(0.0, 2.0, 2.0).is_err());
        assert!(SopCosts::new(0.0, 1.0, 2.5).is_err());
    }

    #[test]
    fn identical_sequences_align_as_matches() {
        let costs = SopCosts::new(1.0, 2.0, 3.0).unwrap();
        let t = toks("x y z");
        let alignment = sop_align(&t, &t, &t, &costs);
        assert_eq!(alignment.columns.len(), 3);
        assert!((alignment.cost - 3.0 * 3.0 * 1.0).abs() < 1e-12);
        for c in &alignment.columns {
            assert_eq!(c.source, c.hypothesis);
            assert_eq!(c.source, c.gold);
        }
    }

    #[test]
    fn forced_substitution_column() {
        let costs = SopCosts::default();
        let alignment = sop_align(&["a"], &["b"], &["b"], &costs);
        assert_eq!(
            alignment.columns,
            vec![col(Some("a"), Some("b"), Some("b"))]
        );
    }

    /// Exhaustive three-way alignment search for tiny inputs.
    fn oracle_cost(src: &[&str], hyp: &[&str], gold: &[&str], costs: &SopCosts) -> f64 {
        fn go(
            src: &[&str],
            hyp: &[&str],
            gold: &[&str],
            at: (usize, usize, usize),
            costs: &SopCosts,
        ) -> f64 {
            let (i, j, k) = at;
            if i == src.len() && j == hyp.len() && k == gold.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for &(ds, dh, dg) in &MOVES {
                let (ni, nj, nk) = (
                    i + usize::from(ds),
                    j + usize::from(dh),
                    k + usize::from(dg),
                );
                if ni > src.len() || nj > hyp.len() || nk > gold.len() {
                    continue;
                }
                let s = ds.then(|| src[i]);
                let h = dh.then(|| hyp[j]);
                let g = dg.then(|| gold[k]);
                let c = costs.pair(s, h)
                    + costs.pair(s, g)
                    + costs.pair(h, g)
                    + go(src, hyp, gold, (ni, nj, nk), costs);
                best = best.min(c);
            }
            best
        }
        go(src, hyp, gold, (0, 0, 0), costs)
    }

    #[test]
    fn alignment_cost_matches_exhaustive_search() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let alphabet = ["a", "b"];
        let costs = SopCosts::default();
        let mut rng = StdRng::seed_from_u64(11);
        let sample = |rng: &mut StdRng| -> Vec<&'static str> {
            let n = rng.random_range(0..=3);
            (0..n).map(|_| alphabet[rng.random_range(0..2)]).collect()
        };
        for _ in 0..200 {
            let s = sample(&mut rng);
            let h = sample(&mut rng);
            let g = sample(&mut rng);
            let got = sop_align(&s, &h, &g, &costs).cost;
            let want = oracle_cost(&s, &h, &g, &costs);
            assert!(
                (got - want).abs() < 1e-9,
                "s={s:?} h={h:?} g={g:?}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn alignment_columns_respect_cost() {
        // Column costs re-derived from the emitted alignment must sum to
        // the reported total.
        let costs = SopCosts::default();
        let alignment = sop_align(&toks("a b c"), &toks("a c"), &toks("a x c"), &costs);
        let total: f64 = alignment
            .columns
            .iter()
            .map(|c| {
                costs.pair(c.source.as_deref(), c.hypothesis.as_deref())
                    + costs.pair(c.source.as_deref(), c.gold.as_deref())
                    + costs.pair(c.hypothesis.as_deref(), c.gold.as_deref())
            })
            .sum();
        assert!((total - alignment.cost).abs() < 1e-9);
    }

    #[test]
    fn was_table_all_fourteen_rows() {
        use CorrectionClass as C;
        use DetectionClass as D;
        let a = Some("a");
        let b = Some("b");
        let c = Some("c");
        let gap: Option<&str> = None;
        let table = [
            ((a, a, a), (D::Tn, C::Tn)),
            ((a, a, b), (D::Fn, C::Fn)),
            ((a, a, gap), (D::Fn, C::Fn)),
            ((a, b, a), (D::Fp, C::Fp)),
            ((a, b, b), (D::Tp, C::Tp)),
            ((a, b, c), (D::Tp, C::Fpn)),
            ((a, b, gap), (D::Tp, C::Fpn)),
            ((a, gap, a), (D::Fp, C::Fp)),
            ((a, gap, b), (D::Tp, C::Fpn)),
            ((a, gap, gap), (D::Tp, C::Tp)),
            ((gap, a, a), (D::Tp, C::Tp)),
            ((gap, a, b), (D::Tp, C::Fpn)),
            ((gap, a, gap), (D::Fp, C::Fp)),
            ((gap, gap, a), (D::Fn, C::Fn)),
        ];
        for ((s, h, g), want) in table {
            assert_eq!(
                was_classify(&col(s, h, g)),
                want,
                "pattern {s:?} {h:?} {g:?}"
            );
        }
    }

    fn worked_sentence() -> ImSentence {
        ImSentence {
            source: owned("the greater the Levenshtein distances , more different strings are ."),
            hypothesis: owned(
                "the greater the Levenshtein distances , the more different strings are .",
            ),
            gold_edits: vec![
                SystemEdit::new(4, 5, "distance"),
                SystemEdit::new(6, 7, "the more"),
            ],
        }
    }

    #[test]
    fn identity_hypothesis_baseline_report() {
        let mut sentence = worked_sentence();
        sentence.hypothesis = sentence.source.clone();
        let report = score_corpus(&[sentence], &SopCosts::default(), 2.0, 0.5).unwrap();
        assert_eq!(report.correction.counts.tp, 0);
        assert_eq!(report.correction.counts.fp, 0);
        assert_eq!(report.detection.counts.tp, 0);
        assert_eq!(report.detection.counts.fp, 0);
        assert!(report.detection.counts.fn_ > 0);
        assert_eq!(report.detection.p, 1.0);
        assert_eq!(report.detection.r, 0.0);
        assert_eq!(report.detection.i_score, 0.0);
        assert_eq!(report.correction.i_score, 0.0);
        // No TP, FP or FPN, so weighted accuracy equals plain accuracy.
        assert!((report.detection.wacc - report.detection.acc).abs() < 1e-12);
    }

    #[test]
    fn perfect_hypothesis_scores_full_marks() {
        let sentence = ImSentence {
            source: owned("a b c"),
            hypothesis: owned("a x c"),
            gold_edits: vec![SystemEdit::new(1, 2, "x")],
        };
        let report = score_corpus(&[sentence], &SopCosts::default(), 2.0, 0.5).unwrap();
        assert_eq!(report.correction.counts.tp, 1);
        assert_eq!(report.correction.counts.tn, 2);
        assert_eq!(report.correction.counts.fp, 0);
        assert_eq!(report.correction.counts.fn_, 0);
        assert_eq!(report.correction.p, 1.0);
        assert_eq!(report.correction.r, 1.0);
        assert!((report.correction.wacc - 1.0).abs() < 1e-12);
        assert!(report.correction.i_score > 0.0);
    }

    /// A hypothesis equal to the gold sentence across a deletion and an
    /// insertion: both changed columns are true positives and weighted
    /// accuracy is total.
    #[test]
    fn perfect_multi_edit_hypothesis() {
        let sentence = ImSentence {
            source: owned("a b c"),
            hypothesis: owned("b c d"),
            gold_edits: vec![SystemEdit::new(0, 1, ""), SystemEdit::new(3, 3, "d")],
        };
        let report = score_corpus(&[sentence], &SopCosts::default(), 2.0, 0.5).unwrap();
        let t = &report.correction.counts;
        assert_eq!((t.tp, t.tn, t.fp, t.fn_, t.fpn), (2, 2, 0, 0, 0));
        assert!((report.correction.wacc - 1.0).abs() < 1e-12);
        assert!(report.correction.i_score > 0.0);
    }

    /// Two sentences, one producing an FPN column (hypothesis changes a
    /// token the gold corrects differently). Weighted accuracy checked by
    /// hand from the counted columns.
    #[test]
    fn fpn_column_weighted_accuracy_by_hand() {
        let sentences = vec![
            ImSentence {
                source: owned("a b"),
                hypothesis: owned("a z"),
                gold_edits: vec![SystemEdit::new(1, 2, "y")],
            },
            ImSentence {
                source: owned("c d"),
                hypothesis: owned("c d"),
                gold_edits: vec![],
            },
        ];
        let report = score_corpus(&sentences, &SopCosts::default(), 2.0, 0.5).unwrap();
        // Columns: (a,a,a) TN, (b,z,y) FPN, (c,c,c) TN, (d,d,d) TN.
        let t = &report.correction.counts;
        assert_eq!((t.tp, t.tn, t.fp, t.fn_, t.fpn), (0, 3, 1, 1, 1));
        // WAcc = (2*0 + 3) / (2*(0+1) + 3 + 1 - 3*(1/2)) = 3 / 4.5
        assert!((report.correction.wacc - 3.0 / 4.5).abs() < 1e-12);
        // Baseline: (a,a,b) FN + 3 TN -> WAcc_b = 3 / 4 = 0.75.
        assert!((report.correction.wacc_b - 0.75).abs() < 1e-12);
        // WAcc < WAcc_b, so I = WAcc / WAcc_b - 1.
        let want_i = (3.0 / 4.5) / 0.75 - 1.0;
        assert!((report.correction.i_score - want_i).abs() < 1e-12);
    }

    #[test]
    fn wacc_tends_to_acc_as_w_tends_to_one() {
        let t = Tally {
            tp: 7,
            tn: 11,
            fp: 3,
            fn_: 5,
            fpn: 0,
        };
        let wacc = weighted_accuracy(&t, 1.0 + 1e-9);
        assert!((wacc - accuracy(&t)).abs() < 1e-6);
    }

    #[test]
    fn improvement_sign_follows_wacc() {
        assert!(improvement(0.6, 0.5) > 0.0);
        assert!(improvement(0.4, 0.5) < 0.0);
        assert_eq!(improvement(0.5, 0.5), 0.0);
        // Matches the reported style of values: 27.83 vs 28.71 -> -3.06.
        let i = improvement(0.2783, 0.2871);
        assert!((i * 100.0 - -3.06).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = worked_sentence();
        assert!(score_corpus(std::slice::from_ref(&s), &SopCosts::default(), 1.0, 0.5).is_err());
        assert!(score_corpus(&[s], &SopCosts::default(), 2.0, 0.0).is_err());
    }

    #[test]
    fn table_layout() {
        let report = score_corpus(&[worked_sentence()], &SopCosts::default(), 2.0, 0.5).unwrap();
        let table = report.table();
        let mut lines = table.lines();
        assert!(lines.next().unwrap().contains("Detection"));
        assert!(table.contains("FPN"));
        assert!(table.contains("WAcc_b"));
        assert!(report.kv().contains("detection_p="));
    }

    fn sample_xml() -> String {
        let path = format!(
            "{}/tests/fixtures/imeasure_sample.xml",
            env!("CARGO_MANIFEST_DIR")
        );
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn xml_sample_parses() {
        let sentences = read_xml(&sample_xml()).unwrap();
        assert_eq!(sentences.len(), 1);
        let s = &sentences[0];
        assert_eq!(s.id, "1");
        assert_eq!(s.tokens.len(), 11);
        assert_eq!(s.tokens[0], "And");
        assert_eq!(s.errors.len(), 3);
        assert_eq!(s.errors[0].kind, "Vm");
        assert!(s.errors[0].required);
        let gold = s.gold_edits(0);
        assert_eq!(
            gold,
            vec![
                SystemEdit::new(2, 2, "can"),
                SystemEdit::new(8, 8, "'"),
                SystemEdit::new(9, 10, ""),
            ]
        );
        // Applying the gold edits produces the corrected sentence.
        let src: Vec<&str> = s.tokens.iter().map(String::as_str).collect();
        let corrected = apply_span_edits(&src, &gold);
        assert_eq!(
            corrected.join(" "),
            "And we can keep track of all family members ' health ."
        );
    }

    #[test]
    fn xml_missing_annotator_contributes_nothing() {
        let sentences = read_xml(&sample_xml()).unwrap();
        assert!(sentences[0].gold_edits(1).is_empty());
    }

    #[test]
    fn xml_entities_decode() {
        let xml = r#"<scripts><script id="1"><sentence id="1" numann="1">
            <text>a &amp; b</text>
            <error-list>
                <error id="1" req="no" type="X">
                    <alt ann="0"><c start="1" end="2">&lt;and&gt;</c></alt>
                </error>
            </error-list>
        </sentence></script></scripts>"#;
        let sentences = read_xml(xml).unwrap();
        assert_eq!(sentences[0].tokens, vec!["a", "&", "b"]);
        assert!(!sentences[0].errors[0].required);
        assert_eq!(
            sentences[0].errors[0].alternatives[0].edits[0].replacement,
            "<and>"
        );
    }

    #[test]
    fn xml_errors_carry_line_numbers() {
        let xml = "<scripts>\n<script id=\"1\">\n<bogus>\n";
        match read_xml(xml) {
            Err(ImError::MalformedXml { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed xml, got {other:?}"),
        }
    }
}
