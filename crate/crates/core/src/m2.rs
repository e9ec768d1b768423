//! Block-structured gold-annotation corpora.
//!
//! A corpus is a sequence of blocks separated by blank lines. Each block
//! starts with an `S` line holding the whitespace-tokenized source text,
//! followed by zero or more `A` lines of the form
//!
//! ```text
//! A <start> <end>|||<action>|||<correction>|||REQUIRED|||-NONE-|||<annotator>
//! ```
//!
//! Spans are inter-token positions indexed from 0, so `start == end`
//! denotes an insertion point. Eight explicit actions are used by
//! annotators; unannotated tokens carry the implicit `OK` label.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Errors produced while parsing or manipulating annotation blocks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum M2Error {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: span {start}..{end} out of range for {tokens} source tokens")]
    SpanOutOfRange {
        line: usize,
        start: usize,
        end: usize,
        tokens: usize,
    },
    #[error("line {line}: unknown action `{action}`")]
    UnknownAction { line: usize, action: String },
    #[error("line {line}: block has no source tokens")]
    EmptyBlock { line: usize },
    #[error("corpus contains no blocks")]
    EmptyCorpus,
    #[error(
        "block {block}: conflicting edits {first_start}..{first_end} and \
         {second_start}..{second_end} for annotator {annotator}"
    )]
    ConflictingEdits {
        block: String,
        annotator: usize,
        first_start: usize,
        first_end: usize,
        second_start: usize,
        second_end: usize,
    },
}

impl M2Error {
    /// Stable machine-readable error kind for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            M2Error::MalformedLine { .. } => "MalformedLine",
            M2Error::SpanOutOfRange { .. } => "SpanOutOfRange",
            M2Error::UnknownAction { .. } => "UnknownAction",
            M2Error::EmptyBlock { .. } => "EmptyBlock",
            M2Error::EmptyCorpus => "EmptyCorpus",
            M2Error::ConflictingEdits { .. } => "ConflictingEdits",
        }
    }
}

/// A single source token. Guaranteed non-empty and free of interior
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    /// Returns `None` for empty strings or strings containing whitespace.
    pub fn new(text: &str) -> Option<Token> {
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(text.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Correction actions used by annotators, plus the implicit `OK` label for
/// unannotated tokens. `OK` never appears on a parsed `A` line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Ok,
    Edit,
    AddBefore,
    Merge,
    Split,
    Delete,
    Move,
    AddAfter,
    Other,
}

impl ActionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Ok => "OK",
            ActionKind::Edit => "Edit",
            ActionKind::AddBefore => "Add_before",
            ActionKind::Merge => "Merge",
            ActionKind::Split => "Split",
            ActionKind::Delete => "Delete",
            ActionKind::Move => "Move",
            ActionKind::AddAfter => "Add_after",
            ActionKind::Other => "Other",
        }
    }

    /// Action as written on an `A` line. `OK` is not a valid line action.
    fn from_line_str(s: &str) -> Option<ActionKind> {
        Some(match s {
            "Edit" => ActionKind::Edit,
            "Add_before" => ActionKind::AddBefore,
            "Merge" => ActionKind::Merge,
            "Split" => ActionKind::Split,
            "Delete" => ActionKind::Delete,
            "Move" => ActionKind::Move,
            "Add_after" => ActionKind::AddAfter,
            "Other" => ActionKind::Other,
            _ => return None,
        })
    }

    fn is_insertion(&self) -> bool {
        matches!(self, ActionKind::AddBefore | ActionKind::AddAfter)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One correction action: a token span, the action kind, the replacement
/// text and the annotator that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub action: ActionKind,
    pub correction: String,
    pub annotator: usize,
}

impl Edit {
    /// Position the edit effectively acts on. Insertions are zero-width:
    /// `Add_before` inserts at `start`, `Add_after` after token `start`,
    /// i.e. at `start + 1`. Span edits cover `start..end`.
    fn applied_span(&self) -> (usize, usize) {
        if self.action == ActionKind::AddAfter {
            (self.start + 1, self.start + 1)
        } else {
            (self.start, self.end)
        }
    }

    fn check(&self, line: usize, token_count: usize) -> Result<(), M2Error> {
        if self.start > self.end || self.end > token_count {
            return Err(M2Error::SpanOutOfRange {
                line,
                start: self.start,
                end: self.end,
                tokens: token_count,
            });
        }
        let width = self.end - self.start;
        let arity_ok = match self.action {
            ActionKind::Delete => width == 1 && self.correction.trim().is_empty(),
            ActionKind::AddBefore | ActionKind::AddAfter => width == 0,
            ActionKind::Merge | ActionKind::Move => width >= 2,
            ActionKind::Split | ActionKind::Edit => width == 1,
            ActionKind::Other | ActionKind::Ok => true,
        };
        if !arity_ok {
            return Err(M2Error::MalformedLine {
                line,
                reason: format!(
                    "action {} does not admit span {}..{} with correction `{}`",
                    self.action, self.start, self.end, self.correction
                ),
            });
        }
        Ok(())
    }
}

/// One annotated block: an identifier, the source tokens and the gold
/// edits sorted by `(start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationBlock {
    pub id: String,
    pub source: Vec<Token>,
    pub edits: Vec<Edit>,
}

impl AnnotationBlock {
    pub fn edits_for(&self, annotator: usize) -> impl Iterator<Item = &Edit> {
        self.edits.iter().filter(move |e| e.annotator == annotator)
    }

    pub fn annotators(&self) -> BTreeSet<usize> {
        self.edits.iter().map(|e| e.annotator).collect()
    }
}

/// One row of a dataset built from a block: the original token span, its
/// corrected form and the correction action. Insertions have an empty
/// `original`; `OK` rows repeat the token unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetTriple {
    pub original: String,
    pub corrected: String,
    pub action: ActionKind,
}

impl DatasetTriple {
    pub fn new(original: &str, corrected: &str, action: ActionKind) -> DatasetTriple {
        DatasetTriple {
            original: original.to_string(),
            corrected: corrected.to_string(),
            action,
        }
    }
}

/// Aggregate statistics over a corpus of blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    /// Count per action, including implicit `OK` for unannotated tokens.
    pub action_counts: BTreeMap<ActionKind, usize>,
    /// Sorted set of characters appearing in any source token, plus space.
    pub char_inventory: BTreeSet<char>,
    /// Histogram: occurrence frequency -> number of distinct tokens with
    /// that frequency.
    pub word_frequency: BTreeMap<usize, usize>,
    /// Total edits divided by total blocks.
    pub error_density: f64,
    /// Total number of source tokens.
    pub token_count: usize,
}

// ---------------------------------------------------------------------------
// Parsing and serialization
// ---------------------------------------------------------------------------

/// Parses an m2 corpus. Blocks are assigned 1-based ordinal identifiers.
pub fn parse_m2(text: &str) -> Result<Vec<AnnotationBlock>, M2Error> {
    let mut blocks = Vec::new();
    let mut current: Option<(usize, AnnotationBlock)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some((_, block)) = current.take() {
                blocks.push(block);
            }
            continue;
        }
        if let Some(rest) = line
            .strip_prefix("S ")
            .or(if line == "S" { Some("") } else { None })
        {
            if let Some((_, block)) = current.take() {
                blocks.push(block);
            }
            let source: Vec<Token> = rest.split_whitespace().filter_map(Token::new).collect();
            if source.is_empty() {
                return Err(M2Error::EmptyBlock { line: line_no });
            }
            current = Some((
                line_no,
                AnnotationBlock {
                    id: (blocks.len() + 1).to_string(),
                    source,
                    edits: Vec::new(),
                },
            ));
        } else if let Some(rest) = line.strip_prefix("A ") {
            let (_, block) = current.as_mut().ok_or_else(|| M2Error::MalformedLine {
                line: line_no,
                reason: "A line before any S line".to_string(),
            })?;
            let edit = parse_a_line(rest, line_no, block.source.len())?;
            block.edits.push(edit);
        } else {
            return Err(M2Error::MalformedLine {
                line: line_no,
                reason: format!("expected S or A line, got `{line}`"),
            });
        }
    }
    if let Some((_, block)) = current.take() {
        blocks.push(block);
    }
    for block in &mut blocks {
        block.edits.sort_by_key(|e| (e.start, e.end, e.annotator));
    }
    Ok(blocks)
}

fn parse_a_line(rest: &str, line: usize, token_count: usize) -> Result<Edit, M2Error> {
    let fields: Vec<&str> = rest.split("|||").collect();
    if fields.len() != 6 {
        return Err(M2Error::MalformedLine {
            line,
            reason: format!("expected 6 `|||`-separated fields, got {}", fields.len()),
        });
    }
    let mut span = fields[0].split_whitespace();
    let start: usize =
        span.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| M2Error::MalformedLine {
                line,
                reason: "missing or non-numeric span start".to_string(),
            })?;
    let end: usize =
        span.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| M2Error::MalformedLine {
                line,
                reason: "missing or non-numeric span end".to_string(),
            })?;
    if span.next().is_some() {
        return Err(M2Error::MalformedLine {
            line,
            reason: "trailing tokens after span".to_string(),
        });
    }
    let action = ActionKind::from_line_str(fields[1]).ok_or_else(|| M2Error::UnknownAction {
        line,
        action: fields[1].to_string(),
    })?;
    let annotator: usize = fields[5]
        .trim()
        .parse()
        .map_err(|_| M2Error::MalformedLine {
            line,
            reason: format!("non-numeric annotator id `{}`", fields[5]),
        })?;
    let edit = Edit {
        start,
        end,
        action,
        correction: fields[2].to_string(),
        annotator,
    };
    edit.check(line, token_count)?;
    Ok(edit)
}

/// Serializes blocks back to m2 text, one blank line between blocks.
pub fn serialize_m2(blocks: &[AnnotationBlock]) -> String {
    let mut out = String::new();
    for (i, block) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("S ");
        out.push_str(&join_tokens(&block.source));
        out.push('\n');
        for e in &block.edits {
            out.push_str(&format!(
                "A {} {}|||{}|||{}|||REQUIRED|||-NONE-|||{}\n",
                e.start, e.end, e.action, e.correction, e.annotator
            ));
        }
    }
    out
}

/// Writes blocks in `.sent` format: `<id><TAB><tokens>` per line.
pub fn write_sent(blocks: &[AnnotationBlock]) -> Result<String, M2Error> {
    let mut out = String::new();
    for (i, block) in blocks.iter().enumerate() {
        if block.source.is_empty() {
            return Err(M2Error::EmptyBlock { line: i + 1 });
        }
        out.push_str(&block.id);
        out.push('\t');
        out.push_str(&join_tokens(&block.source));
        out.push('\n');
    }
    Ok(out)
}

/// Reads `.sent` text back into `(id, tokens)` pairs.
pub fn read_sent(text: &str) -> Result<Vec<(String, Vec<Token>)>, M2Error> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| M2Error::MalformedLine {
                line: line_no,
                reason: "missing TAB between identifier and tokens".to_string(),
            })?;
        let tokens: Vec<Token> = rest.split_whitespace().filter_map(Token::new).collect();
        if id.is_empty() || tokens.is_empty() {
            return Err(M2Error::MalformedLine {
                line: line_no,
                reason: "empty identifier or token list".to_string(),
            });
        }
        out.push((id.to_string(), tokens));
    }
    Ok(out)
}

fn join_tokens(tokens: &[Token]) -> String {
    let strs: Vec<&str> = tokens.iter().map(Token::as_str).collect();
    strs.join(" ")
}

// ---------------------------------------------------------------------------
// Edit application and dataset extraction
// ---------------------------------------------------------------------------

/// An edit group: all edits of one annotator sharing an applied span.
/// When several correction actions target one token the corrections are
/// concatenated and the first action is kept.
#[derive(Debug, Clone)]
struct EditGroup {
    start: usize,
    end: usize,
    action: ActionKind,
    correction: String,
}

impl EditGroup {
    fn correction_tokens(&self) -> Vec<Token> {
        self.correction
            .split_whitespace()
            .filter_map(Token::new)
            .collect()
    }
}

/// Groups one annotator's edits by applied span and checks for overlap.
/// Insertions are keyed by their insertion point; two span edits conflict
/// when their spans properly overlap without being identical, and an
/// insertion conflicts with a span edit when its insertion point falls
/// strictly inside the span.
fn grouped_edits(block: &AnnotationBlock, annotator: usize) -> Result<Vec<EditGroup>, M2Error> {
    let mut groups: Vec<(ActionKind, EditGroup)> = Vec::new();
    for edit in block.edits_for(annotator) {
        let (start, end) = edit.applied_span();
        // Grouping key distinguishes the two insertion kinds so that an
        // Add_before and an Add_after landing on the same point stay apart.
        let merged = groups.iter_mut().find(|(kind, g)| {
            g.start == start
                && g.end == end
                && edit.action.is_insertion() == kind.is_insertion()
                && (!edit.action.is_insertion() || edit.action == *kind)
        });
        match merged {
            Some((_, g)) => {
                let extra = edit
                    .correction
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ");
                if !extra.is_empty() {
                    if !g.correction.is_empty() {
                        g.correction.push(' ');
                    }
                    g.correction.push_str(&extra);
                }
            }
            None => groups.push((
                edit.action,
                EditGroup {
                    start,
                    end,
                    action: edit.action,
                    correction: edit
                        .correction
                        .split_whitespace()
                        .collect::<Vec<_>>()
                        .join(" "),
                },
            )),
        }
    }
    let groups: Vec<EditGroup> = groups.into_iter().map(|(_, g)| g).collect();
    for (i, a) in groups.iter().enumerate() {
        for b in groups.iter().skip(i + 1) {
            let identical = a.start == b.start && a.end == b.end;
            let overlap = a.start < b.end && b.start < a.end;
            if overlap && !identical {
                return Err(M2Error::ConflictingEdits {
                    block: block.id.clone(),
                    annotator,
                    first_start: a.start,
                    first_end: a.end,
                    second_start: b.start,
                    second_end: b.end,
                });
            }
        }
    }
    Ok(groups)
}

/// Applies one annotator's edits to the source, returning the corrected
/// token sequence. Edits are applied right to left by insertion point so
/// earlier indices stay valid; at an equal point, replacements are applied
/// before insertions so inserted text ends up outside the replaced span.
pub fn apply_edits(block: &AnnotationBlock, annotator: usize) -> Result<Vec<Token>, M2Error> {
    let mut groups = grouped_edits(block, annotator)?;
    // Right-to-left; at one insertion point: span replacements first, then
    // Add_before, then Add_after (whose text must precede in the output).
    groups.sort_by(|a, b| {
        b.start
            .cmp(&a.start)
            .then(insert_rank(a.action).cmp(&insert_rank(b.action)))
            .then(b.end.cmp(&a.end))
    });
    let mut tokens = block.source.clone();
    for g in &groups {
        let replacement = g.correction_tokens();
        if g.start == g.end {
            let at = g.start.min(tokens.len());
            tokens.splice(at..at, replacement);
        } else {
            tokens.splice(g.start..g.end, replacement);
        }
    }
    Ok(tokens)
}

fn insert_rank(action: ActionKind) -> u8 {
    match action {
        ActionKind::AddBefore => 1,
        ActionKind::AddAfter => 2,
        _ => 0,
    }
}

/// A dataset triple together with the inter-token position where its
/// corrected text lands, used to reassemble the corrected sentence in
/// output order.
#[derive(Debug, Clone)]
struct SpannedTriple {
    emit_at: (usize, u8),
    triple: DatasetTriple,
}

fn extract_triples_spanned(
    block: &AnnotationBlock,
    annotator: usize,
) -> Result<Vec<SpannedTriple>, M2Error> {
    let groups = grouped_edits(block, annotator)?;
    let mut rows: Vec<(usize, usize, u8, SpannedTriple)> = Vec::new();

    let mut covered = vec![false; block.source.len()];
    for g in &groups {
        let original: String = if g.start == g.end {
            String::new()
        } else {
            block.source[g.start..g.end]
                .iter()
                .map(Token::as_str)
                .collect::<Vec<_>>()
                .join(" ")
        };
        for slot in covered.iter_mut().take(g.end).skip(g.start) {
            *slot = true;
        }
        // Row ordering follows the annotation span: Add_before sorts ahead
        // of same-point rows, Add_after ahead of the row for the token it
        // follows. The emit position reflects where the text really lands:
        // at one point, Add_after text (after the previous token) precedes
        // Add_before text, which precedes the span replacement.
        let (kind_rank, sort_span, emit_at) = match g.action {
            ActionKind::AddBefore => (0u8, (g.start, g.start), (g.start, 1u8)),
            // g.start/g.end already hold the insertion point start+1.
            ActionKind::AddAfter => (1, (g.start - 1, g.start - 1), (g.start, 0)),
            _ => (2, (g.start, g.end), (g.start, 2)),
        };
        rows.push((
            sort_span.0,
            sort_span.1,
            kind_rank,
            SpannedTriple {
                emit_at,
                triple: DatasetTriple {
                    original,
                    corrected: g.correction.clone(),
                    action: g.action,
                },
            },
        ));
    }
    for (i, token) in block.source.iter().enumerate() {
        if !covered[i] {
            rows.push((
                i,
                i + 1,
                2,
                SpannedTriple {
                    emit_at: (i, 2),
                    triple: DatasetTriple {
                        original: token.as_str().to_string(),
                        corrected: token.as_str().to_string(),
                        action: ActionKind::Ok,
                    },
                },
            ));
        }
    }
    rows.sort_by_key(|(start, end, rank, _)| (*start, *end, *rank));
    Ok(rows.into_iter().map(|(_, _, _, t)| t).collect())
}

/// Extracts dataset triples from a block: each covered span yields one row
/// with its concatenated correction, uncovered tokens yield `OK` rows, and
/// insertions yield rows with an empty original.
pub fn extract_triples(
    block: &AnnotationBlock,
    annotator: usize,
) -> Result<Vec<DatasetTriple>, M2Error> {
    Ok(extract_triples_spanned(block, annotator)?
        .into_iter()
        .map(|s| s.triple)
        .collect())
}

/// Reassembles the corrected sentence from the dataset triples of a block
/// by emitting each corrected field at its landing position. Always equal
/// to [`apply_edits`] on the same block and annotator.
pub fn corrected_from_triples(
    block: &AnnotationBlock,
    annotator: usize,
) -> Result<Vec<Token>, M2Error> {
    let mut rows = extract_triples_spanned(block, annotator)?;
    rows.sort_by_key(|r| r.emit_at);
    Ok(rows
        .iter()
        .flat_map(|r| {
            r.triple
                .corrected
                .split_whitespace()
                .filter_map(Token::new)
                .collect::<Vec<_>>()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

/// Computes corpus statistics. Action counts cover the edits of every
/// annotator; the `OK` count is the number of source tokens not covered by
/// any annotator's span edit.
pub fn corpus_stats(blocks: &[AnnotationBlock]) -> Result<CorpusStats, M2Error> {
    if blocks.is_empty() {
        return Err(M2Error::EmptyCorpus);
    }
    let mut action_counts: BTreeMap<ActionKind, usize> = BTreeMap::new();
    let mut char_inventory: BTreeSet<char> = BTreeSet::new();
    char_inventory.insert(' ');
    let mut occurrences: HashMap<&str, usize> = HashMap::new();
    let mut token_count = 0usize;
    let mut total_edits = 0usize;

    for block in blocks {
        token_count += block.source.len();
        let mut covered = vec![false; block.source.len()];
        for edit in &block.edits {
            total_edits += 1;
            *action_counts.entry(edit.action).or_insert(0) += 1;
            if !edit.action.is_insertion() {
                for slot in covered.iter_mut().take(edit.end).skip(edit.start) {
                    *slot = true;
                }
            }
        }
        for (i, token) in block.source.iter().enumerate() {
            char_inventory.extend(token.as_str().chars());
            *occurrences.entry(token.as_str()).or_insert(0) += 1;
            if !covered[i] {
                *action_counts.entry(ActionKind::Ok).or_insert(0) += 1;
            }
        }
    }

    let mut word_frequency: BTreeMap<usize, usize> = BTreeMap::new();
    for freq in occurrences.values() {
        *word_frequency.entry(*freq).or_insert(0) += 1;
    }

    Ok(CorpusStats {
        action_counts,
        char_inventory,
        word_frequency,
        error_density: total_edits as f64 / blocks.len() as f64,
        token_count,
    })
}

impl CorpusStats {
    pub fn unique_tokens(&self) -> usize {
        self.word_frequency.values().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CORRECTION_PROCESS: &str = "\
S Tihs text ismeant tu be in Ara bic but is it not :
A 0 1|||Edit|||This|||REQUIRED|||-NONE-|||0
A 2 3|||Split|||is meant|||REQUIRED|||-NONE-|||0
A 3 4|||Edit|||to|||REQUIRED|||-NONE-|||0
A 6 8|||Merge|||Arabic|||REQUIRED|||-NONE-|||0
A 9 9|||Add_before|||,|||REQUIRED|||-NONE-|||0
A 9 11|||Move|||it is|||REQUIRED|||-NONE-|||0
A 12 12|||Add_after|||.|||REQUIRED|||-NONE-|||0
A 12 13|||Delete||||||REQUIRED|||-NONE-|||0
";

    fn correction_block() -> AnnotationBlock {
        parse_m2(CORRECTION_PROCESS).unwrap().remove(0)
    }

    fn tokens(s: &str) -> Vec<Token> {
        s.split_whitespace()
            .map(|t| Token::new(t).unwrap())
            .collect()
    }

    #[test]
    fn parse_first_edit_fields() {
        let block = correction_block();
        assert_eq!(
            block.edits[0],
            Edit {
                start: 0,
                end: 1,
                action: ActionKind::Edit,
                correction: "This".to_string(),
                annotator: 0,
            }
        );
    }

    #[test]
    fn parse_split_two_word_correction() {
        let block = correction_block();
        let split = block
            .edits
            .iter()
            .find(|e| e.action == ActionKind::Split)
            .unwrap();
        assert_eq!(split.end - split.start, 1);
        assert_eq!(split.correction, "is meant");
    }

    #[test]
    fn parse_block_without_edits() {
        let blocks = parse_m2("S hello world\n").unwrap();
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].edits.is_empty());
        assert_eq!(blocks[0].id, "1");
    }

    #[test]
    fn parse_annotator_field() {
        let text = "S a b\nA 0 1|||Edit|||x|||REQUIRED|||-NONE-|||3\n";
        let blocks = parse_m2(text).unwrap();
        assert_eq!(blocks[0].edits[0].annotator, 3);
    }

    #[test]
    fn parse_rejects_bad_prefix() {
        let err = parse_m2("S a\nB 0 1|||Edit|||x|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, M2Error::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn parse_rejects_out_of_range_span() {
        let err = parse_m2("S a b\nA 1 3|||Merge|||x|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(
            err,
            M2Error::SpanOutOfRange {
                line: 2,
                end: 3,
                ..
            }
        ));
    }

    #[test]
    fn parse_rejects_unknown_action() {
        let err = parse_m2("S a\nA 0 1|||Frobnicate|||x|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        match err {
            M2Error::UnknownAction { action, .. } => assert_eq!(action, "Frobnicate"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_ok_on_a_line() {
        let err = parse_m2("S a\nA 0 1|||OK|||a|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, M2Error::UnknownAction { .. }));
    }

    #[test]
    fn parse_rejects_empty_source() {
        let err = parse_m2("S\nA 0 0|||Add_before|||x|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, M2Error::EmptyBlock { line: 1 }));
    }

    #[test]
    fn parse_rejects_bad_arity() {
        // Delete must cover exactly one token.
        let err = parse_m2("S a b c\nA 0 2|||Delete||||||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, M2Error::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn apply_reconstructs_corrected_phrase() {
        let block = correction_block();
        let corrected = apply_edits(&block, 0).unwrap();
        assert_eq!(
            corrected,
            tokens("This text is meant to be in Arabic but , it is not .")
        );
    }

    #[test]
    fn apply_without_edits_is_identity() {
        let blocks = parse_m2("S keep me intact\n").unwrap();
        assert_eq!(apply_edits(&blocks[0], 0).unwrap(), blocks[0].source);
    }

    #[test]
    fn apply_single_delete() {
        let text = "S a b\nA 0 1|||Delete||||||REQUIRED|||-NONE-|||0\n";
        let blocks = parse_m2(text).unwrap();
        assert_eq!(apply_edits(&blocks[0], 0).unwrap(), tokens("b"));
    }

    #[test]
    fn apply_ignores_other_annotators() {
        let text = "S a b\nA 0 1|||Edit|||x|||REQUIRED|||-NONE-|||1\n";
        let blocks = parse_m2(text).unwrap();
        assert_eq!(apply_edits(&blocks[0], 0).unwrap(), tokens("a b"));
        assert_eq!(apply_edits(&blocks[0], 1).unwrap(), tokens("x b"));
    }

    #[test]
    fn apply_rejects_overlapping_edits() {
        let text = "S a b c d\n\
                    A 0 3|||Move|||c a b|||REQUIRED|||-NONE-|||0\n\
                    A 2 3|||Edit|||x|||REQUIRED|||-NONE-|||0\n";
        let blocks = parse_m2(text).unwrap();
        let err = apply_edits(&blocks[0], 0).unwrap_err();
        assert!(matches!(err, M2Error::ConflictingEdits { .. }));
    }

    #[test]
    fn apply_rejects_insertion_inside_span() {
        // Add_after token 0 inserts at position 1, strictly inside 0..2.
        let text = "S a b c\n\
                    A 0 0|||Add_after|||x|||REQUIRED|||-NONE-|||0\n\
                    A 0 2|||Move|||b a|||REQUIRED|||-NONE-|||0\n";
        let blocks = parse_m2(text).unwrap();
        let err = apply_edits(&blocks[0], 0).unwrap_err();
        assert!(matches!(err, M2Error::ConflictingEdits { .. }));
    }

    #[test]
    fn extract_triples_of_correction_block() {
        let block = correction_block();
        let triples = extract_triples(&block, 0).unwrap();
        let expect = vec![
            DatasetTriple::new("Tihs", "This", ActionKind::Edit),
            DatasetTriple::new("text", "text", ActionKind::Ok),
            DatasetTriple::new("ismeant", "is meant", ActionKind::Split),
            DatasetTriple::new("tu", "to", ActionKind::Edit),
            DatasetTriple::new("be", "be", ActionKind::Ok),
            DatasetTriple::new("in", "in", ActionKind::Ok),
            DatasetTriple::new("Ara bic", "Arabic", ActionKind::Merge),
            DatasetTriple::new("but", "but", ActionKind::Ok),
            DatasetTriple::new("", ",", ActionKind::AddBefore),
            DatasetTriple::new("is it", "it is", ActionKind::Move),
            DatasetTriple::new("not", "not", ActionKind::Ok),
            DatasetTriple::new("", ".", ActionKind::AddAfter),
            DatasetTriple::new(":", "", ActionKind::Delete),
        ];
        assert_eq!(triples, expect);
    }

    #[test]
    fn extract_triples_unannotated_all_ok() {
        let blocks = parse_m2("S x y\n").unwrap();
        let triples = extract_triples(&blocks[0], 0).unwrap();
        assert!(triples.iter().all(|t| t.action == ActionKind::Ok));
        assert!(triples.iter().all(|t| t.original == t.corrected));
    }

    #[test]
    fn extract_triples_concatenates_same_span() {
        let text = "S a b\n\
                    A 1 2|||Edit|||big|||REQUIRED|||-NONE-|||0\n\
                    A 1 2|||Edit|||red|||REQUIRED|||-NONE-|||0\n";
        let blocks = parse_m2(text).unwrap();
        let triples = extract_triples(&blocks[0], 0).unwrap();
        assert_eq!(
            triples[1],
            DatasetTriple::new("b", "big red", ActionKind::Edit)
        );
        // Hand application agrees: the grouped correction replaces the span.
        assert_eq!(apply_edits(&blocks[0], 0).unwrap(), tokens("a big red"));
    }

    #[test]
    fn triples_reassemble_to_applied_output() {
        let block = correction_block();
        assert_eq!(
            corrected_from_triples(&block, 0).unwrap(),
            apply_edits(&block, 0).unwrap()
        );
    }

    #[test]
    fn stats_error_density() {
        let text = "S a b\nA 0 1|||Edit|||x|||REQUIRED|||-NONE-|||0\n\
                    A 1 2|||Edit|||y|||REQUIRED|||-NONE-|||0\n\n\
                    S c d\nA 0 1|||Delete||||||REQUIRED|||-NONE-|||0\n";
        let stats = corpus_stats(&parse_m2(text).unwrap()).unwrap();
        assert!((stats.error_density - 1.5).abs() < 1e-12);
    }

    #[test]
    fn stats_action_counts_of_correction_block() {
        let stats = corpus_stats(&parse_m2(CORRECTION_PROCESS).unwrap()).unwrap();
        let count = |a: ActionKind| stats.action_counts.get(&a).copied().unwrap_or(0);
        assert_eq!(count(ActionKind::Edit), 2);
        assert_eq!(count(ActionKind::Split), 1);
        assert_eq!(count(ActionKind::Merge), 1);
        assert_eq!(count(ActionKind::AddBefore), 1);
        assert_eq!(count(ActionKind::Move), 1);
        assert_eq!(count(ActionKind::AddAfter), 1);
        assert_eq!(count(ActionKind::Delete), 1);
        assert_eq!(count(ActionKind::Ok), 5);
        assert_eq!(stats.token_count, 13);
        assert!((stats.error_density - 8.0).abs() < 1e-12);
    }

    #[test]
    fn stats_histogram_matches_hand_count() {
        let text = "S a b a\n\nS b c c\n\nS a d e\n\nS f f f\n\nS g a b\n";
        let blocks = parse_m2(text).unwrap();
        let stats = corpus_stats(&blocks).unwrap();
        // Brute-force recount over the raw text.
        let mut occ: HashMap<&str, usize> = HashMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            for tok in line.trim_start_matches("S ").split_whitespace() {
                *occ.entry(tok).or_insert(0) += 1;
            }
        }
        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for f in occ.values() {
            *hist.entry(*f).or_insert(0) += 1;
        }
        assert_eq!(stats.word_frequency, hist);
        assert_eq!(stats.unique_tokens(), occ.len());
        assert_eq!(stats.token_count, 15);
    }

    #[test]
    fn stats_char_inventory_includes_space() {
        let stats = corpus_stats(&parse_m2("S ab &gt;\n").unwrap()).unwrap();
        assert!(stats.char_inventory.contains(&' '));
        assert!(stats.char_inventory.contains(&'&'));
        assert!(stats.char_inventory.contains(&';'));
    }

    #[test]
    fn stats_rejects_empty_corpus() {
        assert_eq!(corpus_stats(&[]).unwrap_err(), M2Error::EmptyCorpus);
    }

    #[test]
    fn stats_counts_sum_to_edit_total() {
        let blocks = parse_m2(CORRECTION_PROCESS).unwrap();
        let stats = corpus_stats(&blocks).unwrap();
        let non_ok: usize = stats
            .action_counts
            .iter()
            .filter(|(a, _)| **a != ActionKind::Ok)
            .map(|(_, c)| c)
            .sum();
        assert_eq!(non_ok, blocks.iter().map(|b| b.edits.len()).sum::<usize>());
    }

    #[test]
    fn html_entities_are_preserved_verbatim() {
        let text = "S &gt; &amp;\n";
        let blocks = parse_m2(text).unwrap();
        assert_eq!(blocks[0].source, tokens("&gt; &amp;"));
        assert_eq!(serialize_m2(&blocks), text);
    }

    #[test]
    fn sent_round_trip() {
        let blocks = parse_m2(CORRECTION_PROCESS).unwrap();
        let sent = write_sent(&blocks).unwrap();
        assert_eq!(sent.lines().count(), 1);
        let read = read_sent(&sent).unwrap();
        assert_eq!(read[0].0, blocks[0].id);
        assert_eq!(read[0].1, blocks[0].source);
    }

    #[test]
    fn sent_single_block_layout() {
        let blocks = vec![AnnotationBlock {
            id: "X".to_string(),
            source: tokens("a b"),
            edits: vec![],
        }];
        assert_eq!(write_sent(&blocks).unwrap(), "X\ta b\n");
    }

    #[test]
    fn sent_rejects_missing_tab() {
        assert!(matches!(
            read_sent("no-tab-here\n").unwrap_err(),
            M2Error::MalformedLine { .. }
        ));
    }

    #[test]
    fn sent_rejects_empty_tokens() {
        let blocks = vec![AnnotationBlock {
            id: "X".to_string(),
            source: vec![],
            edits: vec![],
        }];
        assert!(matches!(
            write_sent(&blocks).unwrap_err(),
            M2Error::EmptyBlock { .. }
        ));
        assert!(read_sent("X\t \n").is_err());
    }

    #[test]
    fn m2_round_trip_identity() {
        let blocks = parse_m2(CORRECTION_PROCESS).unwrap();
        let text = serialize_m2(&blocks);
        let reparsed = parse_m2(&text).unwrap();
        assert_eq!(blocks, reparsed);
    }
}
