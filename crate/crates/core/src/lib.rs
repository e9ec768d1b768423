//! Corpus processing and evaluation toolkit for grammatical error
//! correction systems.
//!
//! The crate is organized around the lifecycle of a correction experiment:
//!
//! * [`m2`] parses and manipulates block-structured gold annotations
//!   (`S` source line plus `A` edit lines), applies gold edits, extracts
//!   `(original, corrected, action)` dataset triples and corpus statistics.
//! * [`align`] provides token-level Levenshtein machinery: the distance
//!   matrix, the cells lying on minimal edit paths, and the edit lattice
//!   whose paths are phrase-level edit sequences.
//! * [`maxmatch`] scores hypotheses with the MaxMatch method: system edits
//!   are extracted by a shortest-path search over the gold-reweighted
//!   lattice and scored with micro-averaged precision, recall and F-beta.
//! * [`imeasure`] scores with a three-way source/hypothesis/gold alignment
//!   (sum-of-pairs dynamic programming), the extended
//!   writer-annotator-system classification, weighted accuracy and an
//!   improvement score.
//! * [`ngram`] implements corpus-level BLEU and GLEU.
//!
//! All operations are pure functions of their inputs; corpus-level scoring
//! parallelizes per sentence and aggregates with order-independent sums,
//! so results are deterministic at any parallelism level.

pub mod align;
pub mod imeasure;
pub mod m2;
pub mod maxmatch;
pub mod ngram;
