//! Corpus-level BLEU and GLEU.
//!
//! BLEU is the geometric mean of clipped n-gram precisions times a brevity
//! penalty. GLEU modifies the per-order precision to reward n-grams shared
//! with the reference but absent from the source, and to penalize (at rate
//! `lambda`) n-grams kept from the source that the reference removed.
//! Counts are collected per sentence and summed over the corpus.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NgramError {
    #[error("hypothesis corpus has no unigrams")]
    EmptyHypothesis,
    #[error("corpus length mismatch: {left} vs {right} sentences")]
    LengthMismatch { left: usize, right: usize },
}

impl NgramError {
    /// Stable machine-readable error kind for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            NgramError::EmptyHypothesis => "EmptyHypothesis",
            NgramError::LengthMismatch { .. } => "LengthMismatch",
        }
    }
}

/// Multiset of the n-grams of one order extracted from a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramCounts {
    pub order: usize,
    pub counts: HashMap<Vec<String>, usize>,
}

impl NgramCounts {
    pub fn extract(tokens: &[String], order: usize) -> NgramCounts {
        let mut counts = HashMap::new();
        if order >= 1 && tokens.len() >= order {
            for window in tokens.windows(order) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        NgramCounts { order, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Multiset difference, floored at zero per n-gram.
    fn minus(&self, other: &NgramCounts) -> NgramCounts {
        let mut counts = HashMap::new();
        for (gram, n) in &self.counts {
            let left = n.saturating_sub(other.count(gram));
            if left > 0 {
                counts.insert(gram.clone(), left);
            }
        }
        NgramCounts {
            order: self.order,
            counts,
        }
    }
}

/// BLEU result: per-order precisions, brevity penalty and the final score.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub bleu: f64,
    pub max_order: usize,
}

/// GLEU result: modified per-order precisions, brevity penalty, penalty
/// rate and uniform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GleuReport {
    pub modified_precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub gleu: f64,
    pub lambda: f64,
    pub weights: Vec<f64>,
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        return 0.0;
    }
    let (c, r) = (hyp_len as f64, ref_len as f64);
    if c > r {
        1.0
    } else {
        (1.0 - r / c).exp()
    }
}

fn check_lengths(left: usize, right: usize) -> Result<(), NgramError> {
    if left != right {
        return Err(NgramError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Corpus BLEU with clipped n-gram precision, geometric mean over orders
/// `1..=max_order`. Without smoothing, any order with zero matches zeroes
/// the score; with smoothing, orders above 1 use add-one counts.
pub fn bleu(
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
    max_order: usize,
    smooth: bool,
) -> Result<BleuReport, NgramError> {
    assert!(max_order >= 1, "n-gram order must be at least 1");
    check_lengths(hypotheses.len(), references.len())?;
    type SentenceStats = (Vec<(usize, usize)>, usize, usize);
    let per_sentence: Vec<SentenceStats> = hypotheses
        .par_iter()
        .zip(references.par_iter())
        .map(|(hyp, reference)| {
            let orders = (1..=max_order)
                .map(|n| {
                    let h = NgramCounts::extract(hyp, n);
                    let r = NgramCounts::extract(reference, n);
                    let clipped: usize = h
                        .counts
                        .iter()
                        .map(|(gram, count)| (*count).min(r.count(gram)))
                        .sum();
                    (clipped, h.total())
                })
                .collect();
            (orders, hyp.len(), reference.len())
        })
        .collect();

    let mut matches = vec![0usize; max_order];
    let mut totals = vec![0usize; max_order];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (orders, h, r) in per_sentence {
        for (n, (clipped, total)) in orders.into_iter().enumerate() {
            matches[n] += clipped;
            totals[n] += total;
        }
        hyp_len += h;
        ref_len += r;
    }
    if totals.first().copied().unwrap_or(0) == 0 {
        return Err(NgramError::EmptyHypothesis);
    }

    let precisions: Vec<f64> = (0..max_order)
        .map(|n| {
            let (m, t) = (matches[n], totals[n]);
            if smooth && n > 0 {
                (m + 1) as f64 / (t + 1) as f64
            } else if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            }
        })
        .collect();

    let bp = brevity_penalty(hyp_len, ref_len);
    let bleu = if precisions.iter().any(|p| *p <= 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_order as f64;
        bp * log_mean.exp()
    };
    Ok(BleuReport {
        precisions,
        brevity_penalty: bp,
        bleu,
        max_order,
    })
}

/// Corpus GLEU. For each order, candidate n-grams are weighted by the
/// reference-minus-source counts (reward), the source-minus-reference
/// counts scaled by `lambda` (penalty) and the plain reference counts; the
/// denominator combines candidate/source agreement with the
/// reference-minus-source mass. Negative corpus numerators clip to zero
/// and each precision caps at one, keeping the score inside [0, 1].
pub fn gleu(
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
    sources: &[Vec<String>],
    max_order: usize,
    lambda: f64,
    smooth: bool,
) -> Result<GleuReport, NgramError> {
    assert!(max_order >= 1, "n-gram order must be at least 1");
    check_lengths(hypotheses.len(), references.len())?;
    check_lengths(hypotheses.len(), sources.len())?;

    type SentenceStats = (Vec<(f64, f64)>, usize, usize, usize);
    let per_sentence: Vec<SentenceStats> = hypotheses
        .par_iter()
        .zip(references.par_iter())
        .zip(sources.par_iter())
        .map(|((hyp, reference), source)| {
            let orders = (1..=max_order)
                .map(|n| {
                    let c = NgramCounts::extract(hyp, n);
                    let r = NgramCounts::extract(reference, n);
                    let s = NgramCounts::extract(source, n);
                    let r_minus_s = r.minus(&s);
                    let s_minus_r = s.minus(&r);
                    let mut num = 0.0f64;
                    let mut den = 0.0f64;
                    for (gram, count) in &c.counts {
                        let k = *count as f64;
                        num += k
                            * (r_minus_s.count(gram) as f64
                                - lambda * s_minus_r.count(gram) as f64
                                + r.count(gram) as f64);
                        den += k * s.count(gram) as f64;
                    }
                    for n in r_minus_s.counts.values() {
                        den += (*n * *n) as f64;
                    }
                    (num, den)
                })
                .collect();
            (orders, c_total(hyp, 1), hyp.len(), reference.len())
        })
        .collect();

    let mut numerators = vec![0.0f64; max_order];
    let mut denominators = vec![0.0f64; max_order];
    let mut unigrams = 0usize;
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (orders, uni, h, r) in per_sentence {
        for (n, (num, den)) in orders.into_iter().enumerate() {
            numerators[n] += num;
            denominators[n] += den;
        }
        unigrams += uni;
        hyp_len += h;
        ref_len += r;
    }
    if unigrams == 0 {
        return Err(NgramError::EmptyHypothesis);
    }

    let modified_precisions: Vec<f64> = (0..max_order)
        .map(|n| {
            let (num, den) = (numerators[n].max(0.0), denominators[n]);
            if smooth && n > 0 {
                ((num + 1.0) / (den + 1.0)).min(1.0)
            } else if den == 0.0 {
                0.0
            } else {
                (num / den).min(1.0)
            }
        })
        .collect();

    let weights = vec![1.0 / max_order as f64; max_order];
    let bp = brevity_penalty(hyp_len, ref_len);
    let gleu = if modified_precisions.iter().any(|p| *p <= 0.0) {
        0.0
    } else {
        let log_sum: f64 = modified_precisions
            .iter()
            .zip(&weights)
            .map(|(p, w)| w * p.ln())
            .sum();
        bp * log_sum.exp()
    };
    Ok(GleuReport {
        modified_precisions,
        brevity_penalty: bp,
        gleu,
        lambda,
        weights,
    })
}

fn c_total(tokens: &[String], order: usize) -> usize {
    tokens.len().saturating_sub(order - 1)
}

impl BleuReport {
    pub fn text(&self) -> String {
        let mut out = format!("BLEU : {:.6}\n", self.bleu);
        for (i, p) in self.precisions.iter().enumerate() {
            out.push_str(&format!("p_{} : {:.6}\n", i + 1, p));
        }
        out.push_str(&format!("brevity_penalty : {:.6}\n", self.brevity_penalty));
        out
    }

    pub fn kv(&self) -> String {
        let precisions: Vec<String> = self
            .precisions
            .iter()
            .enumerate()
            .map(|(i, p)| format!("p_{}={:.6}", i + 1, p))
            .collect();
        format!(
            "bleu={:.6} bp={:.6} n={} {}\n",
            self.bleu,
            self.brevity_penalty,
            self.max_order,
            precisions.join(" ")
        )
    }
}

impl GleuReport {
    pub fn text(&self) -> String {
        let mut out = format!("GLEU : {:.6}\n", self.gleu);
        for (i, p) in self.modified_precisions.iter().enumerate() {
            out.push_str(&format!("p_{} : {:.6}\n", i + 1, p));
        }
        out.push_str(&format!("brevity_penalty : {:.6}\n", self.brevity_penalty));
        out
    }

    pub fn kv(&self) -> String {
        let precisions: Vec<String> = self
            .modified_precisions
            .iter()
            .enumerate()
            .map(|(i, p)| format!("p_{}={:.6}", i + 1, p))
            .collect();
        format!(
            "gleu={:.6} bp={:.6} lambda={} {}\n",
            self.gleu,
            self.brevity_penalty,
            crate::maxmatch::trim_float(self.lambda),
            precisions.join(" ")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn bleu_perfect_match_is_one() {
        let h = corpus(&["the cat sat on the mat", "a b c d"]);
        let report = bleu(&h, &h, 4, false).unwrap();
        assert!((report.bleu - 1.0).abs() < 1e-12);
        assert_eq!(report.brevity_penalty, 1.0);
        for p in &report.precisions {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    /// Short hypothesis against a one-token-longer reference: every
    /// precision is 1, so the score is exactly the brevity penalty
    /// exp((4 - 5) / 4).
    #[test]
    fn bleu_brevity_penalty_by_hand() {
        let h = corpus(&["a b c d"]);
        let r = corpus(&["a b c d e"]);
        let report = bleu(&h, &r, 4, false).unwrap();
        assert_eq!(report.precisions, vec![1.0, 1.0, 1.0, 1.0]);
        let want_bp = (1.0f64 - 5.0 / 4.0).exp();
        assert!((report.brevity_penalty - want_bp).abs() < 1e-12);
        assert!((report.bleu - want_bp).abs() < 1e-12);
    }

    #[test]
    fn bleu_zero_when_an_order_has_no_match() {
        let h = corpus(&["a b c d"]);
        let r = corpus(&["a x c y"]);
        let report = bleu(&h, &r, 4, false).unwrap();
        assert_eq!(report.bleu, 0.0);
        assert!(report.precisions[0] > 0.0);
        assert_eq!(report.precisions[3], 0.0);
    }

    #[test]
    fn bleu_smoothing_rescues_tiny_fixtures() {
        let h = corpus(&["a b c d"]);
        let r = corpus(&["a x c y"]);
        let report = bleu(&h, &r, 4, true).unwrap();
        assert!(report.bleu > 0.0);
    }

    #[test]
    fn bleu_clipping_bounds_matches() {
        // "the" appears three times in the hypothesis, twice in the
        // reference: clipped matches must not exceed the reference count.
        let h = corpus(&["the the the cat"]);
        let r = corpus(&["the cat the dog"]);
        let report = bleu(&h, &r, 1, false).unwrap();
        assert!((report.precisions[0] - 3.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_rejects_empty_hypotheses() {
        let h = corpus(&[""]);
        let r = corpus(&["a"]);
        assert_eq!(
            bleu(&h, &r, 4, false).unwrap_err(),
            NgramError::EmptyHypothesis
        );
    }

    #[test]
    fn bleu_rejects_length_mismatch() {
        let h = corpus(&["a"]);
        let r = corpus(&["a", "b"]);
        assert!(matches!(
            bleu(&h, &r, 4, false).unwrap_err(),
            NgramError::LengthMismatch { .. }
        ));
    }

    #[test]
    fn gleu_identity_triple_is_one() {
        let t = corpus(&["this text is correct ."]);
        let report = gleu(&t, &t, &t, 4, 0.0, false).unwrap();
        assert!((report.gleu - 1.0).abs() < 1e-12);
        assert_eq!(report.brevity_penalty, 1.0);
    }

    #[test]
    fn gleu_baseline_reference_as_hypothesis_is_one() {
        let src = corpus(&["the greater the Levenshtein distances , more different strings are ."]);
        let r =
            corpus(&["the greater the Levenshtein distance , the more different strings are ."]);
        let report = gleu(&r, &r, &src, 4, 0.0, false).unwrap();
        assert!((report.gleu - 1.0).abs() < 1e-12);
    }

    /// Hand-computed fixture with a disjoint source and lambda 0: the
    /// numerator rewards reference n-grams twice (difference plus plain
    /// counts), the denominator has no candidate/source overlap, leaving
    /// the reference-difference mass.
    #[test]
    fn gleu_reward_only_by_hand() {
        let h = corpus(&["a b c"]);
        let r = corpus(&["a b c"]);
        let s = corpus(&["x y z"]);
        let report = gleu(&h, &r, &s, 2, 0.0, false).unwrap();
        // Order 1: num = 3 * (1 + 1) = 6, den = 0 + 3 * 1 = 3 -> capped 1.
        // Order 2: num = 2 * (1 + 1) = 4, den = 0 + 2 -> capped 1.
        assert_eq!(report.modified_precisions, vec![1.0, 1.0]);
        assert!((report.gleu - 1.0).abs() < 1e-12);
    }

    /// Keeping a source-only error bigram is penalized at lambda 1
    /// relative to the corrected hypothesis.
    #[test]
    fn gleu_penalizes_kept_source_errors() {
        let src = corpus(&["he go to school"]);
        let r = corpus(&["he goes to school"]);
        let kept = corpus(&["he go to school"]);
        let fixed = corpus(&["he goes to school"]);
        let with_error = gleu(&kept, &r, &src, 2, 1.0, false).unwrap();
        let corrected = gleu(&fixed, &r, &src, 2, 1.0, false).unwrap();
        assert!(
            corrected.gleu > with_error.gleu,
            "corrected {} vs kept {}",
            corrected.gleu,
            with_error.gleu
        );
    }

    #[test]
    fn gleu_lambda_monotonicity() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let vocab = ["a", "b", "c", "d"];
        let mut rng = StdRng::seed_from_u64(5);
        let sample = |rng: &mut StdRng| -> Vec<String> {
            let n = rng.random_range(1..=6);
            (0..n)
                .map(|_| vocab[rng.random_range(0..4)].to_string())
                .collect()
        };
        for _ in 0..200 {
            let h = vec![sample(&mut rng)];
            let r = vec![sample(&mut rng)];
            let s = vec![sample(&mut rng)];
            let lo: f64 = rng.random_range(0.0..1.0);
            let hi: f64 = lo + rng.random_range(0.0..1.0);
            let g_lo = gleu(&h, &r, &s, 2, lo, false).unwrap().gleu;
            let g_hi = gleu(&h, &r, &s, 2, hi, false).unwrap().gleu;
            assert!(
                g_lo >= g_hi - 1e-12,
                "lambda {lo} -> {g_lo}, {hi} -> {g_hi}, h={h:?} r={r:?} s={s:?}"
            );
        }
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let vocab = ["a", "b", "c"];
        let mut rng = StdRng::seed_from_u64(6);
        let sample = |rng: &mut StdRng| -> Vec<String> {
            let n = rng.random_range(1..=5);
            (0..n)
                .map(|_| vocab[rng.random_range(0..3)].to_string())
                .collect()
        };
        for _ in 0..300 {
            let h = vec![sample(&mut rng)];
            let r = vec![sample(&mut rng)];
            let s = vec![sample(&mut rng)];
            let b = bleu(&h, &r, 2, false).unwrap().bleu;
            assert!((0.0..=1.0).contains(&b), "bleu {b} h={h:?} r={r:?}");
            let g = gleu(&h, &r, &s, 2, rng.random_range(0.0..2.0), false)
                .unwrap()
                .gleu;
            assert!((0.0..=1.0).contains(&g), "gleu {g} h={h:?} r={r:?} s={s:?}");
        }
    }

    /// With source equal to reference the difference sets vanish and the
    /// fraction reduces to plain reference/source counts.
    #[test]
    fn gleu_collapses_when_source_equals_reference() {
        let h = corpus(&["a b x"]);
        let r = corpus(&["a b c"]);
        let report = gleu(&h, &r, &r, 1, 1.5, false).unwrap();
        // num = sum C[g] * R[g] = 1 + 1 + 0 = 2; den = same = 2.
        assert_eq!(report.modified_precisions, vec![1.0]);
    }

    #[test]
    fn gleu_smoothing_rescues_short_corpora() {
        let h = corpus(&["a b"]);
        let r = corpus(&["a b"]);
        let s = corpus(&["a x"]);
        // Order 4 has no mass on a two-token corpus.
        let plain = gleu(&h, &r, &s, 4, 0.0, false).unwrap();
        assert_eq!(plain.gleu, 0.0);
        let smoothed = gleu(&h, &r, &s, 4, 0.0, true).unwrap();
        assert!(smoothed.gleu > 0.0 && smoothed.gleu <= 1.0);
    }

    #[test]
    fn report_formatting() {
        let h = corpus(&["a b c d"]);
        let report = bleu(&h, &h, 4, false).unwrap();
        assert!(report.text().starts_with("BLEU : 1.000000"));
        assert!(report.kv().starts_with("bleu=1.000000"));
        let g = gleu(&h, &h, &h, 4, 0.0, false).unwrap();
        assert!(g.text().starts_with("GLEU : 1.000000"));
        assert!(g.kv().contains("lambda=0"));
    }
}
