//! Word alignment, word error rate, and WER-threshold filtering of
//! synthesized utterances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Manifest, Partition, Utterance};
use crate::error::{Error, Result};

/// One column of an alignment: `(reference word, hypothesis word)`, with
/// `None` marking a gap.
pub type AlignedPair = (Option<String>, Option<String>);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub pairs: Vec<AlignedPair>,
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Diag,
    Ins,
    Del,
}

/// Minimum-edit-distance alignment with unit costs.
///
/// When several alignments share the minimum cost the backtrace prefers a
/// diagonal step (hit or substitution), then an insertion, then a deletion.
pub fn align<R, H>(reference: &[R], hypothesis: &[H]) -> Alignment
where
    R: AsRef<str>,
    H: AsRef<str>,
{
    let (m, n) = (reference.len(), hypothesis.len());
    let w = n + 1;
    let mut cost = vec![0usize; (m + 1) * w];
    for i in 0..=m {
        cost[i * w] = i;
    }
    for (j, c) in cost.iter_mut().take(w).enumerate() {
        *c = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            cost[i * w + j] = (cost[(i - 1) * w + j - 1] + sub)
                .min(cost[i * w + j - 1] + 1)
                .min(cost[(i - 1) * w + j] + 1);
        }
    }

    let mut out = Alignment::default();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        let step = if i > 0
            && j > 0
            && here
                == cost[(i - 1) * w + j - 1]
                    + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref())
        {
            Step::Diag
        } else if j > 0 && here == cost[i * w + j - 1] + 1 {
            Step::Ins
        } else {
            Step::Del
        };
        match step {
            Step::Diag => {
                let (r, h) = (reference[i - 1].as_ref(), hypothesis[j - 1].as_ref());
                if r == h {
                    out.hits += 1;
                } else {
                    out.substitutions += 1;
                }
                out.pairs.push((Some(r.to_string()), Some(h.to_string())));
                i -= 1;
                j -= 1;
            }
            Step::Ins => {
                out.insertions += 1;
                out.pairs
                    .push((None, Some(hypothesis[j - 1].as_ref().to_string())));
                j -= 1;
            }
            Step::Del => {
                out.deletions += 1;
                out.pairs
                    .push((Some(reference[i - 1].as_ref().to_string()), None));
                i -= 1;
            }
        }
    }
    out.pairs.reverse();
    out
}

/// `(S + D + I) / |reference|`. May exceed 1.
pub fn wer<R, H>(reference: &[R], hypothesis: &[H]) -> Result<f64>
where
    R: AsRef<str>,
    H: AsRef<str>,
{
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(align(reference, hypothesis).errors() as f64 / reference.len() as f64)
}

/// Split a transcript into words.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub kept: Manifest,
    pub rejected: Manifest,
    pub rejection_fraction: f64,
    pub wer: BTreeMap<String, f64>,
    /// Ids rejected because their WER was undefined (empty reference text).
    pub invalid: Vec<String>,
}

/// Keep an utterance iff `wer(text, hypothesis) <= threshold`; anything
/// strictly above the threshold is rejected. Both output manifests are
/// ordered by utterance id.
pub fn filter_by_wer(pairs: &[(Utterance, String)], threshold: f64) -> FilterReport {
    let scored: Vec<(&Utterance, Option<f64>)> = pairs
        .par_iter()
        .map(|(u, hyp)| (u, wer(&words(&u.text), &words(hyp)).ok()))
        .collect();

    let mut sorted = scored;
    sorted.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut kept = Manifest::new("kept", Partition::Unsplit);
    let mut rejected = Manifest::new("rejected", Partition::Unsplit);
    let mut wer_map = BTreeMap::new();
    let mut invalid = Vec::new();
    for (u, score) in sorted {
        let keep = match score {
            Some(w) => {
                wer_map.insert(u.id.clone(), w);
                w <= threshold
            }
            None => {
                invalid.push(u.id.clone());
                false
            }
        };
        let target = if keep { &mut kept } else { &mut rejected };
        // Duplicate ids in the input end up rejected rather than aborting the filter.
        if target.push(u.clone()).is_err() && keep {
            let _ = rejected.push(u.clone());
        }
    }
    let total = kept.len() + rejected.len();
    FilterReport {
        rejection_fraction: if total == 0 {
            0.0
        } else {
            rejected.len() as f64 / total as f64
        },
        kept,
        rejected,
        wer: wer_map,
        invalid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, Origin};

    fn w(s: &str) -> Vec<&str> {
        words(s)
    }

    #[test]
    fn identity_alignment() {
        let a = align(&w("a b c"), &w("a b c"));
        assert_eq!((a.hits, a.errors()), (3, 0));
    }

    #[test]
    fn single_deletion() {
        let a = align(&w("the cat sat"), &w("the cat"));
        assert_eq!((a.hits, a.deletions, a.errors()), (2, 1, 1));
        assert_eq!(a.pairs.last().unwrap(), &(Some("sat".to_string()), None));
    }

    #[test]
    fn empty_reference_alignment() {
        let a = align::<&str, &str>(&[], &w("x y"));
        assert_eq!((a.insertions, a.errors()), (2, 2));
    }

    #[test]
    fn substitution_preferred_on_ties() {
        // "a" vs "b c": sub+ins and ins+sub both cost 2; never del+2 ins.
        let a = align(&w("a"), &w("b c"));
        assert_eq!((a.substitutions, a.insertions, a.deletions), (1, 1, 0));
    }

    #[test]
    fn wer_values() {
        assert_eq!(wer(&w("a b"), &w("a b")).unwrap(), 0.0);
        assert!((wer(&w("the cat sat"), &w("the cat")).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(wer(&w("a"), &w("b c")).unwrap(), 2.0);
        assert!(matches!(
            wer::<&str, &str>(&[], &["x"]),
            Err(Error::EmptyReference)
        ));
    }

    fn utt(id: &str, text: &str) -> Utterance {
        Utterance {
            id: id.into(),
            text: text.into(),
            speaker_id: "s".into(),
            domain: Domain::A,
            origin: Origin::Synthetic,
            embedding_ref: None,
            audio: None,
        }
    }

    #[test]
    fn filter_threshold_is_strict() {
        let pairs = vec![
            // 1 error in 4 words: 0.25 > 0.20.
            (utt("u1", "a b c d"), "a b c x".to_string()),
            // 1 error in 5 words: exactly 0.20, kept.
            (utt("u0", "a b c d e"), "a b c d x".to_string()),
            (utt("u2", ""), "a".to_string()),
        ];
        let r = filter_by_wer(&pairs, 0.20);
        assert_eq!(r.kept.len(), 1);
        assert!(r.kept.contains("u0"));
        assert!(r.rejected.contains("u1"));
        assert!(r.rejected.contains("u2"));
        assert_eq!(r.invalid, vec!["u2".to_string()]);
        assert!((r.rejection_fraction - 2.0 / 3.0).abs() < 1e-12);
        let ids: Vec<_> = r.rejected.iter().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, ["u1", "u2"]);
    }
}
