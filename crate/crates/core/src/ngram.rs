//! Baseline: n-gram next-label model plus one Gaussian length law per class.
//!
//! Contexts are the preceding `order - 1` labels, padded on the left with a
//! start token. Unseen contexts back off to shorter suffixes, down to the
//! unigram distribution and finally to uniform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anticipate::{FutureDistributionSource, LengthGaussian};
use crate::segment::{ActionSegment, LengthStats, SegmentSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Token {
    Start,
    Label(usize),
}

/// Occurrence counts for every context length `0..order`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    /// `tables[k]` maps a length-`k` context to next-label counts.
    tables: Vec<BTreeMap<Vec<Token>, Vec<u64>>>,
}

impl NGramModel {
    /// Counts all n-grams of every order up to `order` over the label
    /// sequences. Panics if `order < 1`.
    pub fn fit<'a, I>(sequences: I, order: usize, vocab_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        assert!(order >= 1, "n-gram order must be at least 1");
        let mut tables = vec![BTreeMap::new(); order];
        for labels in sequences {
            for (i, &label) in labels.iter().enumerate() {
                assert!(label < vocab_size, "label {label} outside vocabulary");
                for (k, table) in tables.iter_mut().enumerate() {
                    let context = context_before(&labels[..i], k);
                    table.entry(context).or_insert_with(|| vec![0; vocab_size])[label] += 1;
                }
            }
        }
        Self {
            order,
            vocab_size,
            tables,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Counts recorded for a context of exactly `order - 1` tokens.
    pub fn counts(&self, context: &[Token]) -> Option<&[u64]> {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .map(Vec::as_slice)
    }

    /// Every full-order context seen during fitting.
    pub fn contexts(&self) -> impl Iterator<Item = &Vec<Token>> {
        self.tables.last().into_iter().flat_map(|t| t.keys())
    }

    pub fn tables(&self) -> &[BTreeMap<Vec<Token>, Vec<u64>>] {
        &self.tables
    }

    pub fn from_tables(order: usize, vocab_size: usize, tables: Vec<BTreeMap<Vec<Token>, Vec<u64>>>) -> Self {
        assert_eq!(tables.len(), order, "one table per context length");
        Self {
            order,
            vocab_size,
            tables,
        }
    }

    /// Context for predicting the label after `history`.
    pub fn context_for(&self, history: &[usize]) -> Vec<Token> {
        context_before(history, self.order - 1)
    }

    /// Next-label distribution; `context` holds `order - 1` tokens.
    pub fn distribution(&self, context: &[Token]) -> Vec<f64> {
        assert_eq!(context.len(), self.order - 1, "context length must be order - 1");
        for k in (0..=context.len()).rev() {
            let suffix = &context[context.len() - k..];
            if let Some(counts) = self.tables[k].get(suffix) {
                let total: u64 = counts.iter().sum();
                if total > 0 {
                    return counts.iter().map(|&c| c as f64 / total as f64).collect();
                }
            }
        }
        vec![1.0 / self.vocab_size as f64; self.vocab_size]
    }
}

fn context_before(history: &[usize], k: usize) -> Vec<Token> {
    let mut ctx = vec![Token::Start; k.saturating_sub(history.len())];
    let tail = &history[history.len().saturating_sub(k)..];
    ctx.extend(tail.iter().map(|&l| Token::Label(l)));
    ctx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub mean: f64,
    pub std: f64,
    pub support: usize,
}

/// Per-class length laws fitted on training segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussianTable {
    pub classes: Vec<ClassGaussian>,
}

/// Floor for classes whose observed lengths do not vary.
pub const MIN_CLASS_STD: f64 = 1.0;

impl ClassGaussianTable {
    pub fn fit<'a, I>(corpus: I, vocab_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a SegmentSequence>,
    {
        let mut lengths: Vec<Vec<f64>> = vec![Vec::new(); vocab_size];
        for seq in corpus {
            for s in seq.segments() {
                lengths[s.label].push(s.length as f64);
            }
        }
        let classes = lengths
            .iter()
            .map(|ls| {
                if ls.is_empty() {
                    return ClassGaussian {
                        mean: 0.0,
                        std: 0.0,
                        support: 0,
                    };
                }
                let n = ls.len() as f64;
                let mean = ls.iter().sum::<f64>() / n;
                let var = ls.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
                let std = if var > 0.0 { var.sqrt() } else { MIN_CLASS_STD };
                ClassGaussian {
                    mean,
                    std,
                    support: ls.len(),
                }
            })
            .collect();
        Self { classes }
    }

    /// `None` for classes never seen in training.
    pub fn get(&self, label: usize) -> Option<ClassGaussian> {
        self.classes.get(label).copied().filter(|c| c.support > 0)
    }

    pub fn unseen_classes(&self) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&c| self.classes[c].support == 0)
            .collect()
    }
}

/// The full baseline: n-gram labels, per-class lengths, and corpus length
/// statistics as the fallback for unseen classes.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub ngram: NGramModel,
    pub lengths: ClassGaussianTable,
    pub fallback: LengthStats,
}

impl BaselineModel {
    pub fn fit(corpus: &[SegmentSequence], order: usize, vocab_size: usize, fallback: LengthStats) -> Self {
        let label_seqs: Vec<Vec<usize>> = corpus.iter().map(|s| s.labels().collect()).collect();
        Self {
            ngram: NGramModel::fit(label_seqs.iter().map(Vec::as_slice), order, vocab_size),
            lengths: ClassGaussianTable::fit(corpus, vocab_size),
            fallback,
        }
    }
}

impl FutureDistributionSource for BaselineModel {
    fn vocab_size(&self) -> usize {
        self.ngram.vocab_size()
    }

    fn next_label_distribution(&self, prefix: &[ActionSegment]) -> Vec<f64> {
        let history: Vec<usize> = prefix.iter().map(|s| s.label).collect();
        self.ngram.distribution(&self.ngram.context_for(&history))
    }

    fn length_distribution(&self, _prefix: &[ActionSegment], label: usize) -> LengthGaussian {
        match self.lengths.get(label) {
            Some(c) => LengthGaussian {
                mean: c.mean,
                std: c.std,
            },
            None => LengthGaussian {
                mean: self.fallback.mean,
                std: self.fallback.std,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    fn l(x: usize) -> Token {
        Token::Label(x)
    }

    #[test]
    fn trigram_counts_by_hand() {
        let corpus = [vec![A, B, C]];
        let m = NGramModel::fit(corpus.iter().map(Vec::as_slice), 3, 3);
        assert_eq!(m.counts(&[Token::Start, Token::Start]), Some(&[1, 0, 0][..]));
        assert_eq!(m.counts(&[Token::Start, l(A)]), Some(&[0, 1, 0][..]));
        assert_eq!(m.counts(&[l(A), l(B)]), Some(&[0, 0, 1][..]));
        assert_eq!(m.contexts().count(), 3);
    }

    #[test]
    fn empty_corpus_has_no_counts() {
        let m = NGramModel::fit(std::iter::empty(), 3, 4);
        assert_eq!(m.contexts().count(), 0);
        assert_eq!(m.distribution(&[l(A), l(B)]), vec![0.25; 4]);
    }

    #[test]
    fn seen_context_normalizes() {
        let corpus = [vec![A, B, C], vec![A, B, C], vec![A, B, C], vec![A, B, D]];
        let m = NGramModel::fit(corpus.iter().map(Vec::as_slice), 3, 4);
        assert_eq!(m.distribution(&[l(A), l(B)]), vec![0.0, 0.0, 0.75, 0.25]);
    }

    #[test]
    fn unseen_context_backs_off_to_unigram() {
        let corpus = [vec![A, B]];
        let m = NGramModel::fit(corpus.iter().map(Vec::as_slice), 3, 4);
        // neither (A, B) nor (B) was ever followed by anything
        assert_eq!(m.distribution(&[l(A), l(B)]), vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(m.distribution(&[l(C), l(B)]), vec![0.5, 0.5, 0.0, 0.0]);
        // (D, A) unseen; bigram context (A) saw B
        assert_eq!(m.distribution(&[l(D), l(A)]), vec![0.0, 1.0, 0.0, 0.0]);
    }

    fn brute_force(corpus: &[Vec<usize>], order: usize, k: usize) -> BTreeMap<Vec<Token>, Vec<u64>> {
        let mut out = BTreeMap::new();
        for seq in corpus {
            let mut padded = vec![Token::Start; order - 1];
            padded.extend(seq.iter().map(|&x| Token::Label(x)));
            for w in padded.windows(order) {
                let next = match w[order - 1] {
                    Token::Label(x) => x,
                    Token::Start => unreachable!(),
                };
                out.entry(w[..order - 1].to_vec()).or_insert_with(|| vec![0; k])[next] += 1;
            }
        }
        out
    }

    #[test]
    fn random_corpora_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for order in 2..=4 {
            let corpus: Vec<Vec<usize>> = (0..30)
                .map(|_| (0..rng.gen_range(1..15)).map(|_| rng.gen_range(0..5)).collect())
                .collect();
            let m = NGramModel::fit(corpus.iter().map(Vec::as_slice), order, 5);
            assert_eq!(m.tables().last().unwrap(), &brute_force(&corpus, order, 5));
            for ctx in m.contexts() {
                let sum: f64 = m.distribution(ctx).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn class_gaussians() {
        let corpus = [SegmentSequence::new(vec![
            ActionSegment::new(A, 2),
            ActionSegment::new(B, 7),
            ActionSegment::new(A, 4),
        ])];
        let table = ClassGaussianTable::fit(&corpus, 3);
        let a = table.get(A).unwrap();
        assert_eq!((a.mean, a.std, a.support), (3.0, 1.0, 2));
        let b = table.get(B).unwrap();
        assert_eq!((b.mean, b.std, b.support), (7.0, MIN_CLASS_STD, 1));
        assert!(table.get(C).is_none());
        assert_eq!(table.unseen_classes(), vec![C]);
    }

    #[test]
    fn unseen_class_falls_back_to_corpus_stats() {
        let corpus = [SegmentSequence::new(vec![
            ActionSegment::new(A, 2),
            ActionSegment::new(B, 6),
        ])];
        let stats = LengthStats::new(4.0, 2.0).unwrap();
        let model = BaselineModel::fit(&corpus, 3, 3, stats);
        let g = model.length_distribution(&[], C);
        assert_eq!((g.mean, g.std), (4.0, 2.0));
    }

    #[test]
    fn class_gaussians_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let corpus: Vec<SegmentSequence> = (0..50)
            .map(|_| {
                SegmentSequence::new(
                    (0..10)
                        .map(|_| ActionSegment::new(rng.gen_range(0..4), rng.gen_range(1..300)))
                        .collect(),
                )
            })
            .collect();
        let table = ClassGaussianTable::fit(&corpus, 4);
        for c in 0..4 {
            let ls: Vec<f64> = corpus
                .iter()
                .flat_map(|s| s.segments().iter())
                .filter(|s| s.label == c)
                .map(|s| s.length as f64)
                .collect();
            let mean = ls.iter().sum::<f64>() / ls.len() as f64;
            let std = (ls.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / ls.len() as f64).sqrt();
            let got = table.get(c).unwrap();
            assert!(((got.mean - mean) / mean).abs() < 1e-9);
            assert!(((got.std - std) / std).abs() < 1e-9);
        }
    }
}
