//! Segment-level view of frame-annotated videos.
//!
//! Datasets are annotated per frame while both models operate on action
//! segments (maximal runs of one label). This module holds the codecs between
//! the two views and the corpus length statistics used to standardize
//! segment lengths before they reach a network.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Ordered set of action-class names. Ids are contiguous `0..len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!("invalid class name {name:?}")));
            }
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Hex SHA-256 over the newline-joined class names. Checkpoints record it
    /// so a model is never applied to a corpus with a different id mapping.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSegment {
    pub label: usize,
    pub length: usize,
}

impl ActionSegment {
    pub fn new(label: usize, length: usize) -> Self {
        debug_assert!(length >= 1, "segment length must be at least one frame");
        Self { label, length }
    }
}

/// A video's timeline as consecutive action segments.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSequence {
    segments: Vec<ActionSegment>,
}

impl SegmentSequence {
    pub fn new(segments: Vec<ActionSegment>) -> Self {
        Self { segments }
    }

    pub fn segments(&self) -> &[ActionSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().map(|s| s.label)
    }

    pub fn into_inner(self) -> Vec<ActionSegment> {
        self.segments
    }
}

impl From<Vec<ActionSegment>> for SegmentSequence {
    fn from(segments: Vec<ActionSegment>) -> Self {
        Self::new(segments)
    }
}

/// Run-length encodes a frame labelling.
pub fn frames_to_segments(frames: &[usize]) -> Result<SegmentSequence> {
    let (&first, rest) = frames.split_first().ok_or(Error::EmptySequence)?;
    let mut segments = vec![ActionSegment::new(first, 1)];
    for &label in rest {
        let last = segments.last_mut().expect("non-empty");
        if last.label == label {
            last.length += 1;
        } else {
            segments.push(ActionSegment::new(label, 1));
        }
    }
    Ok(SegmentSequence::new(segments))
}

/// Frame labels produced by expanding a segment sequence to a fixed horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandedFrames {
    pub frames: Vec<usize>,
    /// Set when the segments covered fewer frames than the horizon and the
    /// final label was repeated to fill the gap.
    pub padded: bool,
}

pub fn segments_to_frames(segments: &[ActionSegment], horizon: usize) -> Result<ExpandedFrames> {
    if horizon == 0 {
        return Ok(ExpandedFrames {
            frames: Vec::new(),
            padded: false,
        });
    }
    let last = segments.last().ok_or(Error::EmptySequence)?;
    let mut frames = Vec::with_capacity(horizon);
    for seg in segments {
        let take = seg.length.min(horizon - frames.len());
        frames.extend(std::iter::repeat(seg.label).take(take));
        if frames.len() == horizon {
            return Ok(ExpandedFrames {
                frames,
                padded: false,
            });
        }
    }
    frames.resize(horizon, last.label);
    Ok(ExpandedFrames {
        frames,
        padded: true,
    })
}

/// Corpus mean and population standard deviation of segment lengths, in frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub std: f64,
}

impl LengthStats {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::ZeroStd);
        }
        Ok(Self { mean, std })
    }

    pub fn from_lengths<I: IntoIterator<Item = f64>>(lengths: I) -> Result<Self> {
        // Welford keeps the single pass stable on long corpora.
        let mut count = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in lengths {
            count += 1;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
        if count == 0 {
            return Err(Error::EmptySequence);
        }
        let std = (m2 / count as f64).sqrt();
        if std == 0.0 {
            return Err(Error::ZeroStd);
        }
        Self::new(mean, std)
    }

    pub fn standardize(&self, length: f64) -> f64 {
        (length - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

pub fn compute_length_stats<'a, I>(corpus: I) -> Result<LengthStats>
where
    I: IntoIterator<Item = &'a SegmentSequence>,
{
    LengthStats::from_lengths(
        corpus
            .into_iter()
            .flat_map(|seq| seq.segments().iter().map(|s| s.length as f64)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const A: usize = 0;
    const B: usize = 1;

    fn seg(label: usize, length: usize) -> ActionSegment {
        ActionSegment::new(label, length)
    }

    #[test]
    fn run_length_encoding() {
        let seq = frames_to_segments(&[A, A, B, B, B, A]).unwrap();
        assert_eq!(seq.segments(), &[seg(A, 2), seg(B, 3), seg(A, 1)]);
        assert_eq!(frames_to_segments(&[A]).unwrap().segments(), &[seg(A, 1)]);
        assert!(matches!(frames_to_segments(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn random_frames_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            // sticky labels so runs are long enough to matter
            let mut frames = Vec::with_capacity(1000);
            let mut current = rng.gen_range(0..5);
            for _ in 0..1000 {
                if rng.gen_bool(0.05) {
                    current = rng.gen_range(0..5);
                }
                frames.push(current);
            }
            let seq = frames_to_segments(&frames).unwrap();
            let back = segments_to_frames(seq.segments(), frames.len()).unwrap();
            assert_eq!(back.frames, frames);
            assert!(!back.padded);
        }
    }

    #[test]
    fn expansion_truncates_and_pads() {
        let out = segments_to_frames(&[seg(A, 2), seg(B, 3)], 4).unwrap();
        assert_eq!(out.frames, vec![A, A, B, B]);
        assert!(!out.padded);

        let out = segments_to_frames(&[seg(A, 2)], 2).unwrap();
        assert_eq!(out.frames, vec![A, A]);
        assert!(!out.padded);

        let out = segments_to_frames(&[seg(A, 1)], 3).unwrap();
        assert_eq!(out.frames, vec![A, A, A]);
        assert!(out.padded);

        assert!(segments_to_frames(&[], 0).unwrap().frames.is_empty());
        assert!(matches!(
            segments_to_frames(&[], 1),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn length_stats_two_point() {
        let corpus = [SegmentSequence::new(vec![seg(A, 2), seg(B, 4)])];
        let stats = compute_length_stats(&corpus).unwrap();
        assert!((stats.mean - 3.0).abs() < 1e-12);
        assert!((stats.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn length_stats_zero_std() {
        let corpus = [
            SegmentSequence::new(vec![seg(A, 5), seg(B, 5), seg(A, 5)]),
            SegmentSequence::default(),
        ];
        assert!(matches!(compute_length_stats(&corpus), Err(Error::ZeroStd)));
    }

    #[test]
    fn length_stats_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lengths: Vec<usize> = (0..10_000).map(|_| rng.gen_range(1..500)).collect();
        let corpus: Vec<SegmentSequence> = lengths
            .chunks(37)
            .map(|c| SegmentSequence::new(c.iter().map(|&l| seg(0, l)).collect()))
            .collect();
        let stats = compute_length_stats(&corpus).unwrap();

        let n = lengths.len() as f64;
        let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
        let var = lengths
            .iter()
            .map(|&l| (l as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(((stats.mean - mean) / mean).abs() < 1e-9);
        assert!(((stats.std - var.sqrt()) / var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn standardization_anchors() {
        let stats = LengthStats::new(40.0, 8.0).unwrap();
        assert_eq!(stats.standardize(40.0), 0.0);
        assert_eq!(stats.standardize(48.0), 1.0);
        assert!(LengthStats::new(1.0, 0.0).is_err());
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        assert!(LabelVocabulary::new(["a", "b", "a"]).is_err());
        let vocab = LabelVocabulary::new(["a", "b"]).unwrap();
        assert_eq!(vocab.id("b"), Some(1));
        assert_eq!(vocab.name(0), Some("a"));
        assert_ne!(
            vocab.content_hash(),
            LabelVocabulary::new(["b", "a"]).unwrap().content_hash()
        );
    }

    fn arb_segments() -> impl Strategy<Value = Vec<ActionSegment>> {
        prop::collection::vec((0usize..6, 1usize..40), 1..30).prop_map(|raw| {
            let mut out: Vec<ActionSegment> = Vec::new();
            for (label, length) in raw {
                match out.last_mut() {
                    Some(last) if last.label == label => last.length += length,
                    _ => out.push(seg(label, length)),
                }
            }
            out
        })
    }

    proptest! {
        #[test]
        fn codec_identity_at_full_horizon(segments in arb_segments()) {
            let total: usize = segments.iter().map(|s| s.length).sum();
            let frames = segments_to_frames(&segments, total).unwrap();
            prop_assert!(!frames.padded);
            let back = frames_to_segments(&frames.frames).unwrap();
            prop_assert_eq!(back.segments(), &segments[..]);
            prop_assert!(back.segments().windows(2).all(|w| w[0].label != w[1].label));
        }

        #[test]
        fn standardize_round_trip(len in 1.0f64..10_000.0, mean in 1.0f64..500.0, std in 0.1f64..300.0) {
            let stats = LengthStats::new(mean, std).unwrap();
            let back = stats.destandardize(stats.standardize(len));
            prop_assert!(((back - len) / len).abs() < 1e-9);
        }
    }
}
