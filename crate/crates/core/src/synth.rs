//! Seeded semi-Markov corpus generator.
//!
//! Labels follow a second-order Markov chain and each segment length is drawn
//! from a per-label Gaussian, rounded to the nearest frame and clamped to at
//! least one. Because the generating law is known exactly, these corpora are
//! the oracle for the learning tests.
//!
//! Config schema (TOML):
//!
//! ```toml
//! labels = ["A", "B", "C"]
//! segments_per_video = 10
//! videos = 100
//! seed = 7
//!
//! [lengths]
//! A = { mean = 20.0, std = 4.0 }
//! B = { mean = 35.0, std = 0.0 }
//! C = { mean = 50.0, std = 10.0 }
//!
//! # context = [second-to-last, last]; "<s>" marks positions before the
//! # video start and "*" matches any label. Exact rows win over wildcards.
//! [[transition]]
//! context = ["<s>", "<s>"]
//! next = { A = 1.0 }
//!
//! [[transition]]
//! context = ["*", "A"]
//! next = { B = 0.5, C = 0.5 }
//! ```

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::Deserialize;

use crate::dataset::VideoAnnotation;
use crate::error::{Error, Result};
use crate::segment::LabelVocabulary;

pub const START_TOKEN: &str = "<s>";
pub const ANY_TOKEN: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContextSymbol {
    Start,
    Label(usize),
    Any,
}

impl ContextSymbol {
    fn matches(self, actual: ContextSymbol) -> bool {
        self == ContextSymbol::Any || self == actual
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthLaw {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticGeneratorSpec {
    pub vocabulary: LabelVocabulary,
    /// `(second-to-last, last)` → probability of each next label.
    pub transitions: BTreeMap<(ContextSymbol, ContextSymbol), Vec<f64>>,
    pub lengths: Vec<LengthLaw>,
    pub segments_per_video: usize,
    pub videos: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    labels: Vec<String>,
    segments_per_video: usize,
    videos: usize,
    #[serde(default)]
    seed: u64,
    lengths: BTreeMap<String, RawLength>,
    transition: Vec<RawTransition>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLength {
    mean: f64,
    #[serde(default)]
    std: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    context: [String; 2],
    next: BTreeMap<String, f64>,
}

impl SyntheticGeneratorSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let vocabulary = LabelVocabulary::new(raw.labels)?;
        let label = |name: &str| {
            vocabulary
                .id(name)
                .ok_or_else(|| Error::Config(format!("unknown label {name:?}")))
        };
        let symbol = |name: &str| match name {
            START_TOKEN => Ok(ContextSymbol::Start),
            ANY_TOKEN => Ok(ContextSymbol::Any),
            other => label(other).map(ContextSymbol::Label),
        };

        let mut lengths = vec![None; vocabulary.len()];
        for (name, law) in &raw.lengths {
            lengths[label(name)?] = Some(LengthLaw {
                mean: law.mean,
                std: law.std,
            });
        }
        let lengths = lengths
            .into_iter()
            .enumerate()
            .map(|(id, l)| {
                l.ok_or_else(|| {
                    Error::Config(format!(
                        "no length law for label {:?}",
                        vocabulary.name(id).unwrap_or_default()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut transitions = BTreeMap::new();
        for t in &raw.transition {
            let key = (symbol(&t.context[0])?, symbol(&t.context[1])?);
            let mut row = vec![0.0; vocabulary.len()];
            for (name, &p) in &t.next {
                row[label(name)?] = p;
            }
            if transitions.insert(key, row).is_some() {
                return Err(Error::Config(format!("duplicate transition context {:?}", t.context)));
            }
        }

        let spec = Self {
            vocabulary,
            transitions,
            lengths,
            segments_per_video: raw.segments_per_video,
            videos: raw.videos,
            seed: raw.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.vocabulary.len();
        if k == 0 {
            return Err(Error::Config("empty vocabulary".into()));
        }
        if self.lengths.len() != k {
            return Err(Error::Config("one length law per label required".into()));
        }
        for (id, law) in self.lengths.iter().enumerate() {
            if !(law.mean >= 1.0) || !(law.std >= 0.0) || !law.std.is_finite() {
                return Err(Error::Config(format!("bad length law for label {id}: {law:?}")));
            }
        }
        if self.segments_per_video == 0 {
            return Err(Error::Config("segments_per_video must be positive".into()));
        }
        for (&(prev2, prev1), row) in &self.transitions {
            if row.len() != k || row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Config(format!("bad transition row for {prev2:?},{prev1:?}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "transition row for {prev2:?},{prev1:?} sums to {sum}"
                )));
            }
            // A repeated label would merge with its predecessor when the
            // video is read back as segments.
            if let ContextSymbol::Label(last) = prev1 {
                if row[last] > 0.0 {
                    return Err(Error::Config(format!(
                        "transition row for {prev2:?},{prev1:?} allows a self-transition"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Transition row for a concrete context, preferring exact matches.
    pub fn row(&self, prev2: ContextSymbol, prev1: ContextSymbol) -> Option<&[f64]> {
        if let Some(row) = self.transitions.get(&(prev2, prev1)) {
            return Some(row);
        }
        self.transitions
            .iter()
            .filter(|(&(a, b), _)| a.matches(prev2) && b.matches(prev1))
            // fewest wildcards wins
            .min_by_key(|(&(a, b), _)| (a == ContextSymbol::Any) as u8 + (b == ContextSymbol::Any) as u8)
            .map(|(_, row)| row.as_slice())
    }

    pub fn generate(&self) -> Result<Vec<VideoAnnotation>> {
        generate_synthetic_corpus(self)
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticGeneratorSpec) -> Result<Vec<VideoAnnotation>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.videos.max(1).to_string().len();
    let mut corpus = Vec::with_capacity(spec.videos);
    for v in 0..spec.videos {
        let mut prev2 = ContextSymbol::Start;
        let mut prev1 = ContextSymbol::Start;
        let mut frames = Vec::new();
        for _ in 0..spec.segments_per_video {
            let row = spec.row(prev2, prev1).ok_or_else(|| {
                Error::Config(format!("no transition row for context ({prev2:?}, {prev1:?})"))
            })?;
            let label = WeightedIndex::new(row)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng);
            if prev1 == ContextSymbol::Label(label) {
                return Err(Error::Config(format!(
                    "context ({prev2:?}, {prev1:?}) produced a self-transition"
                )));
            }
            let law = spec.lengths[label];
            let length = if law.std == 0.0 {
                law.mean
            } else {
                Normal::new(law.mean, law.std)
                    .expect("validated std")
                    .sample(&mut rng)
            };
            let length = (length.round() as i64).max(1) as usize;
            frames.extend(std::iter::repeat(label).take(length));
            prev2 = prev1;
            prev1 = ContextSymbol::Label(label);
        }
        corpus.push(VideoAnnotation::from_frames(format!("synth_{v:0width$}"), frames)?);
    }
    Ok(corpus)
}
