//! Generating future timelines from a next-segment distribution.
//!
//! Both strategies start by re-estimating the full length of the last,
//! partially observed segment: a length is drawn (or the mean taken) from the
//! length distribution conditioned on the segments before it, and kept only
//! if it exceeds what was already observed. They then alternate label and
//! length predictions, feeding each new segment back as context, until the
//! requested number of future frames is covered.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_observation, split_observation_with, Observation, VideoAnnotation};
use crate::error::{Error, Result};
use crate::model::{ActionModel, LengthModel};
use crate::rng::substream;
use crate::segment::{segments_to_frames, ActionSegment, LengthStats};

/// Length law in frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthGaussian {
    pub mean: f64,
    pub std: f64,
}

/// The two factors of the next-segment distribution. Implementations are
/// queried concurrently and must be read-only.
pub trait FutureDistributionSource: Sync {
    fn vocab_size(&self) -> usize;

    /// Distribution over the label of the segment following `prefix`.
    fn next_label_distribution(&self, prefix: &[ActionSegment]) -> Vec<f64>;

    /// Length law, in frames, of a `label` segment following `prefix`.
    fn length_distribution(&self, prefix: &[ActionSegment], label: usize) -> LengthGaussian;
}

impl<S: FutureDistributionSource + ?Sized> FutureDistributionSource for &S {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_label_distribution(&self, prefix: &[ActionSegment]) -> Vec<f64> {
        (**self).next_label_distribution(prefix)
    }

    fn length_distribution(&self, prefix: &[ActionSegment], label: usize) -> LengthGaussian {
        (**self).length_distribution(prefix, label)
    }
}

/// The trained action and length networks with the statistics used to
/// standardize lengths during training.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralSource {
    pub action: ActionModel,
    pub length: LengthModel,
    pub stats: LengthStats,
}

impl FutureDistributionSource for NeuralSource {
    fn vocab_size(&self) -> usize {
        self.action.vocab_size()
    }

    fn next_label_distribution(&self, prefix: &[ActionSegment]) -> Vec<f64> {
        self.action.predict(prefix, &self.stats)
    }

    fn length_distribution(&self, prefix: &[ActionSegment], label: usize) -> LengthGaussian {
        let g = self.length.predict(prefix, label, &self.stats).to_frames(&self.stats);
        LengthGaussian {
            mean: g.mu,
            std: g.sigma,
        }
    }
}

/// How each step picks a label and a length.
pub enum Strategy<'a, R: Rng + ?Sized> {
    Sample(&'a mut R),
    /// Most likely label, mean length.
    Mode,
}

/// Draws beyond this many non-positive lengths fall back to one frame.
pub const MAX_LENGTH_RESAMPLES: usize = 10;

/// Lowest index among the maxima.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn sample_label<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(p)
        .expect("label distribution must have positive finite mass")
        .sample(rng)
}

fn draw<R: Rng + ?Sized>(g: LengthGaussian, rng: &mut R) -> f64 {
    if g.std > 0.0 {
        Normal::new(g.mean, g.std).expect("finite std").sample(rng)
    } else {
        g.mean
    }
}

/// A future segment length in whole frames: a positive draw (or the mean),
/// rounded to nearest and at least one frame.
pub fn pick_length<R: Rng + ?Sized>(g: LengthGaussian, strategy: &mut Strategy<'_, R>) -> usize {
    let raw = match strategy {
        Strategy::Mode => g.mean,
        Strategy::Sample(rng) => {
            let mut x = draw(g, *rng);
            let mut tries = 0;
            while x <= 0.0 && tries < MAX_LENGTH_RESAMPLES {
                x = draw(g, *rng);
                tries += 1;
            }
            x
        }
    };
    to_frames(raw)
}

fn to_frames(length: f64) -> usize {
    if length.is_finite() {
        length.round().max(1.0) as usize
    } else {
        1
    }
}

/// Full length `l★ ≥ ℓ` of the last observed segment, where `ℓ` is its
/// observed length.
///
/// The length law is conditioned on the segments before the last one. With
/// nothing before it, the last observed segment itself (at its observed
/// length) is used as the context.
pub fn update_last_segment_length<S, R>(
    source: &S,
    observed: &[ActionSegment],
    strategy: &mut Strategy<'_, R>,
) -> f64
where
    S: FutureDistributionSource + ?Sized,
    R: Rng + ?Sized,
{
    let (last, before) = observed
        .split_last()
        .expect("observation must hold at least one segment");
    let context = if before.is_empty() { observed } else { before };
    let g = source.length_distribution(context, last.label);
    let estimate = match strategy {
        Strategy::Mode => g.mean,
        Strategy::Sample(rng) => draw(g, *rng),
    };
    censor_below(estimate, last.length as f64)
}

/// `estimate` if it exceeds `observed`, otherwise `observed`.
pub fn censor_below(estimate: f64, observed: f64) -> f64 {
    if estimate > observed {
        estimate
    } else {
        observed
    }
}

/// One generated future.
#[derive(Clone, Debug, PartialEq)]
pub struct Continuation {
    /// Exactly `horizon` frame labels.
    pub frames: Vec<usize>,
    /// Re-estimated full length of the last observed segment, before
    /// rounding to frames.
    pub last_segment_length: f64,
    /// Predicted segments after the observation, the first being the
    /// remainder of the last observed segment when it continues.
    pub segments: Vec<ActionSegment>,
}

pub fn generate<S, R>(
    source: &S,
    observed: &[ActionSegment],
    horizon: usize,
    strategy: &mut Strategy<'_, R>,
) -> Result<Continuation>
where
    S: FutureDistributionSource + ?Sized,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(Error::Config("prediction horizon of 0 frames".into()));
    }
    let last = *observed.last().ok_or(Error::EmptySequence)?;
    let last_segment_length = update_last_segment_length(source, observed, strategy);
    let full_last = to_frames(last_segment_length).max(last.length);

    let mut prefix = observed.to_vec();
    prefix.last_mut().expect("non-empty").length = full_last;
    let mut segments = Vec::new();
    let mut covered = full_last - last.length;
    if covered > 0 {
        segments.push(ActionSegment::new(last.label, covered));
    }
    while covered < horizon {
        let p = source.next_label_distribution(&prefix);
        let label = match strategy {
            Strategy::Mode => argmax(&p),
            Strategy::Sample(rng) => sample_label(&p, *rng),
        };
        let g = source.length_distribution(&prefix, label);
        let length = pick_length(g, strategy);
        let seg = ActionSegment::new(label, length);
        prefix.push(seg);
        segments.push(seg);
        covered += length;
    }
    let frames = segments_to_frames(&segments, horizon)?.frames;
    Ok(Continuation {
        frames,
        last_segment_length,
        segments,
    })
}

pub fn sample_prediction<S, R>(
    source: &S,
    observed: &[ActionSegment],
    horizon: usize,
    rng: &mut R,
) -> Result<Continuation>
where
    S: FutureDistributionSource + ?Sized,
    R: Rng + ?Sized,
{
    generate(source, observed, horizon, &mut Strategy::Sample(rng))
}

pub fn mode_prediction<S>(source: &S, observed: &[ActionSegment], horizon: usize) -> Result<Continuation>
where
    S: FutureDistributionSource + ?Sized,
{
    generate::<S, rand_chacha::ChaCha8Rng>(source, observed, horizon, &mut Strategy::Mode)
}

/// Predictions for one video, one observation fraction and one prediction
/// fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub video_id: String,
    pub observe_fraction: f64,
    pub predict_fraction: f64,
    pub total_frames: usize,
    pub observed_frames: usize,
    pub observed_last_length: usize,
    pub horizon: usize,
    pub samples: Vec<Vec<usize>>,
    pub mode: Vec<usize>,
    /// Re-estimated last-segment length for each sample.
    pub sample_last_lengths: Vec<f64>,
    pub mode_last_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticipationSettings {
    pub observe_fraction: f64,
    pub predict_fractions: Vec<f64>,
    pub num_samples: usize,
    pub seed: u64,
}

pub fn horizon_frames(total_frames: usize, fraction: f64) -> usize {
    (fraction * total_frames as f64).floor() as usize
}

/// All predictions for one video at one observation fraction. Samples are
/// generated once to the largest horizon and truncated for the smaller ones,
/// so results across prediction fractions are prefixes of one another.
///
/// Sample `i` uses an RNG seeded from `(seed, video id, i)`.
pub fn anticipate<S>(
    source: &S,
    video: &VideoAnnotation,
    observed_labels: Option<&[usize]>,
    settings: &AnticipationSettings,
) -> Result<Vec<PredictionResult>>
where
    S: FutureDistributionSource + ?Sized,
{
    let obs = settings.observe_fraction;
    if settings.predict_fractions.is_empty() {
        return Err(Error::Config("no prediction fractions".into()));
    }
    for &p in &settings.predict_fractions {
        if !(p > 0.0 && p < 1.0) || obs + p > 1.0 + 1e-9 {
            return Err(Error::Config(format!(
                "prediction fraction {p} invalid with observation fraction {obs}"
            )));
        }
    }
    let observation: Observation = match observed_labels {
        Some(labels) => split_observation_with(video, labels, obs)?,
        None => split_observation(video, obs)?,
    };
    let total = video.total_frames();
    let horizons: Vec<usize> = settings
        .predict_fractions
        .iter()
        .map(|&p| horizon_frames(total, p))
        .collect();
    if let Some(i) = horizons.iter().position(|&h| h == 0) {
        return Err(Error::Data(format!(
            "video {}: predicting {} of {total} frames is a 0-frame horizon",
            video.id, settings.predict_fractions[i]
        )));
    }
    let max_horizon = *horizons.iter().max().expect("non-empty");
    let observed = observation.observed.segments();

    let samples: Vec<Continuation> = (0..settings.num_samples)
        .map(|i| {
            let mut rng = substream(settings.seed, &video.id, i as u64);
            sample_prediction(source, observed, max_horizon, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mode = mode_prediction(source, observed, max_horizon)?;

    Ok(settings
        .predict_fractions
        .iter()
        .zip(&horizons)
        .map(|(&p, &h)| PredictionResult {
            video_id: video.id.clone(),
            observe_fraction: obs,
            predict_fraction: p,
            total_frames: total,
            observed_frames: observation.observed_frames,
            observed_last_length: observation.last_observed_length(),
            horizon: h,
            samples: samples.iter().map(|c| c.frames[..h].to_vec()).collect(),
            mode: mode.frames[..h].to_vec(),
            sample_last_lengths: samples.iter().map(|c| c.last_segment_length).collect(),
            mode_last_length: mode.last_segment_length,
        })
        .collect())
}

/// [`anticipate`] over a corpus, in parallel over videos. Output order
/// follows the input order regardless of scheduling.
pub fn anticipate_corpus<S>(
    source: &S,
    videos: &[VideoAnnotation],
    observed_labels: Option<&[Vec<usize>]>,
    settings: &AnticipationSettings,
) -> Result<Vec<Vec<PredictionResult>>>
where
    S: FutureDistributionSource + ?Sized,
{
    videos
        .par_iter()
        .enumerate()
        .map(|(i, v)| anticipate(source, v, observed_labels.map(|o| &o[i][..]), settings))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Fixed label distribution and fixed length law regardless of context.
    struct Fixed {
        labels: Vec<f64>,
        length: LengthGaussian,
    }

    impl FutureDistributionSource for Fixed {
        fn vocab_size(&self) -> usize {
            self.labels.len()
        }
        fn next_label_distribution(&self, _: &[ActionSegment]) -> Vec<f64> {
            self.labels.clone()
        }
        fn length_distribution(&self, _: &[ActionSegment], _: usize) -> LengthGaussian {
            self.length
        }
    }

    fn seg(label: usize, length: usize) -> ActionSegment {
        ActionSegment::new(label, length)
    }

    #[test]
    fn max_rule_branches() {
        assert_eq!(censor_below(70.0, 50.0), 70.0);
        assert_eq!(censor_below(30.0, 50.0), 50.0);
    }

    #[test]
    fn point_masses_give_exact_future() {
        let src = Fixed {
            labels: vec![0.0, 1.0],
            length: LengthGaussian { mean: 5.0, std: 0.0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // observed segment already at its predicted full length
        let out = sample_prediction(&src, &[seg(0, 5)], 5, &mut rng).unwrap();
        assert_eq!(out.frames, vec![1; 5]);
        assert_eq!(out.last_segment_length, 5.0);
    }

    #[test]
    fn continuation_of_last_segment_fills_short_horizon() {
        let src = Fixed {
            labels: vec![0.0, 1.0],
            length: LengthGaussian { mean: 15.0, std: 0.0 },
        };
        let out = mode_prediction(&src, &[seg(1, 3), seg(0, 5)], 3).unwrap();
        assert_eq!(out.frames, vec![0, 0, 0]);
        assert_eq!(out.segments, vec![seg(0, 10)]);
    }

    #[test]
    fn mode_tie_breaks_to_lowest_label() {
        let src = Fixed {
            labels: vec![0.25; 4],
            length: LengthGaussian { mean: 4.0, std: 2.0 },
        };
        let out = mode_prediction(&src, &[seg(2, 4)], 6).unwrap();
        assert_eq!(out.frames, vec![0, 0, 0, 0, 0, 0]);
        assert_eq!(out, mode_prediction(&src, &[seg(2, 4)], 6).unwrap());
    }

    #[test]
    fn lengths_floor_at_one_frame() {
        let src = Fixed {
            labels: vec![0.5, 0.5],
            length: LengthGaussian { mean: -50.0, std: 1.0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = sample_prediction(&src, &[seg(0, 3)], 40, &mut rng).unwrap();
        assert_eq!(out.frames.len(), 40);
        assert!(out.segments.iter().all(|s| s.length == 1));
        assert_eq!(out.last_segment_length, 3.0);
    }

    #[test]
    fn zero_horizon_is_an_error() {
        let src = Fixed {
            labels: vec![1.0],
            length: LengthGaussian { mean: 5.0, std: 1.0 },
        };
        assert!(mode_prediction(&src, &[seg(0, 3)], 0).is_err());
    }

    #[test]
    fn anticipate_shapes_and_prefix_property() {
        let src = Fixed {
            labels: vec![0.3, 0.3, 0.4],
            length: LengthGaussian { mean: 8.0, std: 4.0 },
        };
        let frames: Vec<usize> = (0..200).map(|i| (i / 17) % 3).collect();
        let video = VideoAnnotation::from_frames("vid", frames).unwrap();
        let settings = AnticipationSettings {
            observe_fraction: 0.2,
            predict_fractions: vec![0.1, 0.2, 0.3, 0.5],
            num_samples: 25,
            seed: 7,
        };
        let results = anticipate(&src, &video, None, &settings).unwrap();
        assert_eq!(results.len(), 4);
        let longest = &results[3];
        for r in &results {
            assert_eq!(r.samples.len(), 25);
            assert_eq!(r.horizon, horizon_frames(200, r.predict_fraction));
            for (s, full) in r.samples.iter().zip(&longest.samples) {
                assert_eq!(s.len(), r.horizon);
                assert_eq!(&full[..r.horizon], &s[..]);
            }
            assert_eq!(&longest.mode[..r.horizon], &r.mode[..]);
            assert!(r.sample_last_lengths.iter().all(|&l| l >= r.observed_last_length as f64));
        }
        assert_eq!(results, anticipate(&src, &video, None, &settings).unwrap());
    }

    #[test]
    fn anticipate_rejects_bad_fractions() {
        let src = Fixed {
            labels: vec![1.0],
            length: LengthGaussian { mean: 5.0, std: 1.0 },
        };
        let video = VideoAnnotation::from_frames("v", vec![0; 100]).unwrap();
        let mut settings = AnticipationSettings {
            observe_fraction: 0.3,
            predict_fractions: vec![0.8],
            num_samples: 1,
            seed: 0,
        };
        assert!(anticipate(&src, &video, None, &settings).is_err());
        settings.predict_fractions = vec![0.005];
        assert!(anticipate(&src, &video, None, &settings).is_err());
    }
}
