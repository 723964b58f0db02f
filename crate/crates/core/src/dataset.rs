//! Annotation corpora on disk and the training examples derived from them.
//!
//! Layout of a dataset root:
//!
//! ```text
//! <root>/mapping.txt            one class name per line (or "<id> <name>")
//! <root>/groundTruth/<video>.txt one class name per line, line i = frame i
//! <root>/splits/<split>.txt      one video id per line
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::segment::{frames_to_segments, ActionSegment, LabelVocabulary, SegmentSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoAnnotation {
    pub id: String,
    frames: Vec<usize>,
    segments: SegmentSequence,
}

impl VideoAnnotation {
    pub fn from_frames(id: impl Into<String>, frames: Vec<usize>) -> Result<Self> {
        let segments = frames_to_segments(&frames)?;
        Ok(Self {
            id: id.into(),
            frames,
            segments,
        })
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn segments(&self) -> &SegmentSequence {
        &self.segments
    }

    pub fn total_frames(&self) -> usize {
        self.frames.len()
    }
}

/// One supervised step: every segment before `target` in the same video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub prefix: Vec<ActionSegment>,
    pub target: ActionSegment,
}

/// A video with `n` segments yields `n - 1` examples; single-segment videos
/// yield none.
pub fn build_training_examples(video: &VideoAnnotation) -> Vec<TrainingExample> {
    let segs = video.segments().segments();
    (1..segs.len())
        .map(|i| TrainingExample {
            prefix: segs[..i].to_vec(),
            target: segs[i],
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExampleSet {
    pub examples: Vec<TrainingExample>,
    /// Videos that contributed nothing because they hold a single segment.
    pub single_segment_videos: usize,
}

pub fn build_example_set(corpus: &[VideoAnnotation]) -> ExampleSet {
    let mut set = ExampleSet::default();
    for video in corpus {
        let examples = build_training_examples(video);
        if examples.is_empty() {
            set.single_segment_videos += 1;
        }
        set.examples.extend(examples);
    }
    set
}

/// The visible part of a video at a given observation fraction, and what
/// remains hidden.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    /// Observed segments; the last one is cut at the observation boundary.
    pub observed: SegmentSequence,
    pub observed_frames: usize,
    /// Ground-truth labels of every frame after the boundary.
    pub hidden: Vec<usize>,
}

impl Observation {
    /// Observed length of the final, possibly partial, segment.
    pub fn last_observed_length(&self) -> usize {
        self.observed
            .segments()
            .last()
            .map(|s| s.length)
            .unwrap_or(0)
    }
}

pub fn observed_frame_count(total_frames: usize, fraction: f64) -> usize {
    (fraction * total_frames as f64).floor() as usize
}

pub fn split_observation(video: &VideoAnnotation, observe_fraction: f64) -> Result<Observation> {
    split_frames(video.frames(), observe_fraction)
}

/// Like [`split_observation`] but reading the observed labels from a separate
/// (for example, automatically inferred) frame labelling of the same video.
pub fn split_observation_with(
    video: &VideoAnnotation,
    observed_labels: &[usize],
    observe_fraction: f64,
) -> Result<Observation> {
    let mut obs = split_frames(video.frames(), observe_fraction)?;
    if observed_labels.len() < obs.observed_frames {
        return Err(Error::Data(format!(
            "video {}: observation labels cover {} frames, need {}",
            video.id,
            observed_labels.len(),
            obs.observed_frames
        )));
    }
    obs.observed = frames_to_segments(&observed_labels[..obs.observed_frames])?;
    Ok(obs)
}

fn split_frames(frames: &[usize], observe_fraction: f64) -> Result<Observation> {
    if !(observe_fraction > 0.0 && observe_fraction < 1.0) {
        return Err(Error::Config(format!(
            "observation fraction {observe_fraction} outside (0, 1)"
        )));
    }
    let observed_frames = observed_frame_count(frames.len(), observe_fraction);
    if observed_frames == 0 {
        return Err(Error::Data(format!(
            "observing {observe_fraction} of {} frames leaves nothing observed",
            frames.len()
        )));
    }
    Ok(Observation {
        observed: frames_to_segments(&frames[..observed_frames])?,
        observed_frames,
        hidden: frames[observed_frames..].to_vec(),
    })
}

/// Paths inside a dataset root.
#[derive(Clone, Debug)]
pub struct DatasetLayout {
    root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mapping(&self) -> PathBuf {
        self.root.join("mapping.txt")
    }

    pub fn ground_truth_dir(&self) -> PathBuf {
        self.root.join("groundTruth")
    }

    pub fn split(&self, name: &str) -> PathBuf {
        // names with an extension (`x.txt`, `train.split1.bundle`) are used as is
        let file = if Path::new(name).extension().is_some() {
            name.to_string()
        } else {
            format!("{name}.txt")
        };
        self.root.join("splits").join(file)
    }

    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        load_vocabulary(&self.mapping())
    }

    pub fn load_split(&self, split: &str, vocab: &LabelVocabulary) -> Result<Vec<VideoAnnotation>> {
        let ids = load_split_list(&self.split(split))?;
        load_corpus(&self.ground_truth_dir(), &ids, vocab)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a vocabulary file. Lines are either a bare class name (id = line
/// index) or `<id> <name>` with ids in order.
pub fn load_vocabulary(path: &Path) -> Result<LabelVocabulary> {
    let text = read_to_string(path)?;
    let mut names = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().expect("non-empty line");
        let name = match (parts.next(), parts.next()) {
            (None, _) => first,
            (Some(second), None) => {
                let id: usize = first.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected '<id> <name>', got {line:?}"),
                })?;
                if id != names.len() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        message: format!("id {id} out of order, expected {}", names.len()),
                    });
                }
                second
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("too many fields in {line:?}"),
                })
            }
        };
        names.push(name.to_string());
    }
    LabelVocabulary::new(names).map_err(|e| match e {
        Error::Data(message) => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        },
        other => other,
    })
}

pub fn load_split_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(video_id_from_entry)
        .collect())
}

// Split files in the public datasets list "<video>.txt"; accept both forms.
fn video_id_from_entry(entry: &str) -> String {
    entry.strip_suffix(".txt").unwrap_or(entry).to_string()
}

/// Reads one frame-label file, one class name per non-empty line.
pub fn load_frame_labels(path: &Path, vocab: &LabelVocabulary) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let id = vocab.id(token).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("unknown label {token:?}"),
        })?;
        frames.push(id);
    }
    Ok(frames)
}

/// Loads the listed videos from `dir/<id>.txt`, sorted by id.
pub fn load_corpus(
    dir: &Path,
    video_ids: &[String],
    vocab: &LabelVocabulary,
) -> Result<Vec<VideoAnnotation>> {
    let mut ids = video_ids.to_vec();
    ids.sort();
    ids.dedup();
    ids.par_iter()
        .map(|id| {
            let path = dir.join(format!("{id}.txt"));
            let frames = load_frame_labels(&path, vocab)?;
            VideoAnnotation::from_frames(id.clone(), frames).map_err(|e| match e {
                Error::EmptySequence => Error::Parse {
                    path: path.clone(),
                    line: 0,
                    message: "no frames".into(),
                },
                other => other,
            })
        })
        .collect()
}

pub fn write_frame_labels(path: &Path, frames: &[usize], vocab: &LabelVocabulary) -> Result<()> {
    let mut text = String::with_capacity(frames.len() * 8);
    for &f in frames {
        let name = vocab
            .name(f)
            .ok_or_else(|| Error::Data(format!("label id {f} outside vocabulary")))?;
        text.push_str(name);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a corpus in the on-disk layout, with one split file listing every
/// video.
pub fn write_corpus(
    layout: &DatasetLayout,
    split: &str,
    corpus: &[VideoAnnotation],
    vocab: &LabelVocabulary,
) -> Result<()> {
    let gt = layout.ground_truth_dir();
    let splits = layout.root().join("splits");
    for dir in [&gt, &splits] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mapping = layout.mapping();
    let names = vocab.names().join("\n") + "\n";
    fs::write(&mapping, names).map_err(|e| Error::io(&mapping, e))?;
    let mut list = String::new();
    for video in corpus {
        write_frame_labels(&gt.join(format!("{}.txt", video.id)), video.frames(), vocab)?;
        list.push_str(&video.id);
        list.push('\n');
    }
    let split_path = layout.split(split);
    fs::write(&split_path, list).map_err(|e| Error::io(&split_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(label: usize, length: usize) -> ActionSegment {
        ActionSegment::new(label, length)
    }

    fn video_of(segments: &[(usize, usize)]) -> VideoAnnotation {
        let frames = segments
            .iter()
            .flat_map(|&(l, n)| std::iter::repeat(l).take(n))
            .collect();
        VideoAnnotation::from_frames("v", frames).unwrap()
    }

    #[test]
    fn examples_follow_prefix_rule() {
        let ex = build_training_examples(&video_of(&[(0, 2), (1, 3), (2, 4)]));
        assert_eq!(
            ex,
            vec![
                TrainingExample {
                    prefix: vec![seg(0, 2)],
                    target: seg(1, 3)
                },
                TrainingExample {
                    prefix: vec![seg(0, 2), seg(1, 3)],
                    target: seg(2, 4)
                },
            ]
        );
        assert!(build_training_examples(&video_of(&[(0, 5)])).is_empty());
    }

    #[test]
    fn single_segment_videos_are_counted() {
        let set = build_example_set(&[video_of(&[(0, 5)]), video_of(&[(0, 1), (1, 1)])]);
        assert_eq!(set.examples.len(), 1);
        assert_eq!(set.single_segment_videos, 1);
    }

    #[test]
    fn observation_floor_and_cut() {
        let v = VideoAnnotation::from_frames("v", vec![0; 100]).unwrap();
        assert_eq!(split_observation(&v, 0.2).unwrap().observed_frames, 20);

        let v = video_of(&[(0, 10), (1, 10)]);
        let obs = split_observation(&v, 0.75).unwrap();
        assert_eq!(obs.observed.segments(), &[seg(0, 10), seg(1, 5)]);
        assert_eq!(obs.last_observed_length(), 5);
        assert_eq!(obs.hidden, vec![1; 5]);
    }

    #[test]
    fn observation_errors() {
        let v = VideoAnnotation::from_frames("v", vec![0; 3]).unwrap();
        assert!(split_observation(&v, 0.2).is_err());
        assert!(split_observation(&v, 0.0).is_err());
        assert!(split_observation(&v, 1.0).is_err());
    }

    #[test]
    fn observation_from_other_labels() {
        let v = video_of(&[(0, 10), (1, 10)]);
        let noisy = vec![2; 20];
        let obs = split_observation_with(&v, &noisy, 0.5).unwrap();
        assert_eq!(obs.observed.segments(), &[seg(2, 10)]);
        assert_eq!(obs.hidden, vec![1; 10]);
        assert!(split_observation_with(&v, &noisy[..3], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn examples_are_strict_prefixes(raw in prop::collection::vec(1usize..20, 20)) {
            let segs: Vec<(usize, usize)> = raw.iter().enumerate().map(|(i, &n)| (i % 3, n)).collect();
            let video = video_of(&segs);
            let ex = build_training_examples(&video);
            prop_assert_eq!(ex.len(), 19);
            for (i, e) in ex.iter().enumerate() {
                prop_assert_eq!(&e.prefix[..], &video.segments().segments()[..=i]);
                prop_assert_eq!(e.target, video.segments().segments()[i + 1]);
            }
        }

        #[test]
        fn observation_partitions_frames(
            raw in prop::collection::vec((0usize..4, 1usize..30), 1..15),
            fraction in 0.05f64..0.95,
        ) {
            let video = video_of(&raw);
            if let Ok(obs) = split_observation(&video, fraction) {
                prop_assert_eq!(obs.observed.total_frames(), obs.observed_frames);
                prop_assert_eq!(obs.observed_frames + obs.hidden.len(), video.total_frames());
            }
        }
    }
}
