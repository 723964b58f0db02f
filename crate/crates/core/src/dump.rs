//! Prediction dump: one text file per (video, observation fraction).
//!
//! ```text
//! # video P03_coffee
//! # observe 0.2
//! # total_frames 812
//! # observed_frames 162
//! # horizon 406
//! #mode
//! pour_milk
//! ...
//! #sample 0
//! ...
//! ```
//!
//! `# key value` lines come first. `#mode` and `#sample <i>` open blocks of
//! `horizon` frame labels, one token per line as in the annotation files.
//! Shorter prediction windows are prefixes of the stored frames.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::anticipate::PredictionResult;
use crate::error::{Error, Result};
use crate::segment::LabelVocabulary;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionDump {
    pub video_id: String,
    pub observe_fraction: f64,
    pub total_frames: usize,
    pub observed_frames: usize,
    pub horizon: usize,
    pub mode: Vec<usize>,
    pub samples: Vec<Vec<usize>>,
}

impl From<&PredictionResult> for PredictionDump {
    fn from(r: &PredictionResult) -> Self {
        Self {
            video_id: r.video_id.clone(),
            observe_fraction: r.observe_fraction,
            total_frames: r.total_frames,
            observed_frames: r.observed_frames,
            horizon: r.horizon,
            mode: r.mode.clone(),
            samples: r.samples.clone(),
        }
    }
}

/// Directory holding the dumps of one observation fraction, e.g. `obs20`.
pub fn observe_dir(root: &Path, observe_fraction: f64) -> PathBuf {
    root.join(format!("obs{}", (observe_fraction * 100.0).round() as u64))
}

fn push_frames(out: &mut String, frames: &[usize], vocab: &LabelVocabulary) -> Result<()> {
    for &f in frames {
        let name = vocab
            .name(f)
            .ok_or_else(|| Error::Data(format!("label id {f} outside vocabulary")))?;
        out.push_str(name);
        out.push('\n');
    }
    Ok(())
}

impl PredictionDump {
    pub fn to_text(&self, vocab: &LabelVocabulary) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "# video {}", self.video_id);
        let _ = writeln!(out, "# observe {}", self.observe_fraction);
        let _ = writeln!(out, "# total_frames {}", self.total_frames);
        let _ = writeln!(out, "# observed_frames {}", self.observed_frames);
        let _ = writeln!(out, "# horizon {}", self.horizon);
        out.push_str("#mode\n");
        push_frames(&mut out, &self.mode, vocab)?;
        for (i, s) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "#sample {i}");
            push_frames(&mut out, s, vocab)?;
        }
        Ok(out)
    }

    pub fn parse(text: &str, path: &Path, vocab: &LabelVocabulary) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut header = std::collections::BTreeMap::new();
        let mut mode: Option<Vec<usize>> = None;
        let mut samples: Vec<Vec<usize>> = Vec::new();
        // None before the first block, Some(None) in the mode block
        let mut current: Option<Option<usize>> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line == "#mode" {
                if mode.is_some() {
                    return Err(err(lineno, "second #mode block".into()));
                }
                mode = Some(Vec::new());
                current = Some(None);
            } else if let Some(idx) = line.strip_prefix("#sample ") {
                let idx: usize = idx
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, format!("bad sample index {idx:?}")))?;
                if idx != samples.len() {
                    return Err(err(lineno, format!("sample {idx} out of order")));
                }
                samples.push(Vec::new());
                current = Some(Some(idx));
            } else if let Some(kv) = line.strip_prefix('#') {
                if current.is_some() {
                    return Err(err(lineno, "header line after the first block".into()));
                }
                let (k, v) = kv
                    .trim()
                    .split_once(' ')
                    .ok_or_else(|| err(lineno, format!("malformed header {line:?}")))?;
                header.insert(k.to_string(), v.trim().to_string());
            } else {
                let id = vocab
                    .id(line)
                    .ok_or_else(|| err(lineno, format!("unknown label {line:?}")))?;
                match current {
                    None => return Err(err(lineno, "label before the first block".into())),
                    Some(None) => mode.as_mut().expect("mode block open").push(id),
                    Some(Some(s)) => samples[s].push(id),
                }
            }
        }
        let field = |k: &str| -> Result<&String> {
            header
                .get(k)
                .ok_or_else(|| err(0, format!("missing header field {k}")))
        };
        let number = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| err(0, format!("header field {k} is not a count")))
        };
        let dump = Self {
            video_id: field("video")?.clone(),
            observe_fraction: field("observe")?
                .parse()
                .map_err(|_| err(0, "observe is not a number".into()))?,
            total_frames: number("total_frames")?,
            observed_frames: number("observed_frames")?,
            horizon: number("horizon")?,
            mode: mode.ok_or_else(|| err(0, "missing #mode block".into()))?,
            samples,
        };
        let h = dump.horizon;
        if dump.mode.len() != h || dump.samples.iter().any(|s| s.len() != h) {
            return Err(err(0, format!("every block must hold {h} frames")));
        }
        Ok(dump)
    }

    pub fn write(&self, root: &Path, vocab: &LabelVocabulary) -> Result<PathBuf> {
        let dir = observe_dir(root, self.observe_fraction);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.txt", self.video_id));
        fs::write(&path, self.to_text(vocab)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path, vocab: &LabelVocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, vocab)
    }
}

/// Reads every `*.txt` dump in `dir`, sorted by file name.
pub fn read_dump_dir(dir: &Path, vocab: &LabelVocabulary) -> Result<Vec<PredictionDump>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths.iter().map(|p| PredictionDump::read(p, vocab)).collect()
}
