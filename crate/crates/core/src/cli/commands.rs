use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{ModelKind, ObservationSource, RunConfig};
use crate::anticipate::{anticipate_corpus, horizon_frames, AnticipationSettings, FutureDistributionSource, NeuralSource};
use crate::checkpoint::Checkpoint;
use crate::dataset::{
    build_example_set, load_corpus, load_split_list, observed_frame_count, write_corpus, DatasetLayout,
    VideoAnnotation,
};
use crate::dump::{observe_dir, read_dump_dir, PredictionDump};
use crate::error::{Error, Result};
use crate::eval::{next_action_accuracy, EvalWindow, MetricTable};
use crate::model::{train_model, ActionModel, EpochRecord, LengthModel};
use crate::ngram::BaselineModel;
use crate::segment::{compute_length_stats, hex, LabelVocabulary, SegmentSequence};
use crate::synth::SyntheticGeneratorSpec;

pub const ACTION_CHECKPOINT: &str = "action.json";
pub const LENGTH_CHECKPOINT: &str = "length.json";
pub const NGRAM_CHECKPOINT: &str = "ngram.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const MANIFEST: &str = "manifest.json";

/// Everything needed to repeat a command: its effective configuration and
/// the SHA-256 of every input and output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records `files` (relative to `dir`) as outputs and writes the manifest
    /// next to them.
    fn finish(mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let rel = f.strip_prefix(dir).unwrap_or(f);
            self.outputs.insert(rel.display().to_string(), file_hash(f)?);
        }
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Hash over the vocabulary, the split lists and every listed annotation.
pub fn corpus_hash(layout: &DatasetLayout, splits: &[&str]) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut feed = |name: &str, path: &Path| -> Result<()> {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(fs::read(path).map_err(|e| Error::io(path, e))?);
        hasher.update([0]);
        Ok(())
    };
    feed("mapping", &layout.mapping())?;
    for split in splits {
        let path = layout.split(split);
        feed(split, &path)?;
        let mut ids = load_split_list(&path)?;
        ids.sort();
        ids.dedup();
        for id in ids {
            feed(&id, &layout.ground_truth_dir().join(format!("{id}.txt")))?;
        }
    }
    Ok(hex(&hasher.finalize()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn config_json(config: &RunConfig) -> serde_json::Value {
    serde_json::to_value(config).expect("config serializes")
}

pub struct SynthArgs {
    pub spec: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub test_fraction: f64,
}

/// Writes a synthetic corpus with `train` and `test` splits; the last
/// `test_fraction` of the videos form the test split.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(Error::Config(format!("test fraction {} outside [0, 1)", args.test_fraction)));
    }
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let mut spec = SyntheticGeneratorSpec::from_toml(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = spec.generate()?;
    let n_test = (args.test_fraction * corpus.len() as f64).round() as usize;
    let (train, test) = corpus.split_at(corpus.len() - n_test);
    let layout = DatasetLayout::new(&args.out);
    write_corpus(&layout, "train", train, &spec.vocabulary)?;
    write_corpus(&layout, "test", test, &spec.vocabulary)?;

    let mut manifest = Manifest::new(
        "synth",
        json!({ "seed": spec.seed, "test_fraction": args.test_fraction }),
    );
    manifest.inputs.insert("spec".into(), file_hash(&args.spec)?);
    let outputs = [layout.mapping(), layout.split("train"), layout.split("test")];
    manifest
        .outputs
        .insert("corpus".into(), corpus_hash(&layout, &["train", "test"])?);
    manifest.finish(&args.out, &outputs)
}

fn load(config: &RunConfig, split: &str) -> Result<(DatasetLayout, LabelVocabulary, Vec<VideoAnnotation>)> {
    let layout = DatasetLayout::new(config.dataset()?);
    let vocab = layout.vocabulary()?;
    let corpus = layout.load_split(split, &vocab)?;
    if corpus.is_empty() {
        return Err(Error::Data(format!("split {split} lists no videos")));
    }
    Ok((layout, vocab, corpus))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub split: String,
    pub videos: usize,
    pub frames: usize,
    pub segments: usize,
    pub classes_present: usize,
    pub vocab_size: usize,
    pub single_segment_videos: usize,
    pub mean_length: f64,
    pub std_length: f64,
    pub vocabulary_hash: String,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} videos, {} frames, {} segments, {}/{} classes present, \
             {} single-segment videos, segment length {:.2} ± {:.2}, vocabulary {}",
            self.split,
            self.videos,
            self.frames,
            self.segments,
            self.classes_present,
            self.vocab_size,
            self.single_segment_videos,
            self.mean_length,
            self.std_length,
            &self.vocabulary_hash[..12]
        )
    }
}

pub fn cmd_ingest_check(config: &RunConfig, splits: &[String]) -> Result<Vec<IngestReport>> {
    splits
        .iter()
        .map(|split| {
            let (_, vocab, corpus) = load(config, split)?;
            let stats = compute_length_stats(corpus.iter().map(|v| v.segments()))?;
            let mut present = vec![false; vocab.len()];
            corpus
                .iter()
                .flat_map(|v| v.segments().labels())
                .for_each(|l| present[l] = true);
            Ok(IngestReport {
                split: split.clone(),
                videos: corpus.len(),
                frames: corpus.iter().map(|v| v.total_frames()).sum(),
                segments: corpus.iter().map(|v| v.segments().len()).sum(),
                classes_present: present.iter().filter(|&&p| p).count(),
                vocab_size: vocab.len(),
                single_segment_videos: build_example_set(&corpus).single_segment_videos,
                mean_length: stats.mean,
                std_length: stats.std,
                vocabulary_hash: vocab.content_hash(),
            })
        })
        .collect()
}

pub struct TrainArgs {
    pub config: RunConfig,
    pub out: PathBuf,
}

fn log_line(model: &str, r: &EpochRecord) -> String {
    json!({ "model": model, "epoch": r.epoch, "loss": r.loss }).to_string()
}

/// Trains the configured model and returns the training log lines.
pub fn cmd_train(args: &TrainArgs) -> Result<Vec<String>> {
    let config = &args.config;
    let (layout, vocab, corpus) = load(config, &config.train_split)?;
    let stats = compute_length_stats(corpus.iter().map(|v| v.segments()))?;
    let k = vocab.len();
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("train", config_json(config));
    manifest
        .inputs
        .insert("dataset".into(), corpus_hash(&layout, &[&config.train_split])?);

    let mut outputs = Vec::new();
    let mut log = Vec::new();
    match config.model {
        ModelKind::Rnn => {
            let set = build_example_set(&corpus);
            if set.examples.is_empty() {
                return Err(Error::Data("no video has two or more segments".into()));
            }
            let (action, length) = rayon::join(
                || train_model::<ActionModel>(&set.examples, &stats, k, &config.action, |_| {}),
                || train_model::<LengthModel>(&set.examples, &stats, k, &config.length, |_| {}),
            );
            let (action, action_log) = action?;
            let (length, length_log) = length?;
            log.extend(action_log.iter().map(|r| log_line("action", r)));
            log.extend(length_log.iter().map(|r| log_line("length", r)));
            let a = args.out.join(ACTION_CHECKPOINT);
            Checkpoint::from_action(&action, &vocab, stats).save(&a)?;
            let l = args.out.join(LENGTH_CHECKPOINT);
            Checkpoint::from_length(&length, &vocab, stats).save(&l)?;
            outputs.extend([a, l]);
        }
        ModelKind::NGram(order) => {
            let seqs: Vec<SegmentSequence> = corpus.iter().map(|v| v.segments().clone()).collect();
            let model = BaselineModel::fit(&seqs, order, k, stats);
            let p = args.out.join(NGRAM_CHECKPOINT);
            Checkpoint::from_baseline(&model, &vocab).save(&p)?;
            outputs.push(p);
        }
    }
    let text: String = log.iter().map(|l| format!("{l}\n")).collect();
    outputs.push(write_file(&args.out.join(TRAIN_LOG), &text)?);
    manifest.finish(&args.out, &outputs)?;
    Ok(log)
}

/// Loads the model written by `train` into `dir`, refusing checkpoints made
/// for another vocabulary.
pub fn load_source(dir: &Path, vocab: &LabelVocabulary) -> Result<Box<dyn FutureDistributionSource>> {
    let ngram = dir.join(NGRAM_CHECKPOINT);
    if ngram.exists() {
        let ckpt = Checkpoint::load(&ngram)?;
        ckpt.check_vocabulary(vocab)?;
        return Ok(Box::new(ckpt.baseline_model()?));
    }
    let action = Checkpoint::load(&dir.join(ACTION_CHECKPOINT))?;
    let length = Checkpoint::load(&dir.join(LENGTH_CHECKPOINT))?;
    action.check_vocabulary(vocab)?;
    length.check_vocabulary(vocab)?;
    if action.length_stats != length.length_stats {
        return Err(Error::Checkpoint("action and length checkpoints disagree on length statistics".into()));
    }
    Ok(Box::new(NeuralSource {
        action: action.action_model()?,
        length: length.length_model()?,
        stats: action.length_stats,
    }))
}

fn model_files(dir: &Path) -> Vec<PathBuf> {
    [NGRAM_CHECKPOINT, ACTION_CHECKPOINT, LENGTH_CHECKPOINT]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect()
}

pub struct PredictArgs {
    pub config: RunConfig,
    pub models: PathBuf,
    pub out: PathBuf,
}

/// Writes one dump per test video and observation fraction, each covering
/// the longest configured prediction window.
pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let config = &args.config;
    let (layout, vocab, corpus) = load(config, &config.test_split)?;
    let source = load_source(&args.models, &vocab)?;
    let observed = match &config.observations {
        ObservationSource::GroundTruth => None,
        ObservationSource::Predicted(dir) => {
            let ids: Vec<String> = corpus.iter().map(|v| v.id.clone()).collect();
            let loaded = load_corpus(dir, &ids, &vocab)?;
            Some(loaded.into_iter().map(|v| v.frames().to_vec()).collect::<Vec<_>>())
        }
    };
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("predict", config_json(config));
    manifest
        .inputs
        .insert("dataset".into(), corpus_hash(&layout, &[&config.test_split])?);
    for f in model_files(&args.models) {
        let name = f.file_name().expect("file").to_string_lossy().into_owned();
        manifest.inputs.insert(name, file_hash(&f)?);
    }

    let mut outputs = Vec::new();
    for &obs in &config.observe {
        let settings = AnticipationSettings {
            observe_fraction: obs,
            predict_fractions: config.predict.clone(),
            num_samples: config.samples,
            seed: config.seed,
        };
        let results = anticipate_corpus(&*source, &corpus, observed.as_deref(), &settings)?;
        for per_video in &results {
            let longest = per_video
                .iter()
                .max_by_key(|r| r.horizon)
                .expect("at least one prediction fraction");
            outputs.push(PredictionDump::from(longest).write(&args.out, &vocab)?);
        }
    }
    manifest.finish(&args.out, &outputs)
}

pub struct EvalArgs {
    pub config: RunConfig,
    pub predictions: Vec<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: PathBuf,
}

fn windows_for(
    dumps: &[PredictionDump],
    truth: &BTreeMap<&str, &VideoAnnotation>,
    observe: f64,
    predict: f64,
) -> Result<Vec<EvalWindow>> {
    dumps
        .iter()
        .map(|d| {
            let video = truth
                .get(d.video_id.as_str())
                .ok_or_else(|| Error::Data(format!("no ground truth for video {}", d.video_id)))?;
            let total = video.total_frames();
            let start = observed_frame_count(total, observe);
            let h = horizon_frames(total, predict);
            if d.total_frames != total || d.observed_frames != start || (d.observe_fraction - observe).abs() > 1e-12 {
                return Err(Error::Data(format!(
                    "dump for video {} was made for a different video or observation",
                    d.video_id
                )));
            }
            if h > d.horizon {
                return Err(Error::Data(format!(
                    "dump for video {} covers {} frames, {h} needed",
                    d.video_id, d.horizon
                )));
            }
            Ok(EvalWindow {
                video_id: d.video_id.clone(),
                groundtruth: video.frames()[start..start + h].to_vec(),
                samples: d.samples.iter().map(|s| s[..h].to_vec()).collect(),
                mode: d.mode[..h].to_vec(),
            })
        })
        .collect()
}

/// Scores every prediction run and writes `metrics.csv` and `metrics.json`
/// (mean and standard deviation when several runs are given).
pub fn cmd_eval(args: &EvalArgs) -> Result<MetricTable> {
    let config = &args.config;
    let layout = DatasetLayout::new(config.dataset()?);
    let vocab = layout.vocabulary()?;
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("eval", config_json(config));
    let setting = config.model.to_string();

    let mut tables = Vec::new();
    for (run, dir) in args.predictions.iter().enumerate() {
        let mut rows = Vec::new();
        for &obs in &config.observe {
            let dumps = read_dump_dir(&observe_dir(dir, obs), &vocab)?;
            if dumps.is_empty() {
                return Err(Error::Data(format!("{}: no dumps for observation {obs}", dir.display())));
            }
            for d in &dumps {
                let path = observe_dir(dir, obs).join(format!("{}.txt", d.video_id));
                manifest.inputs.insert(
                    format!("run{run}/{}", path.strip_prefix(dir).unwrap_or(&path).display()),
                    file_hash(&path)?,
                );
            }
            let ids: Vec<String> = dumps.iter().map(|d| d.video_id.clone()).collect();
            let corpus = load_corpus(&layout.ground_truth_dir(), &ids, &vocab)?;
            let truth: BTreeMap<&str, &VideoAnnotation> = corpus.iter().map(|v| (v.id.as_str(), v)).collect();
            for &p in &config.predict {
                let windows = windows_for(&dumps, &truth, obs, p)?;
                rows.push(MetricTable::evaluate_cell(&setting, obs, p, &windows, config.pooling)?);
            }
        }
        tables.push(MetricTable { rows });
    }
    let table = MetricTable::aggregate_runs(&tables)?;
    let csv = args.out.join("metrics.csv");
    let json_path = args.out.join("metrics.json");
    table.write(&csv, &json_path)?;
    let mut outputs = vec![csv, json_path];

    if let Some(models) = &args.models {
        let (_, _, corpus) = load(config, &config.test_split)?;
        let source = load_source(models, &vocab)?;
        let acc = next_action_accuracy(&*source, &corpus)?;
        let path = args.out.join("next_action.json");
        let text = serde_json::to_string_pretty(&json!({ "model": setting, "accuracy": acc })).expect("json") + "\n";
        outputs.push(write_file(&path, &text)?);
        for f in model_files(models) {
            let name = f.file_name().expect("file").to_string_lossy().into_owned();
            manifest.inputs.insert(name, file_hash(&f)?);
        }
    }
    manifest.finish(&args.out, &outputs)?;
    Ok(table)
}
