//! Mean-over-classes (MoC) frame accuracy and next-segment label accuracy.
//!
//! MoC computes frame-wise accuracy separately for every class present in
//! the ground truth of the evaluated windows, then averages over those
//! classes. By default per-class counts are pooled over the whole test set
//! before dividing; [`Pooling::PerVideo`] computes MoC per video and averages
//! the videos instead.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anticipate::{argmax, FutureDistributionSource};
use crate::dataset::VideoAnnotation;
use crate::error::{Error, Result};

/// Correct and total ground-truth frames per class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassAccuracyTally {
    correct: Vec<u64>,
    total: Vec<u64>,
}

impl ClassAccuracyTally {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, class: usize) {
        if class >= self.total.len() {
            self.total.resize(class + 1, 0);
            self.correct.resize(class + 1, 0);
        }
    }

    /// Counts one window. Panics if the two labellings differ in length.
    pub fn add_window(&mut self, predicted: &[usize], groundtruth: &[usize]) {
        assert_eq!(
            predicted.len(),
            groundtruth.len(),
            "prediction and ground truth windows differ in length"
        );
        for (&p, &g) in predicted.iter().zip(groundtruth) {
            self.ensure(g);
            self.total[g] += 1;
            if p == g {
                self.correct[g] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &ClassAccuracyTally) {
        if !other.total.is_empty() {
            self.ensure(other.total.len() - 1);
        }
        for (c, (&k, &n)) in other.correct.iter().zip(&other.total).enumerate() {
            self.correct[c] += k;
            self.total[c] += n;
        }
    }

    pub fn correct(&self, class: usize) -> u64 {
        self.correct.get(class).copied().unwrap_or(0)
    }

    pub fn total(&self, class: usize) -> u64 {
        self.total.get(class).copied().unwrap_or(0)
    }

    /// Classes with at least one ground-truth frame.
    pub fn present_classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.total.len()).filter(|&c| self.total[c] > 0)
    }

    pub fn class_accuracy(&self, class: usize) -> Option<f64> {
        let n = self.total(class);
        (n > 0).then(|| self.correct(class) as f64 / n as f64)
    }

    /// Mean of per-class accuracies over present classes.
    pub fn moc(&self) -> Result<f64> {
        mean(self.present_classes().map(|c| self.class_accuracy(c).expect("present")))
            .ok_or_else(|| Error::Data("MoC of an empty tally".into()))
    }
}

pub fn tally_window(predicted: &[usize], groundtruth: &[usize]) -> ClassAccuracyTally {
    let mut t = ClassAccuracyTally::new();
    t.add_window(predicted, groundtruth);
    t
}

pub fn moc_from_tally(tally: &ClassAccuracyTally) -> Result<f64> {
    tally.moc()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Predictions and ground truth for one video's prediction window.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalWindow {
    pub video_id: String,
    pub groundtruth: Vec<usize>,
    pub samples: Vec<Vec<usize>>,
    pub mode: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Per-class counts summed over the test set, then averaged over classes.
    #[default]
    Pooled,
    /// MoC per video, then averaged over videos.
    PerVideo,
}

fn frame_accuracy(predicted: &[usize], groundtruth: &[usize]) -> f64 {
    let hits = predicted.iter().zip(groundtruth).filter(|(p, g)| p == g).count();
    hits as f64 / groundtruth.len().max(1) as f64
}

/// MoC of one labelling per window, picked by `select`.
fn moc_of_selection<'a>(
    windows: &'a [EvalWindow],
    pooling: Pooling,
    select: impl Fn(&'a EvalWindow) -> &'a [usize],
) -> Result<f64> {
    match pooling {
        Pooling::Pooled => {
            let mut tally = ClassAccuracyTally::new();
            for w in windows {
                tally.add_window(select(w), &w.groundtruth);
            }
            tally.moc()
        }
        Pooling::PerVideo => {
            let per_video = windows
                .iter()
                .map(|w| tally_window(select(w), &w.groundtruth).moc())
                .collect::<Result<Vec<_>>>()?;
            mean(per_video.into_iter()).ok_or_else(|| Error::Data("no windows".into()))
        }
    }
}

/// MoC of the mode predictions.
pub fn moc_mode(windows: &[EvalWindow], pooling: Pooling) -> Result<f64> {
    moc_of_selection(windows, pooling, |w| &w.mode)
}

/// Per-class accuracy computed for each sample index, averaged over samples
/// per class, then averaged over classes.
pub fn moc_averaged_over_samples(windows: &[EvalWindow], num_samples: usize, pooling: Pooling) -> Result<f64> {
    if num_samples == 0 {
        return Err(Error::Data("no samples to average".into()));
    }
    if let Some(w) = windows.iter().find(|w| w.samples.len() != num_samples) {
        return Err(Error::Data(format!(
            "video {} has {} samples, expected {num_samples}",
            w.video_id,
            w.samples.len()
        )));
    }
    let averaged_moc = |group: &[EvalWindow]| -> Result<f64> {
        let tallies: Vec<ClassAccuracyTally> = (0..num_samples)
            .map(|s| {
                let mut t = ClassAccuracyTally::new();
                for w in group {
                    t.add_window(&w.samples[s], &w.groundtruth);
                }
                t
            })
            .collect();
        let classes: Vec<usize> = tallies[0].present_classes().collect();
        mean(classes.iter().map(|&c| {
            tallies
                .iter()
                .map(|t| t.class_accuracy(c).expect("same ground truth"))
                .sum::<f64>()
                / num_samples as f64
        }))
        .ok_or_else(|| Error::Data("MoC of an empty tally".into()))
    };
    match pooling {
        Pooling::Pooled => averaged_moc(windows),
        Pooling::PerVideo => {
            let per_video = windows
                .iter()
                .map(|w| averaged_moc(std::slice::from_ref(w)))
                .collect::<Result<Vec<_>>>()?;
            mean(per_video.into_iter()).ok_or_else(|| Error::Data("no windows".into()))
        }
    }
}

/// Index of the sample with the highest frame-wise accuracy; ties go to the
/// lowest index.
pub fn best_sample(window: &EvalWindow) -> Option<usize> {
    let scores: Vec<f64> = window
        .samples
        .iter()
        .map(|s| frame_accuracy(s, &window.groundtruth))
        .collect();
    (!scores.is_empty()).then(|| argmax(&scores))
}

/// MoC after keeping, per window, only the most accurate sample.
pub fn moc_top1(windows: &[EvalWindow], pooling: Pooling) -> Result<f64> {
    if let Some(w) = windows.iter().find(|w| w.samples.is_empty()) {
        return Err(Error::Data(format!("video {} has no samples", w.video_id)));
    }
    moc_of_selection(windows, pooling, |w| {
        &w.samples[best_sample(w).expect("checked non-empty")]
    })
}

/// Fraction of segments `i > 1` whose label equals the most likely label
/// predicted from the ground-truth segments before it.
pub fn next_action_accuracy<S>(source: &S, corpus: &[VideoAnnotation]) -> Result<f64>
where
    S: FutureDistributionSource + ?Sized,
{
    let mut correct = 0usize;
    let mut total = 0usize;
    for video in corpus {
        let segs = video.segments().segments();
        for i in 1..segs.len() {
            let p = source.next_label_distribution(&segs[..i]);
            if argmax(&p) == segs[i].label {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Data("no video has two or more segments".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// One cell of a results grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub setting: String,
    pub observe: f64,
    pub predict: f64,
    pub averaged_moc: f64,
    pub mode_moc: f64,
    pub top1_moc: f64,
    /// Number of runs aggregated; the std columns are set when above one.
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaged_moc_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_moc_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1_moc_std: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    setting: &'a str,
    observe: f64,
    predict: f64,
    averaged_moc: f64,
    averaged_moc_std: Option<f64>,
    mode_moc: f64,
    mode_moc_std: Option<f64>,
    top1_moc: f64,
    top1_moc_std: Option<f64>,
    runs: usize,
}

impl MetricTable {
    /// Evaluates one setting at one `(observe, predict)` cell.
    pub fn evaluate_cell(
        setting: &str,
        observe: f64,
        predict: f64,
        windows: &[EvalWindow],
        pooling: Pooling,
    ) -> Result<MetricRow> {
        let num_samples = windows.first().map_or(0, |w| w.samples.len());
        Ok(MetricRow {
            setting: setting.to_string(),
            observe,
            predict,
            averaged_moc: moc_averaged_over_samples(windows, num_samples, pooling)?,
            mode_moc: moc_mode(windows, pooling)?,
            top1_moc: moc_top1(windows, pooling)?,
            runs: 1,
            averaged_moc_std: None,
            mode_moc_std: None,
            top1_moc_std: None,
        })
    }

    /// Mean and population standard deviation, cell by cell, of tables with
    /// identical layouts.
    pub fn aggregate_runs(tables: &[MetricTable]) -> Result<MetricTable> {
        let first = tables.first().ok_or_else(|| Error::Data("no tables".into()))?;
        let n = tables.len() as f64;
        let mut rows = Vec::with_capacity(first.rows.len());
        for (i, row) in first.rows.iter().enumerate() {
            let cells: Vec<&MetricRow> = tables
                .iter()
                .map(|t| {
                    t.rows
                        .get(i)
                        .filter(|r| r.setting == row.setting && r.observe == row.observe && r.predict == row.predict)
                        .ok_or_else(|| Error::Data("tables have different layouts".into()))
                })
                .collect::<Result<_>>()?;
            let stat = |f: fn(&MetricRow) -> f64| {
                let m = cells.iter().map(|r| f(r)).sum::<f64>() / n;
                let v = cells.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / n;
                (m, v.sqrt())
            };
            let (a, a_sd) = stat(|r| r.averaged_moc);
            let (m, m_sd) = stat(|r| r.mode_moc);
            let (t, t_sd) = stat(|r| r.top1_moc);
            let multi = tables.len() > 1;
            rows.push(MetricRow {
                setting: row.setting.clone(),
                observe: row.observe,
                predict: row.predict,
                averaged_moc: a,
                mode_moc: m,
                top1_moc: t,
                runs: tables.len(),
                averaged_moc_std: multi.then_some(a_sd),
                mode_moc_std: multi.then_some(m_sd),
                top1_moc_std: multi.then_some(t_sd),
            });
        }
        Ok(MetricTable { rows })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                setting: &r.setting,
                observe: r.observe,
                predict: r.predict,
                averaged_moc: r.averaged_moc,
                averaged_moc_std: r.averaged_moc_std,
                mode_moc: r.mode_moc,
                mode_moc_std: r.mode_moc_std,
                top1_moc: r.top1_moc,
                top1_moc_std: r.top1_moc_std,
                runs: r.runs,
            })
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        let csv = self.to_csv()?;
        fs::write(csv_path, csv).map_err(|e| Error::io(csv_path, e))?;
        let json = serde_json::to_string_pretty(self).expect("metric table serializes") + "\n";
        fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
    }
}
