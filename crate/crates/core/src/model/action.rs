//! Next-label distribution given the observed segments.

use crate::dataset::TrainingExample;
use crate::model::encoder::{PaddedBatch, SequenceEncoder};
use crate::nn::{prefixed, softmax_in_place, Activation, Dense, Matrix, ModelRng, Parameterized};
use crate::segment::{ActionSegment, LengthStats};

/// Recurrent encoder followed by a linear layer producing one score per
/// class; probabilities are the softmax of the scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionModel {
    pub encoder: SequenceEncoder,
    pub output: Dense,
}

impl ActionModel {
    pub fn new(vocab_size: usize, hidden_size: usize, rng: &mut ModelRng) -> Self {
        let encoder = SequenceEncoder::new(vocab_size, hidden_size, rng);
        let output = Dense::new(hidden_size, vocab_size, rng);
        Self { encoder, output }
    }

    pub fn zeros(vocab_size: usize, hidden_size: usize) -> Self {
        Self {
            encoder: SequenceEncoder::zeros(vocab_size, hidden_size),
            output: Dense::zeros(hidden_size, vocab_size),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.output.output_size()
    }

    pub fn hidden_size(&self) -> usize {
        self.encoder.hidden_size()
    }

    /// Unnormalized class scores for each prefix, inference mode.
    pub fn scores(&self, batch: &PaddedBatch) -> Matrix {
        let (encoded, _) = self.encoder.forward(batch, 0.0, None);
        self.output.apply(&encoded, Activation::Identity)
    }

    /// Probability of each next label. Panics on an empty prefix.
    pub fn predict(&self, prefix: &[ActionSegment], stats: &LengthStats) -> Vec<f64> {
        assert!(!prefix.is_empty(), "action model needs a non-empty prefix");
        let batch = PaddedBatch::from_prefixes(&[prefix], stats, self.vocab_size());
        let encoded = self.encoder.forward(&batch, 0.0, None).0;
        self.output.apply(&encoded, Activation::Softmax).row(0).to_vec()
    }

    pub fn predict_batch(&self, prefixes: &[&[ActionSegment]], stats: &LengthStats) -> Matrix {
        let batch = PaddedBatch::from_prefixes(prefixes, stats, self.vocab_size());
        let encoded = self.encoder.forward(&batch, 0.0, None).0;
        self.output.apply(&encoded, Activation::Softmax)
    }

    /// Mean cross-entropy of the true next labels, inference mode.
    pub fn loss(&self, examples: &[&TrainingExample], stats: &LengthStats) -> f64 {
        let prefixes: Vec<&[ActionSegment]> = examples.iter().map(|e| &e.prefix[..]).collect();
        let batch = PaddedBatch::from_prefixes(&prefixes, stats, self.vocab_size());
        let scores = self.scores(&batch);
        let targets: Vec<usize> = examples.iter().map(|e| e.target.label).collect();
        cross_entropy(&scores, &targets).0
    }

    /// Batch loss and its gradient. With `rng` set, dropout is active.
    pub fn loss_and_gradients(
        &self,
        examples: &[&TrainingExample],
        stats: &LengthStats,
        dropout: f64,
        mut rng: Option<&mut ModelRng>,
    ) -> (f64, ActionModel) {
        let prefixes: Vec<&[ActionSegment]> = examples.iter().map(|e| &e.prefix[..]).collect();
        let batch = PaddedBatch::from_prefixes(&prefixes, stats, self.vocab_size());
        let (encoded, enc_cache) = self.encoder.forward(&batch, dropout, rng.as_deref_mut());
        let (scores, out_cache) = self.output.forward(&encoded, Activation::Identity);
        let targets: Vec<usize> = examples.iter().map(|e| e.target.label).collect();
        let (loss, d_scores) = cross_entropy(&scores, &targets);

        let mut grads = Self::zeros(self.vocab_size(), self.hidden_size());
        let d_encoded = self.output.backward(&out_cache, &d_scores, &mut grads.output);
        self.encoder
            .backward(&enc_cache, &d_encoded, &mut grads.encoder);
        (loss, grads)
    }
}

/// Mean negative log-softmax at the target indices and its gradient wrt the
/// scores, `(softmax − onehot) / M`.
pub(crate) fn cross_entropy(scores: &Matrix, targets: &[usize]) -> (f64, Matrix) {
    assert_eq!(scores.rows(), targets.len(), "one target per row");
    let m = targets.len() as f64;
    let mut grad = scores.clone();
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = scores.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + row.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
        loss += log_norm - row[t];
        let g = grad.row_mut(r);
        softmax_in_place(g);
        g[t] -= 1.0;
        g.iter_mut().for_each(|v| *v /= m);
    }
    (loss / m, grad)
}

impl Parameterized for ActionModel {
    fn parameters(&self) -> Vec<(String, &Matrix)> {
        prefixed("encoder", self.encoder.parameters())
            .chain(prefixed("output", self.output.parameters()))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.output.parameters_mut());
        out
    }
}
