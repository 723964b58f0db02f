//! Segment encoding and the recurrent encoder shared by both networks.

use crate::nn::{
    dropout_apply, Activation, Dense, DenseCache, DropoutMask, GruCell, GruSequenceCache, Matrix,
    ModelRng, Parameterized,
};
use crate::nn::prefixed;
use crate::segment::{ActionSegment, LengthStats};

/// One-hot label followed by the standardized length; width `K + 1`.
pub fn encode_segment(segment: &ActionSegment, stats: &LengthStats, vocab_size: usize) -> Vec<f64> {
    assert!(
        segment.label < vocab_size,
        "label {} outside vocabulary of {vocab_size}",
        segment.label
    );
    let mut v = vec![0.0; vocab_size + 1];
    v[segment.label] = 1.0;
    v[vocab_size] = stats.standardize(segment.length as f64);
    v
}

pub fn encode_prefix(prefix: &[ActionSegment], stats: &LengthStats, vocab_size: usize) -> Vec<Vec<f64>> {
    prefix
        .iter()
        .map(|s| encode_segment(s, stats, vocab_size))
        .collect()
}

/// Inverse of [`encode_segment`]: `(label, length in frames)`.
pub fn decode_segment(encoded: &[f64], stats: &LengthStats) -> (usize, f64) {
    let (onehot, length) = encoded.split_at(encoded.len() - 1);
    let label = onehot
        .iter()
        .position(|&v| v == 1.0)
        .expect("one-hot component has no active entry");
    (label, stats.destandardize(length[0]))
}

pub fn one_hot_rows(labels: &[usize], vocab_size: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), vocab_size);
    for (r, &l) in labels.iter().enumerate() {
        assert!(l < vocab_size, "label {l} outside vocabulary of {vocab_size}");
        m.set(r, l, 1.0);
    }
    m
}

/// Variable-length prefixes, left-padded to a common number of steps so that
/// every sequence ends on the last step.
#[derive(Clone, Debug)]
pub struct PaddedBatch {
    pub steps: Vec<Matrix>,
    pub mask: Vec<Vec<bool>>,
    pub batch: usize,
}

impl PaddedBatch {
    pub fn from_prefixes(prefixes: &[&[ActionSegment]], stats: &LengthStats, vocab_size: usize) -> Self {
        assert!(!prefixes.is_empty(), "empty batch");
        assert!(
            prefixes.iter().all(|p| !p.is_empty()),
            "prefix must hold at least one segment"
        );
        let batch = prefixes.len();
        let width = vocab_size + 1;
        let t_max = prefixes.iter().map(|p| p.len()).max().unwrap_or(0);
        let mut steps = vec![Matrix::zeros(batch, width); t_max];
        let mut mask = vec![vec![false; batch]; t_max];
        for (b, prefix) in prefixes.iter().enumerate() {
            let offset = t_max - prefix.len();
            for (i, seg) in prefix.iter().enumerate() {
                steps[offset + i]
                    .row_mut(b)
                    .copy_from_slice(&encode_segment(seg, stats, vocab_size));
                mask[offset + i][b] = true;
            }
        }
        Self { steps, mask, batch }
    }
}

pub(crate) fn maybe_dropout(
    x: &Matrix,
    rate: f64,
    rng: &mut Option<&mut ModelRng>,
) -> (Matrix, DropoutMask) {
    match rng {
        Some(r) => dropout_apply(x, rate, &mut **r, true),
        None => (x.clone(), DropoutMask::default()),
    }
}

/// FC → GRU → GRU → FC, reading a whole prefix and emitting one vector from
/// the final step. Dropout follows each layer; the recurrence itself is not
/// dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceEncoder {
    pub input: Dense,
    pub gru1: GruCell,
    pub gru2: GruCell,
    pub hidden: Dense,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    steps: usize,
    batch: usize,
    input: DenseCache,
    input_drop: DropoutMask,
    gru1: GruSequenceCache,
    mid_drop: Vec<DropoutMask>,
    gru2: GruSequenceCache,
    final_drop: DropoutMask,
    hidden: DenseCache,
    hidden_drop: DropoutMask,
}

impl SequenceEncoder {
    pub fn new(vocab_size: usize, hidden_size: usize, rng: &mut ModelRng) -> Self {
        Self {
            input: Dense::new(vocab_size + 1, hidden_size, rng),
            gru1: GruCell::new(hidden_size, hidden_size, rng),
            gru2: GruCell::new(hidden_size, hidden_size, rng),
            hidden: Dense::new(hidden_size, hidden_size, rng),
        }
    }

    pub fn zeros(vocab_size: usize, hidden_size: usize) -> Self {
        Self {
            input: Dense::zeros(vocab_size + 1, hidden_size),
            gru1: GruCell::zeros(hidden_size, hidden_size),
            gru2: GruCell::zeros(hidden_size, hidden_size),
            hidden: Dense::zeros(hidden_size, hidden_size),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.output_size()
    }

    pub fn vocab_size(&self) -> usize {
        self.input.input_size() - 1
    }

    /// `rng` is `Some` in training mode (dropout active), `None` otherwise.
    pub fn forward(
        &self,
        batch: &PaddedBatch,
        dropout: f64,
        mut rng: Option<&mut ModelRng>,
    ) -> (Matrix, EncoderCache) {
        let (t_max, b) = (batch.steps.len(), batch.batch);
        let h = self.hidden_size();

        // the input layer is position-wise, so run all steps as one stack
        let width = self.input.input_size();
        let mut stacked = Vec::with_capacity(t_max * b * width);
        for step in &batch.steps {
            stacked.extend_from_slice(step.data());
        }
        let stacked = Matrix::from_vec(t_max * b, width, stacked);
        let (projected, input_cache) = self.input.forward(&stacked, Activation::Relu);
        let (projected, input_drop) = maybe_dropout(&projected, dropout, &mut rng);
        let per_step: Vec<Matrix> = projected
            .data()
            .chunks_exact(b * h)
            .map(|c| Matrix::from_vec(b, h, c.to_vec()))
            .collect();

        let (out1, gru1_cache) = self.gru1.forward_sequence(&per_step, &batch.mask);
        let mut mid_drop = Vec::with_capacity(t_max);
        let mut mid = Vec::with_capacity(t_max);
        for o in &out1 {
            let (d, m) = maybe_dropout(o, dropout, &mut rng);
            mid.push(d);
            mid_drop.push(m);
        }
        let (out2, gru2_cache) = self.gru2.forward_sequence(&mid, &batch.mask);
        let last = out2.last().expect("at least one step");
        let (last, final_drop) = maybe_dropout(last, dropout, &mut rng);
        let (encoded, hidden_cache) = self.hidden.forward(&last, Activation::Relu);
        let (encoded, hidden_drop) = maybe_dropout(&encoded, dropout, &mut rng);

        let cache = EncoderCache {
            steps: t_max,
            batch: b,
            input: input_cache,
            input_drop,
            gru1: gru1_cache,
            mid_drop,
            gru2: gru2_cache,
            final_drop,
            hidden: hidden_cache,
            hidden_drop,
        };
        (encoded, cache)
    }

    pub fn backward(&self, cache: &EncoderCache, d_encoded: &Matrix, grads: &mut SequenceEncoder) {
        let (t_max, b) = (cache.steps, cache.batch);
        let h = self.hidden_size();

        let d = cache.hidden_drop.backward(d_encoded);
        let d_last = self.hidden.backward(&cache.hidden, &d, &mut grads.hidden);
        let d_last = cache.final_drop.backward(&d_last);

        let mut d_out2 = vec![Matrix::zeros(b, h); t_max];
        d_out2[t_max - 1] = d_last;
        let d_mid = self.gru2.backward_sequence(&cache.gru2, &d_out2, &mut grads.gru2);
        let d_out1: Vec<Matrix> = d_mid
            .iter()
            .zip(&cache.mid_drop)
            .map(|(g, m)| m.backward(g))
            .collect();
        let d_steps = self.gru1.backward_sequence(&cache.gru1, &d_out1, &mut grads.gru1);

        let mut stacked = Vec::with_capacity(t_max * b * h);
        for step in &d_steps {
            stacked.extend_from_slice(step.data());
        }
        let d_projected = cache
            .input_drop
            .backward(&Matrix::from_vec(t_max * b, h, stacked));
        self.input
            .backward(&cache.input, &d_projected, &mut grads.input);
    }
}

impl Parameterized for SequenceEncoder {
    fn parameters(&self) -> Vec<(String, &Matrix)> {
        prefixed("input", self.input.parameters())
            .chain(prefixed("gru1", self.gru1.parameters()))
            .chain(prefixed("gru2", self.gru2.parameters()))
            .chain(prefixed("hidden", self.hidden.parameters()))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.input.parameters_mut();
        out.extend(self.gru1.parameters_mut());
        out.extend(self.gru2.parameters_mut());
        out.extend(self.hidden.parameters_mut());
        out
    }
}
