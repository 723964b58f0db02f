//! Gaussian next-length distribution given the observed segments and the
//! label of the segment being measured.

use serde::{Deserialize, Serialize};

use crate::dataset::TrainingExample;
use crate::model::encoder::{maybe_dropout, one_hot_rows, PaddedBatch, SequenceEncoder};
use crate::nn::{prefixed, Activation, Dense, Matrix, ModelRng, Parameterized};
use crate::segment::{ActionSegment, LengthStats};

/// Mean and standard deviation in standardized length units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianPrediction {
    /// Maps standardized units back to frames: `(μ σ_l + l̄, σ σ_l)`.
    pub fn to_frames(&self, stats: &LengthStats) -> GaussianPrediction {
        GaussianPrediction {
            mu: stats.destandardize(self.mu),
            sigma: self.sigma * stats.std,
        }
    }
}

/// Per-example loss `log σ + (ℓ − μ)² / (2σ²)`; the constant of the Gaussian
/// negative log-likelihood is dropped.
pub fn gaussian_nll(target: f64, mu: f64, sigma: f64) -> f64 {
    sigma.ln() + (target - mu).powi(2) / (2.0 * sigma * sigma)
}

/// Two branches: the prefix encoder, and a ReLU layer over the one-hot label
/// of the segment whose length is predicted. Their concatenation feeds two
/// separate linear heads: μ (identity) and σ (exponential).
#[derive(Clone, Debug, PartialEq)]
pub struct LengthModel {
    pub encoder: SequenceEncoder,
    pub label_branch: Dense,
    pub mu_head: Dense,
    pub sigma_head: Dense,
}

impl LengthModel {
    pub fn new(vocab_size: usize, hidden_size: usize, rng: &mut ModelRng) -> Self {
        let encoder = SequenceEncoder::new(vocab_size, hidden_size, rng);
        let label_branch = Dense::new(vocab_size, hidden_size, rng);
        let mu_head = Dense::new(2 * hidden_size, 1, rng);
        let sigma_head = Dense::new(2 * hidden_size, 1, rng);
        Self {
            encoder,
            label_branch,
            mu_head,
            sigma_head,
        }
    }

    pub fn zeros(vocab_size: usize, hidden_size: usize) -> Self {
        Self {
            encoder: SequenceEncoder::zeros(vocab_size, hidden_size),
            label_branch: Dense::zeros(vocab_size, hidden_size),
            mu_head: Dense::zeros(2 * hidden_size, 1),
            sigma_head: Dense::zeros(2 * hidden_size, 1),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.label_branch.input_size()
    }

    pub fn hidden_size(&self) -> usize {
        self.encoder.hidden_size()
    }

    fn features(&self, prefixes: &[&[ActionSegment]], labels: &[usize], stats: &LengthStats) -> Matrix {
        let batch = PaddedBatch::from_prefixes(prefixes, stats, self.vocab_size());
        let encoded = self.encoder.forward(&batch, 0.0, None).0;
        let branch = self
            .label_branch
            .apply(&one_hot_rows(labels, self.vocab_size()), Activation::Relu);
        Matrix::hstack(&encoded, &branch)
    }

    /// Standardized Gaussian for the length of a `label` segment following
    /// `prefix`. Panics on an empty prefix.
    pub fn predict(&self, prefix: &[ActionSegment], label: usize, stats: &LengthStats) -> GaussianPrediction {
        assert!(!prefix.is_empty(), "length model needs a non-empty prefix");
        self.predict_batch(&[prefix], &[label], stats)[0]
    }

    pub fn predict_batch(
        &self,
        prefixes: &[&[ActionSegment]],
        labels: &[usize],
        stats: &LengthStats,
    ) -> Vec<GaussianPrediction> {
        assert_eq!(prefixes.len(), labels.len(), "one label per prefix");
        let features = self.features(prefixes, labels, stats);
        let mu = self.mu_head.apply(&features, Activation::Identity);
        let sigma = self.sigma_head.apply(&features, Activation::Exponential);
        mu.data()
            .iter()
            .zip(sigma.data())
            .map(|(&mu, &sigma)| GaussianPrediction { mu, sigma })
            .collect()
    }

    /// Mean loss over `examples`, inference mode.
    pub fn loss(&self, examples: &[&TrainingExample], stats: &LengthStats) -> f64 {
        let prefixes: Vec<&[ActionSegment]> = examples.iter().map(|e| &e.prefix[..]).collect();
        let labels: Vec<usize> = examples.iter().map(|e| e.target.label).collect();
        let preds = self.predict_batch(&prefixes, &labels, stats);
        preds
            .iter()
            .zip(examples)
            .map(|(p, e)| gaussian_nll(stats.standardize(e.target.length as f64), p.mu, p.sigma))
            .sum::<f64>()
            / examples.len() as f64
    }

    pub fn loss_and_gradients(
        &self,
        examples: &[&TrainingExample],
        stats: &LengthStats,
        dropout: f64,
        mut rng: Option<&mut ModelRng>,
    ) -> (f64, LengthModel) {
        let k = self.vocab_size();
        let h = self.hidden_size();
        let prefixes: Vec<&[ActionSegment]> = examples.iter().map(|e| &e.prefix[..]).collect();
        let labels: Vec<usize> = examples.iter().map(|e| e.target.label).collect();
        let batch = PaddedBatch::from_prefixes(&prefixes, stats, k);

        let (encoded, enc_cache) = self.encoder.forward(&batch, dropout, rng.as_deref_mut());
        let (branch, branch_cache) = self
            .label_branch
            .forward(&one_hot_rows(&labels, k), Activation::Relu);
        let (branch, branch_drop) = maybe_dropout(&branch, dropout, &mut rng);
        let features = Matrix::hstack(&encoded, &branch);
        let (mu, mu_cache) = self.mu_head.forward(&features, Activation::Identity);
        let (sigma, sigma_cache) = self.sigma_head.forward(&features, Activation::Exponential);

        let m = examples.len() as f64;
        let mut loss = 0.0;
        let mut d_mu = Matrix::zeros(examples.len(), 1);
        let mut d_sigma = Matrix::zeros(examples.len(), 1);
        for (i, e) in examples.iter().enumerate() {
            let target = stats.standardize(e.target.length as f64);
            let (mu_i, sigma_i) = (mu.get(i, 0), sigma.get(i, 0));
            loss += gaussian_nll(target, mu_i, sigma_i);
            let var = sigma_i * sigma_i;
            let resid = target - mu_i;
            d_mu.set(i, 0, -resid / var / m);
            // ∂/∂σ of log σ + r²/(2σ²)
            d_sigma.set(i, 0, (1.0 / sigma_i - resid * resid / (var * sigma_i)) / m);
        }

        let mut grads = Self::zeros(k, h);
        let mut d_features = self.mu_head.backward(&mu_cache, &d_mu, &mut grads.mu_head);
        d_features.add_assign(&self.sigma_head.backward(&sigma_cache, &d_sigma, &mut grads.sigma_head));
        let (d_encoded, d_branch) = d_features.hsplit(h);
        let d_branch = branch_drop.backward(&d_branch);
        self.label_branch
            .backward(&branch_cache, &d_branch, &mut grads.label_branch);
        self.encoder
            .backward(&enc_cache, &d_encoded, &mut grads.encoder);
        (loss / m, grads)
    }
}

impl Parameterized for LengthModel {
    fn parameters(&self) -> Vec<(String, &Matrix)> {
        prefixed("encoder", self.encoder.parameters())
            .chain(prefixed("label_branch", self.label_branch.parameters()))
            .chain(prefixed("mu_head", self.mu_head.parameters()))
            .chain(prefixed("sigma_head", self.sigma_head.parameters()))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.label_branch.parameters_mut());
        out.extend(self.mu_head.parameters_mut());
        out.extend(self.sigma_head.parameters_mut());
        out
    }
}
