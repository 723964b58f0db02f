//! Small numerical substrate for the two sequence models: dense layers, GRU
//! cells, inverted dropout, hand-derived backward passes and Adam.
//!
//! Every forward function that takes part in training returns a cache (the
//! computation record); the matching backward function consumes it, so a
//! backward call without a preceding forward does not type-check.

mod adam;
mod dense;
mod dropout;
mod gru;
mod matrix;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use dense::{softmax_in_place, Activation, Dense, DenseCache};
pub use dropout::{dropout_apply, DropoutMask};
pub use gru::{GruCell, GruSequenceCache, GruStepCache};
pub use matrix::{dot, Matrix};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// RNG used for initialization and dropout.
pub type ModelRng = ChaCha8Rng;

/// Anything that owns trainable matrices. Both methods must list the
/// parameters in the same order; optimizers and checkpoints rely on it.
pub trait Parameterized {
    fn parameters(&self) -> Vec<(String, &Matrix)>;
    fn parameters_mut(&mut self) -> Vec<&mut Matrix>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, m)| m.data().len()).sum()
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    params: Vec<(String, &'a Matrix)>,
) -> impl Iterator<Item = (String, &'a Matrix)> + 'a {
    let prefix = prefix.to_string();
    params
        .into_iter()
        .map(move |(name, m)| (format!("{prefix}.{name}"), m))
}

/// Uniform in `±sqrt(1 / fan_in)`.
pub(crate) fn uniform_init<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Matrix {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
