//! The two networks: next-label classifier and next-length Gaussian.

mod action;
mod encoder;
#[cfg(test)]
mod gradcheck;
mod length;
mod train;

pub use action::ActionModel;
pub use encoder::{decode_segment, encode_prefix, encode_segment, one_hot_rows, PaddedBatch, SequenceEncoder};
pub use length::{gaussian_nll, GaussianPrediction, LengthModel};
pub use train::{
    train_action_model, train_length_model, train_model, EpochRecord, TrainConfig, Trainable,
};
