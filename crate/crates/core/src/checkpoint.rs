//! Versioned JSON container for trained models.
//!
//! Every file carries a format tag, a version, the label vocabulary with its
//! SHA-256 content hash, and the length statistics used during training. The
//! `kind` field selects the payload:
//!
//! * `action`, `length`: `hidden_size` plus `tensors`, a list of
//!   `{name, shape: [rows, cols], data}` in row-major order.
//! * `ngram`: `order`, `tables` (one `{context, counts}` entry per seen
//!   context; `null` in a context is the start token), and `class_lengths`.
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! exact and equal models produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionModel, LengthModel};
use crate::ngram::{BaselineModel, ClassGaussianTable, NGramModel, Token};
use crate::nn::{Matrix, Parameterized};
use crate::segment::{LabelVocabulary, LengthStats};

pub const FORMAT: &str = "anticipation-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramEntry {
    pub context: Vec<Option<usize>>,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Action { hidden_size: usize, tensors: Vec<Tensor> },
    Length { hidden_size: usize, tensors: Vec<Tensor> },
    Ngram {
        order: usize,
        tables: Vec<NGramEntry>,
        class_lengths: ClassGaussianTable,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Action { .. } => "action",
            Payload::Length { .. } => "length",
            Payload::Ngram { .. } => "ngram",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub vocabulary: Vec<String>,
    pub vocabulary_hash: String,
    pub length_stats: LengthStats,
    #[serde(flatten)]
    pub payload: Payload,
}

fn tensors(model: &impl Parameterized) -> Vec<Tensor> {
    model
        .parameters()
        .into_iter()
        .map(|(name, m)| Tensor {
            name,
            shape: [m.rows(), m.cols()],
            data: m.data().to_vec(),
        })
        .collect()
}

/// Copies `tensors` into `model`, requiring the same names, order and shapes.
fn restore<M: Parameterized>(mut model: M, tensors: &[Tensor]) -> Result<M> {
    let names: Vec<(String, (usize, usize))> = model
        .parameters()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    if names.len() != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            names.len(),
            tensors.len()
        )));
    }
    for ((name, shape), (slot, t)) in names.iter().zip(model.parameters_mut().into_iter().zip(tensors)) {
        if &t.name != name || (t.shape[0], t.shape[1]) != *shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} {:?} does not match expected {name} {shape:?}",
                t.name, t.shape
            )));
        }
        if t.data.len() != shape.0 * shape.1 {
            return Err(Error::Checkpoint(format!("tensor {name} has wrong element count")));
        }
        *slot = Matrix::from_vec(shape.0, shape.1, t.data.clone());
    }
    Ok(model)
}

fn encode_token(t: &Token) -> Option<usize> {
    match t {
        Token::Start => None,
        Token::Label(l) => Some(*l),
    }
}

fn decode_token(t: &Option<usize>) -> Token {
    t.map_or(Token::Start, Token::Label)
}

impl Checkpoint {
    fn with_payload(vocab: &LabelVocabulary, stats: LengthStats, payload: Payload) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            vocabulary: vocab.names().to_vec(),
            vocabulary_hash: vocab.content_hash(),
            length_stats: stats,
            payload,
        }
    }

    pub fn from_action(model: &ActionModel, vocab: &LabelVocabulary, stats: LengthStats) -> Self {
        Self::with_payload(
            vocab,
            stats,
            Payload::Action {
                hidden_size: model.hidden_size(),
                tensors: tensors(model),
            },
        )
    }

    pub fn from_length(model: &LengthModel, vocab: &LabelVocabulary, stats: LengthStats) -> Self {
        Self::with_payload(
            vocab,
            stats,
            Payload::Length {
                hidden_size: model.hidden_size(),
                tensors: tensors(model),
            },
        )
    }

    pub fn from_baseline(model: &BaselineModel, vocab: &LabelVocabulary) -> Self {
        let tables = model
            .ngram
            .tables()
            .iter()
            .flat_map(|t| t.iter())
            .map(|(ctx, counts)| NGramEntry {
                context: ctx.iter().map(encode_token).collect(),
                counts: counts.clone(),
            })
            .collect();
        Self::with_payload(
            vocab,
            model.fallback,
            Payload::Ngram {
                order: model.ngram.order(),
                tables,
                class_lengths: model.lengths.clone(),
            },
        )
    }

    fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn action_model(&self) -> Result<ActionModel> {
        match &self.payload {
            Payload::Action { hidden_size, tensors } => {
                restore(ActionModel::zeros(self.vocab_size(), *hidden_size), tensors)
            }
            other => Err(Error::Checkpoint(format!("expected an action checkpoint, found {}", other.kind()))),
        }
    }

    pub fn length_model(&self) -> Result<LengthModel> {
        match &self.payload {
            Payload::Length { hidden_size, tensors } => {
                restore(LengthModel::zeros(self.vocab_size(), *hidden_size), tensors)
            }
            other => Err(Error::Checkpoint(format!("expected a length checkpoint, found {}", other.kind()))),
        }
    }

    pub fn baseline_model(&self) -> Result<BaselineModel> {
        let Payload::Ngram {
            order,
            tables,
            class_lengths,
        } = &self.payload
        else {
            return Err(Error::Checkpoint(format!(
                "expected an ngram checkpoint, found {}",
                self.payload.kind()
            )));
        };
        let k = self.vocab_size();
        if *order == 0 {
            return Err(Error::Checkpoint("n-gram order must be positive".into()));
        }
        let mut by_len = vec![std::collections::BTreeMap::new(); *order];
        for entry in tables {
            let n = entry.context.len();
            if n >= *order || entry.counts.len() != k || entry.context.iter().flatten().any(|&l| l >= k) {
                return Err(Error::Checkpoint("malformed n-gram table entry".into()));
            }
            by_len[n].insert(entry.context.iter().map(decode_token).collect(), entry.counts.clone());
        }
        if class_lengths.classes.len() != k {
            return Err(Error::Checkpoint("class length table does not match vocabulary".into()));
        }
        Ok(BaselineModel {
            ngram: NGramModel::from_tables(*order, k, by_len),
            lengths: class_lengths.clone(),
            fallback: self.length_stats,
        })
    }

    /// Refuses a checkpoint trained on a different label set.
    pub fn check_vocabulary(&self, vocab: &LabelVocabulary) -> Result<()> {
        let corpus = vocab.content_hash();
        if self.vocabulary_hash != corpus {
            return Err(Error::VocabularyMismatch {
                checkpoint: self.vocabulary_hash.clone(),
                corpus,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint: format {:?}", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        let vocab = LabelVocabulary::new(ckpt.vocabulary.iter().cloned())
            .map_err(|e| Error::Checkpoint(format!("bad vocabulary: {e}")))?;
        if vocab.content_hash() != ckpt.vocabulary_hash {
            return Err(Error::Checkpoint("vocabulary hash does not match the stored labels".into()));
        }
        LengthStats::new(ckpt.length_stats.mean, ckpt.length_stats.std)
            .map_err(|e| Error::Checkpoint(format!("bad length statistics: {e}")))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
