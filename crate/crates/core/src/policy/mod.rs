//! Small autoregressive composition policy: vocabulary, a fixed-window MLP
//! language model, SFT and DPO training, sampling and KL diagnostics.

mod kl;
mod model;
mod train;
mod vocab;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use kl::{kl_compare, kl_divergence, kl_per_token, KlCompareRow, KlTrace};
pub use model::{PolicyParams, PolicyShape};
pub use train::{
    dpo_loss, sft_loss, train_dpo, train_sft, write_train_log, DpoConfig, DpoOutput, PreferenceExample, SftConfig,
    TrainLogRow,
};
pub use vocab::{Vocab, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("sequence of length {len} is too short; need at least 2 tokens")]
    SequenceTooShort { len: usize },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("policy shapes differ")]
    ShapeMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Vocabulary plus parameters, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub vocab: Vocab,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn new(vocab: Vocab, params: PolicyParams) -> Result<Checkpoint, PolicyError> {
        let ck = Checkpoint { version: CHECKPOINT_VERSION, vocab, params };
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<(), PolicyError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.vocab.len() != self.params.shape.vocab_size {
            return Err(PolicyError::Checkpoint(format!(
                "vocabulary has {} tokens, parameters expect {}",
                self.vocab.len(),
                self.params.shape.vocab_size
            )));
        }
        if self.params.data.len() != self.params.shape.n_params() {
            return Err(PolicyError::Checkpoint("parameter array length does not match the shape".into()));
        }
        self.params.check_finite()
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), PolicyError> {
        let mut w = std::io::BufWriter::new(writer);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Checkpoint, PolicyError> {
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(reader))?;
        ck.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::ElementTable;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let vocab = Vocab::for_elements(&ElementTable::default_table());
        let shape = PolicyShape { vocab_size: vocab.len(), window: 4, embed_dim: 3, hidden: 5 };
        let params = PolicyParams::random(shape, PAD_ID, EOS_ID, 0.3, 9).unwrap();
        let ck = Checkpoint::new(vocab, params).unwrap();
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        assert_eq!(Checkpoint::read(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn checkpoint_rejects_mismatched_vocab() {
        let vocab = Vocab::for_elements(&ElementTable::default_table());
        let shape = PolicyShape { vocab_size: 5, window: 1, embed_dim: 1, hidden: 1 };
        let params = PolicyParams::init(shape, PAD_ID, EOS_ID, 0).unwrap();
        assert!(matches!(Checkpoint::new(vocab, params), Err(PolicyError::Checkpoint(_))));
    }
}
