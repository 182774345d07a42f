//! Token embeddings, BiLSTM and CNN sequence encoders, the deep residual
//! question encoder and the character-trigram featurizer.

mod cnn;
mod deep;
mod embedding;
mod lstm;
mod trigram;
mod vocab;

pub use cnn::{cnn_encode, CnnLayer};
pub use deep::{combine_layers, encode_question_deep, QuestionEncoding, ResidualVariant};
pub use embedding::{load_pretrained, EmbeddingTable, PretrainedEmbeddings};
pub use lstm::{run_bilstm, BiLstmLayer, BiLstmOutput, LstmCell, LstmState};
pub use trigram::{TrigramCounts, TrigramHasher, DEFAULT_TRIGRAM_BUCKETS};
pub use vocab::{Vocabulary, ENTITY_TOKEN, PAD_TOKEN, UNK_TOKEN};

pub(crate) use trigram::fnv1a64;
