//! Tokenization, the embedding table with placeholder management, and the
//! text encoder producing conditioning vectors.

mod embedding;
mod encoder;
mod vocab;

pub use embedding::{add_placeholder, EmbeddingTable, PlaceholderInit};
pub use encoder::{encode_text, TextEncoder, TextEncoderGrads, TextTrace};
pub use vocab::{split_words, Vocab, UNK, UNK_ID};

/// Tokenize `prompt` against `vocab`.
pub fn tokenize(prompt: &str, vocab: &Vocab) -> Vec<usize> {
    vocab.tokenize(prompt)
}
