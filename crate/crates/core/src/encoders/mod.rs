//! Input representations and label-embedding tables.

mod label_table;
mod model;
pub mod tokenizer;

pub use label_table::{
    attach_descriptions, init_label_table, load_label_descriptions, parse_label_descriptions, random_init_range,
    LabelEmbeddingTable, TableProvenance, DEFAULT_DESCRIPTIONS, LABEL_INIT_STREAM,
};
pub use model::{EncoderGrads, EncoderState, ForwardCache, CHECKPOINT_DIR_ENV};
pub use tokenizer::{TokenizedInput, Tokenizer};
