//! Embedding files, manifests, paired datasets and the synthetic benchmark.

mod corpus;
mod emb1;
mod pairs;
mod synth;

pub use corpus::{
    load_corpus, read_relevance, write_relevance, CorpusManifest, QueryEntry, Relevance, RetrievalCorpus,
};
pub(crate) use corpus::{read_json, write_json};
pub use emb1::{
    decode_emb1, encode_emb1, read_emb1, read_emb1_f64, write_emb1, write_emb1_f64, EmbeddingSet, DTYPE_F32,
    DTYPE_F64, MAGIC, VERSION,
};
pub use pairs::{
    build_pairs, concat_pairs, load_pair_manifest, load_pairs, sample_split, save_pairs, PairManifest,
    PairedDataset,
};
pub use synth::{synth_generate, SynthConfig, SynthOutput, SyntheticTruth, TruthKind};
