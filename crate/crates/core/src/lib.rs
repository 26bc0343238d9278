//! Bias-controlled triplet training for re-identification embeddings.
//!
//! A bias-reducing branch is trained to keep identity information while
//! pushing apart samples that share a bias label (pose, camera, ...); a
//! bias-enhancing branch pulls them together. The two embeddings are
//! concatenated at inference. The evaluation side measures how much bias
//! the embeddings carry: exclusion protocols, linear probes and same-bias
//! rank statistics.

pub mod config;
pub mod dataset;
pub mod embedder;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod trainer;

pub use dataset::{Batch, Channel, Dataset, GeneratorConfig, Preset, Sample, Split};
pub use embedder::{concat, embed_all, EmbeddingSet};
pub use error::{Error, Result};
pub use evaluation::{evaluate, EvalConfig, EvalReport, Protocol, RankResult};
pub use losses::{LossWeights, Mode};
pub use numerics::{EncoderParams, Matrix};
pub use trainer::{train_branch, BranchConfig, Checkpoint, TrainLog, Trainer};
