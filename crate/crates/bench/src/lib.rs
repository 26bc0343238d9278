//! Fixtures shared by the benchmarks.

use reidbias::numerics::EncoderShape;
use reidbias::pipeline::{prepare_synthetic, DEFAULT_QUERY_FRACTION, EVAL_SPLITS};
use reidbias::{embed_all, rng, Dataset, EmbeddingSet, EncoderParams, GeneratorConfig};

/// Default synthetic dataset with query/gallery split.
pub fn dataset() -> Dataset {
    prepare_synthetic(&GeneratorConfig::default(), 0, DEFAULT_QUERY_FRACTION)
        .expect("default preset generates")
        .dataset
}

/// Freshly initialised encoder of the default branch shape.
pub fn encoder(input: usize) -> EncoderParams {
    EncoderParams::init(&EncoderShape::new(input, vec![64, 64], 64), &mut rng::stream(0, "init"))
        .expect("valid shape")
}

/// Query and gallery embeddings of `ds` under a fresh encoder.
pub fn embeddings(ds: &Dataset) -> EmbeddingSet {
    embed_all(&encoder(ds.dim()), ds, EVAL_SPLITS, "bench").expect("dims match")
}
