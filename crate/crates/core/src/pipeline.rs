//! Glue shared by the command line and the experiment tests.

use crate::dataset::{generate_synthetic, split_query_gallery, GeneratorConfig, Split, SplitOutcome};
use crate::error::Result;
use crate::rng;

/// Splits embedded for evaluation.
pub const EVAL_SPLITS: &[Split] = &[Split::Query, Split::Gallery];

/// Share of each held-out identity's samples used as queries.
pub const DEFAULT_QUERY_FRACTION: f64 = 0.25;

/// Generates a synthetic dataset and tags its held-out samples as query or
/// gallery.
pub fn prepare_synthetic(cfg: &GeneratorConfig, seed: u64, query_fraction: f64) -> Result<SplitOutcome> {
    let ds = generate_synthetic(cfg, seed)?;
    split_query_gallery(&ds, query_fraction, &mut rng::stream(seed, "split"))
}
