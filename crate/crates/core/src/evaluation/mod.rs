//! Ranking with exclusion protocols, CMC/mAP, bias probes, same-bias
//! rank statistics and bias-weight sweeps.

mod probe;
mod ranking;
mod report;
mod stats;
mod sweep;

pub use probe::{probe_accuracy, probe_bias, train_probe, Probe, ProbeConfig, ProbeOutcome};
pub use ranking::{cmc_map, rank_gallery, Protocol, RankResult, RankedQuery, RetrievalMetrics};
pub use report::{curves_csv, evaluate, ChannelReport, EvalConfig, EvalReport};
pub use stats::{nauc, same_bias_rank_prob, Polarity};
pub use sweep::{lambda_sweep, write_sweep_csv, SweepRow, DEFAULT_SWEEP, SWEEP_HEADER};
