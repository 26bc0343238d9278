use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalConfig};
use crate::dataset::Dataset;
use crate::embedder::embed_all;
use crate::error::{Error, Result};
use crate::losses::Mode;
use crate::pipeline::EVAL_SPLITS;
use crate::trainer::{train_branch, BranchConfig};

/// Bias weights of the reference sweep.
pub const DEFAULT_SWEEP: [f64; 4] = [0.005, 0.01, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_db: f64,
    pub rank1: f64,
    pub map: f64,
    pub probe_accuracy: Option<f64>,
    /// nauc of the same-bias negative curve on the branch's bias channel.
    pub nauc: f64,
}

pub const SWEEP_HEADER: &str = "lambda_db,rank1,map,probe_accuracy,nauc";

/// Trains, embeds and evaluates one branch per bias weight. Every row uses
/// the seeds of `base`, so rows differ only in `lambda_db`.
pub fn lambda_sweep(
    ds: &Dataset,
    base: &BranchConfig,
    mode: Mode,
    lambdas: &[f64],
    eval: &EvalConfig,
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::config("lambda list is empty"));
    }
    let channel = base.bias_channel.clone();
    let eval = EvalConfig {
        channels: Some(vec![channel.clone()]),
        ..eval.clone()
    };
    lambdas
        .iter()
        .map(|&lambda_db| {
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.weights.lambda_db = lambda_db;
            let (params, _) = train_branch(ds, &cfg)?;
            let emb = embed_all(&params, ds, EVAL_SPLITS, &format!("{mode}:{lambda_db}"))?;
            let report = evaluate(&emb, &eval)?;
            let ch = &report.channels[0];
            Ok(SweepRow {
                lambda_db,
                rank1: report.rank1,
                map: report.map,
                probe_accuracy: ch.probe_accuracy,
                nauc: ch.nauc_neg,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    let mut text = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let acc = r.probe_accuracy.map(|a| a.to_string()).unwrap_or_default();
        text += &format!("{},{},{},{acc},{}\n", r.lambda_db, r.rank1, r.map, r.nauc);
    }
    out.write_all(text.as_bytes())
        .map_err(|e| Error::data(format!("writing sweep table: {e}")))
}
