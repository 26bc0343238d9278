use serde::{Deserialize, Serialize};

use super::RankResult;
use crate::error::{Error, Result};

/// Which identity relation to the query is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

/// `curve[r - 1]`: among queries with at least r retained items, the share
/// whose rank-r item has the requested polarity and shares the query's
/// label on `channel`.
pub fn same_bias_rank_prob(
    rr: &RankResult,
    channel: &str,
    polarity: Polarity,
    ranks: usize,
) -> Result<Vec<f64>> {
    let c = rr.channel_index(channel)?;
    if ranks == 0 {
        return Err(Error::config("rank count must be at least 1"));
    }
    if ranks > rr.max_len() {
        return Err(Error::Evaluation(format!(
            "{ranks} ranks requested, longest retained list has {}",
            rr.max_len()
        )));
    }
    let want_positive = polarity == Polarity::Positive;
    Ok((0..ranks)
        .map(|r| {
            let mut eligible = 0usize;
            let mut hits = 0usize;
            for q in rr.queries.iter().filter(|q| q.len() > r) {
                eligible += 1;
                if q.positive[r] == want_positive && q.same_bias[c][r] {
                    hits += 1;
                }
            }
            hits as f64 / eligible as f64
        })
        .collect())
}

/// Mean of the first `k` curve values.
pub fn nauc(curve: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > curve.len() {
        return Err(Error::config(format!(
            "nauc over {k} ranks of a {}-point curve",
            curve.len()
        )));
    }
    Ok(curve[..k].iter().sum::<f64>() / k as f64)
}
