use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Split;
use crate::embedder::EmbeddingSet;
use crate::error::{Error, Result};

/// Which gallery items are removed before scoring a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Drop items with the query's identity and camera.
    Standard,
    /// Also drop wrong-identity items sharing the query's label on a channel.
    NoBias(String),
}

impl Protocol {
    pub fn parse(name: &str, channel: Option<&str>) -> Result<Self> {
        match (name, channel) {
            ("standard", _) => Ok(Protocol::Standard),
            ("nobias", Some(ch)) => Ok(Protocol::NoBias(ch.to_string())),
            ("nobias", None) => Err(Error::config("protocol `nobias` needs a channel")),
            (other, _) => Err(Error::config(format!(
                "unknown protocol `{other}` (expected standard or nobias)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Standard => "standard",
            Protocol::NoBias(_) => "nobias",
        }
    }

    pub fn channel(&self) -> Option<&str> {
        match self {
            Protocol::Standard => None,
            Protocol::NoBias(c) => Some(c),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Standard => f.write_str("standard"),
            Protocol::NoBias(c) => write!(f, "nobias({c})"),
        }
    }
}

/// Ranked gallery of one query. All vectors are in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedQuery {
    /// Row of the query in the embedding set.
    pub query: usize,
    /// Rows of the retained gallery items.
    pub gallery: Vec<usize>,
    pub distances: Vec<f64>,
    pub positive: Vec<bool>,
    /// Per channel of `RankResult::channels`: item shares the query's label.
    pub same_bias: Vec<Vec<bool>>,
}

impl RankedQuery {
    pub fn len(&self) -> usize {
        self.gallery.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gallery.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub protocol: Protocol,
    pub channels: Vec<String>,
    pub queries: Vec<RankedQuery>,
    /// Queries left without any positive after exclusion.
    pub dropped: usize,
}

impl RankResult {
    pub fn channel_index(&self, channel: &str) -> Result<usize> {
        self.channels.iter().position(|c| c == channel).ok_or_else(|| {
            Error::config(format!(
                "unknown bias channel `{channel}` (available: {})",
                self.channels.join(", ")
            ))
        })
    }

    pub fn max_len(&self) -> usize {
        self.queries.iter().map(RankedQuery::len).max().unwrap_or(0)
    }
}

/// Ranks the gallery rows for every query row by squared Euclidean distance.
pub fn rank_gallery(emb: &EmbeddingSet, protocol: &Protocol) -> Result<RankResult> {
    let queries = emb.rows_of(Split::Query);
    let gallery = emb.rows_of(Split::Gallery);
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::Evaluation(format!(
            "need query and gallery rows, have {} and {}",
            queries.len(),
            gallery.len()
        )));
    }
    let channels = emb.channel_names();
    let labels = channels
        .iter()
        .map(|c| emb.labels(c))
        .collect::<Result<Vec<_>>>()?;
    let exclusion = match protocol {
        Protocol::Standard => None,
        Protocol::NoBias(c) => Some(
            channels
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::config(format!("unknown bias channel `{c}`")))?,
        ),
    };

    let mut out = Vec::with_capacity(queries.len());
    let mut dropped = 0;
    for &q in &queries {
        let mut kept: Vec<(f64, usize)> = gallery
            .iter()
            .filter(|&&g| {
                let same_id = emb.ids[g] == emb.ids[q];
                if same_id && emb.cameras[g] == emb.cameras[q] {
                    return false;
                }
                match exclusion {
                    Some(c) => same_id || labels[c][g] != labels[c][q],
                    None => true,
                }
            })
            .map(|&g| (emb.sq_dist(q, g), g))
            .collect();
        if !kept.iter().any(|&(_, g)| emb.ids[g] == emb.ids[q]) {
            dropped += 1;
            continue;
        }
        kept.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.push(RankedQuery {
            query: q,
            distances: kept.iter().map(|k| k.0).collect(),
            positive: kept.iter().map(|k| emb.ids[k.1] == emb.ids[q]).collect(),
            same_bias: labels
                .iter()
                .map(|l| kept.iter().map(|k| l[k.1] == l[q]).collect())
                .collect(),
            gallery: kept.into_iter().map(|k| k.1).collect(),
        });
    }
    Ok(RankResult {
        protocol: protocol.clone(),
        channels,
        queries: out,
        dropped,
    })
}

/// CMC curve and mean average precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    /// `cmc[k - 1]` is the fraction of queries with a positive in the top k.
    pub cmc: Vec<f64>,
    pub map: f64,
    pub n_queries: usize,
}

impl RetrievalMetrics {
    /// Rank-k accuracy; ranks past the longest list saturate.
    pub fn rank(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks start at 1");
        self.cmc[(k - 1).min(self.cmc.len() - 1)]
    }
}

pub fn cmc_map(rr: &RankResult) -> Result<RetrievalMetrics> {
    let n = rr.queries.len();
    if n == 0 {
        return Err(Error::Evaluation("no query retained after exclusion".into()));
    }
    let mut first_hit = vec![0usize; rr.max_len()];
    let mut ap_sum = 0.0;
    for q in &rr.queries {
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (r, &pos) in q.positive.iter().enumerate() {
            if pos {
                if hits == 0 {
                    first_hit[r] += 1;
                }
                hits += 1;
                precision_sum += hits as f64 / (r + 1) as f64;
            }
        }
        ap_sum += precision_sum / hits as f64;
    }
    let mut cmc = Vec::with_capacity(first_hit.len());
    let mut acc = 0usize;
    for h in first_hit {
        acc += h;
        cmc.push(acc as f64 / n as f64);
    }
    Ok(RetrievalMetrics {
        cmc,
        map: ap_sum / n as f64,
        n_queries: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Channel;
    use crate::numerics::Matrix;

    /// Rows: (id, camera, pose, split, embedding value on a line).
    fn set(rows: &[(u32, u32, u32, Split, f64)]) -> EmbeddingSet {
        let m = Matrix::from_rows(&rows.iter().map(|r| vec![r.4]).collect::<Vec<_>>()).unwrap();
        EmbeddingSet::new(
            m,
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            vec![Channel {
                name: "pose".into(),
                classes: vec!["a".into(), "b".into()],
            }],
            rows.iter().map(|r| vec![r.2]).collect(),
            rows.iter().map(|r| r.3).collect(),
            "t",
        )
        .unwrap()
    }

    use Split::{Gallery as G, Query as Q};

    #[test]
    fn standard_drops_same_id_same_camera() {
        let e = set(&[(1, 1, 0, Q, 0.0), (1, 1, 0, G, 0.1), (1, 2, 0, G, 0.3), (2, 1, 0, G, 0.2)]);
        let rr = rank_gallery(&e, &Protocol::Standard).unwrap();
        assert_eq!(rr.queries[0].gallery, vec![3, 2]);
        assert_eq!(rr.queries[0].positive, vec![false, true]);
    }

    #[test]
    fn nobias_keeps_only_positives_when_negatives_share_pose() {
        let e = set(&[(1, 1, 0, Q, 0.0), (1, 2, 1, G, 0.5), (2, 1, 0, G, 0.1), (3, 2, 0, G, 0.2)]);
        let rr = rank_gallery(&e, &Protocol::NoBias("pose".into())).unwrap();
        assert_eq!(rr.queries[0].gallery, vec![1]);
    }

    #[test]
    fn ties_break_by_gallery_index() {
        let e = set(&[(1, 1, 0, Q, 0.0), (2, 2, 0, G, 1.0), (1, 2, 0, G, -1.0), (3, 2, 0, G, 1.0)]);
        let rr = rank_gallery(&e, &Protocol::Standard).unwrap();
        assert_eq!(rr.queries[0].gallery, vec![1, 2, 3]);
    }

    #[test]
    fn query_without_positive_is_dropped() {
        let e = set(&[(1, 1, 0, Q, 0.0), (1, 1, 0, G, 0.1), (2, 1, 0, G, 0.2), (2, 2, 0, Q, 0.0)]);
        let rr = rank_gallery(&e, &Protocol::Standard).unwrap();
        assert_eq!(rr.dropped, 1);
        assert_eq!(rr.queries.len(), 1);
        assert!(rank_gallery(&set(&[(1, 1, 0, G, 0.0)]), &Protocol::Standard).is_err());
    }

    #[test]
    fn metric_hand_cases() {
        let e = set(&[(1, 1, 0, Q, 0.0), (1, 2, 0, G, 0.1), (1, 3, 0, G, 0.2)]);
        let m = cmc_map(&rank_gallery(&e, &Protocol::Standard).unwrap()).unwrap();
        assert_eq!((m.rank(1), m.map), (1.0, 1.0));

        let e = set(&[(1, 1, 0, Q, 0.0), (2, 2, 0, G, 0.1), (1, 2, 0, G, 0.2), (3, 2, 0, G, 0.3)]);
        let m = cmc_map(&rank_gallery(&e, &Protocol::Standard).unwrap()).unwrap();
        assert_eq!(m.rank(1), 0.0);
        assert_eq!(m.rank(2), 1.0);
        assert_eq!(m.rank(10), 1.0);
        assert!((m.map - 0.5).abs() < 1e-15);
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!(Protocol::parse("standard", None).unwrap(), Protocol::Standard);
        assert_eq!(
            Protocol::parse("nobias", Some("pose")).unwrap().to_string(),
            "nobias(pose)"
        );
        assert!(Protocol::parse("nobias", None).is_err());
        assert!(Protocol::parse("loose", None).is_err());
    }
}
