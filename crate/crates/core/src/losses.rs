//! Pairwise distances, hard/easy pair mining and the triplet objectives.
//!
//! All losses are sums over anchors of hinge terms
//! `m + d(a, pos) - d(a, neg)` on squared Euclidean distances. The re-ID loss
//! mines the hardest pair per anchor by identity; the bias loss mines the
//! easiest pair per anchor by bias class, ignoring identity. Gradients are
//! exact subgradients through the selected pairs, ties broken by lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};

/// Squared Euclidean distances between all rows.
pub fn pairwise_sqdist(embeddings: &Matrix) -> Matrix {
    let n = embeddings.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(embeddings.row(i), embeddings.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// The pair chosen for one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub positive: usize,
    pub negative: usize,
    /// `m + d(a, positive) - d(a, negative)`.
    pub argument: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Matrix,
    /// Per anchor; `None` when the anchor had no valid pair.
    pub selections: Vec<Option<Selection>>,
    pub skipped: usize,
}

impl LossOutput {
    /// Fraction of scored anchors whose hinge argument is positive.
    pub fn active_fraction(&self) -> f64 {
        let scored = self.selections.iter().flatten().count();
        if scored == 0 {
            return 0.0;
        }
        self.selections.iter().flatten().filter(|s| s.active).count() as f64 / scored as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pick {
    Min,
    Max,
}

/// Index in `candidates` optimising `dist[anchor, .]`; first index wins ties.
fn pick(dist: &Matrix, anchor: usize, candidates: impl Iterator<Item = usize>, how: Pick) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in candidates {
        let d = dist[(anchor, j)];
        let better = match best {
            None => true,
            Some((_, b)) => match how {
                Pick::Min => d < b,
                Pick::Max => d > b,
            },
        };
        if better {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

fn check_inputs<L>(embeddings: &Matrix, labels: &[L], margin: f64) -> Result<()> {
    if labels.len() != embeddings.rows() {
        return Err(Error::config(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embeddings.rows()
        )));
    }
    if !margin.is_finite() {
        return Err(Error::config("margin must be finite"));
    }
    if !embeddings.is_finite() {
        return Err(Error::data("non-finite embeddings"));
    }
    Ok(())
}

/// Adds the subgradient of `d(a,p) - d(a,n)` scaled by `scale`.
fn accumulate(grads: &mut Matrix, e: &Matrix, a: usize, p: usize, n: usize, scale: f64) {
    let dim = e.cols();
    for k in 0..dim {
        let dp = 2.0 * (e[(a, k)] - e[(p, k)]) * scale;
        let dn = 2.0 * (e[(a, k)] - e[(n, k)]) * scale;
        grads[(a, k)] += dp - dn;
        grads[(p, k)] -= dp;
        grads[(n, k)] += dn;
    }
}

struct Mining {
    positive: Pick,
    negative: Pick,
}

fn mined_loss<L: PartialEq>(
    embeddings: &Matrix,
    labels: &[L],
    margin: f64,
    mining: Mining,
    hinge: bool,
) -> (LossOutput, Vec<usize>) {
    let n = embeddings.rows();
    let dist = pairwise_sqdist(embeddings);
    let mut grads = Matrix::zeros(n, embeddings.cols());
    let mut selections = Vec::with_capacity(n);
    let mut missing = Vec::new();
    let mut value = 0.0;
    for a in 0..n {
        let pos = pick(
            &dist,
            a,
            (0..n).filter(|&j| j != a && labels[j] == labels[a]),
            mining.positive,
        );
        let neg = pick(&dist, a, (0..n).filter(|&j| labels[j] != labels[a]), mining.negative);
        let (Some(p), Some(q)) = (pos, neg) else {
            selections.push(None);
            missing.push(a);
            continue;
        };
        let argument = margin + dist[(a, p)] - dist[(a, q)];
        let active = argument > 0.0;
        if active || !hinge {
            value += argument;
            accumulate(&mut grads, embeddings, a, p, q, 1.0);
        }
        selections.push(Some(Selection {
            positive: p,
            negative: q,
            argument,
            active,
        }));
    }
    let skipped = missing.len();
    (
        LossOutput {
            value,
            grads,
            selections,
            skipped,
        },
        missing,
    )
}

/// Batch-hard triplet loss: farthest same-label positive, nearest
/// different-label negative per anchor.
pub fn reid_hard_loss<L: PartialEq>(embeddings: &Matrix, ids: &[L], margin: f64) -> Result<LossOutput> {
    check_inputs(embeddings, ids, margin)?;
    let (out, missing) = mined_loss(
        embeddings,
        ids,
        margin,
        Mining {
            positive: Pick::Max,
            negative: Pick::Min,
        },
        true,
    );
    if let Some(&a) = missing.first() {
        return Err(Error::BatchComposition(format!(
            "anchor {a} lacks a positive or a negative ({} anchors affected)",
            missing.len()
        )));
    }
    Ok(out)
}

/// Easy-pair bias loss: nearest same-class sample and farthest different-class
/// sample per anchor, regardless of identity.
///
/// Anchors without both kinds of partner are skipped and counted. With
/// `hinge = false` the `[.]_+` is dropped and every scored anchor contributes
/// its raw argument.
pub fn bias_easy_loss<L: PartialEq>(
    embeddings: &Matrix,
    bias: &[L],
    margin: f64,
    hinge: bool,
) -> Result<LossOutput> {
    check_inputs(embeddings, bias, margin)?;
    let (out, _) = mined_loss(
        embeddings,
        bias,
        margin,
        Mining {
            positive: Pick::Min,
            negative: Pick::Max,
        },
        hinge,
    );
    if out.skipped == embeddings.rows() {
        return Err(Error::BatchComposition(
            "no anchor has both a same-bias and a different-bias partner".into(),
        ));
    }
    Ok(out)
}

/// Sign applied to the bias term of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Maximise the bias loss: suppress bias-related components.
    Reduce,
    /// Minimise the bias loss: amplify bias-related components.
    Enhance,
}

impl Mode {
    pub fn sign(self) -> f64 {
        match self {
            Mode::Reduce => -1.0,
            Mode::Enhance => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reduce => "reduce",
            Mode::Enhance => "enhance",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "reduce" => Ok(Mode::Reduce),
            "enhance" => Ok(Mode::Enhance),
            other => Err(format!("unknown mode `{other}` (reduce|enhance)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weights and margins of the combined objective. Both weights are stored
/// non-negative; the sign of the bias term comes from [`Mode`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dr: f64,
    pub lambda_db: f64,
    pub margin_dr: f64,
    pub margin_db: f64,
    pub bias_hinge: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dr: 1.0,
            lambda_db: 0.01,
            margin_dr: 0.3,
            margin_db: 0.3,
            bias_hinge: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedOutput {
    pub value: f64,
    pub grads: Matrix,
    /// Re-ID component, absent when its weight is zero and its batch
    /// preconditions fail.
    pub reid: Option<LossOutput>,
    /// Bias component, likewise.
    pub bias: Option<LossOutput>,
}

/// `lambda_dr * L_reid -/+ lambda_db * L_bias` depending on `mode`.
///
/// A component with zero weight is still evaluated for diagnostics when its
/// batch preconditions hold, but never contributes to value or gradient.
pub fn combined_loss<I: PartialEq, B: PartialEq>(
    embeddings: &Matrix,
    ids: &[I],
    bias: &[B],
    mode: Mode,
    w: &LossWeights,
) -> Result<CombinedOutput> {
    if !(w.lambda_dr >= 0.0 && w.lambda_db >= 0.0) {
        return Err(Error::config("loss weights must be >= 0; the sign is set by the mode"));
    }
    let reid = match reid_hard_loss(embeddings, ids, w.margin_dr) {
        Ok(out) => Some(out),
        Err(e) if w.lambda_dr > 0.0 => return Err(e),
        Err(_) => None,
    };
    let bias_out = match bias_easy_loss(embeddings, bias, w.margin_db, w.bias_hinge) {
        Ok(out) => Some(out),
        Err(e) if w.lambda_db > 0.0 => return Err(e),
        Err(_) => None,
    };
    let mut grads = Matrix::zeros(embeddings.rows(), embeddings.cols());
    let mut value = 0.0;
    if let Some(r) = reid.as_ref().filter(|_| w.lambda_dr > 0.0) {
        value += w.lambda_dr * r.value;
        grads.add_scaled(&r.grads, w.lambda_dr);
    }
    if let Some(b) = bias_out.as_ref().filter(|_| w.lambda_db > 0.0) {
        let coeff = mode.sign() * w.lambda_db;
        value += coeff * b.value;
        grads.add_scaled(&b.grads, coeff);
    }
    Ok(CombinedOutput {
        value,
        grads,
        reid,
        bias: bias_out,
    })
}
