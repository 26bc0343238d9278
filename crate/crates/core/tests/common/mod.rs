//! Brute-force reference implementations shared by the integration tests.

#![allow(dead_code)]

use reidbias::dataset::Split;
use reidbias::Matrix;

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn sqd(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

/// Per-anchor `(positive, negative, argument)` found by scanning every
/// triplet; `None` when an anchor has no valid triplet.
pub struct BruteForce {
    pub picks: Vec<Option<(usize, usize, f64)>>,
    pub value: f64,
}

/// `hardest`: maximise the hinge argument (re-ID mining); otherwise minimise
/// it (bias mining). Ties resolve to the lexicographically first `(p, n)`.
pub fn brute_force<L: PartialEq>(e: &Matrix, labels: &[L], margin: f64, hardest: bool, hinge: bool) -> BruteForce {
    let n = e.rows();
    let mut picks = Vec::with_capacity(n);
    let mut value = 0.0;
    for a in 0..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for q in 0..n {
                if labels[q] == labels[a] {
                    continue;
                }
                let arg = margin + sqd(e.row(a), e.row(p)) - sqd(e.row(a), e.row(q));
                let better = match best {
                    None => true,
                    Some((_, _, b)) => {
                        if hardest {
                            arg > b
                        } else {
                            arg < b
                        }
                    }
                };
                if better {
                    best = Some((p, q, arg));
                }
            }
        }
        if let Some((_, _, arg)) = best {
            if !hinge || arg > 0.0 {
                value += arg;
            }
        }
        picks.push(best);
    }
    BruteForce { picks, value }
}

/// One ranking row: `(id, camera, split, embedding)`.
pub type Row = (u32, u32, Split, Vec<f64>);

/// CMC (over `len` ranks) and mAP by sorting each query's gallery and
/// counting precision at every positive.
pub fn naive_metrics(rows: &[Row], len: usize) -> Option<(Vec<f64>, f64)> {
    let mut first = Vec::new();
    let mut aps = Vec::new();
    for (qi, q) in rows.iter().enumerate() {
        if q.2 != Split::Query {
            continue;
        }
        let mut gallery: Vec<(f64, usize)> = rows
            .iter()
            .enumerate()
            .filter(|(_, g)| g.2 == Split::Gallery && !(g.0 == q.0 && g.1 == q.1))
            .map(|(gi, g)| (sqd(&rows[qi].3, &g.3), gi))
            .collect();
        gallery.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let hits: Vec<bool> = gallery.iter().map(|&(_, g)| rows[g].0 == q.0).collect();
        let n_pos = hits.iter().filter(|&&h| h).count();
        if n_pos == 0 {
            continue;
        }
        let mut precisions = 0.0;
        for r in 0..hits.len() {
            if hits[r] {
                let in_top = hits[..=r].iter().filter(|&&h| h).count();
                precisions += in_top as f64 / (r + 1) as f64;
            }
        }
        aps.push(precisions / n_pos as f64);
        first.push(hits.iter().position(|&h| h).unwrap());
    }
    if aps.is_empty() {
        return None;
    }
    let nq = aps.len() as f64;
    let cmc = (0..len)
        .map(|k| first.iter().filter(|&&f| f <= k).count() as f64 / nq)
        .collect();
    Some((cmc, aps.iter().sum::<f64>() / nq))
}
