use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub dataset: Dataset,
    /// Queries without a cross-camera gallery positive, re-tagged as gallery.
    pub dropped_queries: usize,
}

/// Tags a `fraction` of each held-out identity's samples as queries and the
/// rest as gallery. Every kept query has a gallery positive on another camera.
pub fn split_query_gallery(ds: &Dataset, fraction: f64, rng: &mut Rng) -> Result<SplitOutcome> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(format!("query fraction {fraction} outside [0, 1]")));
    }
    let train_ids: std::collections::BTreeSet<u32> = ds
        .samples()
        .iter()
        .filter(|s| s.split == Split::Train)
        .map(|s| s.id)
        .collect();
    let mut held_out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        if s.split != Split::Train {
            if train_ids.contains(&s.id) {
                return Err(Error::config(format!(
                    "identity {} appears in both train and held-out splits",
                    s.id
                )));
            }
            held_out.entry(s.id).or_default().push(i);
        }
    }

    let mut out = ds.clone();
    let samples = out.samples_mut();
    let mut queries = Vec::new();
    for members in held_out.values() {
        let mut order = members.clone();
        order.shuffle(rng);
        let n_query = (fraction * order.len() as f64).round() as usize;
        for (j, &i) in order.iter().enumerate() {
            samples[i].split = if j < n_query { Split::Query } else { Split::Gallery };
        }
        queries.extend_from_slice(&order[..n_query]);
    }
    if queries.is_empty() {
        return Err(Error::Evaluation("query split is empty".into()));
    }

    let mut dropped = 0;
    for &q in &queries {
        let (id, cam) = (samples[q].id, samples[q].camera);
        let ok = held_out[&id]
            .iter()
            .any(|&g| samples[g].split == Split::Gallery && samples[g].camera != cam);
        if !ok {
            samples[q].split = Split::Gallery;
            dropped += 1;
        }
    }
    if dropped == queries.len() {
        return Err(Error::Evaluation(
            "no query has a cross-camera gallery positive".into(),
        ));
    }
    Ok(SplitOutcome {
        dataset: out,
        dropped_queries: dropped,
    })
}
