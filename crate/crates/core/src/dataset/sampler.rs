//! P×K batch sampling over the train split.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{ChannelRef, Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// `P` identities with `K` instances each.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Indices into the dataset's samples.
    pub indices: Vec<usize>,
    pub ids: Vec<u32>,
    pub cameras: Vec<u32>,
    /// `bias[c][j]`: label of declared channel `c` for batch position `j`.
    pub bias: Vec<Vec<u32>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn labels(&self, channel: ChannelRef) -> &[u32] {
        match channel {
            ChannelRef::Camera => &self.cameras,
            ChannelRef::Declared(c) => &self.bias[c],
        }
    }
}

/// Stateful sampler that cycles through all train identities (in a fresh
/// random order per cycle) before any identity repeats.
#[derive(Debug, Clone)]
pub struct PkSampler {
    p: usize,
    k: usize,
    by_id: BTreeMap<u32, Vec<usize>>,
    queue: Vec<u32>,
    rng: Rng,
}

impl PkSampler {
    pub fn new(ds: &Dataset, p: usize, k: usize, rng: Rng) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::config("P and K must be positive"));
        }
        let mut by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for i in ds.indices_of(Split::Train) {
            by_id.entry(ds.samples()[i].id).or_default().push(i);
        }
        if by_id.len() < p {
            return Err(Error::config(format!(
                "train split has {} identities, P = {p}",
                by_id.len()
            )));
        }
        Ok(Self {
            p,
            k,
            by_id,
            queue: Vec::new(),
            rng,
        })
    }

    pub fn num_identities(&self) -> usize {
        self.by_id.len()
    }

    fn new_cycle(&mut self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.by_id.keys().copied().collect();
        ids.shuffle(&mut self.rng);
        // the queue is consumed from the back
        ids.reverse();
        ids
    }

    fn next_identities(&mut self) -> Vec<u32> {
        let mut chosen = Vec::with_capacity(self.p);
        while chosen.len() < self.p {
            if let Some(id) = self.queue.pop() {
                chosen.push(id);
                continue;
            }
            // the carried-over identities stay in the new cycle too
            let mut cycle = self.new_cycle();
            let mut rest = Vec::with_capacity(cycle.len());
            while let Some(id) = cycle.pop() {
                if chosen.len() < self.p && !chosen.contains(&id) {
                    chosen.push(id);
                } else {
                    rest.push(id);
                }
            }
            rest.reverse();
            self.queue = rest;
        }
        chosen
    }

    pub fn next_batch(&mut self, ds: &Dataset) -> Batch {
        let ids = self.next_identities();
        let mut indices = Vec::with_capacity(self.p * self.k);
        for id in &ids {
            let pool = &self.by_id[id];
            if pool.len() >= self.k {
                indices.extend(pool.choose_multiple(&mut self.rng, self.k).copied());
            } else {
                // every instance once, then fill with replacement
                indices.extend_from_slice(pool);
                for _ in pool.len()..self.k {
                    indices.push(pool[self.rng.random_range(0..pool.len())]);
                }
            }
        }
        let samples = ds.samples();
        let n_channels = ds.channels().len();
        Batch {
            ids: indices.iter().map(|&i| samples[i].id).collect(),
            cameras: indices.iter().map(|&i| samples[i].camera).collect(),
            bias: (0..n_channels)
                .map(|c| indices.iter().map(|&i| samples[i].bias[c]).collect())
                .collect(),
            indices,
        }
    }
}

/// One-shot convenience over [`PkSampler`].
pub fn pk_sample(ds: &Dataset, p: usize, k: usize, rng: Rng) -> Result<Batch> {
    Ok(PkSampler::new(ds, p, k, rng)?.next_batch(ds))
}
