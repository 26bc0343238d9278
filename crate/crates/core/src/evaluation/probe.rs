//! Bias probe: a learned-slope PReLU followed by a linear softmax classifier,
//! trained on frozen embeddings.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numerics::{prelu, AdamConfig, AdamState, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub rate: f64,
    /// Share of rows used for training; the rest is held out.
    pub train_fraction: f64,
    pub initial_slope: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            rate: 0.01,
            train_fraction: 0.5,
            initial_slope: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    /// Original label of each output class.
    pub classes: Vec<u32>,
    /// Per-feature standardisation fitted on the training rows.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub slope: f64,
    /// classes × features.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Probe {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn scores(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z = self.standardize(x);
        let (h, _) = prelu(&z, self.slope);
        let s = (0..self.classes.len())
            .map(|c| crate::numerics::dot(self.weight.row(c), &h) + self.bias[c])
            .collect();
        (z, s)
    }

    /// Predicted original label; ties go to the lower class index.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let (_, s) = self.scores(x);
        let mut best = 0;
        for c in 1..s.len() {
            if s[c] > s[best] {
                best = c;
            }
        }
        self.classes[best]
    }
}

/// Fits a probe to rows of `features` with the given labels.
pub fn train_probe(features: &Matrix, labels: &[u32], cfg: &ProbeConfig) -> Result<Probe> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(Error::Alignment(format!("{n} feature rows, {} labels", labels.len())));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::config(format!(
            "probe needs at least 2 classes, training data has {}",
            classes.len()
        )));
    }
    if cfg.rate <= 0.0 || !cfg.rate.is_finite() {
        return Err(Error::config(format!("probe rate must be positive, got {}", cfg.rate)));
    }
    let k = classes.len();
    let target: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("collected"))
        .collect();

    let mut mean = vec![0.0; d];
    for r in features.row_iter() {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut scale = vec![0.0; d];
    for r in features.row_iter() {
        scale
            .iter_mut()
            .zip(r.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n as f64);
    }
    scale.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });

    let mut init = rng::stream(cfg.seed, "probe/init");
    let normal = Normal::new(0.0, (1.0 / d.max(1) as f64).sqrt()).expect("valid std");
    let mut probe = Probe {
        classes,
        mean,
        scale,
        slope: cfg.initial_slope,
        weight: Matrix::from_vec(k, d, (0..k * d).map(|_| normal.sample(&mut init)).collect())?,
        bias: vec![0.0; k],
    };
    let inputs: Vec<Vec<f64>> = features.row_iter().map(|r| probe.standardize(r)).collect();

    // flat layout: weight row-major, bias, slope
    let n_params = k * d + k + 1;
    let mut adam = AdamState::new(n_params, AdamConfig::default());
    for _ in 0..cfg.epochs {
        let mut grad = vec![0.0; n_params];
        for (z, &t) in inputs.iter().zip(&target) {
            let (h, _) = prelu(z, probe.slope);
            let mut s: Vec<f64> = (0..k)
                .map(|c| crate::numerics::dot(probe.weight.row(c), &h) + probe.bias[c])
                .collect();
            let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            s.iter_mut().for_each(|v| *v = (*v - top).exp());
            let total: f64 = s.iter().sum();
            for c in 0..k {
                let ds = (s[c] / total - if c == t { 1.0 } else { 0.0 }) / n as f64;
                let w = probe.weight.row(c);
                for j in 0..d {
                    grad[c * d + j] += ds * h[j];
                    if z[j] <= 0.0 {
                        grad[n_params - 1] += ds * w[j] * z[j];
                    }
                }
                grad[k * d + c] += ds;
            }
        }
        let mut flat: Vec<f64> = probe.weight.as_slice().to_vec();
        flat.extend_from_slice(&probe.bias);
        flat.push(probe.slope);
        adam.update(&mut flat, &grad, cfg.rate)?;
        probe.weight.as_mut_slice().copy_from_slice(&flat[..k * d]);
        probe.bias.copy_from_slice(&flat[k * d..k * d + k]);
        probe.slope = flat[n_params - 1];
    }
    Ok(probe)
}

/// Fraction of rows whose predicted label matches.
pub fn probe_accuracy(probe: &Probe, features: &Matrix, labels: &[u32]) -> Result<f64> {
    if labels.len() != features.rows() || labels.is_empty() {
        return Err(Error::Evaluation(format!(
            "probe accuracy over {} rows with {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let correct = features
        .row_iter()
        .zip(labels)
        .filter(|(r, &l)| probe.predict(r) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub channel: String,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Trains on a seeded random share of the rows and scores the rest.
pub fn probe_bias(emb: &EmbeddingSet, channel: &str, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    let labels = emb.labels(channel)?;
    let mut order: Vec<usize> = (0..emb.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, &format!("probe/split/{channel}")));
    let n_train = (cfg.train_fraction * order.len() as f64).round() as usize;
    if n_train == 0 || n_train >= order.len() {
        return Err(Error::config(format!(
            "probe split of {} rows at fraction {} leaves an empty side",
            order.len(),
            cfg.train_fraction
        )));
    }
    let (train, test) = order.split_at(n_train);
    let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let probe = train_probe(&emb.matrix().select_rows(train), &pick(train), cfg)?;
    let accuracy = probe_accuracy(&probe, &emb.matrix().select_rows(test), &pick(test))?;
    Ok(ProbeOutcome {
        channel: channel.to_string(),
        accuracy,
        n_train: train.len(),
        n_test: test.len(),
    })
}
