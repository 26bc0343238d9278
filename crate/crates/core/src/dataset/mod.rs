//! Annotated samples, synthetic generation, CSV ingestion, splitting and
//! P×K batch sampling.

mod csv_io;
mod generator;
mod sampler;
mod split;

pub use csv_io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub(crate) use csv_io::write_with_prefix;
pub use generator::{generate_synthetic, ChannelSpec, GeneratorConfig, Preset};
pub use sampler::{pk_sample, Batch, PkSampler};
pub use split::{split_query_gallery, SplitOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Name under which the camera column is addressable as a bias channel.
pub const CAMERA_CHANNEL: &str = "camera";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            other => Err(format!("unknown split tag `{other}`")),
        }
    }
}

/// A declared categorical bias annotation and its class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub classes: Vec<String>,
}

/// Resolved reference to a bias channel of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRef {
    Camera,
    Declared(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub id: u32,
    pub camera: u32,
    /// Class index per declared channel, in declaration order.
    pub bias: Vec<u32>,
    pub split: Split,
}

impl Sample {
    pub fn label(&self, channel: ChannelRef) -> u32 {
        match channel {
            ChannelRef::Camera => self.camera,
            ChannelRef::Declared(c) => self.bias[c],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub seed: Option<u64>,
    pub generator: Option<GeneratorConfig>,
    channels: Vec<Channel>,
    dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Builds a dataset, validating per-sample invariants.
    pub fn new(
        name: impl Into<String>,
        channels: Vec<Channel>,
        dim: usize,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        for (i, ch) in channels.iter().enumerate() {
            if ch.name == CAMERA_CHANNEL || ch.name.is_empty() {
                return Err(Error::config(format!("invalid channel name `{}`", ch.name)));
            }
            if channels[..i].iter().any(|c| c.name == ch.name) {
                return Err(Error::config(format!("duplicate channel `{}`", ch.name)));
            }
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::data(format!(
                    "sample {i}: {} features, dataset dimension {dim}",
                    s.features.len()
                )));
            }
            if s.bias.len() != channels.len() {
                return Err(Error::data(format!(
                    "sample {i}: {} bias labels, {} channels declared",
                    s.bias.len(),
                    channels.len()
                )));
            }
            for (c, (&label, ch)) in s.bias.iter().zip(&channels).enumerate() {
                if label as usize >= ch.classes.len() {
                    return Err(Error::data(format!(
                        "sample {i}: label {label} out of range for channel {c} `{}`",
                        ch.name
                    )));
                }
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("sample {i}: non-finite feature")));
            }
        }
        Ok(Self {
            name: name.into(),
            seed: None,
            generator: None,
            channels,
            dim,
            samples,
        })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Names of every addressable bias channel, camera first.
    pub fn channel_names(&self) -> Vec<String> {
        std::iter::once(CAMERA_CHANNEL.to_string())
            .chain(self.channels.iter().map(|c| c.name.clone()))
            .collect()
    }

    pub fn channel(&self, name: &str) -> Result<ChannelRef> {
        if name == CAMERA_CHANNEL {
            return Ok(ChannelRef::Camera);
        }
        self.channels
            .iter()
            .position(|c| c.name == name)
            .map(ChannelRef::Declared)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown bias channel `{name}` (available: {})",
                    self.channel_names().join(", ")
                ))
            })
    }

    /// Labels of `channel` for every sample, in dataset order.
    pub fn labels(&self, channel: &str) -> Result<Vec<u32>> {
        let ch = self.channel(channel)?;
        Ok(self.samples.iter().map(|s| s.label(ch)).collect())
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature rows for the given sample indices.
    pub fn features(&self, indices: &[usize]) -> Matrix {
        let rows: Vec<&[f64]> = indices
            .iter()
            .map(|&i| self.samples[i].features.as_slice())
            .collect();
        Matrix::from_rows_with_cols(&rows, self.dim).expect("uniform feature width")
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Sample] {
        &mut self.samples
    }

    /// Sample-level equality, ignoring metadata not carried by the CSV format.
    pub fn same_content(&self, other: &Dataset) -> bool {
        self.dim == other.dim && self.channels == other.channels && self.samples == other.samples
    }
}

/// Sort order for class names: numeric when all names are integers.
pub(crate) fn sort_class_names(names: &mut [String]) {
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().expect("checked"));
    } else {
        names.sort();
    }
}
