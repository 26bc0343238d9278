//! Synthetic samples with controllable identity and bias latent factors.
//!
//! Each sample is `s (A u_id + sum_c g_c B_c v_(c,class) + noise * eps)`, where
//! `u_id` is a per-identity latent, `v_(c,class)` a per-bias-class latent,
//! `A`, `B_c` fixed random mixing matrices and `s` an overall feature scale.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{sort_class_names, Channel, Dataset, Sample, Split, CAMERA_CHANNEL};
use crate::config::{KeyDoc, KvConfig};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub classes: usize,
    /// Latent dimension of the channel.
    pub dim: usize,
    /// Signal gain of the channel's contribution to the features.
    pub gain: f64,
}

impl ChannelSpec {
    pub fn new(name: &str, classes: usize) -> Self {
        Self {
            name: name.to_string(),
            classes,
            dim: 8,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    fn class_names(&self) -> Vec<String> {
        let named: Option<&[&str]> = match (self.name.as_str(), self.classes) {
            ("pose", 2) => Some(&["frontal", "side"]),
            ("pose", 3) => Some(&["frontal", "side", "oblique"]),
            ("part", 3) => Some(&["upper", "central", "bottom"]),
            _ => None,
        };
        let mut names: Vec<String> = match named {
            Some(n) => n.iter().map(|s| s.to_string()).collect(),
            None if self.name == CAMERA_CHANNEL => {
                (0..self.classes).map(|k| k.to_string()).collect()
            }
            None => (0..self.classes).map(|k| format!("c{k}")).collect(),
        };
        sort_class_names(&mut names);
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub name: String,
    pub n_ids: usize,
    /// Identities tagged `train`; the rest are held out for query/gallery.
    pub n_train_ids: usize,
    pub samples_per_id: usize,
    pub d_id: usize,
    pub d_in: usize,
    pub noise: f64,
    /// Multiplies every feature, noise included.
    pub scale: f64,
    pub mixing_seed: u64,
    /// Bias channels; must include `camera`.
    pub channels: Vec<ChannelSpec>,
}

/// Bundled generator presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Default,
    Pose2,
    Cam6,
    Part3,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Default, Preset::Pose2, Preset::Cam6, Preset::Part3];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Pose2 => "preset-pose2",
            Preset::Cam6 => "preset-cam6",
            Preset::Part3 => "preset-part3",
        }
    }

    /// The bias channel the preset is built around.
    pub fn focus_channel(self) -> &'static str {
        match self {
            Preset::Default | Preset::Pose2 => "pose",
            Preset::Cam6 => CAMERA_CHANNEL,
            Preset::Part3 => "part",
        }
    }

    pub fn config(self) -> GeneratorConfig {
        // the focus channel dominates the bias signal, camera stays weak
        let cam = || ChannelSpec::new(CAMERA_CHANNEL, 2).with_gain(0.3);
        let channels = match self {
            Preset::Default => vec![cam(), ChannelSpec::new("pose", 3).with_gain(2.0)],
            Preset::Pose2 => vec![cam(), ChannelSpec::new("pose", 2).with_gain(2.0)],
            Preset::Cam6 => vec![ChannelSpec::new(CAMERA_CHANNEL, 6).with_gain(2.0)],
            Preset::Part3 => vec![cam(), ChannelSpec::new("part", 3).with_gain(2.0)],
        };
        GeneratorConfig {
            name: self.name().to_string(),
            channels,
            ..GeneratorConfig::base()
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!("unknown preset `{s}` (available: {})", names.join(", "))
            })
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Preset::Default.config()
    }
}

impl GeneratorConfig {
    fn base() -> Self {
        Self {
            name: "synthetic".to_string(),
            n_ids: 400,
            n_train_ids: 200,
            samples_per_id: 8,
            d_id: 16,
            d_in: 32,
            noise: 0.1,
            scale: 0.1,
            mixing_seed: 0,
            channels: Vec::new(),
        }
    }

    pub const KEYS: &'static [KeyDoc] = &[
        KeyDoc { key: "preset", help: "starting preset: default, preset-pose2, preset-cam6, preset-part3" },
        KeyDoc { key: "name", help: "dataset name" },
        KeyDoc { key: "n_ids", help: "number of identities (default 400)" },
        KeyDoc { key: "n_train_ids", help: "identities tagged train; the rest are held out (default 200)" },
        KeyDoc { key: "samples_per_id", help: "samples per identity (default 8)" },
        KeyDoc { key: "d_id", help: "identity latent dimension (default 16)" },
        KeyDoc { key: "d_in", help: "feature dimension (default 32)" },
        KeyDoc { key: "noise", help: "per-feature noise scale sigma (default 0.1)" },
        KeyDoc { key: "scale", help: "overall feature scale, noise included (default 0.1)" },
        KeyDoc { key: "mixing_seed", help: "seed of the fixed mixing matrices (default 0)" },
        KeyDoc { key: "channels", help: "comma-separated bias channels, must include camera (default camera,pose)" },
        KeyDoc { key: "classes.<channel>", help: "class count of a channel (>= 2)" },
        KeyDoc { key: "dim.<channel>", help: "latent dimension of a channel (default 8)" },
        KeyDoc { key: "gain.<channel>", help: "signal gain of a channel (preset focus 2.0, camera 0.3)" },
    ];

    /// Reads generator keys from `kv`, starting from the `preset` key if present.
    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let preset: Preset = match kv.take_str("preset") {
            Some(p) => p.parse().map_err(Error::Config)?,
            None => Preset::Default,
        };
        let mut cfg = preset.config();
        if let Some(name) = kv.take_str("name") {
            cfg.name = name;
        }
        cfg.n_ids = kv.take_or("n_ids", cfg.n_ids)?;
        cfg.n_train_ids = kv.take_or("n_train_ids", cfg.n_train_ids)?;
        cfg.samples_per_id = kv.take_or("samples_per_id", cfg.samples_per_id)?;
        cfg.d_id = kv.take_or("d_id", cfg.d_id)?;
        cfg.d_in = kv.take_or("d_in", cfg.d_in)?;
        cfg.noise = kv.take_or("noise", cfg.noise)?;
        cfg.scale = kv.take_or("scale", cfg.scale)?;
        cfg.mixing_seed = kv.take_or("mixing_seed", cfg.mixing_seed)?;
        if let Some(names) = kv.take_list::<String>("channels")? {
            cfg.channels = names
                .iter()
                .map(|n| {
                    cfg.channels
                        .iter()
                        .find(|c| &c.name == n)
                        .cloned()
                        .unwrap_or_else(|| ChannelSpec::new(n, 2))
                })
                .collect();
        }
        for ch in &mut cfg.channels {
            ch.classes = kv.take_or(&format!("classes.{}", ch.name), ch.classes)?;
            ch.dim = kv.take_or(&format!("dim.{}", ch.name), ch.dim)?;
            ch.gain = kv.take_or(&format!("gain.{}", ch.name), ch.gain)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config in the key-value format accepted by [`Self::from_kv`].
    pub fn to_kv_string(&self) -> String {
        let mut out = format!(
            "name = {}\nn_ids = {}\nn_train_ids = {}\nsamples_per_id = {}\nd_id = {}\nd_in = {}\nnoise = {}\nscale = {}\nmixing_seed = {}\n",
            self.name, self.n_ids, self.n_train_ids, self.samples_per_id, self.d_id, self.d_in, self.noise, self.scale, self.mixing_seed
        );
        let names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        out.push_str(&format!("channels = {}\n", names.join(",")));
        for c in &self.channels {
            out.push_str(&format!(
                "classes.{0} = {1}\ndim.{0} = {2}\ngain.{0} = {3}\n",
                c.name, c.classes, c.dim, c.gain
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ids < 2 {
            return Err(Error::config("generator needs at least two identities"));
        }
        if self.samples_per_id == 0 {
            return Err(Error::config("samples_per_id must be positive"));
        }
        if self.n_train_ids > self.n_ids {
            return Err(Error::config("n_train_ids exceeds n_ids"));
        }
        if self.d_in == 0 || self.d_id == 0 {
            return Err(Error::config("d_in and d_id must be >= 1"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::config("noise must be finite and >= 0"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::config("scale must be finite and > 0"));
        }
        if !self.channels.iter().any(|c| c.name == CAMERA_CHANNEL) {
            return Err(Error::config("generator channels must include `camera`"));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::config(format!("duplicate channel `{}`", c.name)));
            }
            if c.classes < 2 {
                return Err(Error::config(format!("channel `{}` needs >= 2 classes", c.name)));
            }
            if c.dim == 0 {
                return Err(Error::config(format!("channel `{}` needs dim >= 1", c.name)));
            }
            if !(c.gain.is_finite() && c.gain >= 0.0) {
                return Err(Error::config(format!("channel `{}` gain must be >= 0", c.name)));
            }
        }
        Ok(())
    }
}

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut rng::Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn gaussian_vec(n: usize, rng: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `out += scale * m v`.
fn add_mat_vec(out: &mut [f64], m: &Matrix, v: &[f64], scale: f64) {
    for (o, row) in out.iter_mut().zip(m.row_iter()) {
        *o += scale * crate::numerics::dot(row, v);
    }
}

/// Generates a dataset; a pure function of `(cfg, seed)`.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    // mixing matrices scaled so each mixed latent has unit variance per feature
    let mut mix_rng = rng::stream(cfg.mixing_seed, "mixing");
    let id_mix = gaussian_matrix(cfg.d_in, cfg.d_id, (1.0 / cfg.d_id as f64).sqrt(), &mut mix_rng);
    let bias_mix: Vec<Matrix> = cfg
        .channels
        .iter()
        .map(|c| gaussian_matrix(cfg.d_in, c.dim, (1.0 / c.dim as f64).sqrt(), &mut mix_rng))
        .collect();

    let mut rng = rng::stream(seed, "generator");
    let class_offsets: Vec<Vec<Vec<f64>>> = cfg
        .channels
        .iter()
        .zip(&bias_mix)
        .map(|(c, b)| {
            (0..c.classes)
                .map(|_| {
                    let v = gaussian_vec(c.dim, &mut rng);
                    let mut off = vec![0.0; cfg.d_in];
                    add_mat_vec(&mut off, b, &v, c.gain);
                    off
                })
                .collect()
        })
        .collect();

    // class names are sorted; latents are indexed by position in the sorted list
    let declared: Vec<(usize, Channel)> = cfg
        .channels
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name != CAMERA_CHANNEL)
        .map(|(i, c)| {
            (
                i,
                Channel {
                    name: c.name.clone(),
                    classes: c.class_names(),
                },
            )
        })
        .collect();
    let camera_idx = cfg
        .channels
        .iter()
        .position(|c| c.name == CAMERA_CHANNEL)
        .expect("validated");

    let mut samples = Vec::with_capacity(cfg.n_ids * cfg.samples_per_id);
    for id in 0..cfg.n_ids {
        let u = gaussian_vec(cfg.d_id, &mut rng);
        let mut id_part = vec![0.0; cfg.d_in];
        add_mat_vec(&mut id_part, &id_mix, &u, 1.0);
        let split = if id < cfg.n_train_ids {
            Split::Train
        } else {
            Split::Gallery
        };
        for _ in 0..cfg.samples_per_id {
            let classes: Vec<usize> = cfg
                .channels
                .iter()
                .map(|c| rng.random_range(0..c.classes))
                .collect();
            let mut features = id_part.clone();
            for (c, &k) in classes.iter().enumerate() {
                for (f, o) in features.iter_mut().zip(&class_offsets[c][k]) {
                    *f += o;
                }
            }
            for f in &mut features {
                let e: f64 = StandardNormal.sample(&mut rng);
                *f = cfg.scale * (*f + cfg.noise * e);
            }
            samples.push(Sample {
                features,
                id: id as u32,
                camera: classes[camera_idx] as u32,
                bias: declared.iter().map(|(i, _)| classes[*i] as u32).collect(),
                split,
            });
        }
    }
    let mut ds = Dataset::new(
        cfg.name.clone(),
        declared.into_iter().map(|(_, c)| c).collect(),
        cfg.d_in,
        samples,
    )?;
    ds.seed = Some(seed);
    ds.generator = Some(cfg.clone());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sq_dist;

    fn small(noise: f64, pose_gain: f64) -> GeneratorConfig {
        let mut cfg = Preset::Default.config();
        cfg.n_ids = 20;
        cfg.n_train_ids = 10;
        cfg.noise = noise;
        for c in &mut cfg.channels {
            c.gain = if c.name == "pose" { pose_gain } else { 0.0 };
        }
        cfg
    }

    #[test]
    fn noise_and_bias_free_samples_coincide_per_identity() {
        let ds = generate_synthetic(&small(0.0, 0.0), 3).unwrap();
        let s = ds.samples();
        assert_eq!(s[0].id, s[1].id);
        assert_eq!(s[0].features, s[1].features);
        assert_ne!(s[0].features, s[8].features);
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = GeneratorConfig::default();
        let a = generate_synthetic(&cfg, 11).unwrap();
        let b = generate_synthetic(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&cfg, 12).unwrap();
        assert_ne!(a.samples()[0].features, c.samples()[0].features);
    }

    #[test]
    fn strong_pose_gain_makes_neighbours_share_pose() {
        let ds = generate_synthetic(&small(0.0, 4.0), 5).unwrap();
        let pose = ds.labels("pose").unwrap();
        let s = ds.samples();
        // brute-force nearest neighbour over all samples
        let mut same = 0;
        for i in 0..s.len() {
            let nn = (0..s.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    sq_dist(&s[i].features, &s[a].features)
                        .total_cmp(&sq_dist(&s[i].features, &s[b].features))
                })
                .unwrap();
            same += usize::from(pose[nn] == pose[i]);
        }
        let freq = same as f64 / s.len() as f64;
        assert!(freq > 1.0 / 3.0 + 0.2, "same-pose neighbour frequency {freq}");
    }

    #[test]
    fn class_frequencies_are_uniform() {
        let mut cfg = GeneratorConfig::default();
        cfg.n_ids = 150;
        cfg.n_train_ids = 75;
        let ds = generate_synthetic(&cfg, 2).unwrap();
        assert!(ds.len() >= 1000);
        for ch in ["camera", "pose"] {
            let labels = ds.labels(ch).unwrap();
            let k = if ch == "camera" { 2 } else { 3 };
            for class in 0..k {
                let f = labels.iter().filter(|&&l| l == class).count() as f64 / labels.len() as f64;
                assert!((f - 1.0 / k as f64).abs() < 0.05, "{ch} class {class}: {f}");
            }
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        let mut cfg = GeneratorConfig::default();
        cfg.n_ids = 1;
        assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = GeneratorConfig::default();
        cfg.samples_per_id = 0;
        assert!(generate_synthetic(&cfg, 0).is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.channels.retain(|c| c.name != "camera");
        assert!(generate_synthetic(&cfg, 0).is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.channels[1].classes = 1;
        assert!(generate_synthetic(&cfg, 0).is_err());
    }

    #[test]
    fn kv_roundtrip_and_closed_world() {
        let cfg = Preset::Part3.config();
        let mut kv = KvConfig::parse(&cfg.to_kv_string()).unwrap();
        let back = GeneratorConfig::from_kv(&mut kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(back.channels, cfg.channels);
        assert_eq!(back.n_ids, cfg.n_ids);

        let mut kv = KvConfig::parse("preset = preset-cam6\ngain.pose = 2\n").unwrap();
        GeneratorConfig::from_kv(&mut kv).unwrap();
        assert!(kv.finish().is_err(), "gain.pose is not a channel of preset-cam6");
    }
}
