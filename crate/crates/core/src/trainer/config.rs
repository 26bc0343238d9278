use serde::{Deserialize, Serialize};

use crate::config::{parse_list, parse_switch, KeyDoc, KvConfig};
use crate::error::{Error, Result};
use crate::losses::{LossWeights, Mode};
use crate::numerics::DEFAULT_LEAKY_SLOPE;

/// Everything needed to train one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub mode: Mode,
    pub bias_channel: String,
    pub weights: LossWeights,
    pub p: usize,
    pub k: usize,
    pub epochs: usize,
    pub base_rate: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub emb_dim: usize,
    pub leaky_slope: f64,
}

/// Bias margin of [`BranchConfig::desk_scale`]; sized so the bias hinge stays
/// active at the default synthetic feature scale.
pub const DESK_MARGIN_DB: f64 = 30.0;

/// Default bias weight for a mode/channel pair.
pub fn default_lambda_db(mode: Mode, channel: &str) -> f64 {
    match (mode, channel) {
        (Mode::Reduce, _) => 0.01,
        (Mode::Enhance, "pose") => 0.05,
        (Mode::Enhance, _) => 0.01,
    }
}

impl BranchConfig {
    pub const KEYS: &'static [KeyDoc] = &[
        KeyDoc { key: "branch_preset", help: "full (p 16, margin_db 0.3) | desk (p 8, margin_db 30); default full" },
        KeyDoc { key: "mode", help: "reduce | enhance (default reduce)" },
        KeyDoc { key: "channel", help: "bias channel the bias loss pairs on (default pose)" },
        KeyDoc { key: "lambda_dr", help: "re-ID loss weight (default 1)" },
        KeyDoc { key: "lambda_db", help: "bias loss weight, >= 0; sign comes from mode (default 0.01, enhance+pose 0.05)" },
        KeyDoc { key: "margin_dr", help: "re-ID hinge margin (default 0.3)" },
        KeyDoc { key: "margin_db", help: "bias hinge margin (default from branch_preset)" },
        KeyDoc { key: "bias_hinge", help: "on | off: keep [.]+ on the bias term (default on)" },
        KeyDoc { key: "p", help: "identities per batch (default from branch_preset)" },
        KeyDoc { key: "k", help: "instances per identity (default 4)" },
        KeyDoc { key: "epochs", help: "training epochs (default 60)" },
        KeyDoc { key: "rate", help: "base Adam learning rate, decays linearly to 0 (default 0.0003)" },
        KeyDoc { key: "seed", help: "training seed (default 0)" },
        KeyDoc { key: "hidden", help: "hidden layer widths, comma-separated (default 64,64)" },
        KeyDoc { key: "emb_dim", help: "embedding dimension (default 64)" },
        KeyDoc { key: "leaky_slope", help: "negative slope of hidden activations (default 0.01)" },
    ];

    pub fn new(mode: Mode, channel: &str) -> Self {
        Self {
            mode,
            bias_channel: channel.to_string(),
            weights: LossWeights {
                lambda_db: default_lambda_db(mode, channel),
                ..LossWeights::default()
            },
            p: 16,
            k: 4,
            epochs: 60,
            base_rate: 0.0003,
            seed: 0,
            hidden: vec![64, 64],
            emb_dim: 64,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Smaller batches and a bias margin matched to the synthetic feature
    /// scale, for desk-scale datasets.
    pub fn desk_scale(mode: Mode, channel: &str) -> Self {
        let mut cfg = Self {
            p: 8,
            k: 4,
            ..Self::new(mode, channel)
        };
        cfg.weights.margin_db = DESK_MARGIN_DB;
        cfg
    }

    /// Same branch with the bias term switched off.
    pub fn baseline(&self) -> Self {
        let mut cfg = self.clone();
        cfg.weights.lambda_db = 0.0;
        cfg
    }

    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let mode: Mode = match kv.take_str("mode") {
            Some(m) => m.parse().map_err(Error::Config)?,
            None => Mode::Reduce,
        };
        let channel = kv.take_str("channel").unwrap_or_else(|| "pose".to_string());
        let mut cfg = match kv.take_str("branch_preset").as_deref() {
            None | Some("full") => Self::new(mode, &channel),
            Some("desk") => Self::desk_scale(mode, &channel),
            Some(other) => {
                return Err(Error::config(format!(
                    "unknown branch_preset `{other}` (expected desk or full)"
                )))
            }
        };
        let w = &mut cfg.weights;
        w.lambda_dr = kv.take_or("lambda_dr", w.lambda_dr)?;
        w.lambda_db = kv.take_or("lambda_db", w.lambda_db)?;
        w.margin_dr = kv.take_or("margin_dr", w.margin_dr)?;
        w.margin_db = kv.take_or("margin_db", w.margin_db)?;
        if let Some(v) = kv.take_str("bias_hinge") {
            w.bias_hinge = parse_switch(&v).map_err(|e| Error::config(format!("bias_hinge: {e}")))?;
        }
        cfg.p = kv.take_or("p", cfg.p)?;
        cfg.k = kv.take_or("k", cfg.k)?;
        cfg.epochs = kv.take_or("epochs", cfg.epochs)?;
        cfg.base_rate = kv.take_or("rate", cfg.base_rate)?;
        cfg.seed = kv.take_or("seed", cfg.seed)?;
        if let Some(h) = kv.take_str("hidden") {
            cfg.hidden = parse_list(&h).map_err(|e| Error::config(format!("hidden: {e}")))?;
        }
        cfg.emb_dim = kv.take_or("emb_dim", cfg.emb_dim)?;
        cfg.leaky_slope = kv.take_or("leaky_slope", cfg.leaky_slope)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvConfig::parse(text)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let w = &self.weights;
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        format!(
            "mode = {}\nchannel = {}\nlambda_dr = {:?}\nlambda_db = {:?}\nmargin_dr = {:?}\nmargin_db = {:?}\n\
             bias_hinge = {}\np = {}\nk = {}\nepochs = {}\nrate = {:?}\nseed = {}\nhidden = {}\n\
             emb_dim = {}\nleaky_slope = {:?}\n",
            self.mode,
            self.bias_channel,
            w.lambda_dr,
            w.lambda_db,
            w.margin_dr,
            w.margin_db,
            if w.bias_hinge { "on" } else { "off" },
            self.p,
            self.k,
            self.epochs,
            self.base_rate,
            self.seed,
            hidden.join(","),
            self.emb_dim,
            self.leaky_slope,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        for (name, v) in [("lambda_dr", w.lambda_dr), ("lambda_db", w.lambda_db)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!(
                    "{name} must be finite and >= 0 (the bias sign is set by `mode`), got {v}"
                )));
            }
        }
        for (name, v) in [("margin_dr", w.margin_dr), ("margin_db", w.margin_db)] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        if self.p < 2 {
            return Err(Error::config("p must be >= 2 so anchors have negatives"));
        }
        if self.k < 2 {
            return Err(Error::config("k must be >= 2 so anchors have positives"));
        }
        if !(self.base_rate.is_finite() && self.base_rate >= 0.0) {
            return Err(Error::config("rate must be finite and >= 0"));
        }
        if self.emb_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.bias_channel.is_empty() {
            return Err(Error::config("channel must be named"));
        }
        Ok(())
    }
}
