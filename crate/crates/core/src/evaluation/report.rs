use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    cmc_map, nauc, probe_bias, rank_gallery, same_bias_rank_prob, Polarity, ProbeConfig, Protocol,
};
use crate::config::{KeyDoc, KvConfig};
use crate::embedder::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub protocol: Protocol,
    /// Channels to report on; all of the set's channels when `None`.
    pub channels: Option<Vec<String>>,
    /// Length of the rank-probability curves.
    pub ranks: usize,
    pub nauc_k: usize,
    /// Train a bias probe per reported channel.
    pub probe: bool,
    pub probe_cfg: ProbeConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Standard,
            channels: None,
            ranks: 20,
            nauc_k: 10,
            probe: true,
            probe_cfg: ProbeConfig::default(),
        }
    }
}

impl EvalConfig {
    pub const KEYS: &'static [KeyDoc] = &[
        KeyDoc { key: "protocol", help: "standard | nobias (default standard)" },
        KeyDoc { key: "nobias_channel", help: "channel excluded by the nobias protocol" },
        KeyDoc { key: "report_channels", help: "comma list of channels to report (default all)" },
        KeyDoc { key: "ranks", help: "rank-probability curve length (default 20)" },
        KeyDoc { key: "nauc_k", help: "ranks averaged by nauc (default 10)" },
        KeyDoc { key: "probe", help: "train bias probes: on | off (default on)" },
        KeyDoc { key: "probe_epochs", help: "full-batch probe epochs (default 200)" },
        KeyDoc { key: "probe_rate", help: "probe Adam step size (default 0.01)" },
        KeyDoc { key: "probe_fraction", help: "share of rows used to train the probe (default 0.5)" },
        KeyDoc { key: "probe_seed", help: "probe seed (default 0)" },
    ];

    /// Consumes the evaluation keys from `kv`.
    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let d = Self::default();
        let protocol_name = kv.take_str("protocol").unwrap_or_else(|| "standard".into());
        let channel = kv.take_str("nobias_channel");
        let cfg = Self {
            protocol: Protocol::parse(&protocol_name, channel.as_deref())?,
            channels: kv.take_list("report_channels")?,
            ranks: kv.take_or("ranks", d.ranks)?,
            nauc_k: kv.take_or("nauc_k", d.nauc_k)?,
            probe: match kv.take_str("probe") {
                None => d.probe,
                Some(v) => crate::config::parse_switch(&v)
                    .map_err(|e| Error::config(format!("key `probe`: {e}")))?,
            },
            probe_cfg: ProbeConfig {
                epochs: kv.take_or("probe_epochs", d.probe_cfg.epochs)?,
                rate: kv.take_or("probe_rate", d.probe_cfg.rate)?,
                train_fraction: kv.take_or("probe_fraction", d.probe_cfg.train_fraction)?,
                seed: kv.take_or("probe_seed", d.probe_cfg.seed)?,
                ..d.probe_cfg
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = format!("protocol = {}\n", self.protocol.name());
        if let Some(c) = self.protocol.channel() {
            s += &format!("nobias_channel = {c}\n");
        }
        if let Some(chs) = &self.channels {
            s += &format!("report_channels = {}\n", chs.join(","));
        }
        s += &format!(
            "ranks = {}\nnauc_k = {}\nprobe = {}\nprobe_epochs = {}\nprobe_rate = {:?}\nprobe_fraction = {:?}\nprobe_seed = {}\n",
            self.ranks,
            self.nauc_k,
            if self.probe { "on" } else { "off" },
            self.probe_cfg.epochs,
            self.probe_cfg.rate,
            self.probe_cfg.train_fraction,
            self.probe_cfg.seed
        );
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks == 0 || self.nauc_k == 0 || self.nauc_k > self.ranks {
            return Err(Error::config(format!(
                "need 1 <= nauc_k <= ranks, got nauc_k {} and ranks {}",
                self.nauc_k, self.ranks
            )));
        }
        if !(self.probe_cfg.train_fraction > 0.0 && self.probe_cfg.train_fraction < 1.0) {
            return Err(Error::config("probe_fraction must lie strictly between 0 and 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub channel: String,
    pub probe_accuracy: Option<f64>,
    pub p_neg: Vec<f64>,
    pub p_pos: Vec<f64>,
    pub nauc_neg: f64,
    pub nauc_pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub n_queries: usize,
    pub dropped_queries: usize,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub map: f64,
    pub cmc: Vec<f64>,
    pub channels: Vec<ChannelReport>,
    pub config: EvalConfig,
}

impl EvalReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelReport> {
        self.channels.iter().find(|c| c.channel == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("eval report json: {e}")))
    }

    /// Flat `metric,value` table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut rows = vec![
            ("protocol".to_string(), self.protocol.clone()),
            ("n_queries".into(), self.n_queries.to_string()),
            ("dropped_queries".into(), self.dropped_queries.to_string()),
            ("rank1".into(), self.rank1.to_string()),
            ("rank5".into(), self.rank5.to_string()),
            ("rank10".into(), self.rank10.to_string()),
            ("map".into(), self.map.to_string()),
        ];
        for c in &self.channels {
            if let Some(a) = c.probe_accuracy {
                rows.push((format!("{}.probe_accuracy", c.channel), a.to_string()));
            }
            rows.push((format!("{}.nauc_neg", c.channel), c.nauc_neg.to_string()));
            rows.push((format!("{}.nauc_pos", c.channel), c.nauc_pos.to_string()));
        }
        let mut text = String::from("metric,value\n");
        for (k, v) in rows {
            text += &format!("{k},{v}\n");
        }
        out.write_all(text.as_bytes())
            .map_err(|e| Error::data(format!("writing report csv: {e}")))
    }

    /// Writes `<stem>.json`, `<stem>.csv` and one `<stem>_curves_<channel>.csv`
    /// per channel into `dir`; returns the paths written.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        written.push(json);
        let csv = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(&csv, buf).map_err(|e| Error::io(&csv, e))?;
        written.push(csv);
        for c in &self.channels {
            let path = dir.join(format!("{stem}_curves_{}.csv", c.channel));
            std::fs::write(&path, curves_csv(c)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// `rank,p_neg,p_pos` with ranks starting at 1.
pub fn curves_csv(c: &ChannelReport) -> String {
    let mut s = String::from("rank,p_neg,p_pos\n");
    for (r, (n, p)) in c.p_neg.iter().zip(&c.p_pos).enumerate() {
        s += &format!("{},{n},{p}\n", r + 1);
    }
    s
}

/// Ranking metrics, curves and probes for one embedding set.
pub fn evaluate(emb: &EmbeddingSet, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let rr = rank_gallery(emb, &cfg.protocol)?;
    let metrics = cmc_map(&rr)?;
    let channels = match &cfg.channels {
        Some(c) => c.clone(),
        None => emb.channel_names(),
    };
    let mut reports = Vec::with_capacity(channels.len());
    for ch in channels {
        let p_neg = same_bias_rank_prob(&rr, &ch, Polarity::Negative, cfg.ranks)?;
        let p_pos = same_bias_rank_prob(&rr, &ch, Polarity::Positive, cfg.ranks)?;
        let probe_accuracy = if cfg.probe {
            Some(probe_bias(emb, &ch, &cfg.probe_cfg)?.accuracy)
        } else {
            None
        };
        reports.push(ChannelReport {
            nauc_neg: nauc(&p_neg, cfg.nauc_k)?,
            nauc_pos: nauc(&p_pos, cfg.nauc_k)?,
            channel: ch,
            probe_accuracy,
            p_neg,
            p_pos,
        });
    }
    Ok(EvalReport {
        protocol: cfg.protocol.to_string(),
        n_queries: metrics.n_queries,
        dropped_queries: rr.dropped,
        rank1: metrics.rank(1),
        rank5: metrics.rank(5),
        rank10: metrics.rank(10),
        map: metrics.map,
        cmc: metrics.cmc,
        channels: reports,
        config: cfg.clone(),
    })
}
