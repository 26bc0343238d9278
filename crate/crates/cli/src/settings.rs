//! One config file serves every command: it may hold generator, branch and
//! evaluation keys, and anything outside their union is rejected.

use std::path::{Path, PathBuf};

use reidbias::config::{KeyDoc, KvConfig};
use reidbias::pipeline::DEFAULT_QUERY_FRACTION;
use reidbias::{BranchConfig, EvalConfig, GeneratorConfig, Result};

const RUN_KEYS: &[KeyDoc] = &[KeyDoc {
    key: "query_fraction",
    help: "share of each held-out identity's samples used as queries (default 0.25)",
}];

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub channel: Option<String>,
    pub protocol: Option<String>,
    pub preset: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub config_path: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub query_fraction: f64,
    pub branch: BranchConfig,
    pub eval: EvalConfig,
}

impl Settings {
    pub fn resolve(config: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let mut kv = match config {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        if let Some(s) = ov.seed {
            kv.set("seed", s);
        }
        if let Some(m) = &ov.mode {
            kv.set("mode", m);
        }
        if let Some(c) = &ov.channel {
            kv.set("channel", c);
            kv.set("nobias_channel", c);
            kv.set("report_channels", c);
        }
        if let Some(p) = &ov.protocol {
            kv.set("protocol", p);
        }
        if let Some(p) = &ov.preset {
            kv.set("preset", p);
        }
        let query_fraction = kv.take_or("query_fraction", DEFAULT_QUERY_FRACTION)?;
        let generator = GeneratorConfig::from_kv(&mut kv)?;
        let branch = BranchConfig::from_kv(&mut kv)?;
        // the probe follows the run seed unless pinned
        if !kv.contains("probe_seed") {
            kv.set("probe_seed", branch.seed);
        }
        let eval = EvalConfig::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(Self {
            config_path: config.map(Path::to_path_buf),
            generator,
            query_fraction,
            branch,
            eval,
        })
    }

    pub fn seed(&self) -> u64 {
        self.branch.seed
    }

    pub fn generator_text(&self) -> String {
        format!(
            "{}query_fraction = {:?}\nseed = {}\n",
            self.generator.to_kv_string(),
            self.query_fraction,
            self.seed()
        )
    }

    pub fn branch_text(&self) -> String {
        self.branch.to_kv_string()
    }

    pub fn eval_text(&self) -> String {
        self.eval.to_kv_string()
    }
}

/// Every accepted config key, grouped, for the help text.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (`key = value` lines, `#` comments):\n");
    for (title, keys) in [
        ("generator", GeneratorConfig::KEYS),
        ("run", RUN_KEYS),
        ("branch", BranchConfig::KEYS),
        ("evaluation", EvalConfig::KEYS),
    ] {
        out += &format!("\n  {title}:\n");
        for k in keys {
            out += &format!("    {:<18} {}\n", k.key, k.help);
        }
    }
    out
}
