use std::path::{Path, PathBuf};

use serde::Serialize;

use reidbias::dataset::{load_dataset, save_dataset};
use reidbias::evaluation::{
    curves_csv, lambda_sweep, nauc, probe_bias, rank_gallery, same_bias_rank_prob, write_sweep_csv,
    ChannelReport, Polarity, ProbeOutcome,
};
use reidbias::pipeline::{prepare_synthetic, EVAL_SPLITS};
use reidbias::trainer::{checkpoint_load, checkpoint_save};
use reidbias::{concat, embed_all, Dataset, EmbeddingSet, Error, Mode, Result, Trainer};

use crate::manifest::{Recorder, RunManifest};
use crate::settings::Settings;

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const RESOLVED_FILE: &str = "resolved.cfg";

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("serialisable")
}

fn start(out: &Path, settings: &Settings, resolved: String) -> Result<Recorder> {
    let mut rec = Recorder::new(out, settings.config_path.as_deref())?;
    rec.manifest.seed = settings.seed();
    rec.write(RESOLVED_FILE, resolved.as_bytes())?;
    rec.manifest.resolved_config = resolved;
    Ok(rec)
}

fn load_embeddings(rec: &mut Recorder, path: &Path) -> Result<EmbeddingSet> {
    rec.input(path);
    let ds = load_dataset(path)?;
    Ok(EmbeddingSet::from_dataset(&ds, &ds.name, EVAL_SPLITS))
}

pub fn gen(settings: &Settings, out: &Path) -> Result<RunManifest> {
    let mut rec = start(out, settings, settings.generator_text())?;
    let split = prepare_synthetic(&settings.generator, settings.seed(), settings.query_fraction)?;
    let path = rec.path(DATASET_FILE);
    save_dataset(&split.dataset, &path)?;
    rec.wrote(path);
    rec.finish()
}

pub fn train(settings: &Settings, data: &Path, out: &Path) -> Result<RunManifest> {
    let mut rec = start(out, settings, settings.branch_text())?;
    rec.input(data);
    let ds = load_dataset(data)?;
    let mut trainer = Trainer::new(&ds, settings.branch.clone())?;
    trainer.run_to_end()?;
    let ckpt = rec.path(CHECKPOINT_FILE);
    checkpoint_save(&trainer.checkpoint(), &ckpt)?;
    rec.wrote(ckpt);
    rec.write(TRAIN_LOG_FILE, trainer.log().to_csv_string().as_bytes())?;
    rec.finish()
}

/// Embeds the query and gallery rows with each checkpoint, concatenating
/// the results in argument order.
pub fn embed(settings: &Settings, checkpoints: &[PathBuf], data: &Path, out: &Path) -> Result<RunManifest> {
    if checkpoints.is_empty() {
        return Err(Error::config("embed needs at least one checkpoint"));
    }
    let mut rec = start(out, settings, String::new())?;
    rec.input(data);
    let ds = load_dataset(data)?;
    let mut sets = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        rec.input(path);
        let ckpt = checkpoint_load(path)?;
        let branch = match ckpt.config.mode {
            Mode::Reduce => "R",
            Mode::Enhance => "E",
        };
        sets.push(embed_all(&ckpt.params, &ds, EVAL_SPLITS, branch)?);
    }
    let emb = concat(&sets)?;
    let path = rec.path(EMBEDDINGS_FILE);
    emb.save_csv(&path)?;
    rec.wrote(path);
    rec.finish()
}

pub fn eval(settings: &Settings, data: &Path, out: &Path) -> Result<RunManifest> {
    let mut rec = start(out, settings, settings.eval_text())?;
    let emb = load_embeddings(&mut rec, data)?;
    let report = reidbias::evaluate(&emb, &settings.eval)?;
    for path in report.save(out, "report")? {
        rec.wrote(path);
    }
    rec.finish()
}

pub fn probe(settings: &Settings, data: &Path, out: &Path) -> Result<RunManifest> {
    let mut rec = start(out, settings, settings.eval_text())?;
    let emb = load_embeddings(&mut rec, data)?;
    let channels = settings.eval.channels.clone().unwrap_or_else(|| emb.channel_names());
    let outcomes = channels
        .iter()
        .map(|c| probe_bias(&emb, c, &settings.eval.probe_cfg))
        .collect::<Result<Vec<ProbeOutcome>>>()?;
    rec.write("probe.json", &json(&outcomes))?;
    rec.finish()
}

#[derive(Serialize)]
struct Stats<'a> {
    protocol: String,
    channel: &'a str,
    ranks: usize,
    nauc_k: usize,
    nauc_neg: f64,
    nauc_pos: f64,
}

pub fn stats(settings: &Settings, data: &Path, out: &Path) -> Result<RunManifest> {
    let mut rec = start(out, settings, settings.eval_text())?;
    let emb = load_embeddings(&mut rec, data)?;
    let cfg = &settings.eval;
    let rr = rank_gallery(&emb, &cfg.protocol)?;
    let channels = cfg.channels.clone().unwrap_or_else(|| emb.channel_names());
    let mut all = Vec::with_capacity(channels.len());
    for ch in &channels {
        let p_neg = same_bias_rank_prob(&rr, ch, Polarity::Negative, cfg.ranks)?;
        let p_pos = same_bias_rank_prob(&rr, ch, Polarity::Positive, cfg.ranks)?;
        let report = ChannelReport {
            channel: ch.clone(),
            probe_accuracy: None,
            nauc_neg: nauc(&p_neg, cfg.nauc_k)?,
            nauc_pos: nauc(&p_pos, cfg.nauc_k)?,
            p_neg,
            p_pos,
        };
        rec.write(&format!("curves_{ch}.csv"), curves_csv(&report).as_bytes())?;
        all.push(Stats {
            protocol: cfg.protocol.to_string(),
            channel: ch,
            ranks: cfg.ranks,
            nauc_k: cfg.nauc_k,
            nauc_neg: report.nauc_neg,
            nauc_pos: report.nauc_pos,
        });
    }
    rec.write("stats.json", &json(&all))?;
    rec.finish()
}

pub fn sweep(settings: &Settings, lambdas: &[f64], data: &Path, out: &Path) -> Result<RunManifest> {
    let resolved = format!(
        "{}{}# lambdas = {}\n",
        settings.branch_text(),
        settings.eval_text(),
        lambdas.iter().map(|l| format!("{l:?}")).collect::<Vec<_>>().join(",")
    );
    let mut rec = start(out, settings, resolved)?;
    rec.input(data);
    let ds: Dataset = load_dataset(data)?;
    let rows = lambda_sweep(&ds, &settings.branch, settings.branch.mode, lambdas, &settings.eval)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    rec.write("sweep.csv", &buf)?;
    rec.finish()
}
