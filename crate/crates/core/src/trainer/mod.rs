//! Trains one branch (bias-reducing or bias-enhancing) end to end.

mod checkpoint;
mod config;
mod log;

pub use checkpoint::{checkpoint_load, checkpoint_save, read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{default_lambda_db, BranchConfig};
pub use log::{EpochStats, TrainLog, LOG_HEADER};

use crate::dataset::{Batch, ChannelRef, Dataset, PkSampler, Split};
use crate::error::{Error, Result};
use crate::losses::{combined_loss, CombinedOutput};
use crate::numerics::{AdamConfig, AdamState, EncoderParams, EncoderShape, Schedule};
use crate::rng;

/// Redraws allowed when a batch violates the loss preconditions.
pub const BATCH_RETRIES: usize = 10;

/// Owns the parameters and optimiser state of one branch.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    ds: &'a Dataset,
    cfg: BranchConfig,
    channel: ChannelRef,
    schedule: Schedule,
    params: EncoderParams,
    adam: AdamState,
    epoch: usize,
    log: TrainLog,
    n_train: usize,
}

impl<'a> Trainer<'a> {
    /// Fresh trainer with parameters initialised from the config seed.
    pub fn new(ds: &'a Dataset, cfg: BranchConfig) -> Result<Self> {
        cfg.validate()?;
        let shape = EncoderShape {
            input: ds.dim(),
            hidden: cfg.hidden.clone(),
            output: cfg.emb_dim,
            leaky_slope: cfg.leaky_slope,
        };
        let params = EncoderParams::init(&shape, &mut rng::stream(cfg.seed, "init"))?;
        let adam = AdamState::new(params.num_params(), AdamConfig::default());
        Self::assemble(ds, cfg, params, adam, 0, TrainLog::default())
    }

    /// Continues from a checkpoint.
    pub fn resume(ds: &'a Dataset, ckpt: Checkpoint) -> Result<Self> {
        Self::assemble(ds, ckpt.config, ckpt.params, ckpt.adam, ckpt.epoch, ckpt.log)
    }

    fn assemble(
        ds: &'a Dataset,
        cfg: BranchConfig,
        params: EncoderParams,
        adam: AdamState,
        epoch: usize,
        log: TrainLog,
    ) -> Result<Self> {
        cfg.validate()?;
        let channel = ds.channel(&cfg.bias_channel)?;
        if params.input_dim() != ds.dim() {
            return Err(Error::config(format!(
                "encoder input dim {} != dataset feature dim {}",
                params.input_dim(),
                ds.dim()
            )));
        }
        if adam.num_params() != params.num_params() {
            return Err(Error::config("optimiser state does not match parameters"));
        }
        let n_train = ds.indices_of(Split::Train).len();
        // validates P against the train identities up front
        PkSampler::new(ds, cfg.p, cfg.k, rng::stream(cfg.seed, "validate"))?;
        let schedule = Schedule::new(cfg.base_rate, cfg.epochs.max(1))?;
        if epoch > cfg.epochs {
            return Err(Error::config(format!(
                "checkpoint epoch {epoch} beyond configured {} epochs",
                cfg.epochs
            )));
        }
        Ok(Self {
            ds,
            cfg,
            channel,
            schedule,
            params,
            adam,
            epoch,
            log,
            n_train,
        })
    }

    pub fn config(&self) -> &BranchConfig {
        &self.cfg
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n_train.div_ceil(self.cfg.p * self.cfg.k)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            config: self.cfg.clone(),
            log: self.log.clone(),
        }
    }

    pub fn into_parts(self) -> (EncoderParams, TrainLog) {
        (self.params, self.log)
    }

    /// Batch sampler of an epoch; seeded per epoch so resumed runs replay it.
    fn sampler(&self, epoch: usize) -> Result<PkSampler> {
        PkSampler::new(
            self.ds,
            self.cfg.p,
            self.cfg.k,
            rng::stream(self.cfg.seed, &format!("batches/{epoch}")),
        )
    }

    /// First batch the next epoch will draw.
    pub fn peek_batch(&self) -> Result<Batch> {
        Ok(self.sampler(self.epoch)?.next_batch(self.ds))
    }

    /// Combined loss and parameter gradients at the current parameters.
    pub fn gradients(&self, batch: &Batch) -> Result<(CombinedOutput, EncoderParams)> {
        let inputs = self.ds.features(&batch.indices);
        let (emb, tape) = self.params.encode(&inputs)?;
        let out = combined_loss(
            &emb,
            &batch.ids,
            batch.labels(self.channel),
            self.cfg.mode,
            &self.cfg.weights,
        )?;
        let grads = tape.backprop(&out.grads)?;
        Ok((out, grads))
    }

    /// Runs one epoch and appends its statistics to the log.
    pub fn run_epoch(&mut self) -> Result<&EpochStats> {
        if self.is_done() {
            return Err(Error::config("all configured epochs already completed"));
        }
        let epoch = self.epoch;
        let rate = self.schedule.rate(epoch)?;
        let mut sampler = self.sampler(epoch)?;
        let n_batches = self.batches_per_epoch();

        let (mut sum_dr, mut n_dr, mut act_dr) = (0.0, 0usize, 0.0);
        let (mut sum_db, mut n_db, mut act_db) = (0.0, 0usize, 0.0);
        let mut skipped = 0;
        for b in 0..n_batches {
            let (out, grads) = self.draw_and_differentiate(&mut sampler, epoch, b)?;
            if !out.value.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {}, batch {b}",
                    epoch + 1
                )));
            }
            if let Some(r) = &out.reid {
                sum_dr += r.value;
                act_dr += r.active_fraction();
                n_dr += 1;
            }
            if let Some(bias) = &out.bias {
                sum_db += bias.value;
                act_db += bias.active_fraction();
                skipped += bias.skipped;
                n_db += 1;
            }
            let flat_grads = grads.to_flat();
            if flat_grads.iter().all(|&g| g == 0.0) {
                continue;
            }
            let mut flat = self.params.to_flat();
            self.adam.update(&mut flat, &flat_grads, rate).map_err(|e| match e {
                Error::Training(m) => Error::Training(format!("epoch {}, batch {b}: {m}", epoch + 1)),
                other => other,
            })?;
            self.params.assign_flat(&flat)?;
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        self.log.epochs.push(EpochStats {
            epoch: epoch + 1,
            loss_dr: mean(sum_dr, n_dr),
            loss_db: mean(sum_db, n_db),
            active_frac_dr: mean(act_dr, n_dr),
            active_frac_db: mean(act_db, n_db),
            rate,
            skipped,
        });
        self.epoch += 1;
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    fn draw_and_differentiate(
        &self,
        sampler: &mut PkSampler,
        epoch: usize,
        batch: usize,
    ) -> Result<(CombinedOutput, EncoderParams)> {
        let mut last_err = None;
        for _ in 0..=BATCH_RETRIES {
            let b = sampler.next_batch(self.ds);
            match self.gradients(&b) {
                Ok(r) => return Ok(r),
                Err(Error::BatchComposition(m)) => last_err = Some(m),
                Err(e) => return Err(e),
            }
        }
        Err(Error::BatchComposition(format!(
            "epoch {}, batch {batch}: no valid batch after {BATCH_RETRIES} redraws: {}",
            epoch + 1,
            last_err.unwrap_or_default()
        )))
    }

    /// Runs up to `n` more epochs (fewer if the schedule ends first).
    pub fn run_epochs(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            if self.is_done() {
                break;
            }
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.run_epochs(self.cfg.epochs - self.epoch)
    }
}

/// Trains a branch from scratch and returns its final parameters and log.
pub fn train_branch(ds: &Dataset, cfg: &BranchConfig) -> Result<(EncoderParams, TrainLog)> {
    let mut t = Trainer::new(ds, cfg.clone())?;
    t.run_to_end()?;
    Ok(t.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, GeneratorConfig};
    use crate::losses::Mode;
    use crate::numerics::{central_difference, max_relative_error};

    fn tiny() -> Dataset {
        let mut g = GeneratorConfig::default();
        g.n_ids = 24;
        g.n_train_ids = 16;
        generate_synthetic(&g, 5).unwrap()
    }

    fn small_cfg(mode: Mode, epochs: usize) -> BranchConfig {
        let mut cfg = BranchConfig::desk_scale(mode, "pose");
        cfg.p = 4;
        cfg.hidden = vec![16];
        cfg.emb_dim = 8;
        cfg.epochs = epochs;
        cfg.base_rate = 1e-3;
        cfg
    }

    #[test]
    fn reid_loss_falls_without_bias_term() {
        let ds = tiny();
        let mut cfg = small_cfg(Mode::Reduce, 30);
        cfg.weights.lambda_db = 0.0;
        let (_, log) = train_branch(&ds, &cfg).unwrap();
        assert_eq!(log.epochs.len(), 30);
        assert!(log.epochs[29].loss_dr < log.epochs[0].loss_dr, "{log:?}");
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let ds = tiny();
        let cfg = small_cfg(Mode::Reduce, 0);
        let init = Trainer::new(&ds, cfg.clone()).unwrap().params().clone();
        let (p, log) = train_branch(&ds, &cfg).unwrap();
        assert_eq!(p, init);
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let ds = tiny();
        let cfg = small_cfg(Mode::Enhance, 5);
        let a = train_branch(&ds, &cfg).unwrap();
        let b = train_branch(&ds, &cfg).unwrap();
        assert_eq!(a.0.to_flat(), b.0.to_flat());
        assert_eq!(a.1, b.1);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(train_branch(&ds, &other).unwrap().0.to_flat(), a.0.to_flat());
    }

    #[test]
    fn modes_differ_only_in_bias_sign() {
        let ds = tiny();
        let mut r_cfg = small_cfg(Mode::Reduce, 1);
        r_cfg.weights.lambda_db = 0.05;
        let mut e_cfg = r_cfg.clone();
        e_cfg.mode = Mode::Enhance;
        let r = Trainer::new(&ds, r_cfg).unwrap();
        let e = Trainer::new(&ds, e_cfg).unwrap();
        let batch = r.peek_batch().unwrap();
        assert_eq!(batch, e.peek_batch().unwrap());
        let (ro, _) = r.gradients(&batch).unwrap();
        let (eo, _) = e.gradients(&batch).unwrap();
        let reid = ro.reid.as_ref().unwrap();
        let bias = ro.bias.as_ref().unwrap();
        assert_eq!(eo.reid.as_ref().unwrap(), reid);
        assert_eq!(eo.bias.as_ref().unwrap(), bias);
        for i in 0..reid.grads.as_slice().len() {
            let (g_r, g_b) = (reid.grads.as_slice()[i], bias.grads.as_slice()[i]);
            assert_eq!(ro.grads.as_slice()[i], g_r - 0.05 * g_b);
            assert_eq!(eo.grads.as_slice()[i], g_r + 0.05 * g_b);
        }
    }

    #[test]
    fn final_rate_within_last_decay_step() {
        let ds = tiny();
        let cfg = small_cfg(Mode::Reduce, 7);
        let (_, log) = train_branch(&ds, &cfg).unwrap();
        let last = log.epochs.last().unwrap().rate;
        assert!(last <= cfg.base_rate / 7.0 + 1e-18, "{last}");
        assert!(log.epochs.windows(2).all(|w| w[1].rate < w[0].rate));
    }

    #[test]
    fn zero_gradients_leave_parameters_alone() {
        let ds = tiny();
        let mut cfg = small_cfg(Mode::Reduce, 2);
        cfg.weights.lambda_dr = 0.0;
        cfg.weights.lambda_db = 0.0;
        let mut t = Trainer::new(&ds, cfg).unwrap();
        let before = t.params().clone();
        t.run_to_end().unwrap();
        assert_eq!(t.params(), &before);
        assert_eq!(t.adam().step, 0);
        assert_eq!(t.log().epochs.len(), 2);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let ds = tiny();
        let cfg = small_cfg(Mode::Reduce, 20);
        let straight = train_branch(&ds, &cfg).unwrap();

        let mut first = Trainer::new(&ds, cfg).unwrap();
        first.run_epochs(10).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&first.checkpoint(), &mut bytes).unwrap();
        let ckpt = read_checkpoint(&mut bytes.as_slice()).unwrap();
        let mut second = Trainer::resume(&ds, ckpt).unwrap();
        assert_eq!(second.epoch(), 10);
        second.run_to_end().unwrap();
        let (p, log) = second.into_parts();
        assert_eq!(p.to_flat(), straight.0.to_flat());
        assert_eq!(log, straight.1);
    }

    #[test]
    fn resume_rejects_mismatched_inputs() {
        let ds = tiny();
        let t = Trainer::new(&ds, small_cfg(Mode::Reduce, 3)).unwrap();
        let mut ckpt = t.checkpoint();
        ckpt.epoch = 4;
        assert!(Trainer::resume(&ds, ckpt).is_err());
        let mut ckpt = t.checkpoint();
        ckpt.config.bias_channel = "shoes".into();
        assert!(Trainer::resume(&ds, ckpt).is_err());
        let mut t = t;
        t.run_to_end().unwrap();
        assert!(t.run_epoch().is_err());
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let ds = tiny();
        let mut cfg = small_cfg(Mode::Reduce, 1);
        cfg.weights.lambda_db = 0.05;
        cfg.weights.bias_hinge = false;
        let t = Trainer::new(&ds, cfg.clone()).unwrap();
        let batch = t.peek_batch().unwrap();
        let (out, grads) = t.gradients(&batch).unwrap();
        let point = t.params().to_flat();
        let inputs = ds.features(&batch.indices);
        let bias = batch.labels(ds.channel("pose").unwrap()).to_vec();
        let mut probe = t.params().clone();
        let numeric = central_difference(
            |x| {
                probe.assign_flat(x).unwrap();
                let emb = probe.forward(&inputs).unwrap();
                combined_loss(&emb, &batch.ids, &bias, cfg.mode, &cfg.weights).unwrap().value
            },
            &point,
            1e-5,
        );
        assert!(out.value.is_finite());
        // the floor sits well above the difference quotient's round-off
        let err = max_relative_error(&grads.to_flat(), &numeric, 1e-3);
        assert!(err < 1e-5, "relative error {err}");
    }
}
