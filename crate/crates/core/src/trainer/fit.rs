//! Epoch loop: seeded shuffling, per-epoch validation, best-checkpointing,
//! early stopping, CSV loss histories and resumable state.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelParams, ModelSpec};
use crate::nn::Adam;

use super::config::{Stage, TrainConfig};
use super::sample::TrainSample;
use super::steps::{adversarial_step, pretrain_step, validation_l1};

/// Mutable training progress, serialized to `<run>/state.json` each epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_l1: f64,
    pub epochs_since_improvement: usize,
    pub g_loss_history: Vec<f64>,
    pub g_adv_history: Vec<f64>,
    pub g_l1_history: Vec<f64>,
    pub d_loss_history: Vec<f64>,
    pub val_l1_history: Vec<f64>,
    pub opt_g_steps: u64,
    pub opt_d_steps: u64,
}

impl TrainState {
    fn new() -> Self {
        TrainState {
            epoch: 0,
            best_val_l1: f64::INFINITY,
            epochs_since_improvement: 0,
            g_loss_history: Vec::new(),
            g_adv_history: Vec::new(),
            g_l1_history: Vec::new(),
            d_loss_history: Vec::new(),
            val_l1_history: Vec::new(),
            opt_g_steps: 0,
            opt_d_steps: 0,
        }
    }
}

pub struct FitOutcome {
    /// The checkpointed best parameters (by validation L1), not the last.
    pub best: ModelParams,
    pub state: TrainState,
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn best(&self) -> PathBuf {
        self.root.join("best.weights")
    }
    fn last(&self) -> PathBuf {
        self.root.join("last.weights")
    }
    fn last_disc(&self) -> PathBuf {
        self.root.join("last_disc.weights")
    }
    fn state(&self) -> PathBuf {
        self.root.join("state.json")
    }
    fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }
    fn opt_g(&self) -> PathBuf {
        self.root.join("optimizer_g.state")
    }
    fn opt_d(&self) -> PathBuf {
        self.root.join("optimizer_d.state")
    }
}

/// Per-epoch shuffle stream: a function of (seed, epoch) only, so resumed
/// runs replay the identical batch order.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn write_history_csv(path: &Path, state: &TrainState) -> Result<()> {
    let mut out = String::from("epoch,g_total,g_adv,g_l1,d_loss,val_l1\n");
    for i in 0..state.g_loss_history.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            state.g_loss_history[i],
            state.g_adv_history[i],
            state.g_l1_history[i],
            state.d_loss_history[i],
            state.val_l1_history[i],
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn save_optimizer(path: &Path, spec: &ModelSpec, opt: &Adam) -> Result<()> {
    let (_, arrays) = opt.export_state();
    crate::models::save_aux_arrays(path, spec, &arrays)
}

fn load_optimizer(path: &Path, opt: &mut Adam, steps: u64) -> Result<()> {
    let (_, arrays) = crate::models::load_aux_arrays(path)?;
    opt.import_state(steps, arrays);
    Ok(())
}

/// Trains `gen` (and `disc` in the adversarial stage) over seeded epochs.
///
/// Checkpoints `best.weights` whenever validation content L1 strictly
/// improves; stops after `patience` epochs without improvement or at
/// `epochs`, whichever comes first, and returns the checkpointed best.
/// If `run_dir` already holds a `state.json` from an interrupted run with
/// the same config, training resumes from the last completed epoch and
/// reproduces the uninterrupted run exactly.
pub fn fit<S: TrainSample>(
    gen: &mut ModelParams,
    mut disc: Option<&mut ModelParams>,
    train_set: &[S],
    val_set: &[S],
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::contract("training set must not be empty"));
    }
    if val_set.is_empty() {
        return Err(Error::contract("validation set must not be empty"));
    }
    match (cfg.stage, disc.is_some()) {
        (Stage::Adversarial, false) => {
            return Err(Error::contract("adversarial stage needs a discriminator"))
        }
        (Stage::Pretrain, true) => {
            return Err(Error::contract("pretrain stage must not get a discriminator"))
        }
        _ => {}
    }

    let dirs = RunDir {
        root: run_dir.to_path_buf(),
    };
    fs::create_dir_all(run_dir)?;
    // resolved config is echoed before any work
    fs::write(dirs.config(), serde_json::to_string_pretty(cfg)?)?;

    let mut opt_g = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut opt_d = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut state = TrainState::new();
    let mut best: Option<ModelParams> = None;

    // resume from an interrupted run in the same directory
    if dirs.state().exists() && dirs.last().exists() {
        let prev: TrainState = serde_json::from_str(&fs::read_to_string(dirs.state())?)?;
        gen.load_into(&dirs.last())?;
        if let Some(d) = disc.as_deref_mut() {
            d.load_into(&dirs.last_disc())?;
        }
        load_optimizer(&dirs.opt_g(), &mut opt_g, prev.opt_g_steps)?;
        if disc.is_some() {
            load_optimizer(&dirs.opt_d(), &mut opt_d, prev.opt_d_steps)?;
        }
        if dirs.best().exists() {
            best = Some(ModelParams::load(&dirs.best())?);
        }
        state = prev;
    }

    let mut indices: Vec<usize> = (0..train_set.len()).collect();

    for epoch in state.epoch..cfg.epochs {
        if state.epochs_since_improvement >= cfg.patience {
            break;
        }
        let mut rng = epoch_rng(cfg.seed, epoch);
        indices.shuffle(&mut rng);

        let mut g_sum = 0.0;
        let mut adv_sum = 0.0;
        let mut l1_sum = 0.0;
        let mut d_sum = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            match (cfg.stage, disc.as_deref_mut()) {
                (Stage::Pretrain, _) => {
                    let loss = pretrain_step(gen, &mut opt_g, train_set, chunk, cfg)?;
                    g_sum += loss;
                    l1_sum += loss;
                }
                (Stage::Adversarial, Some(d)) => {
                    let out =
                        adversarial_step(gen, d, &mut opt_g, &mut opt_d, train_set, chunk, cfg)?;
                    g_sum += out.gen_loss.total;
                    adv_sum += out.gen_loss.adversarial;
                    l1_sum += out.gen_loss.content_l1;
                    d_sum += out.d_loss;
                }
                (Stage::Adversarial, None) => unreachable!("validated above"),
            }
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        let val = validation_l1(gen, val_set)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation L1 at epoch {} is not finite",
                epoch + 1
            )));
        }

        state.epoch = epoch + 1;
        state.g_loss_history.push(g_sum / nb);
        state.g_adv_history.push(adv_sum / nb);
        state.g_l1_history.push(l1_sum / nb);
        state.d_loss_history.push(d_sum / nb);
        state.val_l1_history.push(val);
        state.opt_g_steps = opt_g.step_count();
        state.opt_d_steps = opt_d.step_count();
        log::info!(
            "epoch {}/{}: g_total={:.6} g_l1={:.6} d={:.6} val_l1={:.6}",
            state.epoch,
            cfg.epochs,
            g_sum / nb,
            l1_sum / nb,
            d_sum / nb,
            val
        );

        if val < state.best_val_l1 {
            state.best_val_l1 = val;
            state.epochs_since_improvement = 0;
            gen.save(&dirs.best()).map_err(|e| Error::Weights {
                path: dirs.best().display().to_string(),
                reason: format!("checkpoint write failed: {e}"),
            })?;
            best = Some(gen.clone());
        } else {
            state.epochs_since_improvement += 1;
        }

        gen.save(&dirs.last())?;
        if let Some(d) = disc.as_deref_mut() {
            d.save(&dirs.last_disc())?;
            save_optimizer(&dirs.opt_d(), d.spec(), &opt_d)?;
        }
        save_optimizer(&dirs.opt_g(), gen.spec(), &opt_g)?;
        fs::write(dirs.state(), serde_json::to_string_pretty(&state)?)?;
        write_history_csv(&dirs.history(), &state)?;

        if state.epochs_since_improvement >= cfg.patience {
            break;
        }
    }

    let best = match best {
        Some(b) => b,
        // zero-epoch runs and resumed-finished runs return the input weights
        None => gen.clone(),
    };
    Ok(FitOutcome { best, state })
}

/// Adversarial fine-tuning from prior-stage checkpoints with fresh
/// optimizer state; all layers stay trainable.
pub fn fine_tune<S: TrainSample>(
    gen_checkpoint: &Path,
    disc_checkpoint: &Path,
    expected_gen: Option<&ModelSpec>,
    expected_disc: Option<&ModelSpec>,
    train_set: &[S],
    val_set: &[S],
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<FitOutcome> {
    let mut gen = ModelParams::load(gen_checkpoint)?;
    let mut disc = ModelParams::load(disc_checkpoint)?;
    if let Some(want) = expected_gen {
        if want != gen.spec() {
            return Err(Error::SpecMismatch {
                expected: want.summary(),
                found: gen.spec().summary(),
            });
        }
    }
    if let Some(want) = expected_disc {
        if want != disc.spec() {
            return Err(Error::SpecMismatch {
                expected: want.summary(),
                found: disc.spec().summary(),
            });
        }
    }
    let cfg = TrainConfig {
        stage: Stage::Adversarial,
        ..cfg.clone()
    };
    fit(&mut gen, Some(&mut disc), train_set, val_set, &cfg, run_dir)
}
