use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LesionClass, SplitManifest};
use crate::error::{Error, IoContext, Result};
use crate::model::{images_to_batch, masks_to_targets, save_checkpoint, CheckpointMeta, SegmentationModel};
use crate::nn::params::apply_batch_stats;
use crate::nn::{Adam, Tensor};
use crate::training::config::TrainConfig;
use crate::training::early_stop::{Decision, EarlyStopState};
use crate::training::plot::write_loss_curve;
use crate::training::samples::{ManifestSamples, SampleSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_s: f64,
    pub improved: bool,
}

/// Where a run writes its artifacts; every field is optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    /// Rewritten whenever the validation loss improves.
    pub checkpoint: Option<PathBuf>,
    /// One JSON object per epoch.
    pub log_jsonl: Option<PathBuf>,
    pub loss_curve_png: Option<PathBuf>,
    pub lesion: Option<LesionClass>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the initial model if no epoch ran).
    pub model: SegmentationModel,
    pub log: Vec<EpochLog>,
    pub early_stop: EarlyStopState,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn best_epoch(&self) -> Option<usize> {
        (self.early_stop.best_epoch > 0).then_some(self.early_stop.best_epoch)
    }
}

fn load_batch(src: &dyn SampleSource, indices: &[usize]) -> Result<(Tensor, Tensor)> {
    let mut images = Vec::with_capacity(indices.len());
    let mut masks = Vec::with_capacity(indices.len());
    for &i in indices {
        let (img, mask) = src.load(i)?;
        images.push(img);
        masks.push(mask);
    }
    let x = images_to_batch(&images.iter().collect::<Vec<_>>())?;
    let y = masks_to_targets(&masks.iter().collect::<Vec<_>>())?;
    Ok((x, y))
}

/// Feeds batches to `f` in order, decoding up to `prefetch` batches ahead on a
/// loader thread when `prefetch > 0`.
fn for_each_batch(
    src: &dyn SampleSource,
    batches: &[Vec<usize>],
    prefetch: usize,
    mut f: impl FnMut(&[usize], Tensor, Tensor) -> Result<()>,
) -> Result<()> {
    if prefetch == 0 {
        for b in batches {
            let (x, y) = load_batch(src, b)?;
            f(b, x, y)?;
        }
        return Ok(());
    }
    std::thread::scope(|scope| {
        let (tx, rx) = sync_channel(prefetch);
        scope.spawn(move || {
            for b in batches {
                if tx.send(load_batch(src, b)).is_err() {
                    break;
                }
            }
        });
        for b in batches {
            let (x, y) = rx.recv().map_err(|_| Error::Contract("loader thread stopped early".into()))??;
            f(b, x, y)?;
        }
        Ok(())
    })
}

fn batches_of(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

fn check_side(model: &SegmentationModel, x: &Tensor) -> Result<()> {
    let side = model.config().input_side;
    let s = x.shape();
    if s[1] != side || s[2] != side {
        return Err(Error::Inference(format!(
            "samples are {}x{}, the model expects {side}x{side}",
            s[1], s[2]
        )));
    }
    Ok(())
}

/// Mean per-pixel BCE over a sample set in evaluation mode.
pub fn evaluate_loss(model: &SegmentationModel, src: &dyn SampleSource, batch_size: usize) -> Result<f64> {
    if src.is_empty() {
        return Err(Error::Config("cannot evaluate an empty sample set".into()));
    }
    let order: Vec<usize> = (0..src.len()).collect();
    let mut total = 0.0;
    for_each_batch(src, &batches_of(&order, batch_size.max(1)), 0, |b, x, y| {
        check_side(model, &x)?;
        total += model.eval_loss(&x, &y)? * b.len() as f64;
        Ok(())
    })?;
    Ok(total / src.len() as f64)
}

fn ids(src: &dyn SampleSource, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&i| src.id(i).to_string()).collect()
}

/// Adam on mean BCE with per-epoch shuffling, validation each epoch, early
/// stopping on validation loss and restoration of the best parameters.
pub fn train(
    mut model: SegmentationModel,
    train_set: &dyn SampleSource,
    val_set: &dyn SampleSource,
    cfg: &TrainConfig,
    out: &TrainOutputs,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("the training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("the validation set is empty".into()));
    }
    if cfg.model.freeze_backbone {
        model.store_mut().set_trainable("encoder.", false);
    }
    let mut log_file = match &out.log_jsonl {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_path(parent)?;
            }
            Some((fs::File::create(path).with_path(path)?, path.clone()))
        }
        None => None,
    };

    let mut adam = Adam::new(cfg.learning_rate);
    let mut early = EarlyStopState::new(cfg.early_stopping_patience);
    let mut best_store = model.store().clone();
    let mut log = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let mut loss_sum = 0.0;
        for_each_batch(train_set, &batches_of(&order, cfg.batch_size), cfg.prefetch_batches, |b, x, y| {
            check_side(&model, &x)?;
            let pass = model.train_pass(&x, &y)?;
            if !pass.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    samples: ids(train_set, b),
                });
            }
            adam.step(model.store_mut(), &pass.grads);
            apply_batch_stats(model.store_mut(), &pass.stats);
            loss_sum += pass.loss * b.len() as f64;
            Ok(())
        })?;
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = evaluate_loss(&model, val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                samples: ids(val_set, &(0..val_set.len()).collect::<Vec<_>>()),
            });
        }
        let decision = early.step(val_loss);
        let improved = early.improved_last_step();
        if improved {
            best_store = model.store().clone();
            if let Some(path) = &out.checkpoint {
                let meta = CheckpointMeta {
                    epoch: Some(epoch),
                    val_loss: Some(val_loss),
                    lesion: out.lesion.map(|l| l.to_string()),
                };
                save_checkpoint(path, &model, &cfg.preprocess(), &meta)?;
            }
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_time_s: started.elapsed().as_secs_f64(),
            improved,
        };
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5}{}",
            if improved { " (best)" } else { "" }
        );
        if let Some((file, path)) = log_file.as_mut() {
            writeln!(file, "{}", serde_json::to_string(&entry)?).with_path(path.as_path())?;
        }
        log.push(entry);
        if decision == Decision::Stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }

    if !log.is_empty() {
        *model.store_mut() = best_store;
    }
    if cfg.model.freeze_backbone {
        model.store_mut().set_trainable("encoder.", true);
    }
    if let Some(path) = &out.loss_curve_png {
        write_loss_curve(path, &log)?;
    }
    Ok(TrainOutcome {
        model,
        log,
        early_stop: early,
        stopped_early,
    })
}

/// [`train`] over the train and validation records of a split manifest.
pub fn train_on_manifest(
    model: SegmentationModel,
    manifest: &SplitManifest,
    cfg: &TrainConfig,
    out: &TrainOutputs,
) -> Result<TrainOutcome> {
    let pre = cfg.preprocess();
    let train_set = ManifestSamples::new(&manifest.train, pre);
    let val_set = ManifestSamples::new(&manifest.validation, pre);
    train(model, &train_set, &val_set, cfg, out)
}

/// Reads a JSONL epoch log back.
pub fn read_epoch_log(path: &std::path::Path) -> Result<Vec<EpochLog>> {
    let text = fs::read_to_string(path).with_path(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::synthesize;
    use crate::model::{build_model, ModelConfig};
    use crate::training::config::ModelSection;

    fn tiny_cfg() -> TrainConfig {
        let m = ModelConfig::tiny(32);
        TrainConfig {
            image_size: 32,
            batch_size: 2,
            max_epochs: 2,
            learning_rate: 1e-3,
            model: ModelSection {
                backbone: m.backbone,
                aspp_channels: m.aspp_channels,
                decoder_low_level_channels: m.decoder_low_level_channels,
                ..ModelSection::default()
            },
            ..TrainConfig::default()
        }
    }

    fn samples(n: usize, seed: u64) -> InMemory {
        let mut s = crate::training::samples::InMemorySamples::new();
        for i in 0..n {
            let syn = synthesize(32, seed + i as u64);
            s.push(format!("s{i}"), syn.image, syn.masks[0].clone()).unwrap();
        }
        s
    }

    type InMemory = crate::training::samples::InMemorySamples;

    #[test]
    fn zero_epochs_returns_the_initial_model() {
        let cfg = TrainConfig { max_epochs: 0, ..tiny_cfg() };
        let model = build_model(&cfg.model_config()).unwrap();
        let before = model.store().params()[0].value.clone();
        let out = train(model, &samples(2, 0), &samples(1, 9), &cfg, &TrainOutputs::default()).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.model.store().params()[0].value, before);
        assert_eq!(out.best_epoch(), None);
    }

    #[test]
    fn seeded_runs_repeat_and_prefetch_does_not_change_results() {
        let cfg = tiny_cfg();
        let run = |prefetch: usize| {
            let cfg = TrainConfig { prefetch_batches: prefetch, ..cfg.clone() };
            let model = build_model(&cfg.model_config()).unwrap();
            train(model, &samples(3, 0), &samples(2, 7), &cfg, &TrainOutputs::default()).unwrap().log
        };
        let strip = |log: Vec<EpochLog>| log.into_iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>();
        let a = strip(run(0));
        assert_eq!(a, strip(run(0)));
        assert_eq!(a, strip(run(2)));
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn empty_sets_and_wrong_sizes_are_rejected() {
        let cfg = tiny_cfg();
        let model = build_model(&cfg.model_config()).unwrap();
        let none = InMemory::new();
        assert!(matches!(
            train(model.clone(), &none, &samples(1, 0), &cfg, &TrainOutputs::default()),
            Err(Error::Config(_))
        ));
        let mut big = InMemory::new();
        let syn = synthesize(48, 1);
        big.push("big", syn.image, syn.masks[0].clone()).unwrap();
        assert!(matches!(
            train(model, &big, &samples(1, 0), &cfg, &TrainOutputs::default()),
            Err(Error::Inference(_))
        ));
    }

    #[test]
    fn artifacts_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = TrainOutputs {
            checkpoint: Some(dir.path().join("best.ckpt")),
            log_jsonl: Some(dir.path().join("epochs.jsonl")),
            loss_curve_png: Some(dir.path().join("loss.png")),
            lesion: Some(LesionClass::EX),
        };
        let cfg = tiny_cfg();
        let model = build_model(&cfg.model_config()).unwrap();
        let result = train(model, &samples(2, 3), &samples(1, 5), &cfg, &out).unwrap();
        assert_eq!(read_epoch_log(out.log_jsonl.as_ref().unwrap()).unwrap(), result.log);
        assert!(out.loss_curve_png.as_ref().unwrap().exists());
        let ckpt = crate::model::load_checkpoint(out.checkpoint.as_ref().unwrap()).unwrap();
        assert_eq!(ckpt.meta.epoch, result.best_epoch());
        assert_eq!(ckpt.meta.lesion.as_deref(), Some("EX"));
    }
}
