use std::time::Instant;

use rand::seq::SliceRandom;

use super::steps::{cbdnet_step, discriminator_step, generator_step, mrdn_step, Batch};
use super::{EpochRecord, Metrics, Sgd, StepRecord, TrainConfig};
use crate::channel_sim::Sample;
use crate::eval_bench::{mean_db, model_nmse, NmseDenominator};
use crate::models::{CbdNet, Discriminator, Model, Mrdn};
use crate::tensor_nn::Mode;
use crate::{rng, Error, Result};

pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Metrics,
}

const LOSS_TAIL: usize = 10;
const VAL_BATCH: usize = 50;

enum Optimizers {
    Cbdnet(Sgd<CbdNet>),
    Gan(Sgd<CbdNet>, Sgd<Discriminator>),
    Mrdn(Sgd<Mrdn>),
}

pub fn train(model: Model, train: &[Sample], val: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with(model, train, val, cfg, seed, |_, _, _| Ok(()))
}

/// Mini-batch SGD over `train`, shuffled each epoch from `seed`, with the
/// validation NMSE recorded after every epoch. `on_epoch` runs after each
/// epoch with the epoch index, current model and metrics so far.
pub fn train_with(
    mut model: Model,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &Model, &Metrics) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate("train")?;
    if train.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let lr = cfg.lr_for(&model.spec());
    let mut opt = match &model {
        Model::Cbdnet(_) => Optimizers::Cbdnet(Sgd::new(lr, cfg.momentum, cfg.clip_norm)),
        Model::GanCbd(_) => Optimizers::Gan(
            Sgd::new(lr, cfg.momentum, cfg.clip_norm),
            Sgd::new(lr, cfg.momentum, cfg.clip_norm),
        ),
        Model::Mrdn(_) => Optimizers::Mrdn(Sgd::new(lr, cfg.momentum, cfg.clip_norm)),
    };
    let mut metrics = Metrics::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut iteration = 0;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);

    'epochs: for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if iteration >= max_steps {
                break;
            }
            let batch = Batch::gather(train, chunk)?;
            let start = cfg.record_timing.then(Instant::now);
            let record = step(&mut model, &mut opt, &batch, cfg, &mut metrics).map_err(|e| match e {
                Error::Numeric { .. } | Error::Domain(_) => diverged(iteration, chunk, &metrics),
                other => other,
            })?;
            let (loss, disc_loss, sigma_hat_mean) = record;
            if !loss.is_finite() || disc_loss.is_some_and(|d| !d.is_finite()) {
                return Err(diverged(iteration, chunk, &metrics));
            }
            metrics.steps.push(StepRecord {
                iteration,
                epoch,
                loss,
                disc_loss,
                sigma_hat_mean,
                ms_per_step: start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3),
            });
            epoch_loss += loss;
            epoch_steps += 1;
            iteration += 1;
        }
        if epoch_steps == 0 {
            break 'epochs;
        }
        let val_nmse_db = if val.is_empty() {
            None
        } else {
            Some(mean_db(&model_nmse(&model, val, VAL_BATCH, NmseDenominator::Truth)?))
        };
        metrics.epochs.push(EpochRecord {
            epoch,
            iteration: iteration - 1,
            train_loss: epoch_loss / epoch_steps as f64,
            val_nmse_db,
        });
        on_epoch(epoch, &model, &metrics)?;
    }
    Ok(TrainOutcome { model, metrics })
}

fn diverged(iteration: usize, chunk: &[usize], metrics: &Metrics) -> Error {
    let tail = metrics.steps.len().saturating_sub(LOSS_TAIL);
    Error::Diverged {
        iteration,
        batch: chunk.to_vec(),
        loss_tail: metrics.steps[tail..].iter().map(|s| s.loss).collect(),
    }
}

/// One optimizer step; returns `(loss, discriminator loss, mean σ̂)`.
fn step(
    model: &mut Model,
    opt: &mut Optimizers,
    batch: &Batch,
    cfg: &TrainConfig,
    metrics: &mut Metrics,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    match (model, opt) {
        (Model::Mrdn(m), Optimizers::Mrdn(o)) => {
            let mut r = mrdn_step(m, batch)?;
            o.step(m, &mut r.grads)?;
            Ok((r.loss, None, None))
        }
        (Model::Cbdnet(m), Optimizers::Cbdnet(o)) => {
            let (mut r, cache) = cbdnet_step(m, batch, &cfg.rec_loss)?;
            m.update_running(&cache);
            o.step(m, &mut r.grads)?;
            Ok((r.loss, None, r.sigma_hat_mean))
        }
        (Model::GanCbd(g), Optimizers::Gan(og, od)) => {
            let (fake, _) = g.generator.forward(&batch.y, Mode::Train)?;
            let (mut d, clamped) = discriminator_step(&g.discriminator, &batch.h, &fake.h_hat)?;
            od.step(&mut g.discriminator, &mut d.grads)?;
            let (mut r, cache, clamped_g) = generator_step(g, batch, &cfg.rec_loss, cfg.gan_weight)?;
            g.generator.update_running(&cache);
            og.step(&mut g.generator, &mut r.grads)?;
            metrics.clamped_probs += clamped + clamped_g;
            Ok((r.loss, Some(d.loss), r.sigma_hat_mean))
        }
        _ => unreachable!("optimizer built for the model kind"),
    }
}
