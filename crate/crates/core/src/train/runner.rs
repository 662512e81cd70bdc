use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loss, split_records, targets, AdamW, LossMode, Split, TrainConfig};
use crate::dataio::{Dataset, VideoRecord};
use crate::diffcore::{Matrix, Tape};
use crate::error::{Error, Result};
use crate::gnn::ModelParams;
use crate::tgraph::{build_graph, Direction, TemporalGraph};

/// A video with its graph and training targets built once up front.
#[derive(Clone, Debug)]
pub struct PreparedVideo {
    pub video_id: String,
    pub features: Matrix,
    pub graph: TemporalGraph,
    pub targets: Vec<f64>,
}

impl PreparedVideo {
    pub fn new(record: &VideoRecord, config: &TrainConfig) -> Result<Self> {
        Ok(PreparedVideo {
            video_id: record.video_id.clone(),
            features: record.features.clone(),
            graph: build_graph(record.n_sampled(), config.model.window, None)?,
            targets: targets(record, config)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation loss.
    pub params: ModelParams,
    /// 1-based.
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for h in &self.history {
            let _ = writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_loss);
        }
        out
    }
}

fn record_loss(tape: &mut Tape<'_>, logits: crate::diffcore::Var, targets: &[f64], mode: LossMode) -> Result<crate::diffcore::Var> {
    match mode {
        LossMode::Binary => tape.bce_with_logits(logits, targets),
        LossMode::Regression => tape.sigmoid_mse(logits, targets),
    }
}

/// One optimizer step on one video (batch size 1); returns the loss.
fn train_step<R: Rng>(
    params: &mut ModelParams,
    opt: &mut AdamW,
    video: &PreparedVideo,
    mode: LossMode,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(video.features.clone());
    let z = params.forward_streams(&mut tape, x, &video.graph, &Direction::ALL, true, rng)?;
    let l = record_loss(&mut tape, z, &video.targets, mode)?;
    let value = tape.value(l).get(0, 0);
    if value.is_finite() {
        tape.backward(l, &mut params.store)?;
        opt.step(&mut params.store);
    }
    Ok(value)
}

/// Mean loss over videos with dropout off. Videos are scored in parallel
/// against the same parameters and reduced in input order.
fn eval_loss(params: &ModelParams, videos: &[PreparedVideo], mode: LossMode) -> Result<Vec<f64>> {
    videos
        .par_iter()
        .map(|v| {
            // no randomness is drawn when not training
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let logits = params.forward_pass(&v.features, &v.graph, false, &mut rng)?;
            loss(logits.as_slice(), &v.targets, mode)
        })
        .collect()
}

/// Trains from a fresh initialization drawn from `config.seed`. Each epoch
/// visits the training videos in a seeded shuffled order with one step per
/// video, then measures validation loss; the parameters of the best epoch
/// (earliest on ties) are returned.
pub fn train_one_split(dataset: &Dataset, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train_video_ids.is_empty() || split.val_video_ids.is_empty() {
        return Err(Error::Contract("split needs training and validation videos".into()));
    }
    let prepare = |records: Vec<&VideoRecord>| -> Result<Vec<PreparedVideo>> {
        records.into_iter().map(|r| PreparedVideo::new(r, config)).collect()
    };
    let train = prepare(split_records(dataset, &split.train_video_ids)?)?;
    let val = prepare(split_records(dataset, &split.val_video_ids)?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(&config.model, &mut rng)?;
    let mut opt = AdamW::new(&params.store, config.learning_rate, config.weight_decay);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let l = train_step(&mut params, &mut opt, &train[i], config.loss_mode, &mut rng)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    video: train[i].video_id.clone(),
                });
            }
            total += l;
        }
        let val_losses = eval_loss(&params, &val, config.loss_mode)?;
        if let Some(i) = val_losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                video: val[i].video_id.clone(),
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: val_losses.iter().sum::<f64>() / val.len() as f64,
        };
        log::debug!("epoch {epoch}: train {:.5} val {:.5}", stats.train_loss, stats.val_loss);
        history.push(stats);
        if best.as_ref().map_or(true, |(b, _, _)| stats.val_loss < *b) {
            best = Some((stats.val_loss, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}

/// Per-sampled-frame logits with dropout off.
pub fn predict_logits(params: &ModelParams, record: &VideoRecord) -> Result<Vec<f64>> {
    let graph = build_graph(record.n_sampled(), params.config().window, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(params.forward_pass(&record.features, &graph, false, &mut rng)?.into_vec())
}

/// Per-sampled-frame importance in `(0, 1)`: the sigmoid of the model logits.
pub fn predict_scores(params: &ModelParams, record: &VideoRecord) -> Result<Vec<f64>> {
    Ok(predict_logits(params, record)?
        .into_iter()
        .map(|z| 1.0 / (1.0 + (-z).exp()))
        .collect())
}
