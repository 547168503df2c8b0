use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{load_split, score_sample, Sample};
use super::manifest::{Manifest, Split};
use super::{derive_seed, stream, PipelineError, RunConfig};
use crate::codec::{TokenSequence, Vocabulary};
use crate::ctc::{ctc_grad, ctc_loss, CtcError};
use crate::dsp::LogFreqAnalyzer;
use crate::eval::EvaluationReport;
use crate::net::{
    backward, clip_grad_norm, forward, sgd_nesterov_step, BnBatchStats, Checkpoint, Gradients, Mode, ModelConfig,
    ModelParams, TrainProgress, Velocity,
};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean CTC loss over the samples that were trained on.
    pub loss: f64,
    /// Samples skipped because their target cannot fit the output frames.
    pub skipped: usize,
    pub wer: Option<f64>,
    pub cer: Option<f64>,
    pub decodable: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Epochs run by this call (earlier epochs of a resumed run excluded).
    pub epochs: Vec<EpochLog>,
    pub progress: TrainProgress,
    pub checkpoint_dir: PathBuf,
    pub reached_target: bool,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Trains on the `train` split, validating after every epoch on the
/// `validation` split (on `train` itself when there is none). Checkpoints
/// go to the configured directory: `last.ckpt` after every epoch and
/// `best.ckpt` whenever validation WER improves.
pub fn cmd_train(config: &RunConfig, manifest_path: &Path, resume: Option<&Path>) -> Result<TrainReport, PipelineError> {
    config.validate()?;
    let manifest = Manifest::load(manifest_path)?;
    let analyzer = LogFreqAnalyzer::default();
    let train = load_split(&manifest, Split::Train, &analyzer)?;
    if train.is_empty() {
        return Err(PipelineError::Data("the manifest has no training samples".into()));
    }
    let vocab = Vocabulary::from_symbols(train.iter().flat_map(|s| s.symbols.iter().copied()));
    let validation = load_split(&manifest, Split::Validation, &analyzer)?;
    let validate_on_train = validation.is_empty();
    if validate_on_train {
        info!("no validation split, validating on the training split");
    }
    let targets: Vec<TokenSequence> = train
        .iter()
        .map(|s| TokenSequence(s.symbols.iter().map(|sym| vocab.index_of(sym).expect("vocabulary covers train")).collect()))
        .collect();

    let model = config.model.model_config(vocab.len());
    let dir = config.checkpoint_dir();
    fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let log_path = dir.join(TRAIN_LOG);

    let (mut params, mut velocity, mut progress) = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path, Some(&vocab.hash()))?;
            if ckpt.config != model {
                return Err(PipelineError::Config(format!(
                    "{} was trained with a different model config",
                    path.display()
                )));
            }
            if ckpt.progress.seed != config.seed {
                return Err(PipelineError::Config(format!(
                    "{} was trained with seed {}, not {}",
                    path.display(),
                    ckpt.progress.seed,
                    config.seed
                )));
            }
            truncate_log(&log_path, ckpt.progress.epochs_completed)?;
            (ckpt.params, ckpt.velocity, ckpt.progress)
        }
        None => {
            let params = ModelParams::init(&model, derive_seed(config.seed, &[stream::INIT]));
            let velocity = Velocity::zeros_like(&params);
            fs::write(&log_path, "").map_err(|e| PipelineError::io(&log_path, e))?;
            let progress = TrainProgress {
                seed: config.seed,
                ..Default::default()
            };
            (params, velocity, progress)
        }
    };
    let vocab_path = dir.join(VOCAB_FILE);
    fs::write(&vocab_path, vocab.to_file_string()).map_err(|e| PipelineError::io(&vocab_path, e))?;

    let t = &config.train;
    let mut epochs = Vec::new();
    let mut reached_target = false;
    while progress.epochs_completed < t.epochs {
        let epoch = progress.epochs_completed;
        let lr = t.learning_rate.at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::SHUFFLE, epoch as u64])));

        let mut losses = Vec::new();
        let mut skipped = 0;
        for batch in order.chunks(t.batch_size) {
            let step = train_batch(
                &params,
                &model,
                &train,
                &targets,
                batch,
                |i| derive_seed(config.seed, &[stream::DROPOUT, epoch as u64, i as u64]),
            )?;
            skipped += step.skipped;
            losses.extend(&step.losses);
            let Some(mut grads) = step.grads else { continue };
            if let Some(c) = t.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            sgd_nesterov_step(&mut params, &grads, &mut velocity, lr, t.momentum)
                .map_err(|e| PipelineError::Model(format!("epoch {}: {e}", epoch + 1)))?;
            params.update_running_stats(&step.bn_stats, t.bn_momentum);
        }
        if losses.is_empty() {
            return Err(PipelineError::Data(
                "every training sample is too short for its target".into(),
            ));
        }

        let held_out = if validate_on_train { &train } else { &validation };
        let mut report = EvaluationReport::default();
        for sample in held_out {
            report.push(score_sample(&params, &model, &vocab, sample)?);
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            learning_rate: lr,
            loss: mean(&losses),
            skipped,
            wer: report.wer().ok(),
            cer: report.cer().ok(),
            decodable: report.decodable_fraction(),
        };
        info!(
            "epoch {}: loss {:.4} wer {:?} cer {:?} decodable {:.2}",
            entry.epoch, entry.loss, entry.wer, entry.cer, entry.decodable
        );
        if skipped > 0 {
            warn!("epoch {}: {skipped} samples skipped", entry.epoch);
        }

        progress.epochs_completed = epoch + 1;
        let improved = improves(entry.wer, progress.best_wer);
        if improved {
            progress.best_wer = entry.wer;
            progress.best_epoch = Some(entry.epoch);
        }
        let ckpt = Checkpoint {
            config: model.clone(),
            progress: progress.clone(),
            vocabulary: vocab.clone(),
            params: params.clone(),
            velocity: velocity.clone(),
        };
        ckpt.save(&dir.join(LAST_CHECKPOINT))?;
        if improved {
            ckpt.save(&dir.join(BEST_CHECKPOINT))?;
        }
        append_log(&log_path, &entry)?;
        let done = matches!((t.target_cer, entry.cer), (Some(target), Some(cer)) if cer <= target)
            && t.target_decodable.is_none_or(|d| entry.decodable >= d);
        epochs.push(entry);
        if done {
            reached_target = true;
            break;
        }
    }
    Ok(TrainReport {
        epochs,
        progress,
        checkpoint_dir: dir,
        reached_target,
    })
}

/// Strictly lower WER wins, so ties keep the earlier checkpoint.
fn improves(wer: Option<f64>, best: Option<f64>) -> bool {
    match (wer, best) {
        (Some(w), Some(b)) => w < b,
        (Some(_), None) => true,
        _ => false,
    }
}

struct BatchStep {
    grads: Option<Gradients>,
    bn_stats: Vec<BnBatchStats>,
    losses: Vec<f64>,
    skipped: usize,
}

/// Mean gradient over the feasible samples of a batch. Samples run one at
/// a time, which equals padding the batch and masking the padded frames.
fn train_batch(
    params: &ModelParams,
    model: &ModelConfig,
    samples: &[Sample],
    targets: &[TokenSequence],
    batch: &[usize],
    dropout_seed: impl Fn(usize) -> u64,
) -> Result<BatchStep, PipelineError> {
    let model_err = |e: &dyn std::fmt::Display| PipelineError::Model(e.to_string());
    let mut parts = Vec::new();
    let mut bn_stats: Vec<BnBatchStats> = Vec::new();
    let mut losses = Vec::new();
    let mut skipped = 0;
    for &i in batch {
        let (grid, cache) = forward(params, model, &samples[i].spec, Mode::Train, dropout_seed(i)).map_err(|e| model_err(&e))?;
        let cache = cache.expect("train mode returns a cache");
        let (loss, lattice) = match ctc_loss(&grid, &targets[i]) {
            Ok(r) => r,
            Err(e @ CtcError::InfeasibleLength { .. }) => {
                warn!("{}: {e}, skipped", samples[i].id);
                skipped += 1;
                continue;
            }
            Err(e) => return Err(model_err(&e)),
        };
        let grad_logits = ctc_grad(&lattice, &grid, &targets[i]);
        let grads = backward(params, model, &cache, &grad_logits).map_err(|e| model_err(&e))?;
        if bn_stats.is_empty() {
            bn_stats = cache.bn_stats.clone();
        } else {
            for (acc, s) in bn_stats.iter_mut().zip(&cache.bn_stats) {
                acc.merge(s);
            }
        }
        losses.push(loss);
        parts.push(grads);
    }
    let grads = (!parts.is_empty()).then(|| {
        let mut total = Gradients::zeros_like(params);
        let w = 1.0 / parts.len() as f64;
        for g in &parts {
            total.add_scaled(g, w);
        }
        total
    });
    Ok(BatchStep {
        grads,
        bn_stats,
        losses,
        skipped,
    })
}

fn append_log(path: &Path, entry: &EpochLog) -> Result<(), PipelineError> {
    let mut file = fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| PipelineError::io(path, e))?;
    let line = serde_json::to_string(entry).expect("log entry serializes");
    writeln!(file, "{line}").map_err(|e| PipelineError::io(path, e))
}

/// Keeps the first `epochs` lines of the log so a resumed run continues
/// it without duplicates.
fn truncate_log(path: &Path, epochs: usize) -> Result<(), PipelineError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(PipelineError::io(path, e)),
    };
    let kept: String = text.lines().take(epochs).map(|l| format!("{l}\n")).collect();
    fs::write(path, kept).map_err(|e| PipelineError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_epoch_is_lowest_wer() {
        let mut best = None;
        let mut best_epoch = None;
        for (i, w) in [0.9, 0.4, 0.6, 0.4].into_iter().enumerate() {
            if improves(Some(w), best) {
                best = Some(w);
                best_epoch = Some(i + 1);
            }
        }
        assert_eq!((best, best_epoch), (Some(0.4), Some(2)));
        assert!(!improves(None, Some(0.5)));
    }
}
