//! Mini-batch training with cross-entropy and Adam.

use rand::seq::SliceRandom;

use super::infer::InferenceEngine;
use super::layers::{forward_tape, nodes_tensor};
use super::model::{DenoiseModel, TransformerConfig};
use crate::autodiff::{adam_step, init_rng, AdamConfig, AdamState, Tape};
use crate::error::{Error, Result};
use crate::eventconv::MessageConfig;
use crate::graph::{NormalizedGraph, VolumeSpec};
use crate::par;

/// One labeled graph; label 0 is noise, 1 is real activity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub graph: NormalizedGraph,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, epochs: 30, batch_size: 64, seed: 0, adam: AdamConfig::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

fn sample_loss_grad(model: &DenoiseModel, offsets: &[usize], sample: &TrainingSample) -> Result<(f64, Vec<f64>)> {
    if sample.label > 1 {
        return Err(Error::LabelOutOfRange { label: sample.label, classes: 2 });
    }
    let mut tape = Tape::new();
    let nodes = tape.input(nodes_tensor(&sample.graph));
    let logits = forward_tape(&mut tape, model, nodes)?;
    let loss = tape.cross_entropy(logits, sample.label)?;
    let mut grad = vec![0.0; model.store.scalar_count()];
    tape.backward_flat(loss, offsets, &mut grad)?;
    Ok((tape.value(loss).data()[0], grad))
}

/// Mean cross-entropy over `batch` and its gradient, flattened in parameter
/// order.
///
/// Samples are differentiated in parallel but reduced in batch order, so the
/// result does not depend on the thread count.
pub fn loss_and_grad(model: &DenoiseModel, batch: &[TrainingSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let indices: Vec<usize> = (0..batch.len()).collect();
    reduce_batch(model, batch, &indices)
}

fn reduce_batch(model: &DenoiseModel, samples: &[TrainingSample], indices: &[usize]) -> Result<(f64, Vec<f64>)> {
    let offsets = model.store.offsets();
    let parts = par::map(indices, |&i| sample_loss_grad(model, &offsets, &samples[i]));
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.store.scalar_count()];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    let n = indices.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Trains `model` in place. Batches are drawn from a seeded shuffle each epoch.
pub fn train(model: &mut DenoiseModel, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainHistory> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut rng = init_rng(cfg.seed);
    let mut adam = AdamState::new(&model.store, cfg.adam);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grad) = reduce_batch(model, samples, chunk)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            model.store.zero_grad();
            model.store.accumulate_flat(&grad);
            adam_step(&mut model.store, &mut adam, cfg.learning_rate);
            total += loss * chunk.len() as f64;
            history.steps += 1;
        }
        history.epoch_loss.push(total / samples.len() as f64);
    }
    Ok(history)
}

/// Builds a freshly initialized model (seeded by `cfg.seed`) and trains it.
pub fn train_model(
    volume: VolumeSpec,
    message: MessageConfig,
    transformer: TransformerConfig,
    samples: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<(DenoiseModel, TrainHistory)> {
    let mut model = DenoiseModel::new(volume, message, transformer, cfg.seed)?;
    let history = train(&mut model, samples, cfg)?;
    Ok((model, history))
}

/// Fraction of `samples` classified correctly.
pub fn evaluate(model: &DenoiseModel, samples: &[TrainingSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let engine = InferenceEngine::new(model);
    let hits = par::map_init(samples, || engine.workspace(), |ws, s| {
        engine.decide(ws, &s.graph.nodes).as_u8() as usize == s.label
    });
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: usize, spread: f64) -> TrainingSample {
        let nodes = (0..6)
            .map(|i| {
                let f = i as f64 / 6.0;
                [0.5 + spread * (f - 0.5), 0.5 - spread * (f - 0.5), 0.95 - 0.1 * f]
            })
            .collect();
        TrainingSample { graph: NormalizedGraph { nodes }, label }
    }

    fn small_model() -> DenoiseModel {
        let message = MessageConfig::default();
        DenoiseModel::new(VolumeSpec::default(), message, TransformerConfig::default(), 3).unwrap()
    }

    #[test]
    fn loss_decreases_on_separable_toy_set() {
        let samples: Vec<_> = (0..16).map(|i| sample(i % 2, if i % 2 == 0 { 0.9 } else { 0.1 })).collect();
        let mut model = small_model();
        let (before, _) = loss_and_grad(&model, &samples).unwrap();
        let cfg = TrainConfig { epochs: 40, batch_size: 8, learning_rate: 1e-2, ..TrainConfig::default() };
        let history = train(&mut model, &samples, &cfg).unwrap();
        let (after, _) = loss_and_grad(&model, &samples).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert_eq!(history.epoch_loss.len(), 40);
        assert_eq!(history.steps, 80);
        assert_eq!(evaluate(&model, &samples).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_label_and_empty_set() {
        let model = small_model();
        assert!(matches!(loss_and_grad(&model, &[sample(2, 0.5)]), Err(Error::LabelOutOfRange { label: 2, .. })));
        assert!(matches!(loss_and_grad(&model, &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn training_is_deterministic() {
        let samples: Vec<_> = (0..10).map(|i| sample(i % 2, 0.1 * i as f64)).collect();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::default() };
        let mut a = small_model();
        let mut b = small_model();
        train(&mut a, &samples, &cfg).unwrap();
        train(&mut b, &samples, &cfg).unwrap();
        for ((_, pa), (_, pb)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(pa.value, pb.value);
        }
    }
}
