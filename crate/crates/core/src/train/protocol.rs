//! Pretrain-then-fine-tune protocol on synthetic clusters: a two-layer MLP
//! is pretrained on the odd classes and adapters are fine-tuned on the even
//! classes.

use serde::Serialize;

use super::data::Dataset;
use super::model::MlpModel;
use super::run::{run_finetune, train, FinetuneRun, Strategy, TrainConfig};
use crate::error::Result;
use crate::harness::generate_cluster_dataset;
use crate::rng::{split_seed, RandomSource};

pub const ODD_CLASSES: [usize; 5] = [1, 3, 5, 7, 9];
pub const EVEN_CLASSES: [usize; 5] = [0, 2, 4, 6, 8];

const DATA_STREAM: u64 = 10;
const MODEL_STREAM: u64 = 11;
const PRETRAIN_STREAM: u64 = 12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyProtocol {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub per_class: usize,
    pub noise_std: f64,
    pub rank: usize,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

impl Default for ToyProtocol {
    fn default() -> Self {
        Self {
            dim: 64,
            hidden: 32,
            classes: 10,
            per_class: 200,
            noise_std: 1.0,
            rank: 4,
            pretrain: TrainConfig {
                lr: 5e-3,
                steps: 200,
                ..TrainConfig::default()
            },
            finetune: TrainConfig::default(),
        }
    }
}

/// Pretrained model and the two data halves for one seed.
#[derive(Clone, Debug)]
pub struct PretrainedTask {
    pub model: MlpModel,
    pub pretrain_data: Dataset,
    pub finetune_data: Dataset,
}

impl ToyProtocol {
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.finetune.steps = steps;
        self
    }

    /// Data, model initialization and pretraining for `seed`.
    pub fn pretrained(&self, seed: u64) -> Result<PretrainedTask> {
        let data = generate_cluster_dataset(
            self.classes,
            self.dim,
            self.per_class,
            self.noise_std,
            split_seed(seed, DATA_STREAM),
        )?;
        let pretrain_data = data.filter_classes(&ODD_CLASSES);
        let finetune_data = data.filter_classes(&EVEN_CLASSES);
        let mut model = MlpModel::random(
            self.dim,
            self.hidden,
            self.classes,
            &mut RandomSource::new(split_seed(seed, MODEL_STREAM)),
        );
        let cfg = TrainConfig {
            seed: split_seed(seed, PRETRAIN_STREAM),
            ..self.pretrain.clone()
        };
        train(&mut model, &pretrain_data, &cfg)?;
        Ok(PretrainedTask {
            model,
            pretrain_data,
            finetune_data,
        })
    }

    /// Fine-tunes `task.model` with `strategy` under this protocol's config
    /// and `seed`.
    pub fn finetune(&self, task: &PretrainedTask, seed: u64, strategy: Strategy) -> Result<FinetuneRun> {
        let cfg = TrainConfig {
            seed,
            ..self.finetune.clone()
        };
        run_finetune(&task.model, &task.finetune_data, &cfg, self.rank, strategy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretraining_learns_odd_classes() {
        let proto = ToyProtocol {
            per_class: 60,
            ..ToyProtocol::default()
        };
        let task = proto.pretrained(3).unwrap();
        let acc = task
            .model
            .accuracy(task.pretrain_data.features(), task.pretrain_data.labels())
            .unwrap();
        assert!(acc > 0.9, "{acc}");
        assert!(task.finetune_data.labels().iter().all(|l| l % 2 == 0));
    }

    #[test]
    fn pissa_gradient_exceeds_lora_at_step_one() {
        let proto = ToyProtocol {
            per_class: 60,
            ..ToyProtocol::default()
        }
        .with_steps(3);
        let task = proto.pretrained(4).unwrap();
        let p = proto.finetune(&task, 4, Strategy::PISSA).unwrap();
        let l = proto.finetune(&task, 4, Strategy::LORA).unwrap();
        assert!(p.trace.grad_norm[0] > l.trace.grad_norm[0]);
        assert!((p.trace.loss[0] - l.trace.loss[0]).abs() <= 1e-10 * l.trace.loss[0]);
    }
}
