use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::data::Dataset;
use super::model::MlpModel;
use super::optim::{cosine_warmup_lr, AdamW};
use crate::adapter::{init_layer, InitStrategy};
use crate::error::{Error, Result};
use crate::quant::{loftq_init, qlora_init, qpissa_init, QuantConfig};
use crate::rng::{split_seed, RandomSource};

/// Stream indices passed to [`split_seed`].
pub(crate) const BATCH_STREAM: u64 = 1;
pub(crate) const ADAPTER_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            batch_size: 128,
            steps: 300,
            warmup_ratio: 0.03,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument("batch_size and steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::InvalidArgument(format!("warmup_ratio must lie in [0, 1), got {}", self.warmup_ratio)));
        }
        AdamW::new(self.beta1, self.beta2, self.eps, self.weight_decay).map(|_| ())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        cosine_warmup_lr(step, self.lr, self.steps, self.warmup_ratio)
    }
}

/// Per-step training record. Entry `k` describes step `k + 1`: the batch
/// loss and weight-gradient norm before that step's update, and the learning
/// rate applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub lr: Vec<f64>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    /// Loss at 1-based `step`.
    pub fn loss_at(&self, step: usize) -> Option<f64> {
        step.checked_sub(1).and_then(|i| self.loss.get(i).copied())
    }

    /// `step,loss,grad_norm,lr` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,grad_norm,lr\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                i + 1,
                self.loss[i],
                self.grad_norm[i],
                self.lr[i]
            );
        }
        out
    }
}

/// Trains every trainable tensor of `model` (dense weights, adapter factors,
/// biases) with AdamW on minibatches drawn with replacement from `data`.
/// Batches depend only on `cfg.seed`, never on the model.
pub fn train(model: &mut MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if data.dim() != model.dim() || data.classes() > model.classes() {
        return Err(Error::shape(
            "train",
            format!(
                "data has {} features / {} classes, model expects {} / {}",
                data.dim(),
                data.classes(),
                model.dim(),
                model.classes()
            ),
        ));
    }
    let mut rng = RandomSource::new(split_seed(cfg.seed, BATCH_STREAM));
    let mut opt = AdamW::new(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)?;
    let mut trace = TrainTrace::default();
    let mut idx = vec![0usize; cfg.batch_size];
    for step in 0..cfg.steps {
        for slot in idx.iter_mut() {
            *slot = rng.index(data.len());
        }
        let (x, labels) = data.batch(&idx);
        let (loss, grads) = model.forward_backward(&x, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: step + 1, loss });
        }
        let lr = cfg.lr_at(step);
        trace.loss.push(loss);
        trace.grad_norm.push(grads.weight_norm());
        trace.lr.push(lr);
        opt.step(&mut model.trainable_mut(), &grads.flatten(), lr)?;
        if model.trainable_mut().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { step: step + 1, loss: f64::NAN });
        }
    }
    Ok(trace)
}

/// How adapters are injected into a pretrained model before fine-tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Init(InitStrategy),
    Qlora,
    Qpissa { iters: usize },
    Loftq { iters: usize },
}

impl Strategy {
    pub const PISSA: Strategy = Strategy::Init(InitStrategy::Principal);
    pub const LORA: Strategy = Strategy::Init(InitStrategy::GaussianZero);

    pub fn label(self) -> String {
        match self {
            Strategy::Init(InitStrategy::Principal) => "pissa".into(),
            Strategy::Init(InitStrategy::GaussianZero) => "lora".into(),
            Strategy::Init(s) => s.as_str().into(),
            Strategy::Qlora => "qlora".into(),
            Strategy::Qpissa { iters } => format!("qpissa-t{iters}"),
            Strategy::Loftq { iters } => format!("loftq-t{iters}"),
        }
    }

    /// Adapted copy of `model` with rank-`r` adapters in both layers.
    pub fn inject(self, model: &MlpModel, r: usize, rng: &mut RandomSource) -> Result<MlpModel> {
        let cfg = QuantConfig::default();
        model.inject_with(|w| match self {
            Strategy::Init(s) => init_layer(w, r, s, rng),
            Strategy::Qlora => qlora_init(w, r, &cfg, rng),
            Strategy::Qpissa { iters } => qpissa_init(w, r, iters, &cfg),
            Strategy::Loftq { iters } => loftq_init(w, r, iters, &cfg),
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts the init-strategy names plus `qlora`, `qpissa[-tN]`, `loftq[-tN]`.
    fn from_str(s: &str) -> Result<Self> {
        let iters = |rest: &str| -> Result<usize> {
            match rest {
                "" => Ok(1),
                r => r
                    .strip_prefix("-t")
                    .and_then(|n| n.parse().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad iteration suffix in '{s}'"))),
            }
        };
        if s == "qlora" {
            Ok(Strategy::Qlora)
        } else if let Some(rest) = s.strip_prefix("qpissa") {
            Ok(Strategy::Qpissa { iters: iters(rest)? })
        } else if let Some(rest) = s.strip_prefix("loftq") {
            Ok(Strategy::Loftq { iters: iters(rest)? })
        } else {
            Ok(Strategy::Init(s.parse()?))
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinetuneRun {
    pub strategy: Strategy,
    pub trace: TrainTrace,
    pub initial: MlpModel,
    pub model: MlpModel,
}

/// Injects rank-`r` adapters into a copy of `pretrained` and fine-tunes them.
/// Adapter randomness comes from a stream of `cfg.seed` separate from the
/// batch stream, so every strategy sees the same batches.
pub fn run_finetune(
    pretrained: &MlpModel,
    data: &Dataset,
    cfg: &TrainConfig,
    r: usize,
    strategy: Strategy,
) -> Result<FinetuneRun> {
    if pretrained.is_adapted() {
        return Err(Error::InvalidArgument("fine-tuning expects a model without adapters".into()));
    }
    let mut rng = RandomSource::new(split_seed(cfg.seed, ADAPTER_STREAM));
    let initial = strategy.inject(pretrained, r, &mut rng)?;
    let mut model = initial.clone();
    let trace = train(&mut model, data, cfg)?;
    Ok(FinetuneRun {
        strategy,
        trace,
        initial,
        model,
    })
}
