//! Two-layer rectifier MLP whose linear layers may carry adapters.

use super::loss::cross_entropy_with_grad;
use crate::adapter::{adapter_gradients, forward, merge, DecomposedLayer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::RandomSource;

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Weight {
    /// Fully trainable matrix.
    Dense(Matrix),
    /// Frozen base plus trainable adapter.
    Adapted(DecomposedLayer),
}

impl Weight {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Weight::Dense(w) => w.shape(),
            Weight::Adapted(l) => l.shape(),
        }
    }

    /// The matrix the layer currently applies.
    pub fn effective(&self) -> Matrix {
        match self {
            Weight::Dense(w) => w.clone(),
            Weight::Adapted(l) => merge(l),
        }
    }
}

/// `y = x·W + bias`
#[derive(Clone, Debug)]
pub struct Linear {
    weight: Weight,
    bias: Matrix,
}

/// Gradients of one [`Linear`]: `weight` is `[dW]` for a dense layer and
/// `[dA, dB]` for an adapted one.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub weight: Vec<Matrix>,
    pub bias: Matrix,
}

impl Linear {
    pub fn new(weight: Weight, bias: Vec<f64>) -> Result<Self> {
        let (_, n) = weight.shape();
        if bias.len() != n {
            return Err(Error::shape("Linear::new", format!("{n} outputs but bias has {}", bias.len())));
        }
        Ok(Self {
            weight,
            bias: Matrix::new(1, n, bias)?,
        })
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        self.bias.as_slice()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape().0
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape().1
    }

    pub fn is_adapted(&self) -> bool {
        matches!(self.weight, Weight::Adapted(_))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let y = match &self.weight {
            Weight::Dense(w) => x.matmul(w)?,
            Weight::Adapted(l) => forward(l, x)?,
        };
        Ok(y.add_row_vector(self.bias.as_slice()))
    }

    /// Gradients for input `x` and output gradient `dy`.
    pub fn grads(&self, x: &Matrix, dy: &Matrix) -> Result<LinearGrads> {
        let weight = match &self.weight {
            Weight::Dense(_) => vec![x.t_matmul(dy)?],
            Weight::Adapted(l) => {
                let (da, db) = adapter_gradients(x, dy, l.adapter())?;
                vec![da, db]
            }
        };
        let bias = Matrix::from_vec_unchecked(1, dy.cols(), dy.column_sums());
        Ok(LinearGrads { weight, bias })
    }

    /// `dy·Wᵀ`, the gradient with respect to the layer input.
    pub fn input_grad(&self, dy: &Matrix) -> Result<Matrix> {
        match &self.weight {
            Weight::Dense(w) => dy.matmul_t(w),
            Weight::Adapted(l) => {
                let ad = l.adapter();
                let low = dy.matmul_t(&ad.b)?.matmul_t(&ad.a)?;
                dy.matmul_t(l.base().dense())?.add_scaled(&low, ad.scale)
            }
        }
    }

    /// Trainable tensors in the order of [`LinearGrads::flatten`]. A frozen
    /// base is never exposed.
    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = match &mut self.weight {
            Weight::Dense(w) => vec![w],
            Weight::Adapted(l) => {
                let ad = l.adapter_mut();
                vec![&mut ad.a, &mut ad.b]
            }
        };
        out.push(&mut self.bias);
        out
    }

    /// Replaces a dense weight with `f(weight)`.
    pub fn inject(&self, f: impl FnOnce(&Matrix) -> Result<DecomposedLayer>) -> Result<Linear> {
        let layer = match &self.weight {
            Weight::Dense(w) => f(w)?,
            Weight::Adapted(_) => return Err(Error::InvalidArgument("layer already carries an adapter".into())),
        };
        if layer.shape() != self.weight.shape() {
            return Err(Error::shape("Linear::inject", "adapter layer changes the weight shape"));
        }
        Ok(Linear {
            weight: Weight::Adapted(layer),
            bias: self.bias.clone(),
        })
    }
}

impl LinearGrads {
    pub fn flatten(&self) -> Vec<&Matrix> {
        self.weight.iter().chain(std::iter::once(&self.bias)).collect()
    }
}

/// `logits = relu(x·W1 + b1)·W2 + b2`
#[derive(Clone, Debug)]
pub struct MlpModel {
    pub(crate) layer1: Linear,
    pub(crate) layer2: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layer1: LinearGrads,
    pub layer2: LinearGrads,
}

impl ModelGrads {
    pub fn flatten(&self) -> Vec<&Matrix> {
        let mut out = self.layer1.flatten();
        out.extend(self.layer2.flatten());
        out
    }

    /// Global L2 norm of the weight (or adapter) gradients, biases excluded.
    pub fn weight_norm(&self) -> f64 {
        self.layer1
            .weight
            .iter()
            .chain(&self.layer2.weight)
            .map(|g| g.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub pre: Matrix,
    pub hidden: Matrix,
    pub logits: Matrix,
}

impl MlpModel {
    pub fn new(layer1: Linear, layer2: Linear) -> Result<Self> {
        if layer1.out_dim() != layer2.in_dim() {
            return Err(Error::shape(
                "MlpModel::new",
                format!("layer1 emits {} features, layer2 expects {}", layer1.out_dim(), layer2.in_dim()),
            ));
        }
        Ok(Self { layer1, layer2 })
    }

    /// He-normal weights and zero biases.
    pub fn random(dim: usize, hidden: usize, classes: usize, rng: &mut RandomSource) -> Self {
        let w1 = rng.normal_matrix(dim, hidden, (2.0 / dim as f64).sqrt());
        let w2 = rng.normal_matrix(hidden, classes, (2.0 / hidden as f64).sqrt());
        Self {
            layer1: Linear::new(Weight::Dense(w1), vec![0.0; hidden]).expect("consistent"),
            layer2: Linear::new(Weight::Dense(w2), vec![0.0; classes]).expect("consistent"),
        }
    }

    pub fn layer1(&self) -> &Linear {
        &self.layer1
    }

    pub fn layer2(&self) -> &Linear {
        &self.layer2
    }

    pub fn dim(&self) -> usize {
        self.layer1.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.layer2.out_dim()
    }

    pub fn is_adapted(&self) -> bool {
        self.layer1.is_adapted() || self.layer2.is_adapted()
    }

    /// Copy with both dense weights replaced by `f(weight)`.
    pub fn inject_with(&self, mut f: impl FnMut(&Matrix) -> Result<DecomposedLayer>) -> Result<MlpModel> {
        Ok(MlpModel {
            layer1: self.layer1.inject(&mut f)?,
            layer2: self.layer2.inject(&mut f)?,
        })
    }

    pub fn activations(&self, x: &Matrix) -> Result<Activations> {
        let pre = self.layer1.forward(x)?;
        let hidden = pre.map(|v| v.max(0.0));
        let logits = self.layer2.forward(&hidden)?;
        Ok(Activations { pre, hidden, logits })
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.activations(x)?.logits)
    }

    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        Ok(cross_entropy_with_grad(&self.logits(x)?, labels)?.0)
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.logits(x)?;
        let hits = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| {
                let row = logits.row(i);
                (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])) == Some(l)
            })
            .count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }

    /// Mean cross-entropy and gradients of every trainable tensor.
    pub fn forward_backward(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, ModelGrads)> {
        let act = self.activations(x)?;
        let (loss, dlogits) = cross_entropy_with_grad(&act.logits, labels)?;
        let layer2 = self.layer2.grads(&act.hidden, &dlogits)?;
        let dhidden = self.layer2.input_grad(&dlogits)?;
        let mut dpre = dhidden;
        for (g, z) in dpre.as_mut_slice().iter_mut().zip(act.pre.as_slice()) {
            if *z <= 0.0 {
                *g = 0.0;
            }
        }
        let layer1 = self.layer1.grads(x, &dpre)?;
        Ok((loss, ModelGrads { layer1, layer2 }))
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.layer1.trainable_mut();
        out.extend(self.layer2.trainable_mut());
        out
    }
}

/// Free-function form of [`MlpModel::forward_backward`].
pub fn model_forward_backward(model: &MlpModel, x: &Matrix, labels: &[usize]) -> Result<(f64, ModelGrads)> {
    model.forward_backward(x, labels)
}
