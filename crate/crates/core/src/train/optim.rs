use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// AdamW with decoupled weight decay and bias correction.
///
/// ```text
/// p ← p − lr·wd·p
/// m ← β1·m + (1 − β1)·g
/// v ← β2·v + (1 − β2)·g²
/// p ← p − lr·m̂ / (√v̂ + eps),   m̂ = m/(1 − β1ᵗ),  v̂ = v/(1 − β2ᵗ)
/// ```
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::InvalidArgument(format!("betas must lie in [0, 1), got ({beta1}, {beta2})")));
        }
        if !(eps > 0.0) || !(weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("eps must be positive and weight decay non-negative".into()));
        }
        Ok(Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "AdamW::step",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        if self.t == 0 {
            self.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape("AdamW::step", "parameter count changed between steps"));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(Error::shape(
                    "AdamW::step",
                    format!("tensor {k}: param {:?}, grad {:?}, state {:?}", p.shape(), g.shape(), self.m[k].shape()),
                ));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (((pi, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *pi *= decay;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *pi -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup over `⌈warmup_ratio·steps⌉` steps (step 0 already gets
/// `lr/warmup`), then cosine decay reaching 0 at step `steps − 1`.
pub fn cosine_warmup_lr(step: usize, lr: f64, steps: usize, warmup_ratio: f64) -> f64 {
    let warmup = warmup_steps(steps, warmup_ratio);
    if step < warmup {
        return lr * (step + 1) as f64 / warmup as f64;
    }
    let span = steps.saturating_sub(1).saturating_sub(warmup);
    let progress = if span == 0 {
        1.0
    } else {
        ((step - warmup) as f64 / span as f64).min(1.0)
    };
    0.5 * lr * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// `⌈warmup_ratio·steps⌉`, ignoring representation error in the product.
pub fn warmup_steps(steps: usize, warmup_ratio: f64) -> usize {
    (warmup_ratio * steps as f64 - 1e-9).ceil().max(0.0) as usize
}
