//! Model checkpoints: one adapter directory per layer plus its bias.
//!
//! ```text
//! {dir}/layer1/{A.pssa, B.pssa, Wres.pssa|Wres.psq4, meta.txt, bias.pssa}
//! {dir}/layer2/...
//! ```

use std::path::{Path, PathBuf};

use super::model::{Linear, MlpModel, Weight};
use crate::adapter::{save_adapter_dir, DecomposedLayer};
use crate::error::{Error, Result};
use crate::linalg::{save_matrix, Matrix};

pub const BIAS_FILE: &str = "bias.pssa";
pub const LAYER_DIRS: [&str; 2] = ["layer1", "layer2"];

fn adapted(linear: &Linear) -> Result<&DecomposedLayer> {
    match linear.weight() {
        Weight::Adapted(l) => Ok(l),
        Weight::Dense(_) => Err(Error::InvalidArgument("checkpoint expects adapter layers".into())),
    }
}

/// Writes both adapted layers of `model` under `dir` and returns the layer
/// directories. Bases are included.
pub fn save_model_adapters(dir: &Path, model: &MlpModel, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (name, linear) in LAYER_DIRS.iter().zip([model.layer1(), model.layer2()]) {
        let layer_dir = dir.join(name);
        save_adapter_dir(&layer_dir, adapted(linear)?, seed, true)?;
        let bias = Matrix::new(1, linear.bias().len(), linear.bias().to_vec())?;
        save_matrix(layer_dir.join(BIAS_FILE), &bias)?;
        out.push(layer_dir);
    }
    Ok(out)
}
