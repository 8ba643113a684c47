//! Dense f64 tensors with hand-written gradients.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod layers;
mod loss;
mod sequential;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::*;
pub use loss::*;
pub use sequential::{Layer, LossHead, Sequential};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Access to a model's trainable tensors in a fixed order.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn params(&self) -> Vec<&Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    fn to_checkpoint(&self, kind: &str, seed: u64, config: serde_json::Value) -> Checkpoint {
        Checkpoint {
            kind: kind.to_string(),
            seed,
            config,
            tensors: self
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }
}

/// All parameters concatenated into one vector.
pub fn flat_params<P: Parameters + ?Sized>(model: &P) -> Vec<f64> {
    model
        .named_params()
        .iter()
        .flat_map(|(_, t)| t.data().iter().copied())
        .collect()
}

/// Inverse of [`flat_params`].
pub fn set_flat_params<P: Parameters + ?Sized>(model: &mut P, flat: &[f64]) {
    let mut offset = 0;
    for t in model.params_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len(), "flat parameter length mismatch");
}

/// Concatenates gradient tensors in parameter order.
pub fn flatten_grads(grads: &[Tensor]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}
