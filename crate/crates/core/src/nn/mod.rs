//! Dense numerics: matrices, MLPs, softmax cross-entropy, Adam, seeded
//! initialization, checkpoints and a finite-difference gradient checker.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod init;
mod loss;
mod matrix;
mod mlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use init::{init_matrix, seeded_init, InitScheme};
pub use loss::{log_softmax, softmax, softmax_cross_entropy};
pub use matrix::{axpy, dot, Matrix};
pub use mlp::{leaky_relu, Activation, Dense, DenseGrad, Mlp, MlpCache, MlpGrads, DEFAULT_LEAK};

/// The crate-wide deterministic generator.
pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("LeakyReLU slope must lie in (0, 1), got {0}")]
    InvalidSlope(f64),
    #[error("non-finite parameters in {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read access to a model's parameters as a list of flat tensors.
pub trait Params {
    fn param_slices(&self) -> Vec<&[f64]>;

    fn flatten(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn param_len(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

pub trait ParamsMut: Params {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    /// Overwrites all parameters from a vector in [`Params::flatten`] order.
    fn assign_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            let n = slice.len();
            slice.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }
}

impl Params for Matrix {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
}

impl ParamsMut for Matrix {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl Params for Vec<Matrix> {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.iter().map(Matrix::as_slice).collect()
    }
}

impl ParamsMut for Vec<Matrix> {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().map(Matrix::as_mut_slice).collect()
    }
}

impl Params for Vec<Mlp> {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.iter().flat_map(Params::param_slices).collect()
    }
}

impl ParamsMut for Vec<Mlp> {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(ParamsMut::param_slices_mut).collect()
    }
}

impl Params for Vec<MlpGrads> {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.iter().flat_map(Params::param_slices).collect()
    }
}
