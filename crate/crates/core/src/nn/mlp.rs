//! Fully connected networks with hand-written reverse-mode gradients.
//!
//! Inputs are batches laid out one sample per row. Every trainable component in
//! the crate (sub-filters, discriminators, the summary aggregator, the attacker)
//! is an [`Mlp`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::{init_matrix, InitScheme};
use super::matrix::Matrix;
use super::{NnError, Params, ParamsMut};

pub const DEFAULT_LEAK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Linear,
    /// Row-wise softmax; only sensible on the final layer.
    SoftmaxOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in × out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    leak: f64,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    output: Matrix,
}

impl MlpCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrad>,
}

impl Mlp {
    /// Builds a network over `sizes` (input, hidden..., output) with LeakyReLU
    /// hidden layers and the given output activation. Weights use He-normal
    /// initialization, biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output_activation: Activation,
        leak: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::ShapeMismatch {
                expected: "at least input and output sizes".into(),
                found: format!("{sizes:?}"),
            });
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense {
                weight: init_matrix(w[0], w[1], InitScheme::HeNormal, rng),
                bias: vec![0.0; w[1]],
                activation: if i == last {
                    output_activation
                } else {
                    Activation::LeakyRelu
                },
            })
            .collect();
        Self::from_layers(layers, leak)
    }

    pub fn from_layers(layers: Vec<Dense>, leak: f64) -> Result<Self, NnError> {
        let mlp = Self { layers, leak };
        mlp.validate()?;
        Ok(mlp)
    }

    /// A single linear layer computing `x` unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![Dense {
                weight: Matrix::identity(dim),
                bias: vec![0.0; dim],
                activation: Activation::Linear,
            }],
            leak: DEFAULT_LEAK,
        }
    }

    /// Checks layer chaining, bias lengths, finiteness and the leak slope.
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return Err(NnError::InvalidSlope(self.leak));
        }
        if self.layers.is_empty() {
            return Err(NnError::ShapeMismatch {
                expected: "at least one layer".into(),
                found: "none".into(),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(NnError::ShapeMismatch {
                    expected: format!("bias of length {} in layer {i}", layer.output_dim()),
                    found: format!("length {}", layer.bias.len()),
                });
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(NnError::NonFinite(format!("layer {i}")));
            }
            if let Some(next) = self.layers.get(i + 1) {
                if next.input_dim() != layer.output_dim() {
                    return Err(NnError::ShapeMismatch {
                        expected: format!("layer {} input {}", i + 1, layer.output_dim()),
                        found: format!("{}", next.input_dim()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, MlpCache), NnError> {
        if input.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                expected: format!("input width {}", self.input_dim()),
                found: format!("{}", input.cols()),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let a = activate(&z, layer.activation, self.leak);
            inputs.push(std::mem::replace(&mut current, a));
            pre_activations.push(z);
        }
        let cache = MlpCache {
            inputs,
            pre_activations,
            output: current.clone(),
        };
        Ok((current, cache))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NnError> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Single-sample convenience wrapper around [`Mlp::forward`].
    pub fn forward_vec(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let (out, cache) = self.forward(&x)?;
        Ok((out.into_vec(), cache))
    }

    /// Reverse pass. Returns parameter gradients and the gradient with respect
    /// to the input batch.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: &Matrix,
    ) -> Result<(MlpGrads, Matrix), NnError> {
        if output_grad.shape() != cache.output.shape() || cache.inputs.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("gradient shaped {:?}", cache.output.shape()),
                found: format!("{:?}", output_grad.shape()),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[idx];
            let dz = activation_backward(z, &upstream, layer.activation, self.leak);
            let weight = cache.inputs[idx].t_matmul(&dz)?;
            let bias = dz.column_sums();
            upstream = dz.matmul_t(&layer.weight)?;
            grads.push(DenseGrad { weight, bias });
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, upstream))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weight: Matrix::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }
}

impl Params for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

impl ParamsMut for Mlp {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) -> Result<(), NnError> {
        if self.layers.len() != other.layers.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} layers", self.layers.len()),
                found: format!("{}", other.layers.len()),
            });
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.scale(factor);
            for b in &mut l.bias {
                *b *= factor;
            }
        }
    }
}

impl Params for MlpGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

pub fn leaky_relu(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        leak * x
    }
}

fn activate(z: &Matrix, activation: Activation, leak: f64) -> Matrix {
    let mut a = z.clone();
    match activation {
        Activation::Linear => {}
        Activation::LeakyRelu => {
            for v in a.as_mut_slice() {
                *v = leaky_relu(*v, leak);
            }
        }
        Activation::SoftmaxOutput => {
            for i in 0..a.rows() {
                let probs = super::loss::softmax(z.row(i));
                a.row_mut(i).copy_from_slice(&probs);
            }
        }
    }
    a
}

fn activation_backward(z: &Matrix, upstream: &Matrix, activation: Activation, leak: f64) -> Matrix {
    let mut dz = upstream.clone();
    match activation {
        Activation::Linear => {}
        Activation::LeakyRelu => {
            for (d, &x) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if x <= 0.0 {
                    *d *= leak;
                }
            }
        }
        Activation::SoftmaxOutput => {
            for i in 0..z.rows() {
                let s = super::loss::softmax(z.row(i));
                let g = upstream.row(i);
                let inner: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
                for ((d, &si), &gi) in dz.row_mut(i).iter_mut().zip(&s).zip(g) {
                    *d = si * (gi - inner);
                }
            }
        }
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, relative_error};
    use crate::nn::rng_from_seed;

    #[test]
    fn identity_layer_returns_input() {
        let mlp = Mlp::identity(3);
        let (out, _) = mlp.forward_vec(&[1.5, -2.0, 0.25]).unwrap();
        assert_eq!(out, vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn leaky_relu_of_negative_one() {
        assert_eq!(leaky_relu(-1.0, 0.01), -0.01);
        assert_eq!(leaky_relu(2.0, 0.01), 2.0);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mlp = Mlp::from_layers(
            vec![Dense {
                weight: Matrix::zeros(2, 3),
                bias: vec![0.5, -1.0, 2.0],
                activation: Activation::Linear,
            }],
            DEFAULT_LEAK,
        )
        .unwrap();
        let (out, _) = mlp.forward_vec(&[7.0, -3.0]).unwrap();
        assert_eq!(out, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn scalar_linear_gradient() {
        // f(w) = w·x with x = 3, loss = f
        let mlp = Mlp::from_layers(
            vec![Dense {
                weight: Matrix::from_vec(1, 1, vec![0.7]).unwrap(),
                bias: vec![0.0],
                activation: Activation::Linear,
            }],
            DEFAULT_LEAK,
        )
        .unwrap();
        let (_, cache) = mlp.forward_vec(&[3.0]).unwrap();
        let (grads, dx) = mlp
            .backward(&cache, &Matrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(grads.layers[0].weight.as_slice(), &[3.0]);
        assert_eq!(dx.as_slice(), &[0.7]);
    }

    #[test]
    fn bias_gradient_under_squared_loss() {
        let mlp = Mlp::from_layers(
            vec![Dense {
                weight: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                bias: vec![0.5],
                activation: Activation::Linear,
            }],
            DEFAULT_LEAK,
        )
        .unwrap();
        let y = 1.0;
        let (out, cache) = mlp.forward_vec(&[1.0]).unwrap();
        let yhat = out[0];
        let dl = Matrix::from_vec(1, 1, vec![2.0 * (yhat - y)]).unwrap();
        let (grads, _) = mlp.backward(&cache, &dl).unwrap();
        assert_eq!(grads.layers[0].bias[0], 2.0 * (yhat - y));
    }

    #[test]
    fn rejects_bad_input_width_and_slope() {
        let mut rng = rng_from_seed(1);
        let mlp = Mlp::new(&[3, 4, 2], Activation::Linear, DEFAULT_LEAK, &mut rng).unwrap();
        assert!(mlp.forward(&Matrix::zeros(1, 4)).is_err());
        assert!(matches!(
            Mlp::new(&[3, 2], Activation::Linear, 1.5, &mut rng),
            Err(NnError::InvalidSlope(_))
        ));
    }

    #[test]
    fn softmax_output_layer_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(9);
        let mlp = Mlp::new(&[3, 5, 4], Activation::SoftmaxOutput, DEFAULT_LEAK, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -1.2, 0.8], vec![1.1, 0.4, -0.6]]).unwrap();
        let weights = [0.5, -1.0, 2.0, 0.25];
        let loss = |m: &Mlp| -> f64 {
            let out = m.predict(&x).unwrap();
            (0..out.rows())
                .map(|i| out.row(i).iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        let (_, cache) = mlp.forward(&x).unwrap();
        let mut upstream = Matrix::zeros(2, 4);
        for i in 0..2 {
            upstream.row_mut(i).copy_from_slice(&weights);
        }
        let (grads, _) = mlp.backward(&cache, &upstream).unwrap();
        let analytic = grads.flatten();
        let numeric = central_difference(&mlp, 1e-5, |m| loss(m));
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-5, "{a} vs {n}");
        }
    }
}
