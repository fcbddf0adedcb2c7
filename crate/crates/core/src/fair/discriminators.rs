use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{shape_error, FairError};
use crate::nn::{log_softmax, softmax_cross_entropy, Activation, Matrix, Mlp, MlpGrads, Params, ParamsMut};

/// One classifier per attribute, emitting class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorBank {
    nets: Vec<Mlp>,
}

impl DiscriminatorBank {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        cardinalities: &[usize],
        hidden: &[usize],
        leak: f64,
        rng: &mut R,
    ) -> Result<Self, FairError> {
        let nets = cardinalities
            .iter()
            .map(|&c| {
                let mut sizes = vec![dim];
                sizes.extend(hidden);
                sizes.push(c);
                Mlp::new(&sizes, Activation::Linear, leak, rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_nets(nets)
    }

    pub fn from_nets(nets: Vec<Mlp>) -> Result<Self, FairError> {
        if let Some(first) = nets.first() {
            if let Some(bad) = nets.iter().find(|n| n.input_dim() != first.input_dim() || n.output_dim() < 2) {
                return Err(shape_error(
                    format!("input {} and at least 2 classes", first.input_dim()),
                    format!("input {} with {} classes", bad.input_dim(), bad.output_dim()),
                ));
            }
        }
        Ok(Self { nets })
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.nets.iter().map(Mlp::output_dim).collect()
    }

    /// Class log-probabilities `ln 𝒟ᵏ(x)`.
    pub fn log_probabilities(&self, k: usize, x: &[f64]) -> Result<Vec<f64>, FairError> {
        let (logits, _) = self.nets[k].forward_vec(x)?;
        Ok(log_softmax(&logits))
    }

    pub fn probabilities(&self, k: usize, x: &[f64]) -> Result<Vec<f64>, FairError> {
        Ok(self.log_probabilities(k, x)?.into_iter().map(f64::exp).collect())
    }

    /// `scale · Σ_rows CE(𝒟ᵏ(x_row), label_row)`, its parameter gradients and
    /// the gradient with respect to `x`.
    pub(crate) fn cross_entropy(
        &self,
        k: usize,
        x: &Matrix,
        labels: &[usize],
        scale: f64,
    ) -> Result<(f64, MlpGrads, Matrix), FairError> {
        let net = &self.nets[k];
        let (logits, cache) = net.forward(x)?;
        let mut d_logits = Matrix::zeros(logits.rows(), logits.cols());
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let (l, g) = softmax_cross_entropy(logits.row(i), y);
            loss += scale * l;
            for (d, gv) in d_logits.row_mut(i).iter_mut().zip(g) {
                *d = scale * gv;
            }
        }
        let (grads, dx) = net.backward(&cache, &d_logits)?;
        Ok((loss, grads, dx))
    }
}

impl Params for DiscriminatorBank {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.nets.param_slices()
    }
}

impl ParamsMut for DiscriminatorBank {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.nets.param_slices_mut()
    }
}

/// `Σ_k ln 𝒟ᵏ(f_u)[x_uk]` over the attributes labeled for this user.
pub fn node_value(bank: &DiscriminatorBank, f_u: &[f64], labels: &[Option<usize>]) -> Result<f64, FairError> {
    if labels.len() != bank.len() {
        return Err(shape_error(format!("{} labels", bank.len()), labels.len()));
    }
    let mut value = 0.0;
    let mut any = false;
    for (k, label) in labels.iter().enumerate() {
        if let Some(c) = *label {
            let logp = bank.log_probabilities(k, f_u)?;
            let Some(&lp) = logp.get(c) else {
                return Err(shape_error(format!("class below {}", logp.len()), c));
            };
            value += lp;
            any = true;
        }
    }
    if !any {
        return Err(FairError::MissingAttribute);
    }
    Ok(value)
}
