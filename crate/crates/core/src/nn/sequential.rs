use rand::Rng;

use super::layers::{relu, relu_backward, sigmoid, sigmoid_backward, Linear};
use super::loss::{binary_cross_entropy, softmax_cross_entropy, sum_squared_error};
use super::tensor::Tensor;
use super::{NnError, Parameters};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    Relu,
    Sigmoid,
}

/// Loss applied to the output of a [`Sequential`] stack.
#[derive(Debug, Clone)]
pub enum LossHead {
    /// `sum (y - t)^2`
    SumSquared(Tensor),
    /// Mean BCE on an output that already went through a sigmoid layer.
    BinaryCrossEntropy(Tensor),
    /// Mean softmax cross-entropy over rows.
    SoftmaxCrossEntropy(Vec<usize>),
}

/// A plain feed-forward stack operating on `[n, features]` matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    /// ReLU MLP with the given widths; the last layer has no activation.
    pub fn mlp<R: Rng + ?Sized>(rng: &mut R, widths: &[usize], bias: bool) -> Self {
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(Layer::Linear(Linear::new(rng, pair[0], pair[1], bias)));
            if i + 2 < widths.len() {
                layers.push(Layer::Relu);
            }
        }
        Self { layers }
    }

    /// Returns every intermediate activation, input first.
    fn activations(&self, input: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let mut acts = vec![input.clone()];
        for layer in &self.layers {
            let x = acts.last().expect("non-empty");
            let y = match layer {
                Layer::Linear(l) => l.forward(x)?,
                Layer::Relu => relu(x),
                Layer::Sigmoid => sigmoid(x),
            };
            acts.push(y);
        }
        Ok(acts)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.activations(input)?.pop().expect("non-empty"))
    }

    /// Loss value plus one gradient tensor per parameter, in [`Parameters`] order.
    pub fn forward_backward(
        &self,
        input: &Tensor,
        head: &LossHead,
    ) -> Result<(f64, Vec<Tensor>), NnError> {
        let acts = self.activations(input)?;
        let out = acts.last().expect("non-empty");
        let (loss, mut grad) = match head {
            LossHead::SumSquared(t) => sum_squared_error(out, t)?,
            LossHead::BinaryCrossEntropy(t) => {
                t.expect_shape(out.shape(), "BCE target")?;
                let loss = binary_cross_entropy(out.data(), t.data())?;
                let n = out.len() as f64;
                let g: Vec<f64> = out
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(p, t)| {
                        let p = p.clamp(super::loss::BCE_CLAMP, 1.0 - super::loss::BCE_CLAMP);
                        (-t / p + (1.0 - t) / (1.0 - p)) / n
                    })
                    .collect();
                (loss, Tensor::from_vec(out.shape(), g)?)
            }
            LossHead::SoftmaxCrossEntropy(labels) => {
                let (l, mut g) = softmax_cross_entropy(out, labels)?;
                let n = labels.len().max(1) as f64;
                g.scale(1.0 / n);
                (l / n, g)
            }
        };
        let mut grads_rev: Vec<Tensor> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                Layer::Linear(l) => {
                    let (gx, gp) = l.backward(&acts[i], &grad)?;
                    for t in gp.into_vec().into_iter().rev() {
                        grads_rev.push(t);
                    }
                    grad = gx;
                }
                Layer::Relu => grad = relu_backward(&acts[i + 1], &grad),
                Layer::Sigmoid => grad = sigmoid_backward(&acts[i + 1], &grad),
            }
        }
        grads_rev.reverse();
        Ok((loss, grads_rev))
    }
}

impl Parameters for Sequential {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Linear(l) = layer {
                out.push((format!("layer{i}.weight"), &l.weight));
                if let Some(b) = &l.bias {
                    out.push((format!("layer{i}.bias"), b));
                }
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Linear(l) => l.params_mut(),
                _ => Vec::new(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use crate::nn::{flat_params, set_flat_params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_linear_layer_squared_loss_matches_hand_formula() {
        let w = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5]).unwrap();
        let net = Sequential::new(vec![Layer::Linear(Linear {
            weight: w,
            bias: None,
        })]);
        let x = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, -1.0]).unwrap();
        let t = Tensor::from_vec(&[1, 2], vec![0.25, 1.0]).unwrap();
        let (_, grads) = net
            .forward_backward(&x, &LossHead::SumSquared(t.clone()))
            .unwrap();
        let y = net.forward(&x).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let want = 2.0 * (y.data()[o] - t.data()[o]) * x.data()[i];
                assert!((grads[0].data()[o * 3 + i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_activations_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::mlp(&mut rng, &[4, 8, 8, 2], false);
        let y = net.forward(&Tensor::zeros(&[3, 4])).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::mlp(&mut rng, &[4, 2], true);
        assert!(matches!(
            net.forward(&Tensor::zeros(&[3, 5])),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn three_layer_net_passes_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for head_kind in 0..3 {
            let mut net = Sequential::mlp(&mut rng, &[5, 7, 6, 3], true);
            if head_kind == 1 {
                net.layers.push(Layer::Sigmoid);
            }
            let x = Tensor::from_vec(&[4, 5], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let head = match head_kind {
                0 => LossHead::SumSquared(
                    Tensor::from_vec(&[4, 3], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .unwrap(),
                ),
                1 => LossHead::BinaryCrossEntropy(
                    Tensor::from_vec(&[4, 3], (0..12).map(|_| rng.gen_range(0.0..1.0)).collect())
                        .unwrap(),
                ),
                _ => LossHead::SoftmaxCrossEntropy(vec![0, 2, 1, 2]),
            };
            let p0 = flat_params(&net);
            let report = grad_check(
                |p| {
                    let mut n2 = net.clone();
                    set_flat_params(&mut n2, p);
                    let (l, g) = n2.forward_backward(&x, &head).unwrap();
                    (l, g.iter().flat_map(|t| t.data().iter().copied()).collect())
                },
                &p0,
                1e-5,
            );
            assert!(
                report.max_relative_error < 1e-4,
                "head {head_kind}: {report:?}"
            );
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mk = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            Sequential::mlp(&mut rng, &[3, 16, 4], true)
        };
        let x = Tensor::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap();
        assert_eq!(mk().forward(&x).unwrap(), mk().forward(&x).unwrap());
    }
}
