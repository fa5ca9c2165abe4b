use crate::module::{join, Module};
use crate::prng::Prng;
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn_acc, Tensor};
use crate::{NumError, Result};

/// Fully connected layer `y = W x + b`, applied to every row of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[out × in]`
    pub weight: Tensor,
    /// `[out]`; absent for projections whose bias would be redundant
    pub bias: Option<Tensor>,
}

impl Dense {
    /// Weights and biases uniform in `±1/√in`.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Prng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[out_dim, in_dim], bound, rng),
            bias: Some(Tensor::uniform(&[out_dim], bound, rng)),
        }
    }

    pub fn without_bias(in_dim: usize, out_dim: usize, rng: &mut Prng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[out_dim, in_dim], bound, rng),
            bias: None,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(NumError::InvalidArgument("dense weight must be rank 2".into()));
        }
        bias.expect_shape("dense bias", &[weight.shape()[0]])?;
        Ok(Self {
            weight,
            bias: Some(bias),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.in_dim() {
            return Err(NumError::ShapeMismatch {
                context: "dense input",
                expected: vec![self.in_dim()],
                found: x.shape().to_vec(),
            });
        }
        let (n, k, m) = (x.rows(), self.in_dim(), self.out_dim());
        let mut y = matmul_nt(x.data(), self.weight.data(), n, k, m);
        if let Some(bias) = &self.bias {
            for row in y.chunks_mut(m) {
                for (v, b) in row.iter_mut().zip(bias.data()) {
                    *v += b;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-scalar input") = m;
        Tensor::new(shape, y)
    }

    /// Gradient with respect to `x`; parameter gradients are added into
    /// `grads` when given.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor, grads: Option<&mut Dense>) -> Tensor {
        let (n, k, m) = (x.rows(), self.in_dim(), self.out_dim());
        if let Some(g) = grads {
            matmul_tn_acc(grad_out.data(), x.data(), n, m, k, g.weight.data_mut());
            if let Some(gb) = g.bias.as_mut() {
                for row in grad_out.data().chunks(m) {
                    for (b, v) in gb.data_mut().iter_mut().zip(row) {
                        *b += v;
                    }
                }
            }
        }
        let dx = matmul_nn(grad_out.data(), self.weight.data(), n, m, k);
        Tensor::new(x.shape().to_vec(), dx).expect("dense backward shape")
    }
}

impl Module for Dense {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weight);
        if let Some(b) = self.bias.as_mut() {
            f(b);
        }
    }
}

pub fn linear_forward(layer: &Dense, x: &Tensor) -> Result<Tensor> {
    layer.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_module, CoordSelection};
    use crate::module::zeros_like;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let layer = Dense::from_parts(w, Tensor::zeros(&[3])).unwrap();
        let x = Tensor::vector(vec![0.5, -1.25, 7.0]);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn scalar_affine() {
        let layer = Dense::from_parts(
            Tensor::matrix(1, 1, vec![2.0]).unwrap(),
            Tensor::vector(vec![1.0]),
        )
        .unwrap();
        let y = linear_forward(&layer, &Tensor::vector(vec![3.0])).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let layer = Dense::new(4, 2, &mut Prng::new(1));
        let err = layer.forward(&Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(err, Err(NumError::ShapeMismatch { .. })));
    }

    #[test]
    fn gradients_check_out() {
        let mut rng = Prng::new(9);
        let layer = Dense::new(5, 3, &mut rng);
        let x = Tensor::uniform(&[4, 5], 1.0, &mut rng);
        let r = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let loss = |l: &Dense| -> f64 {
            let y = l.forward(&x).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let mut grads = zeros_like(&layer);
        layer.backward(&x, &r, Some(&mut grads));
        let err = check_module(&layer, &grads, 1e-4, CoordSelection::All, &mut Prng::new(0), loss);
        assert!(err < 1e-8, "max relative error {err}");
    }
}
