use crate::prng::Prng;
use crate::tensor::Tensor;
use crate::{NumError, Result};

/// Result of an inverted-dropout pass: survivors are scaled by `1/(1-p)` so
/// inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub output: Tensor,
    /// Per-element multiplier (`0` or `1/(1-p)`); `None` when nothing was
    /// dropped.
    pub mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        match &self.mask {
            None => grad_out.clone(),
            Some(mask) => {
                let data = grad_out.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::new(grad_out.shape().to_vec(), data).expect("mask matches")
            }
        }
    }
}

pub fn dropout(x: &Tensor, p: f64, training: bool, rng: &mut Prng) -> Result<Dropout> {
    if !(0.0..1.0).contains(&p) {
        return Err(NumError::InvalidProbability(p));
    }
    if !training || p == 0.0 {
        return Ok(Dropout {
            output: x.clone(),
            mask: None,
        });
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok(Dropout {
        output: Tensor::new(x.shape().to_vec(), data)?,
        mask: Some(mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probability_is_identity() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let out = dropout(&x, 0.0, true, &mut Prng::new(1)).unwrap();
        assert_eq!(out.output, x);
    }

    #[test]
    fn inference_is_identity() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let out = dropout(&x, 0.9, false, &mut Prng::new(1)).unwrap();
        assert_eq!(out.output, x);
    }

    #[test]
    fn half_dropout_preserves_mean() {
        let x = Tensor::filled(&[1_000_000], 1.0);
        let out = dropout(&x, 0.5, true, &mut Prng::new(2)).unwrap();
        let mean = out.output.sum() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn probability_one_is_rejected() {
        let x = Tensor::vector(vec![1.0]);
        assert!(matches!(
            dropout(&x, 1.0, true, &mut Prng::new(1)),
            Err(NumError::InvalidProbability(_))
        ));
    }
}
