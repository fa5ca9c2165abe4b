//! Central-difference gradient verification.

use crate::module::{tensors, with_coord, Module};
use crate::prng::Prng;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against `(f(θ+h) - f(θ-h)) / 2h` coordinate by
/// coordinate and returns the worst relative error.
pub fn grad_check<F>(params: &[f64], analytic: &[f64], h: f64, mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one analytic entry per parameter");
    let mut theta = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let up = f(&theta);
        theta[i] = orig - h;
        let down = f(&theta);
        theta[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    worst
}

/// Which coordinates of each tensor [`check_module`] perturbs.
#[derive(Clone, Copy, Debug)]
pub enum CoordSelection {
    All,
    /// At most this many randomly chosen coordinates per tensor.
    PerTensor(usize),
}

/// Gradient check over every tensor of a [`Module`]. `analytic` is the
/// gradient container produced by the module's backward pass for the scalar
/// `loss`.
pub fn check_module<M, F>(
    module: &M,
    analytic: &M,
    h: f64,
    coords: CoordSelection,
    rng: &mut Prng,
    mut loss: F,
) -> f64
where
    M: Module + Clone,
    F: FnMut(&M) -> f64,
{
    let sizes: Vec<usize> = tensors(module).iter().map(|t| t.len()).collect();
    let grads: Vec<Vec<f64>> = tensors(analytic).iter().map(|t| t.data().to_vec()).collect();
    assert_eq!(sizes.len(), grads.len(), "gradient container mismatch");
    let mut probe = module.clone();
    let mut worst: f64 = 0.0;
    for (ti, &n) in sizes.iter().enumerate() {
        let picks: Vec<usize> = match coords {
            CoordSelection::All => (0..n).collect(),
            CoordSelection::PerTensor(k) if k >= n => (0..n).collect(),
            CoordSelection::PerTensor(k) => {
                let mut all: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut all);
                all.truncate(k);
                all
            }
        };
        for c in picks {
            let mut orig = 0.0;
            with_coord(&mut probe, ti, c, |v| {
                orig = *v;
                *v = orig + h;
            });
            let up = loss(&probe);
            with_coord(&mut probe, ti, c, |v| *v = orig - h);
            let down = loss(&probe);
            with_coord(&mut probe, ti, c, |v| *v = orig);
            worst = worst.max(relative_error(grads[ti][c], (up - down) / (2.0 * h)));
        }
    }
    worst
}
