//! Sequential dense stacks with per-layer activations and optional input
//! dropout, shared by the spectrum autoencoder and the generator.

use numkit::{dropout, Activation, Dense, Dropout, Prng, Result, Tensor};

pub(crate) struct LayerCache {
    dropped: Dropout,
    pre: Tensor,
    post: Tensor,
}

pub(crate) fn forward(
    layers: &[Dense],
    acts: &[Activation],
    x: &Tensor,
    mut drop: Option<(f64, &mut Prng)>,
) -> Result<(Tensor, Vec<LayerCache>)> {
    debug_assert_eq!(layers.len(), acts.len());
    let mut h = x.clone();
    let mut caches = Vec::with_capacity(layers.len());
    for (layer, act) in layers.iter().zip(acts) {
        let dropped = match drop.as_mut() {
            Some((p, rng)) => dropout(&h, *p, true, rng)?,
            None => Dropout {
                output: h,
                mask: None,
            },
        };
        let pre = layer.forward(&dropped.output)?;
        let post = act.forward(&pre);
        h = post.clone();
        caches.push(LayerCache { dropped, pre, post });
    }
    Ok((h, caches))
}

pub(crate) fn backward(
    layers: &[Dense],
    acts: &[Activation],
    caches: &[LayerCache],
    grad_out: &Tensor,
    mut grads: Option<&mut [Dense]>,
) -> Tensor {
    let mut g = grad_out.clone();
    for i in (0..layers.len()).rev() {
        let c = &caches[i];
        let g_pre = acts[i].backward(&c.pre, &c.post, &g);
        let slot = grads.as_deref_mut().map(|gs| &mut gs[i]);
        let g_in = layers[i].backward(&c.dropped.output, &g_pre, slot);
        g = c.dropped.backward(&g_in);
    }
    g
}

pub(crate) fn build(widths: &[usize], rng: &mut Prng) -> Vec<Dense> {
    widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect()
}
