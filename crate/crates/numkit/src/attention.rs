use crate::activation::Activation;
use crate::dense::Dense;
use crate::module::{join, Module};
use crate::norm::{LayerNorm, NormCache};
use crate::prng::Prng;
use crate::tensor::Tensor;
use crate::{NumError, Result};

/// Post-norm transformer layer: multi-head self-attention with residual and
/// layer norm, then a GELU feed-forward pair with residual and layer norm.
///
/// An optional additive bias `[heads × T × T]` is added to the attention
/// logits before the softmax (used for graph distance encodings).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock {
    pub heads: usize,
    pub wq: Dense,
    pub wk: Dense,
    pub wv: Dense,
    pub wo: Dense,
    pub ff_in: Dense,
    pub ff_out: Dense,
    pub norm_attn: LayerNorm,
    pub norm_ff: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Tensor>,
    ctx: Tensor,
    norm_attn: NormCache,
    h1: Tensor,
    ff_pre: Tensor,
    ff_act: Tensor,
    norm_ff: NormCache,
}

impl AttentionCache {
    /// Row-stochastic attention matrices, one `[T × T]` per head.
    pub fn probs(&self) -> &[Tensor] {
        &self.probs
    }

    /// Concatenated per-head attention outputs before the output projection.
    pub fn context(&self) -> &Tensor {
        &self.ctx
    }

    pub fn values(&self) -> &Tensor {
        &self.v
    }
}

const FF_ACTIVATION: Activation = Activation::Gelu;

impl AttentionBlock {
    pub fn new(dim: usize, heads: usize, ff_dim: usize, rng: &mut Prng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(NumError::InvalidArgument(format!(
                "model dim {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            wq: Dense::new(dim, dim, rng),
            // softmax is invariant to a per-row shift, so a key bias has no effect
            wk: Dense::without_bias(dim, dim, rng),
            wv: Dense::new(dim, dim, rng),
            wo: Dense::new(dim, dim, rng),
            ff_in: Dense::new(dim, ff_dim, rng),
            ff_out: Dense::new(ff_dim, dim, rng),
            norm_attn: LayerNorm::new(dim),
            norm_ff: LayerNorm::new(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.in_dim()
    }

    fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn forward(&self, tokens: &Tensor, bias: Option<&Tensor>) -> Result<(Tensor, AttentionCache)> {
        let d = self.dim();
        if tokens.rank() != 2 || tokens.cols() != d {
            return Err(NumError::ShapeMismatch {
                context: "attention tokens",
                expected: vec![tokens.rows(), d],
                found: tokens.shape().to_vec(),
            });
        }
        let t = tokens.rows();
        if let Some(b) = bias {
            b.expect_shape("attention bias", &[self.heads, t, t])?;
        }
        let q = self.wq.forward(tokens)?;
        let k = self.wk.forward(tokens)?;
        let v = self.wv.forward(tokens)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Tensor::zeros(&[t, d]);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let off = h * dh;
            let mut p = Tensor::zeros(&[t, t]);
            for i in 0..t {
                let qi = &q.row(i)[off..off + dh];
                let row = p.row_mut(i);
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k.row(j)[off..off + dh];
                    *s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                    if let Some(b) = bias {
                        *s += b.data()[(h * t + i) * t + j];
                    }
                }
                softmax_in_place(row);
            }
            for i in 0..t {
                for j in 0..t {
                    let pij = p.data()[i * t + j];
                    let vj = &v.row(j)[off..off + dh];
                    let ci = &mut ctx.row_mut(i)[off..off + dh];
                    for (c, vv) in ci.iter_mut().zip(vj) {
                        *c += pij * vv;
                    }
                }
            }
            probs.push(p);
        }
        let attn = self.wo.forward(&ctx)?;
        let mut h1_pre = tokens.clone();
        h1_pre.add_assign(&attn)?;
        let (h1, norm_attn) = self.norm_attn.forward(&h1_pre)?;
        let ff_pre = self.ff_in.forward(&h1)?;
        let ff_act = FF_ACTIVATION.forward(&ff_pre);
        let ff = self.ff_out.forward(&ff_act)?;
        let mut h2_pre = h1.clone();
        h2_pre.add_assign(&ff)?;
        let (y, norm_ff) = self.norm_ff.forward(&h2_pre)?;
        Ok((
            y,
            AttentionCache {
                x: tokens.clone(),
                q,
                k,
                v,
                probs,
                ctx,
                norm_attn,
                h1,
                ff_pre,
                ff_act,
                norm_ff,
            },
        ))
    }

    /// Returns the gradient with respect to the tokens and to the additive
    /// attention bias (`[heads × T × T]`).
    pub fn backward(
        &self,
        cache: &AttentionCache,
        grad_out: &Tensor,
        grads: Option<&mut AttentionBlock>,
    ) -> (Tensor, Tensor) {
        let (mut gq, mut gk, mut gv, mut go, mut gfi, mut gfo, mut gna, mut gnf) = match grads {
            Some(g) => (
                Some(&mut g.wq),
                Some(&mut g.wk),
                Some(&mut g.wv),
                Some(&mut g.wo),
                Some(&mut g.ff_in),
                Some(&mut g.ff_out),
                Some(&mut g.norm_attn),
                Some(&mut g.norm_ff),
            ),
            None => (None, None, None, None, None, None, None, None),
        };
        let t = cache.x.rows();
        let d = self.dim();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let g_h2 = self.norm_ff.backward(&cache.norm_ff, grad_out, gnf.take());
        let g_act = self.ff_out.backward(&cache.ff_act, &g_h2, gfo.take());
        let g_pre = FF_ACTIVATION.backward(&cache.ff_pre, &cache.ff_act, &g_act);
        let mut g_h1 = self.ff_in.backward(&cache.h1, &g_pre, gfi.take());
        g_h1.add_assign(&g_h2).expect("residual shapes");
        let g_h1_pre = self.norm_attn.backward(&cache.norm_attn, &g_h1, gna.take());
        let g_ctx = self.wo.backward(&cache.ctx, &g_h1_pre, go.take());

        let mut g_q = Tensor::zeros(&[t, d]);
        let mut g_k = Tensor::zeros(&[t, d]);
        let mut g_v = Tensor::zeros(&[t, d]);
        let mut g_bias = Tensor::zeros(&[self.heads, t, t]);
        for h in 0..self.heads {
            let off = h * dh;
            let p = &cache.probs[h];
            for i in 0..t {
                let gci = &g_ctx.row(i)[off..off + dh];
                let mut g_p = vec![0.0; t];
                for (j, gp) in g_p.iter_mut().enumerate() {
                    let vj = &cache.v.row(j)[off..off + dh];
                    *gp = gci.iter().zip(vj).map(|(a, b)| a * b).sum();
                    let pij = p.data()[i * t + j];
                    let gvj = &mut g_v.row_mut(j)[off..off + dh];
                    for (gv, gc) in gvj.iter_mut().zip(gci) {
                        *gv += pij * gc;
                    }
                }
                let prow = p.row(i);
                let dot: f64 = g_p.iter().zip(prow).map(|(a, b)| a * b).sum();
                for j in 0..t {
                    let gs = prow[j] * (g_p[j] - dot);
                    g_bias.data_mut()[(h * t + i) * t + j] = gs;
                    let kj = &cache.k.row(j)[off..off + dh];
                    let qi = &cache.q.row(i)[off..off + dh];
                    let gqi = &mut g_q.row_mut(i)[off..off + dh];
                    for (a, b) in gqi.iter_mut().zip(kj) {
                        *a += scale * gs * b;
                    }
                    let gkj = &mut g_k.row_mut(j)[off..off + dh];
                    for (a, b) in gkj.iter_mut().zip(qi) {
                        *a += scale * gs * b;
                    }
                }
            }
        }
        let mut g_x = g_h1_pre;
        g_x.add_assign(&self.wq.backward(&cache.x, &g_q, gq.take())).expect("shape");
        g_x.add_assign(&self.wk.backward(&cache.x, &g_k, gk.take())).expect("shape");
        g_x.add_assign(&self.wv.backward(&cache.x, &g_v, gv.take())).expect("shape");
        (g_x, g_bias)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl Module for AttentionBlock {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.wq.visit(&join(prefix, "wq"), f);
        self.wk.visit(&join(prefix, "wk"), f);
        self.wv.visit(&join(prefix, "wv"), f);
        self.wo.visit(&join(prefix, "wo"), f);
        self.ff_in.visit(&join(prefix, "ff_in"), f);
        self.ff_out.visit(&join(prefix, "ff_out"), f);
        self.norm_attn.visit(&join(prefix, "norm_attn"), f);
        self.norm_ff.visit(&join(prefix, "norm_ff"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.wq.visit_mut(f);
        self.wk.visit_mut(f);
        self.wv.visit_mut(f);
        self.wo.visit_mut(f);
        self.ff_in.visit_mut(f);
        self.ff_out.visit_mut(f);
        self.norm_attn.visit_mut(f);
        self.norm_ff.visit_mut(f);
    }
}

pub fn multihead_attention(block: &AttentionBlock, tokens: &Tensor) -> Result<Tensor> {
    Ok(block.forward(tokens, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_module, CoordSelection};
    use crate::module::zeros_like;

    fn contract(y: &Tensor, r: &Tensor) -> f64 {
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut rng = Prng::new(3);
        let block = AttentionBlock::new(4, 2, 8, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 4], 1.0, &mut rng);
        let (_, cache) = block.forward(&x, None).unwrap();
        for p in cache.probs() {
            assert_eq!(p.data(), &[1.0]);
        }
        assert_eq!(cache.context(), cache.values());
    }

    #[test]
    fn identical_tokens_give_identical_rows() {
        let mut rng = Prng::new(4);
        let block = AttentionBlock::new(6, 3, 12, &mut rng).unwrap();
        let row = Tensor::uniform(&[6], 1.0, &mut rng);
        let mut data = row.data().to_vec();
        data.extend_from_slice(row.data());
        let x = Tensor::matrix(2, 6, data).unwrap();
        let y = multihead_attention(&block, &x).unwrap();
        assert_eq!(y.row(0), y.row(1));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = Prng::new(5);
        let block = AttentionBlock::new(6, 2, 12, &mut rng).unwrap();
        for _ in 0..20 {
            let x = Tensor::uniform(&[5, 6], 3.0, &mut rng);
            let bias = Tensor::uniform(&[2, 5, 5], 2.0, &mut rng);
            let (_, cache) = block.forward(&x, Some(&bias)).unwrap();
            for p in cache.probs() {
                for i in 0..5 {
                    assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_widths() {
        let mut rng = Prng::new(6);
        assert!(AttentionBlock::new(5, 2, 4, &mut rng).is_err());
        let block = AttentionBlock::new(4, 2, 4, &mut rng).unwrap();
        assert!(block.forward(&Tensor::zeros(&[3, 5]), None).is_err());
        assert!(block.forward(&Tensor::zeros(&[3, 4]), Some(&Tensor::zeros(&[2, 3, 2]))).is_err());
    }

    fn fixed_dense(w: [[f64; 2]; 2], b: Option<[f64; 2]>) -> Dense {
        let weight = Tensor::matrix(2, 2, w.concat()).unwrap();
        match b {
            Some(b) => Dense::from_parts(weight, Tensor::vector(b.to_vec())).unwrap(),
            None => Dense { weight, bias: None },
        }
    }

    fn oracle_norm(x: [f64; 2]) -> [f64; 2] {
        let mean = (x[0] + x[1]) / 2.0;
        let var = ((x[0] - mean).powi(2) + (x[1] - mean).powi(2)) / 2.0;
        let s = (var + LayerNorm::DEFAULT_EPS).sqrt();
        [(x[0] - mean) / s, (x[1] - mean) / s]
    }

    fn oracle_affine(w: [[f64; 2]; 2], b: [f64; 2], x: [f64; 2]) -> [f64; 2] {
        [
            w[0][0] * x[0] + w[0][1] * x[1] + b[0],
            w[1][0] * x[0] + w[1][1] * x[1] + b[1],
        ]
    }

    #[test]
    fn matches_scalar_oracle() {
        let wq = [[0.5, -0.25], [0.75, 0.1]];
        let wk = [[-0.3, 0.6], [0.2, 0.9]];
        let wv = [[1.0, 0.5], [-0.5, 0.25]];
        let wo = [[0.8, -0.1], [0.3, 0.6]];
        let fi = [[0.4, -0.7], [0.9, 0.2]];
        let fo = [[-0.6, 0.35], [0.15, 0.5]];
        let (bq, bv, bo, bfi, bfo) = ([0.1, -0.2], [0.05, 0.0], [-0.1, 0.2], [0.3, -0.3], [0.0, 0.1]);
        let block = AttentionBlock {
            heads: 1,
            wq: fixed_dense(wq, Some(bq)),
            wk: fixed_dense(wk, None),
            wv: fixed_dense(wv, Some(bv)),
            wo: fixed_dense(wo, Some(bo)),
            ff_in: fixed_dense(fi, Some(bfi)),
            ff_out: fixed_dense(fo, Some(bfo)),
            norm_attn: LayerNorm::new(2),
            norm_ff: LayerNorm::new(2),
        };
        let tokens = [[1.0, -0.5], [0.25, 2.0], [-1.5, 0.75]];
        let x = Tensor::matrix(3, 2, tokens.concat()).unwrap();
        let y = multihead_attention(&block, &x).unwrap();

        let q: Vec<[f64; 2]> = tokens.iter().map(|t| oracle_affine(wq, bq, *t)).collect();
        let k: Vec<[f64; 2]> = tokens.iter().map(|t| oracle_affine(wk, [0.0, 0.0], *t)).collect();
        let v: Vec<[f64; 2]> = tokens.iter().map(|t| oracle_affine(wv, bv, *t)).collect();
        for i in 0..3 {
            let logits: Vec<f64> = (0..3)
                .map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / 2f64.sqrt())
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let mut ctx = [0.0; 2];
            for j in 0..3 {
                ctx[0] += e[j] / z * v[j][0];
                ctx[1] += e[j] / z * v[j][1];
            }
            let a = oracle_affine(wo, bo, ctx);
            let h1 = oracle_norm([tokens[i][0] + a[0], tokens[i][1] + a[1]]);
            let pre = oracle_affine(fi, bfi, h1);
            let act = [Activation::Gelu.apply_scalar(pre[0]), Activation::Gelu.apply_scalar(pre[1])];
            let ff = oracle_affine(fo, bfo, act);
            let out = oracle_norm([h1[0] + ff[0], h1[1] + ff[1]]);
            for c in 0..2 {
                assert!((y.row(i)[c] - out[c]).abs() < 1e-12, "row {i} col {c}");
            }
        }
    }

    #[test]
    fn gradients_check_out() {
        for seed in 0..10 {
            let mut rng = Prng::new(100 + seed);
            let block = AttentionBlock::new(4, 2, 6, &mut rng).unwrap();
            let x = Tensor::uniform(&[3, 4], 1.0, &mut rng);
            let bias = Tensor::uniform(&[2, 3, 3], 1.0, &mut rng);
            let r = Tensor::uniform(&[3, 4], 1.0, &mut rng);
            let (_, cache) = block.forward(&x, Some(&bias)).unwrap();
            let mut grads = zeros_like(&block);
            let (gx, gb) = block.backward(&cache, &r, Some(&mut grads));
            let err = check_module(&block, &grads, 1e-4, CoordSelection::All, &mut rng, |b| {
                contract(&b.forward(&x, Some(&bias)).unwrap().0, &r)
            });
            assert!(err < 1e-4, "params, seed {seed}: {err}");
            let err = check_module(&x, &gx, 1e-4, CoordSelection::All, &mut rng, |xx| {
                contract(&block.forward(xx, Some(&bias)).unwrap().0, &r)
            });
            assert!(err < 1e-4, "tokens, seed {seed}: {err}");
            let err = check_module(&bias, &gb, 1e-4, CoordSelection::All, &mut rng, |bb| {
                contract(&block.forward(&x, Some(bb)).unwrap().0, &r)
            });
            assert!(err < 1e-4, "bias, seed {seed}: {err}");
        }
    }
}
