use numkit::module::join;
use numkit::{AttentionBlock, AttentionCache, Dense, LayerNorm, Module, NormCache, Prng, Tensor};

use super::{AeError, Autoencoder, FinetuneConfig, LatentFamily, LatentVector, Result, Sinks};
use crate::molecules::{graph_features, MolGraph, NODE_FEATURES};

pub const DECODER_DEPTH: usize = 12;
/// Per-atom reconstruction target: scaled atomic number, hydrogen count and
/// aromatic flag.
pub const NODE_TARGETS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct StructureAeConfig {
    pub width: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub encoder_layers: usize,
    pub latent_dim: usize,
    pub distance_cap: usize,
    pub max_degree: usize,
}

impl StructureAeConfig {
    pub fn paper() -> Self {
        StructureAeConfig {
            width: 512,
            heads: 8,
            ff_dim: 2048,
            encoder_layers: 4,
            latent_dim: 1280,
            distance_cap: 8,
            max_degree: 8,
        }
    }

    pub fn desk() -> Self {
        StructureAeConfig {
            width: 16,
            heads: 2,
            ff_dim: 32,
            encoder_layers: 4,
            latent_dim: 12,
            distance_cap: 4,
            max_degree: 6,
        }
    }
}

fn atomic_number(element: &str) -> f64 {
    match element {
        "H" => 1.0,
        "B" => 5.0,
        "C" => 6.0,
        "N" => 7.0,
        "O" => 8.0,
        "F" => 9.0,
        "Na" => 11.0,
        "Si" => 14.0,
        "P" => 15.0,
        "S" => 16.0,
        "Cl" => 17.0,
        "K" => 19.0,
        "Se" => 34.0,
        "Br" => 35.0,
        "I" => 53.0,
        _ => 0.0,
    }
}

/// A molecule prepared for the structure autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    pub id: String,
    /// `[atoms × NODE_FEATURES]`
    pub features: Tensor,
    /// Bond counts clamped to the model's degree table.
    pub degrees: Vec<usize>,
    pub spatial: Vec<Vec<usize>>,
    /// `[atoms × NODE_TARGETS]`
    pub target: Tensor,
}

impl GraphSample {
    pub fn atoms(&self) -> usize {
        self.degrees.len()
    }
}

/// Learned degree embedding plus per-head attention bias by hop distance.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphEncoding {
    /// `[max_degree + 1 × width]`
    pub degree: Tensor,
    /// `[heads × distance_cap + 1]`
    pub spatial: Tensor,
}

impl GraphEncoding {
    fn new(cfg: &StructureAeConfig, rng: &mut Prng) -> Self {
        GraphEncoding {
            degree: Tensor::uniform(&[cfg.max_degree + 1, cfg.width], 0.1, rng),
            spatial: Tensor::uniform(&[cfg.heads, cfg.distance_cap + 1], 0.1, rng),
        }
    }

    fn heads(&self) -> usize {
        self.spatial.shape()[0]
    }

    fn add_degree(&self, tokens: &mut Tensor, s: &GraphSample) {
        for (i, &d) in s.degrees.iter().enumerate() {
            let row = self.degree.row(d).to_vec();
            tokens.row_mut(i).iter_mut().zip(row).for_each(|(t, e)| *t += e);
        }
    }

    fn bias(&self, s: &GraphSample) -> Tensor {
        let (h, n) = (self.heads(), s.atoms());
        let buckets = self.spatial.cols();
        let mut b = Tensor::zeros(&[h, n, n]);
        let data = b.data_mut();
        for head in 0..h {
            for i in 0..n {
                for j in 0..n {
                    data[(head * n + i) * n + j] = self.spatial.data()[head * buckets + s.spatial[i][j]];
                }
            }
        }
        b
    }

    fn backward(&self, s: &GraphSample, g_tokens: &Tensor, g_bias: &Tensor, grads: &mut GraphEncoding) {
        for (i, &d) in s.degrees.iter().enumerate() {
            let g = g_tokens.row(i);
            grads.degree.row_mut(d).iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        let (h, n) = (self.heads(), s.atoms());
        let buckets = self.spatial.cols();
        for head in 0..h {
            for i in 0..n {
                for j in 0..n {
                    grads.spatial.data_mut()[head * buckets + s.spatial[i][j]] +=
                        g_bias.data()[(head * n + i) * n + j];
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureEncoder {
    pub embed: Dense,
    pub graph: GraphEncoding,
    pub layers: Vec<AttentionBlock>,
    pub norm: LayerNorm,
    pub project: Dense,
}

pub(crate) struct EncoderCache {
    layers: Vec<AttentionCache>,
    pooled: Tensor,
    norm: NormCache,
    normed: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureDecoder {
    pub expand: Dense,
    pub graph: GraphEncoding,
    pub layers: Vec<AttentionBlock>,
    pub norm: LayerNorm,
    pub out: Dense,
}

fn run_layers(
    layers: &[AttentionBlock],
    mut h: Tensor,
    bias: &Tensor,
) -> Result<(Tensor, Vec<AttentionCache>)> {
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (next, c) = layer.forward(&h, Some(bias))?;
        caches.push(c);
        h = next;
    }
    Ok((h, caches))
}

/// Back-propagates through the attention stack; returns the token gradient
/// and the summed gradient of the shared attention bias.
fn back_layers(
    layers: &[AttentionBlock],
    caches: &[AttentionCache],
    grad_out: Tensor,
    mut grads: Option<&mut [AttentionBlock]>,
) -> (Tensor, Option<Tensor>) {
    let mut g = grad_out;
    let mut g_bias: Option<Tensor> = None;
    for i in (0..layers.len()).rev() {
        let slot = grads.as_deref_mut().map(|gs| &mut gs[i]);
        let (gx, gb) = layers[i].backward(&caches[i], &g, slot);
        match g_bias.as_mut() {
            Some(acc) => acc.add_assign(&gb).expect("bias shapes"),
            None => g_bias = Some(gb),
        }
        g = gx;
    }
    (g, g_bias)
}

impl StructureEncoder {
    pub(crate) fn forward_cached(&self, s: &GraphSample) -> Result<(Tensor, EncoderCache)> {
        let mut tokens = self.embed.forward(&s.features)?;
        self.graph.add_degree(&mut tokens, s);
        let bias = self.graph.bias(s);
        let (h, layers) = run_layers(&self.layers, tokens, &bias)?;
        let pooled = h.mean_rows();
        let (normed, norm) = self.norm.forward(&pooled)?;
        let latent = self.project.forward(&normed)?;
        Ok((
            latent,
            EncoderCache {
                layers,
                pooled,
                norm,
                normed,
            },
        ))
    }

    pub fn forward(&self, s: &GraphSample) -> Result<Vec<f64>> {
        Ok(self.forward_cached(s)?.0.into_data())
    }

    pub(crate) fn backward(
        &self,
        s: &GraphSample,
        cache: &EncoderCache,
        g_latent: &Tensor,
        grads: &mut StructureEncoder,
    ) {
        let g_normed = self.project.backward(&cache.normed, g_latent, Some(&mut grads.project));
        let g_pooled = self.norm.backward(&cache.norm, &g_normed, Some(&mut grads.norm));
        let n = s.atoms();
        let w = cache.pooled.len();
        let per_token: Vec<f64> = g_pooled.data().iter().map(|g| g / n as f64).collect();
        let g_h = Tensor::new(vec![n, w], per_token.repeat(n)).expect("pool shape");
        let (g_tokens, g_bias) = back_layers(&self.layers, &cache.layers, g_h, Some(grads.layers.as_mut_slice()));
        let g_bias = g_bias.unwrap_or_else(|| Tensor::zeros(&[self.graph.heads(), n, n]));
        self.graph.backward(s, &g_tokens, &g_bias, &mut grads.graph);
        self.embed.backward(&s.features, &g_tokens, Some(&mut grads.embed));
    }
}

impl StructureDecoder {
    fn forward_cached(&self, latent: &Tensor, s: &GraphSample) -> Result<(Tensor, DecoderCache)> {
        let n = s.atoms();
        let row = self.expand.forward(latent)?;
        let mut tokens = Tensor::new(vec![n, row.len()], row.data().repeat(n))?;
        self.graph.add_degree(&mut tokens, s);
        let bias = self.graph.bias(s);
        let (h, layers) = run_layers(&self.layers, tokens, &bias)?;
        let (normed, norm) = self.norm.forward(&h)?;
        let out = self.out.forward(&normed)?;
        Ok((
            out,
            DecoderCache {
                latent: latent.clone(),
                layers,
                norm,
                normed,
            },
        ))
    }

    pub fn forward(&self, latent: &[f64], s: &GraphSample) -> Result<Tensor> {
        Ok(self.forward_cached(&Tensor::vector(latent.to_vec()), s)?.0)
    }

    /// Returns the gradient with respect to the latent input.
    fn backward(
        &self,
        s: &GraphSample,
        cache: &DecoderCache,
        g_out: &Tensor,
        mut grads: Option<&mut StructureDecoder>,
    ) -> Tensor {
        let g_normed = self
            .out
            .backward(&cache.normed, g_out, grads.as_deref_mut().map(|g| &mut g.out));
        let g_h = self
            .norm
            .backward(&cache.norm, &g_normed, grads.as_deref_mut().map(|g| &mut g.norm));
        let (g_tokens, g_bias) = back_layers(
            &self.layers,
            &cache.layers,
            g_h,
            grads.as_deref_mut().map(|g| g.layers.as_mut_slice()),
        );
        if let Some(g) = grads.as_deref_mut() {
            let n = s.atoms();
            let g_bias = g_bias.unwrap_or_else(|| Tensor::zeros(&[self.graph.heads(), n, n]));
            self.graph.backward(s, &g_tokens, &g_bias, &mut g.graph);
        }
        let g_row = Tensor::vector(
            (0..g_tokens.cols())
                .map(|c| (0..g_tokens.rows()).map(|r| g_tokens.row(r)[c]).sum())
                .collect(),
        );
        self.expand
            .backward(&cache.latent, &g_row, grads.map(|g| &mut g.expand))
    }
}

struct DecoderCache {
    latent: Tensor,
    layers: Vec<AttentionCache>,
    norm: NormCache,
    normed: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureAutoencoder {
    pub encoder: StructureEncoder,
    pub decoder: StructureDecoder,
    distance_cap: usize,
    max_degree: usize,
    trained: bool,
}

impl StructureAutoencoder {
    pub fn new(cfg: &StructureAeConfig, rng: &mut Prng) -> Result<Self> {
        if cfg.width == 0 || cfg.latent_dim == 0 || cfg.ff_dim == 0 || cfg.distance_cap == 0 {
            return Err(AeError::Config("structure autoencoder widths must be positive".into()));
        }
        let block = |rng: &mut Prng| AttentionBlock::new(cfg.width, cfg.heads, cfg.ff_dim, rng);
        let encoder = StructureEncoder {
            embed: Dense::new(NODE_FEATURES, cfg.width, rng),
            graph: GraphEncoding::new(cfg, rng),
            layers: (0..cfg.encoder_layers).map(|_| block(rng)).collect::<Result<_, _>>()?,
            norm: LayerNorm::new(cfg.width),
            project: Dense::new(cfg.width, cfg.latent_dim, rng),
        };
        let decoder = StructureDecoder {
            expand: Dense::new(cfg.latent_dim, cfg.width, rng),
            graph: GraphEncoding::new(cfg, rng),
            layers: (0..DECODER_DEPTH).map(|_| block(rng)).collect::<Result<_, _>>()?,
            norm: LayerNorm::new(cfg.width),
            out: Dense::new(cfg.width, NODE_TARGETS, rng),
        };
        Ok(StructureAutoencoder {
            encoder,
            decoder,
            distance_cap: cfg.distance_cap,
            max_degree: cfg.max_degree,
            trained: false,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.project.out_dim()
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn prepare(&self, m: &MolGraph) -> Result<GraphSample> {
        if m.atoms.is_empty() {
            return Err(AeError::EmptyGraph);
        }
        let f = graph_features(m, self.distance_cap);
        let n = m.atoms.len();
        let mut target = Tensor::zeros(&[n, NODE_TARGETS]);
        for (i, a) in m.atoms.iter().enumerate() {
            let row = target.row_mut(i);
            row[0] = (atomic_number(&a.element) - 7.0) / 4.0;
            row[1] = (f64::from(a.hydrogens) - 1.5) / 1.5;
            row[2] = if a.aromatic { 1.0 } else { -1.0 };
        }
        Ok(GraphSample {
            id: m.id.clone(),
            features: f.node_features,
            degrees: (0..n).map(|i| m.degree(i).min(self.max_degree)).collect(),
            spatial: f.spatial,
            target,
        })
    }

    pub fn reconstruct(&self, s: &GraphSample) -> Result<Tensor> {
        let z = self.encoder.forward(s)?;
        self.decoder.forward(&z, s)
    }
}

pub fn encode_structure(
    m: &MolGraph,
    ae: &StructureAutoencoder,
    finetune: &FinetuneConfig,
) -> Result<LatentVector> {
    let s = ae.prepare(m)?;
    super::finetune_encode(&s, &m.id, ae, finetune)
}

impl Autoencoder for StructureAutoencoder {
    type Sample = GraphSample;
    type Encoder = StructureEncoder;
    type Decoder = StructureDecoder;

    fn encoder(&self) -> &StructureEncoder {
        &self.encoder
    }

    fn decoder(&self) -> &StructureDecoder {
        &self.decoder
    }

    fn split_mut(&mut self) -> (&mut StructureEncoder, &mut StructureDecoder) {
        (&mut self.encoder, &mut self.decoder)
    }

    fn family(&self) -> LatentFamily {
        LatentFamily::Structure
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn set_trained(&mut self, trained: bool) {
        self.trained = trained;
    }

    fn validate(&self, index: usize, s: &GraphSample) -> Result<()> {
        let n = s.atoms();
        if n == 0 {
            return Err(AeError::EmptyGraph);
        }
        let ok = s.features.shape() == [n, NODE_FEATURES]
            && s.target.shape() == [n, NODE_TARGETS]
            && s.spatial.len() == n
            && s.spatial.iter().all(|r| r.len() == n && r.iter().all(|&d| d <= self.distance_cap))
            && s.degrees.iter().all(|&d| d <= self.max_degree);
        if !ok {
            return Err(AeError::Dimension {
                index,
                expected: NODE_FEATURES,
                found: s.features.cols(),
            });
        }
        Ok(())
    }

    fn batch_loss(
        &self,
        encoder: &StructureEncoder,
        samples: &[&GraphSample],
        _rng: Option<&mut Prng>,
        mut sinks: Sinks<'_, StructureEncoder, StructureDecoder>,
    ) -> Result<f64> {
        let want_grads = sinks.encoder.is_some() || sinks.decoder.is_some();
        let b = samples.len() as f64;
        let mut total = 0.0;
        for s in samples {
            let (z, enc_cache) = encoder.forward_cached(s)?;
            let (y, dec_cache) = self.decoder.forward_cached(&z, s)?;
            total += super::mse(&y, &s.target)?;
            if !want_grads {
                continue;
            }
            let n = y.len() as f64 * b;
            let g = Tensor::new(
                y.shape().to_vec(),
                y.data().iter().zip(s.target.data()).map(|(a, t)| 2.0 * (a - t) / n).collect(),
            )?;
            let gz = self.decoder.backward(s, &dec_cache, &g, sinks.decoder.as_deref_mut());
            if let Some(ge) = sinks.encoder.as_deref_mut() {
                encoder.backward(s, &enc_cache, &gz, ge);
            }
        }
        Ok(total / b)
    }

    fn encode_with(&self, encoder: &StructureEncoder, s: &GraphSample) -> Result<Vec<f64>> {
        encoder.forward(s)
    }
}

impl Module for GraphEncoding {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(&join(prefix, "degree"), &self.degree);
        f(&join(prefix, "spatial"), &self.spatial);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.degree);
        f(&mut self.spatial);
    }
}

impl Module for StructureEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.embed.visit(&join(prefix, "embed"), f);
        self.graph.visit(&join(prefix, "graph"), f);
        self.layers.visit(&join(prefix, "layers"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.project.visit(&join(prefix, "project"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.embed.visit_mut(f);
        self.graph.visit_mut(f);
        self.layers.visit_mut(f);
        self.norm.visit_mut(f);
        self.project.visit_mut(f);
    }
}

impl Module for StructureDecoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.expand.visit(&join(prefix, "expand"), f);
        self.graph.visit(&join(prefix, "graph"), f);
        self.layers.visit(&join(prefix, "layers"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.out.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.expand.visit_mut(f);
        self.graph.visit_mut(f);
        self.layers.visit_mut(f);
        self.norm.visit_mut(f);
        self.out.visit_mut(f);
    }
}

impl Module for StructureAutoencoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::super::{finetune_encoder, reconstruction_loss, train_stage1, TrainConfig};
    use super::*;
    use crate::molecules::parse_smiles;
    use numkit::{check_module, param_bytes, zeros_like, CoordSelection};

    fn model(seed: u64) -> StructureAutoencoder {
        StructureAutoencoder::new(&StructureAeConfig::desk(), &mut Prng::new(seed)).unwrap()
    }

    fn mol(s: &str) -> MolGraph {
        parse_smiles(s).unwrap().with_id(s)
    }

    #[test]
    fn single_atom_encodes() {
        let mut ae = model(1);
        ae.mark_trained();
        let z = encode_structure(&mol("C"), &ae, &FinetuneConfig::default()).unwrap();
        assert_eq!(z.values.len(), 12);
        assert!(z.values.iter().all(|v| v.is_finite()));
        assert_eq!(z.family, LatentFamily::Structure);
    }

    #[test]
    fn empty_graph_is_rejected() {
        let ae = model(1);
        assert!(matches!(ae.prepare(&MolGraph::default()), Err(AeError::EmptyGraph)));
    }

    #[test]
    fn atom_order_does_not_change_the_latent() {
        let ae = model(2);
        for (a, b) in [
            ("CC(=O)Nc1ccc(O)cc1", "Oc1ccc(NC(C)=O)cc1"),
            ("OCC(N)C(=O)O", "NC(CO)C(O)=O"),
            ("c1ccncc1C#N", "N#Cc1cnccc1"),
        ] {
            let za = ae.encoder.forward(&ae.prepare(&mol(a)).unwrap()).unwrap();
            let zb = ae.encoder.forward(&ae.prepare(&mol(b)).unwrap()).unwrap();
            for (x, y) in za.iter().zip(&zb) {
                assert!((x - y).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn finetuning_keeps_decoder_frozen() {
        let ae = model(3);
        let s = ae.prepare(&mol("CC(=O)O")).unwrap();
        let before = param_bytes(&ae);
        let loss0 = reconstruction_loss(&ae, &s).unwrap();
        let enc = finetune_encoder(&s, &ae, &FinetuneConfig { steps: 50, ..Default::default() }).unwrap();
        assert_eq!(param_bytes(&ae), before);
        let mut tuned = ae.clone();
        tuned.encoder = enc;
        assert!(reconstruction_loss(&tuned, &s).unwrap() <= loss0);
    }

    #[test]
    fn stage_one_descends() {
        let mut ae = model(4);
        let data: Vec<GraphSample> = ["CCO", "c1ccccc1", "CC(=O)O", "NCC(=O)O", "c1ccncc1", "OCC(O)CO"]
            .iter()
            .map(|s| ae.prepare(&mol(s)).unwrap())
            .collect();
        let cfg = TrainConfig { epochs: 40, batch_size: 3, seed: 4, ..Default::default() };
        let curve = train_stage1(&mut ae, &data, &cfg).unwrap();
        assert!(curve[39] < curve[0]);
    }

    #[test]
    fn gradients_check_out() {
        for seed in 0..3 {
            let mut rng = Prng::new(seed);
            let ae = model(seed);
            let samples: Vec<GraphSample> = ["CC(N)C(=O)O", "c1ccoc1"]
                .iter()
                .map(|s| ae.prepare(&mol(s)).unwrap())
                .collect();
            let batch: Vec<&GraphSample> = samples.iter().collect();
            let mut grads = zeros_like(&ae);
            let (ge, gd) = grads.split_mut();
            ae.batch_loss(&ae.encoder, &batch, None, Sinks { encoder: Some(ge), decoder: Some(gd) })
                .unwrap();
            let err = check_module(&ae, &grads, 1e-4, CoordSelection::PerTensor(4), &mut rng, |m| {
                m.batch_loss(&m.encoder, &batch, None, Sinks::none()).unwrap()
            });
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
