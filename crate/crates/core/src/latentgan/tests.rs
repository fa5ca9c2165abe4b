use numkit::{check_module, param_bytes, zeros_like, Checkpoint, CoordSelection};

use super::*;

const SPEC: usize = 8;
const STRUCT: usize = 12;

fn desk_disc(seed: u64) -> Discriminator {
    let cfg = DiscriminatorConfig {
        tokens: 4,
        heads: 1,
        ff_dim: 20,
        layers: DISCRIMINATOR_DEPTH,
    };
    Discriminator::new(SPEC + STRUCT, &cfg, &mut Prng::new(seed)).unwrap()
}

fn desk_gen(seed: u64) -> Generator {
    Generator::new(SPEC, [16, 16], STRUCT, &mut Prng::new(seed))
}

fn gaussian(rng: &mut Prng, n: usize, shift: f64) -> Vec<f64> {
    (0..n).map(|_| rng.normal() * 0.5 + shift).collect()
}

/// Spectrum latents around 0; true structures around +1, decoys around -1.
fn clusters(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = Prng::new(seed);
    let specs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, SPEC, 0.0)).collect();
    let trues = specs.iter().map(|s| concat(s, &gaussian(&mut rng, STRUCT, 1.0))).collect();
    let decoys = specs.iter().map(|s| concat(s, &gaussian(&mut rng, STRUCT, -1.0))).collect();
    (specs, trues, decoys)
}

fn cfg() -> RoundConfig {
    RoundConfig {
        max_epochs: 2000,
        batch_size: 20,
        optimizer: AdamWConfig {
            lr: 1e-3,
            ..Default::default()
        },
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn scores_are_deterministic_and_non_negative() {
    let d = desk_disc(1);
    let mut rng = Prng::new(2);
    for _ in 0..1000 {
        let x = gaussian(&mut rng, SPEC + STRUCT, 0.0).iter().map(|v| v * 6.0).collect::<Vec<_>>();
        let s = d.score(&x).unwrap();
        assert!(s >= 0.0);
        assert_eq!(s, d.score(&x).unwrap());
    }
    assert!(d.score(&[0.0; 3]).is_err());
}

#[test]
fn discriminate_checks_families() {
    let d = desk_disc(1);
    let v = |family, n| LatentVector {
        values: vec![0.1; n],
        family,
        source_id: "x".into(),
    };
    let msm = LatentMsm {
        spectrum: v(LatentFamily::Spectrum, SPEC),
        structure: v(LatentFamily::Structure, STRUCT),
        label: MsmLabel::TrueMatch,
    };
    assert_eq!(discriminate(&d, &msm).unwrap(), d.score(&msm.concat()).unwrap());
    let swapped = LatentMsm {
        spectrum: msm.structure.clone(),
        structure: msm.spectrum.clone(),
        ..msm
    };
    assert!(matches!(discriminate(&d, &swapped), Err(GanError::Family(_))));
}

#[test]
fn generator_basics() {
    let mut g = desk_gen(3);
    for l in &mut g.layers {
        l.bias.as_mut().unwrap().fill(0.0);
    }
    assert_eq!(g.generate(&[0.0; SPEC]).unwrap(), vec![0.0; STRUCT]);
    let g = desk_gen(3);
    let mut rng = Prng::new(4);
    for _ in 0..20 {
        let s = gaussian(&mut rng, SPEC, 0.0);
        let a = g.generate(&s).unwrap();
        assert_eq!(a.len(), STRUCT);
        assert_eq!(a, g.generate(&s).unwrap());
    }
    assert!(matches!(g.generate(&[0.0; 3]), Err(GanError::Dimension { .. })));
}

#[test]
fn discriminator_gradients_check_out() {
    for seed in 0..10 {
        let d = desk_disc(seed);
        let mut rng = Prng::new(100 + seed);
        let x = gaussian(&mut rng, SPEC + STRUCT, 0.0);
        let (_, cache) = d.forward_raw(&x).unwrap();
        let mut grads = zeros_like(&d);
        let gx = d.backward(&cache, 1.0, Some(&mut grads));
        let err = check_module(&d, &grads, 1e-4, CoordSelection::All, &mut rng, |m| {
            m.forward_raw(&x).unwrap().0
        });
        assert!(err < 1e-4, "params, seed {seed}: {err}");
        let xt = Tensor::vector(x.clone());
        let err = check_module(&xt, &Tensor::vector(gx), 1e-4, CoordSelection::All, &mut rng, |v| {
            d.forward_raw(v.data()).unwrap().0
        });
        assert!(err < 1e-4, "input, seed {seed}: {err}");
    }
}

fn kink_margin(g: &Generator, spec: &[f64]) -> f64 {
    let mut h = Tensor::vector(spec.to_vec());
    let mut margin = f64::INFINITY;
    for layer in &g.layers[..2] {
        let pre = layer.forward(&h).unwrap();
        margin = pre.data().iter().fold(margin, |m, v| m.min(v.abs()));
        h = pre.map(|v| v.max(0.0));
    }
    margin
}

#[test]
fn generator_gradients_check_out() {
    for seed in 0..10 {
        let g = desk_gen(seed);
        let mut rng = Prng::new(200 + seed);
        // finite differences are meaningless across a ReLU kink
        let specs: Vec<Vec<f64>> = loop {
            let specs: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, SPEC, 0.0)).collect();
            if specs.iter().all(|s| kink_margin(&g, s) > 1e-3) {
                break specs;
            }
        };
        let batch: Vec<&[f64]> = specs.iter().map(Vec::as_slice).collect();
        let r = Tensor::uniform(&[3, STRUCT], 1.0, &mut rng);
        let (_, _, caches) = g.forward_batch(&batch).unwrap();
        let mut grads = zeros_like(&g);
        g.backward(&caches, &r, &mut grads);
        let err = check_module(&g, &grads, 1e-4, CoordSelection::All, &mut rng, |m| {
            let (_, y, _) = m.forward_batch(&batch).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        });
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn discriminator_phase_separates_clusters() {
    let (_, trues, decoys) = clusters(100, 5);
    let mut d = desk_disc(5);
    let c = cfg();
    let mut rng = Prng::new(c.seed);
    let report = train_discriminator_phase(&mut d, &trues, &decoys, &c, &mut rng).unwrap();
    assert_eq!(report.stop, StopReason::Converged, "{report:?}");
    assert!(report.metric >= 0.99);
    let mean = |xs: &[Vec<f64>]| xs.iter().map(|x| d.score(x).unwrap()).sum::<f64>() / xs.len() as f64;
    assert!(mean(&trues) > mean(&decoys));
    // already at target: one evaluation, no updates
    let again = train_discriminator_phase(&mut d, &trues, &decoys, &c, &mut rng).unwrap();
    assert_eq!(again.epochs, 0);
    assert_eq!(again.stop, StopReason::Converged);
}

#[test]
fn discriminator_phase_needs_negatives() {
    let (_, trues, _) = clusters(4, 6);
    let err = train_discriminator_phase(&mut desk_disc(6), &trues, &[], &cfg(), &mut Prng::new(0)).unwrap_err();
    assert_eq!(err.to_string(), "round requires negatives");
}

#[test]
fn generator_phase_against_accept_everything_critic() {
    let mut d = desk_disc(7);
    d.head.weight.fill(0.0);
    d.head.bias.as_mut().unwrap().fill(1.0);
    let (specs, _, _) = clusters(10, 7);
    let mut g = desk_gen(7);
    let before = param_bytes(&g);
    let report = train_generator_phase(&mut g, &d, &specs, &cfg(), false, &mut Prng::new(0)).unwrap();
    assert_eq!(report.metric, 1.0);
    assert_eq!(report.epochs, 0);
    assert_eq!(param_bytes(&g), before);
}

#[test]
fn generator_phase_improves_fooling_and_leaves_critic_alone() {
    let (specs, trues, decoys) = clusters(100, 8);
    let mut d = desk_disc(8);
    let c = cfg();
    let mut rng = Prng::new(c.seed);
    train_discriminator_phase(&mut d, &trues, &decoys, &c, &mut rng).unwrap();
    let frozen = param_bytes(&d);
    let mut g = desk_gen(8);
    let report = train_generator_phase(&mut g, &d, &specs, &c, false, &mut rng).unwrap();
    assert_eq!(param_bytes(&d), frozen);
    assert!(report.metric > report.initial_metric || report.initial_metric >= c.gen_fool_target, "{report:?}");
    assert!(report.metric >= c.gen_fool_target || report.stop == StopReason::MaxEpochs);
    assert!(train_generator_phase(&mut g, &d, &[], &c, false, &mut rng).is_err());
}

#[test]
fn protocol_shapes() {
    let (specs, trues, decoys) = clusters(20, 9);
    let c = RoundConfig { rounds: 0, ..cfg() };
    let out = run_protocol(desk_disc(9), desk_gen(9), &trues, &decoys, &specs, &c).unwrap();
    assert_eq!(out.checkpoints.len(), 1);
    assert_eq!(out.checkpoints[0].0, "GAN-0");

    let c = RoundConfig { rounds: 9, max_epochs: 60, ..cfg() };
    let out = run_protocol(desk_disc(9), desk_gen(9), &trues, &decoys, &specs, &c).unwrap();
    let names: Vec<&str> = out.checkpoints.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, (0..=9).map(checkpoint_name).collect::<Vec<_>>());
    assert_eq!(out.log.len(), 19);
    let tsv = protocol_log_tsv(&out.log);
    assert_eq!(tsv.lines().count(), 20);
    for l in &out.log {
        assert!((0.0..=1.0).contains(&l.report.metric));
    }

    let err = run_protocol(desk_disc(9), desk_gen(9), &trues, &[], &specs, &c).unwrap_err();
    assert!(matches!(&err, GanError::Round { round: 0, source } if matches!(**source, GanError::NoNegatives)));
}

#[test]
fn protocol_is_deterministic() {
    let (specs, trues, decoys) = clusters(15, 10);
    let c = RoundConfig { rounds: 2, max_epochs: 40, ..cfg() };
    let bytes = |out: &ProtocolOutput| -> Vec<Vec<u8>> {
        out.checkpoints
            .iter()
            .map(|(_, d)| Checkpoint::from_module(d).to_bytes().unwrap())
            .collect()
    };
    let a = run_protocol(desk_disc(10), desk_gen(10), &trues, &decoys, &specs, &c).unwrap();
    let b = run_protocol(desk_disc(10), desk_gen(10), &trues, &decoys, &specs, &c).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
}
