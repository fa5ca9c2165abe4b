use std::collections::BTreeMap;

use ms2metgan::evalbench::{rank_distribution, topk_hundredths};
use ms2metgan::molecules::{
    formula_of, graph_features, parse_smiles, path_fingerprint, tanimoto, Bond, Formula, MolGraph,
};
use ms2metgan::search::{finish_search, rank_true, LatentCache, Scored};
use ms2metgan::spectra::{bin_spectrum, downsample_adjacent, merge_spectra, pool_blocks, Peak, Spectrum, BIN_COUNT};
use numkit::Prng;
use proptest::prelude::*;

fn peak() -> impl Strategy<Value = Peak> {
    let mz = prop_oneof![
        3 => 0.05f64..1600.0,
        1 => (1u32..16_000).prop_map(|k| f64::from(k) / 10.0),
    ];
    (mz, 0.0f64..1e4).prop_map(|(mz, intensity)| Peak { mz, intensity })
}

fn spectrum(id: &'static str) -> impl Strategy<Value = Spectrum> {
    prop::collection::vec(peak(), 0..40).prop_map(move |peaks| Spectrum {
        id: id.into(),
        compound_id: "c".into(),
        precursor_mz: 200.0,
        peaks,
    })
}

/// Sparse accumulation keyed by `floor(mz * 10)`, normalized afterwards.
fn binning_oracle(s: &Spectrum) -> Vec<f64> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for p in &s.peaks {
        let k = (p.mz * 10.0).floor() as usize;
        if k < BIN_COUNT {
            *acc.entry(k).or_default() += p.intensity;
        }
    }
    let max = acc.values().fold(0.0f64, |m, v| m.max(*v));
    let mut out = vec![0.0; BIN_COUNT];
    for (k, v) in acc {
        out[k] = if max > 0.0 { v / max } else { v };
    }
    out
}

fn permuted(m: &MolGraph, perm: &[usize], bond_order: &[usize]) -> MolGraph {
    let mut atoms = m.atoms.clone();
    for (old, &new) in perm.iter().enumerate() {
        atoms[new] = m.atoms[old].clone();
    }
    let bonds = bond_order
        .iter()
        .map(|&i| {
            let b = m.bonds[i];
            Bond {
                a: perm[b.b],
                b: perm[b.a],
                order: b.order,
            }
        })
        .collect();
    MolGraph {
        id: m.id.clone(),
        atoms,
        bonds,
    }
}

const MOLECULES: &[&str] = &[
    "CCO",
    "c1ccccc1",
    "OC1C(O)C(O)C(O)C(CO)O1",
    "CC(=O)Nc1ccc(O)cc1",
    "NCC(=O)O",
    "C#N",
    "CC(C)(C)OC(=O)N",
    "O=C(O)c1ccccc1O",
    "CSCCC(N)C(=O)O",
    "Clc1ccc(Br)cc1",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn binning_matches_oracle(s in spectrum("s")) {
        let b = bin_spectrum(&s);
        prop_assert_eq!(b.bins, binning_oracle(&s));
    }

    #[test]
    fn binned_values_in_unit_interval(s in spectrum("s")) {
        let b = bin_spectrum(&s);
        prop_assert!(b.bins.iter().all(|v| (0.0..=1.0).contains(v)));
        let nonzero = b.bins.iter().any(|v| *v > 0.0);
        prop_assert_eq!(nonzero, b.bins.iter().any(|v| *v == 1.0));
    }

    #[test]
    fn downsample_pairs_and_conserves(v in prop::collection::vec(0.0f64..1.0, 0..64).prop_map(|mut v| { if v.len() % 2 == 1 { v.pop(); } v })) {
        let d = downsample_adjacent(&v).unwrap();
        prop_assert_eq!(d.len(), v.len() / 2);
        for (i, x) in d.iter().enumerate() {
            prop_assert_eq!(*x, v[2 * i] + v[2 * i + 1]);
        }
        let (a, b): (f64, f64) = (v.iter().sum(), d.iter().sum());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn pooling_conserves_mass(v in prop::collection::vec(0.0f64..1.0, 1..200), w in 1usize..200) {
        prop_assume!(w <= v.len());
        let p = pool_blocks(&v, w).unwrap();
        prop_assert_eq!(p.len(), w);
        let (a, b): (f64, f64) = (v.iter().sum(), p.iter().sum());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn merging_concatenates(a in spectrum("a"), b in spectrum("b")) {
        let m = merge_spectra(&[a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(m.peaks.len(), a.peaks.len() + b.peaks.len());
        prop_assert_eq!(&m.peaks[..a.peaks.len()], &a.peaks[..]);
        prop_assert_eq!(&m.peaks[a.peaks.len()..], &b.peaks[..]);
        let total = |s: &Spectrum| s.peaks.iter().map(|p| p.intensity).sum::<f64>();
        let (t, parts) = (total(&m), total(&a) + total(&b));
        prop_assert!((t - parts).abs() <= 1e-12 * (1.0 + t));
    }

    #[test]
    fn formula_order_irrelevant(counts in prop::collection::btree_map(prop::sample::select(vec!["C", "H", "N", "O", "S", "P", "Cl", "Br"]), 1u32..40, 1..6), seed in any::<u64>()) {
        let mut parts: Vec<String> = counts.iter().map(|(e, n)| if *n == 1 { e.to_string() } else { format!("{e}{n}") }).collect();
        let forward = Formula::parse(&parts.concat()).unwrap();
        Prng::new(seed).shuffle(&mut parts);
        let shuffled = Formula::parse(&parts.concat()).unwrap();
        prop_assert_eq!(&forward, &shuffled);
        for (e, n) in &counts {
            prop_assert_eq!(forward.count(e), *n);
        }
    }

    #[test]
    fn fingerprint_ignores_atom_order(idx in 0..MOLECULES.len(), seed in any::<u64>()) {
        let m = parse_smiles(MOLECULES[idx]).unwrap();
        let mut rng = Prng::new(seed);
        let mut perm: Vec<usize> = (0..m.atoms.len()).collect();
        rng.shuffle(&mut perm);
        let mut bond_order: Vec<usize> = (0..m.bonds.len()).collect();
        rng.shuffle(&mut bond_order);
        let p = permuted(&m, &perm, &bond_order);
        prop_assert_eq!(path_fingerprint(&m), path_fingerprint(&p));
        prop_assert_eq!(formula_of(&m), formula_of(&p));
    }

    #[test]
    fn spatial_distances_form_capped_metric(idx in 0..MOLECULES.len(), cap in 1usize..8) {
        let m = parse_smiles(MOLECULES[idx]).unwrap();
        let f = graph_features(&m, cap);
        let n = m.atoms.len();
        for i in 0..n {
            prop_assert_eq!(f.spatial[i][i], 0);
            for j in 0..n {
                prop_assert_eq!(f.spatial[i][j], f.spatial[j][i]);
                prop_assert!(f.spatial[i][j] <= cap);
                if i != j {
                    prop_assert!(f.spatial[i][j] >= 1);
                }
                for k in 0..n {
                    prop_assert!(f.spatial[i][j] <= f.spatial[i][k] + f.spatial[k][j]);
                }
            }
        }
        for b in &m.bonds {
            prop_assert_eq!(f.spatial[b.a][b.b], 1);
        }
    }

    #[test]
    fn tanimoto_properties(a in 0..MOLECULES.len(), b in 0..MOLECULES.len()) {
        let fa = path_fingerprint(&parse_smiles(MOLECULES[a]).unwrap());
        let fb = path_fingerprint(&parse_smiles(MOLECULES[b]).unwrap());
        let s = tanimoto(&fa, &fb);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, tanimoto(&fb, &fa));
        prop_assert_eq!(tanimoto(&fa, &fa), 1.0);
        let expected = f64::from(fa.intersection_count(&fb)) / f64::from(fa.union_count(&fb));
        prop_assert_eq!(s, expected);
    }

    #[test]
    fn rank_true_matches_sort(scores in prop::collection::vec(0u8..6, 1..30), t in any::<prop::sample::Index>()) {
        let scored: Vec<Scored> = scores.iter().enumerate().map(|(i, s)| Scored { id: format!("c{i:02}"), score: f64::from(*s) / 5.0 }).collect();
        let true_id = scored[t.index(scored.len())].id.clone();
        // pessimistic oracle: the true compound sorts after every tie
        let mut sorted = scored.clone();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| (a.id == true_id).cmp(&(b.id == true_id))));
        let oracle = 1 + sorted.iter().position(|s| s.id == true_id).unwrap();
        prop_assert_eq!(rank_true(&scored, &true_id).unwrap(), oracle);
        let r = finish_search("s", scored, Some(&true_id)).unwrap();
        prop_assert_eq!(r.true_rank, Some(oracle));
        prop_assert!(r.ranked.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn rank_distribution_conserves(ranks in prop::collection::vec(1i64..12, 0..100)) {
        let d = rank_distribution(&ranks).unwrap();
        prop_assert_eq!(d.total as usize, ranks.len());
        prop_assert_eq!(d.ranks.iter().sum::<u64>() + d.r6plus, d.total);
        if d.total > 0 {
            let t: Vec<i64> = [1, 2, 5].iter().map(|k| topk_hundredths(&d, *k).unwrap()).collect();
            prop_assert!(t[0] <= t[1] && t[1] <= t[2]);
        }
    }

    #[test]
    fn cache_roundtrip(entries in prop::collection::btree_map("[a-z0-9]{1,8}", prop::collection::vec(-1e3f64..1e3, 5), 0..20)) {
        let mut c = LatentCache::new(5).unwrap();
        for (k, v) in &entries {
            c.insert(k, v).unwrap();
        }
        let bytes = c.to_bytes().unwrap();
        let back = LatentCache::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        for (k, v) in &entries {
            let narrowed: Vec<f32> = v.iter().map(|x| *x as f32).collect();
            prop_assert_eq!(back.get(k).unwrap(), &narrowed[..]);
        }
    }
}
