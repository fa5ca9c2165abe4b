#![allow(dead_code)]

use numkit::Prng;

use ms2metgan::decoygen::{build_test_decoy_set, CompoundCorpus};
use ms2metgan::molecules::{parse_smiles, path_fingerprint, CompoundRecord};

pub const FAMILIES: [&[(&str, usize)]; 4] = [
    &[("O", 2), ("N", 3)],
    &[("O", 2), ("S", 2)],
    &[("N", 3), ("S", 2)],
    &[("O", 2), ("O", 2)],
];

/// Random acyclic SMILES with `carbons` carbons plus the given heteroatoms.
pub fn random_isomer(hetero: &[(&str, usize)], carbons: usize, rng: &mut Prng) -> String {
    let n = carbons + hetero.len();
    let mut label = vec![("C", 4usize); n];
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    for (k, &h) in hetero.iter().enumerate() {
        label[order[k]] = h;
    }
    rng.shuffle(&mut order);
    let mut children = vec![Vec::new(); n];
    let mut degree = vec![0usize; n];
    let mut placed = vec![order[0]];
    for &a in &order[1..] {
        loop {
            let p = placed[rng.below(placed.len())];
            if degree[p] < label[p].1 {
                children[p].push(a);
                degree[p] += 1;
                degree[a] += 1;
                break;
            }
        }
        placed.push(a);
    }
    fn write(a: usize, children: &[Vec<usize>], label: &[(&str, usize)], out: &mut String) {
        out.push_str(label[a].0);
        let kids = &children[a];
        for (i, &k) in kids.iter().enumerate() {
            if i + 1 < kids.len() {
                out.push('(');
                write(k, children, label, out);
                out.push(')');
            } else {
                write(k, children, label, out);
            }
        }
    }
    let mut s = String::new();
    write(order[0], &children, &label, &mut s);
    s
}

pub struct IsomerSet {
    pub trues: Vec<CompoundRecord>,
    /// Trues plus every selected decoy, without duplicates.
    pub corpus: Vec<CompoundRecord>,
    /// Per true compound, its decoy ids.
    pub decoys: Vec<Vec<String>>,
}

fn record(id: String, smiles: String) -> CompoundRecord {
    let graph = parse_smiles(&smiles).unwrap().with_id(id.clone());
    CompoundRecord {
        id,
        smiles,
        name: String::new(),
        graph,
    }
}

/// `groups` formula groups, one true compound each with `decoys` isomer
/// decoys passing the similarity filter.
pub fn isomer_set(groups: usize, decoys: usize, seed: u64) -> IsomerSet {
    let mut rng = Prng::new(seed);
    let mut out = IsomerSet {
        trues: Vec::new(),
        corpus: Vec::new(),
        decoys: Vec::new(),
    };
    for g in 0..groups {
        let family = FAMILIES[g % 4];
        let carbons = 4 + g / 4;
        let mut pool: Vec<CompoundRecord> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for attempt in 0..400 {
            let smi = random_isomer(family, carbons, &mut rng);
            let r = record(format!("g{g:02}-{attempt:03}"), smi);
            if seen.insert(path_fingerprint(&r.graph)) {
                pool.push(r);
            }
            if pool.len() >= 60 {
                break;
            }
        }
        let corpus = CompoundCorpus::from_records(pool.clone()).unwrap();
        // the member with the most qualifying isomers, earliest on ties
        let t = (0..pool.len())
            .max_by_key(|&i| (corpus.ranked_isomers(&pool[i].id).unwrap().len().min(decoys), usize::MAX - i))
            .unwrap();
        let a = build_test_decoy_set("s", &pool[t].id, &corpus, decoys).unwrap();
        assert_eq!(a.decoy_ids.len(), decoys, "group {g} has too few isomers");
        out.trues.push(pool[t].clone());
        out.corpus.push(pool[t].clone());
        for id in &a.decoy_ids {
            out.corpus.push(pool.iter().find(|r| &r.id == id).unwrap().clone());
        }
        out.decoys.push(a.decoy_ids);
    }
    out
}
