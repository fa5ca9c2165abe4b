use super::MolGraph;

pub const FINGERPRINT_BITS: usize = 2048;
pub const MAX_PATH_BONDS: usize = 7;

const WORDS: usize = FINGERPRINT_BITS / 64;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: [u64; WORDS],
}

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint { words: [0; WORDS] }
    }
}

impl Fingerprint {
    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn intersection_count(&self, other: &Fingerprint) -> u32 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones()).sum()
    }

    pub fn union_count(&self, other: &Fingerprint) -> u32 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a | b).count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..FINGERPRINT_BITS).filter(|&i| self.get(i))
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

fn atom_label(m: &MolGraph, i: usize) -> String {
    let a = &m.atoms[i];
    if a.aromatic {
        a.element.to_ascii_lowercase()
    } else {
        a.element.clone()
    }
}

fn path_string(labels: &[String], bonds: &[char]) -> String {
    let mut s = labels[0].clone();
    for (l, b) in labels[1..].iter().zip(bonds) {
        s.push(*b);
        s.push_str(l);
    }
    s
}

/// Canonical string of a path: the lexicographically smaller of its two
/// reading directions.
pub(crate) fn canonical_path(labels: &[String], bonds: &[char]) -> String {
    let fwd = path_string(labels, bonds);
    let rl: Vec<String> = labels.iter().rev().cloned().collect();
    let rb: Vec<char> = bonds.iter().rev().copied().collect();
    let rev = path_string(&rl, &rb);
    fwd.min(rev)
}

/// Hashes every simple path of 0 to 7 bonds into a 2048-bit set.
pub fn path_fingerprint(m: &MolGraph) -> Fingerprint {
    let adj = m.adjacency();
    let labels: Vec<String> = (0..m.atoms.len()).map(|i| atom_label(m, i)).collect();
    let mut fp = Fingerprint::default();
    let mut atoms = Vec::with_capacity(MAX_PATH_BONDS + 1);
    let mut bonds = Vec::with_capacity(MAX_PATH_BONDS);
    let mut on_path = vec![false; m.atoms.len()];

    fn walk(
        u: usize,
        m: &MolGraph,
        adj: &[Vec<(usize, usize)>],
        labels: &[String],
        atoms: &mut Vec<usize>,
        bonds: &mut Vec<char>,
        on_path: &mut [bool],
        fp: &mut Fingerprint,
    ) {
        atoms.push(u);
        on_path[u] = true;
        let path_labels: Vec<String> = atoms.iter().map(|&a| labels[a].clone()).collect();
        let key = canonical_path(&path_labels, bonds);
        fp.set((fnv1a(key.as_bytes()) % FINGERPRINT_BITS as u64) as usize);
        if bonds.len() < MAX_PATH_BONDS {
            for &(v, bi) in &adj[u] {
                if !on_path[v] {
                    bonds.push(m.bonds[bi].order.symbol());
                    walk(v, m, adj, labels, atoms, bonds, on_path, fp);
                    bonds.pop();
                }
            }
        }
        on_path[u] = false;
        atoms.pop();
    }

    for start in 0..m.atoms.len() {
        walk(start, m, &adj, &labels, &mut atoms, &mut bonds, &mut on_path, &mut fp);
    }
    fp
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counted as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let union = a.union_count(b);
    if union == 0 {
        return 1.0;
    }
    f64::from(a.intersection_count(b)) / f64::from(union)
}
