//! SMILES subset parsing, formulas and masses, encoder graph features and
//! hashed path fingerprints.

mod corpus;
mod features;
mod fingerprint;
mod formula;
mod smiles;

pub use corpus::{parse_corpus, CompoundRecord};
pub use features::{graph_features, GraphFeatures, EDGE_FEATURES, ELEMENT_CLASSES, NODE_FEATURES};
pub use fingerprint::{path_fingerprint, tanimoto, Fingerprint, FINGERPRINT_BITS, MAX_PATH_BONDS};
pub use formula::{element_mass, formula_of, monoisotopic_mass, protonated_mz, Formula, PROTON_MASS};
pub use smiles::parse_smiles;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MolError {
    #[error("SMILES position {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("element {0:?} has no tabulated mass")]
    UnknownElement(String),
    #[error("formula is empty")]
    EmptyFormula,
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn value(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    /// Capitalized element symbol, e.g. `"C"`, `"Cl"`.
    pub element: String,
    pub charge: i32,
    pub aromatic: bool,
    /// Total attached hydrogens, implicit or from a bracket `H` count.
    pub hydrogens: u32,
    pub isotope: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MolGraph {
    pub id: String,
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl MolGraph {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Neighbor lists as `(atom, bond index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.a].push((b.b, i));
            adj[b.b].push((b.a, i));
        }
        adj
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == atom || b.b == atom).count()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.len()
    }
}
