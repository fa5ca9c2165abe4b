use std::collections::VecDeque;

use numkit::Tensor;

use super::{BondOrder, MolGraph};

/// One-hot element classes; anything else falls into the trailing "other".
pub const ELEMENT_CLASSES: [&str; 10] = ["C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B"];
/// element one-hot (+ other), degree, charge, aromatic, hydrogens
pub const NODE_FEATURES: usize = ELEMENT_CLASSES.len() + 1 + 4;
pub const EDGE_FEATURES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphFeatures {
    /// `[atoms × NODE_FEATURES]`
    pub node_features: Tensor,
    /// `[bonds × EDGE_FEATURES]`, one-hot over single, double, triple, aromatic.
    pub edge_features: Tensor,
    /// Hop distances, `min(d, cap)`; disconnected pairs get `cap`.
    pub spatial: Vec<Vec<usize>>,
    pub cap: usize,
}

pub fn element_class(element: &str) -> usize {
    ELEMENT_CLASSES
        .iter()
        .position(|e| *e == element)
        .unwrap_or(ELEMENT_CLASSES.len())
}

pub(crate) fn bfs_distances(m: &MolGraph) -> Vec<Vec<Option<usize>>> {
    let adj = m.adjacency();
    let n = m.atoms.len();
    (0..n)
        .map(|src| {
            let mut dist = vec![None; n];
            dist[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                let du = dist[u].unwrap();
                for &(v, _) in &adj[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// # Panics
/// If `distance_cap` is zero.
pub fn graph_features(m: &MolGraph, distance_cap: usize) -> GraphFeatures {
    assert!(distance_cap >= 1, "distance cap must be at least one hop");
    let n = m.atoms.len();
    let mut nodes = Tensor::zeros(&[n, NODE_FEATURES]);
    for (i, a) in m.atoms.iter().enumerate() {
        let row = nodes.row_mut(i);
        row[element_class(&a.element)] = 1.0;
        let base = ELEMENT_CLASSES.len() + 1;
        row[base] = m.degree(i) as f64;
        row[base + 1] = f64::from(a.charge);
        row[base + 2] = if a.aromatic { 1.0 } else { 0.0 };
        row[base + 3] = f64::from(a.hydrogens);
    }
    let mut edges = Tensor::zeros(&[m.bonds.len(), EDGE_FEATURES]);
    for (i, b) in m.bonds.iter().enumerate() {
        let slot = match b.order {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        };
        edges.row_mut(i)[slot] = 1.0;
    }
    let spatial = bfs_distances(m)
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|d| d.map_or(distance_cap, |d| d.min(distance_cap)))
                .collect()
        })
        .collect();
    GraphFeatures {
        node_features: nodes,
        edge_features: edges,
        spatial,
        cap: distance_cap,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    #[test]
    fn singleton() {
        let f = graph_features(&parse_smiles("C").unwrap(), 3);
        assert_eq!(f.spatial, vec![vec![0]]);
        assert_eq!(f.node_features.shape(), &[1, NODE_FEATURES]);
        assert_eq!(f.edge_features.shape(), &[0, EDGE_FEATURES]);
    }

    #[test]
    fn propane_path() {
        let f = graph_features(&parse_smiles("CCC").unwrap(), 2);
        assert_eq!(f.spatial, vec![vec![0, 1, 2], vec![1, 0, 1], vec![2, 1, 0]]);
    }

    #[test]
    fn benzene_capped() {
        let m = parse_smiles("c1ccccc1").unwrap();
        let raw = bfs_distances(&m);
        assert_eq!(raw.iter().flatten().map(|d| d.unwrap()).max(), Some(3));
        let f = graph_features(&m, 2);
        assert_eq!(f.spatial.iter().flatten().max(), Some(&2));
        assert_eq!(f.spatial[0][3], 2);
        assert_eq!(f.spatial[0][1], 1);
    }

    #[test]
    fn node_rows() {
        let f = graph_features(&parse_smiles("C[N+](C)(C)C.c1ccccc1Br").unwrap(), 4);
        let n = f.node_features.row(1);
        assert_eq!(n[1], 1.0);
        assert_eq!(&n[11..], &[4.0, 1.0, 0.0, 0.0]);
        let br = f.node_features.row(11);
        assert_eq!(br[7], 1.0);
        let ring = f.node_features.row(5);
        assert_eq!(&ring[11..], &[2.0, 0.0, 1.0, 1.0]);
        // disconnected fragments sit at the cap
        assert_eq!(f.spatial[0][5], 4);
        let e = f.edge_features.row(4);
        assert_eq!(e, &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn other_element_class() {
        let f = graph_features(&parse_smiles("[Si](C)(C)(C)C").unwrap(), 2);
        assert_eq!(f.node_features.row(0)[10], 1.0);
    }
}
