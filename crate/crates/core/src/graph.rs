//! Directed molecular graphs and the propagation matrices derived from them.

use thiserror::Error;

use crate::smiles::{feature_matrix, Atom, Bond};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("not a permutation of 0..{0}")]
    InvalidPermutation(usize),
}

/// Heavy-atom graph: node features `X` (N × 24) and directed adjacency
/// `A` (N × N, entries 0 or 1). Each bond starts as two opposing edges;
/// augmentation may drop one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    features: Tensor,
    adjacency: Tensor,
}

/// Row-normalized `A` and `Aᵀ`. Rows with zero sum stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub forward: Tensor,
    pub backward: Tensor,
}

impl MolGraph {
    /// Builds the symmetric graph for a parsed molecule and fills the
    /// feature matrix.
    pub fn from_molecule(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Self {
        let n = atoms.len();
        let mut adjacency = Tensor::zeros(n, n);
        let mut bond_degree = vec![0usize; n];
        for b in &bonds {
            adjacency.set(b.a, b.b, 1.0);
            adjacency.set(b.b, b.a, 1.0);
            bond_degree[b.a] += 1;
            bond_degree[b.b] += 1;
        }
        let (out_deg, in_deg) = count_degrees(&adjacency);
        let features = feature_matrix(&atoms, &bond_degree, &out_deg, &in_deg);
        Self {
            atoms,
            bonds,
            features,
            adjacency,
        }
    }

    /// Graph with explicit matrices. Used by augmentation and tests; the
    /// caller keeps the shapes consistent with `atoms`.
    pub fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, features: Tensor, adjacency: Tensor) -> Self {
        assert_eq!(features.rows(), atoms.len());
        assert_eq!(adjacency.shape(), [atoms.len(), atoms.len()]);
        Self {
            atoms,
            bonds,
            features,
            adjacency,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub(crate) fn features_mut(&mut self) -> &mut Tensor {
        &mut self.features
    }

    pub(crate) fn adjacency_mut(&mut self) -> &mut Tensor {
        &mut self.adjacency
    }

    pub fn directed_edge_count(&self) -> usize {
        self.adjacency.data().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency.get(from, to) != 0.0
    }

    /// `(out_degree, in_degree)`: row sums of `A` and of `Aᵀ`.
    pub fn degrees(&self) -> (Vec<usize>, Vec<usize>) {
        count_degrees(&self.adjacency)
    }

    /// Forward and backward transition matrices `A/rowsum(A)` and
    /// `Aᵀ/rowsum(Aᵀ)`.
    pub fn transitions(&self) -> TransitionPair {
        TransitionPair {
            forward: row_normalize(&self.adjacency),
            backward: row_normalize(&self.adjacency.transpose()),
        }
    }

    /// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the row-degree diagonal of `A + I`.
    pub fn normalized_self_loop_adjacency(&self) -> Tensor {
        let n = self.n_nodes();
        let mut a_hat = self.adjacency.clone();
        for i in 0..n {
            a_hat.set(i, i, a_hat.get(i, i) + 1.0);
        }
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| 1.0 / a_hat.row(i).iter().sum::<f64>().sqrt())
            .collect();
        for i in 0..n {
            for j in 0..n {
                let v = a_hat.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
                a_hat.set(i, j, v);
            }
        }
        a_hat
    }

    /// Relabels node `i` as `perm[i]`, moving rows of `X` and rows and
    /// columns of `A` together.
    pub fn permute(&self, perm: &[usize]) -> Result<MolGraph, GraphError> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(GraphError::InvalidPermutation(n));
        }
        for &p in perm {
            if p >= n || seen[p] {
                return Err(GraphError::InvalidPermutation(n));
            }
            seen[p] = true;
        }

        let mut atoms = self.atoms.clone();
        for (old, atom) in self.atoms.iter().enumerate() {
            let mut a = atom.clone();
            a.index = perm[old];
            atoms[perm[old]] = a;
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        let mut features = Tensor::zeros(n, self.features.cols());
        let mut adjacency = Tensor::zeros(n, n);
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
            for j in 0..n {
                adjacency.set(perm[i], perm[j], self.adjacency.get(i, j));
            }
        }
        Ok(MolGraph {
            atoms,
            bonds,
            features,
            adjacency,
        })
    }

    /// Disjoint union: `other`'s nodes are appended after `self`'s. Used to
    /// probe locality of the encoder on multi-component inputs.
    pub fn disjoint_union(&self, other: &MolGraph) -> MolGraph {
        let (n, m) = (self.n_nodes(), other.n_nodes());
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned().map(|mut a| {
            a.index += n;
            a
        }));
        let mut bonds = self.bonds.clone();
        bonds.extend(other.bonds.iter().map(|b| Bond {
            a: b.a + n,
            b: b.b + n,
            order: b.order,
        }));
        let features = Tensor::concat_rows(&[&self.features, &other.features])
            .expect("feature widths agree");
        let mut adjacency = Tensor::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..n {
                adjacency.set(i, j, self.adjacency.get(i, j));
            }
        }
        for i in 0..m {
            for j in 0..m {
                adjacency.set(n + i, n + j, other.adjacency.get(i, j));
            }
        }
        MolGraph {
            atoms,
            bonds,
            features,
            adjacency,
        }
    }
}

fn count_degrees(adjacency: &Tensor) -> (Vec<usize>, Vec<usize>) {
    let n = adjacency.rows();
    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if adjacency.get(i, j) != 0.0 {
                out_deg[i] += 1;
                in_deg[j] += 1;
            }
        }
    }
    (out_deg, in_deg)
}

fn row_normalize(m: &Tensor) -> Tensor {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let s: f64 = out.row(i).iter().sum();
        if s != 0.0 {
            for v in out.row_mut(i) {
                *v /= s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn directed(n: usize, edges: &[(usize, usize)]) -> MolGraph {
        let g = parse_smiles(&"C".repeat(n)).unwrap();
        let mut a = Tensor::zeros(n, n);
        for &(i, j) in edges {
            a.set(i, j, 1.0);
        }
        MolGraph::from_parts(g.atoms().to_vec(), vec![], g.features().clone(), a)
    }

    #[test]
    fn degrees_examples() {
        let g = parse_smiles("CC").unwrap();
        assert_eq!(g.degrees(), (vec![1, 1], vec![1, 1]));
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.degrees(), (vec![2; 6], vec![2; 6]));

        let g = parse_smiles("CCC").unwrap();
        let mut h = g.clone();
        h.adjacency_mut().set(0, 1, 0.0);
        let (out, inn) = h.degrees();
        assert_eq!(out, vec![0, 2, 1]);
        assert_eq!(inn, vec![1, 1, 1]);
    }

    #[test]
    fn eq5_identity_on_unaugmented() {
        let g = parse_smiles("CC(=O)Oc1ccccc1").unwrap();
        let (out, inn) = g.degrees();
        for b in 0..g.n_nodes() {
            let sym = g
                .bonds()
                .iter()
                .filter(|x| x.a == b || x.b == b)
                .count();
            assert_eq!(out[b] + inn[b], 2 * sym);
        }
    }

    #[test]
    fn transition_examples() {
        let g = parse_smiles("CC").unwrap();
        assert_eq!(g.transitions().forward, Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));

        let path = directed(3, &[(0, 1), (1, 2)]);
        let t = path.transitions();
        assert_eq!(
            t.forward,
            Tensor::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        );
        assert_eq!(
            t.backward,
            Tensor::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        );

        let isolated = directed(2, &[]);
        assert_eq!(isolated.transitions().forward, Tensor::zeros(2, 2));
    }

    #[test]
    fn normalized_adjacency_examples() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(g.normalized_self_loop_adjacency(), Tensor::from_rows(&[[1.0]]));
        let g = parse_smiles("CC").unwrap();
        let a = g.normalized_self_loop_adjacency();
        assert!(a.max_abs_diff(&Tensor::filled(2, 2, 0.5)) < 1e-15);
        let g = parse_smiles("c1ccccc1").unwrap();
        let a = g.normalized_self_loop_adjacency();
        for s in a.row_sums().data() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_examples() {
        let g = parse_smiles("CO").unwrap();
        assert_eq!(g.permute(&[0, 1]).unwrap(), g);
        let swapped = g.permute(&[1, 0]).unwrap();
        assert_eq!(swapped.adjacency(), g.adjacency());
        assert_eq!(swapped.features().row(0), g.features().row(1));
        assert_eq!(swapped.features().row(1), g.features().row(0));

        assert!(g.permute(&[0, 0]).is_err());
        assert!(g.permute(&[0]).is_err());
        assert!(g.permute(&[0, 2]).is_err());
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let g = parse_smiles("COc1ccccc1C").unwrap();
        let perm = [3, 7, 0, 8, 1, 5, 2, 6, 4];
        let mut inv = [0; 9];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let back = g.permute(&perm).unwrap().permute(&inv).unwrap();
        assert_eq!(back, g);
    }
}
