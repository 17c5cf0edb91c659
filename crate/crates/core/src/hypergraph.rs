//! Hypergraphs, their co-membership matrices and Laplacians, random
//! generators, and the boundary infection pressure `E(S, f)` with its
//! normalized infimum `η`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::InfectionKernel;

/// Default node-count cap for the exhaustive `η` enumeration.
pub const ETA_BRUTE_FORCE_CAP: usize = 24;

/// A hypergraph on nodes `0..n`.
///
/// Each hyperedge is a strictly increasing list of at least two node indices.
/// Duplicate hyperedges are allowed and add multiplicity to `W`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    hyperedges: Vec<Vec<usize>>,
}

impl Hypergraph {
    /// Builds a hypergraph, validating every hyperedge.
    pub fn new(n: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        for (index, edge) in hyperedges.iter().enumerate() {
            validate_hyperedge(n, index, edge)?;
        }
        Ok(Self { n, hyperedges })
    }

    /// Builds a hypergraph from unsorted member lists. Members are sorted;
    /// duplicates inside one hyperedge are still rejected.
    pub fn from_unsorted(n: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        let sorted = hyperedges
            .into_iter()
            .map(|mut e| {
                e.sort_unstable();
                e
            })
            .collect();
        Self::new(n, sorted)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of hyperedges.
    pub fn m(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    /// Size of the largest hyperedge (0 for an edgeless hypergraph).
    pub fn e_max(&self) -> usize {
        self.hyperedges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// For every node, the indices of the hyperedges containing it.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for (h, edge) in self.hyperedges.iter().enumerate() {
            for &i in edge {
                out[i].push(h);
            }
        }
        out
    }

    /// `W = I Iᵀ`, diagonal included.
    pub fn co_membership(&self) -> CoMembershipMatrix {
        let mut w = CoMembershipMatrix::zeros(self.n);
        for edge in &self.hyperedges {
            w.add_hyperedge(edge);
        }
        w
    }

    /// Boundary infection pressure
    /// `E(S, f) = Σ_{i∈S} Σ_h I_ih f(Σ_{j∉S} I_jh)`.
    pub fn infection_pressure(&self, f: &InfectionKernel, subset: &[usize]) -> Result<f64> {
        let mut inside = vec![false; self.n];
        for &i in subset {
            if i >= self.n {
                return Err(Error::Domain(format!(
                    "node {i} out of range for a hypergraph with n = {}",
                    self.n
                )));
            }
            inside[i] = true;
        }
        let mut total = 0.0;
        for edge in &self.hyperedges {
            let members_in = edge.iter().filter(|&&j| inside[j]).count();
            if members_in == 0 {
                continue;
            }
            let members_out = edge.len() - members_in;
            total += members_in as f64 * f.eval_unchecked(members_out as f64);
        }
        Ok(total)
    }

    /// `η(H, m_cap, f)`: the minimum of `E(S, f)/|S|` over all subsets with
    /// `1 <= |S| <= m_cap`, by exhaustive enumeration. Refuses above
    /// [`ETA_BRUTE_FORCE_CAP`] nodes.
    pub fn eta(&self, m_cap: usize, f: &InfectionKernel) -> Result<f64> {
        self.eta_with_cap(m_cap, f, ETA_BRUTE_FORCE_CAP)
    }

    /// [`Self::eta`] with an explicit node-count cap.
    pub fn eta_with_cap(&self, m_cap: usize, f: &InfectionKernel, cap: usize) -> Result<f64> {
        let n = self.n;
        if n > cap || n >= 64 {
            return Err(Error::CapExceeded {
                what: "eta",
                n,
                cap: cap.min(63),
            });
        }
        if m_cap < 1 || m_cap > n / 2 {
            return Err(Error::Domain(format!(
                "subset size bound must lie in 1..={}, got {m_cap}",
                n / 2
            )));
        }
        let masks: Vec<u64> = self
            .hyperedges
            .iter()
            .map(|e| e.iter().fold(0u64, |acc, &i| acc | (1 << i)))
            .collect();
        let f_at: Vec<f64> = (0..=self.e_max())
            .map(|k| f.eval_unchecked(k as f64))
            .collect();
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut best = f64::INFINITY;
        for subset in 1..=full {
            let size = subset.count_ones() as usize;
            if size > m_cap {
                continue;
            }
            let complement = full & !subset;
            let pressure: f64 = masks
                .iter()
                .map(|&mask| {
                    let inside = (mask & subset).count_ones();
                    if inside == 0 {
                        0.0
                    } else {
                        inside as f64 * f_at[(mask & complement).count_ones() as usize]
                    }
                })
                .sum();
            best = best.min(pressure / size as f64);
        }
        Ok(best)
    }

    /// Random hypergraph with a fixed number of hyperedges per size.
    ///
    /// For each `(size, count)` in ascending size order, `count` hyperedges
    /// are drawn independently, each a uniform random `size`-subset of the
    /// nodes. Deterministic in `seed`.
    pub fn generate_random(
        n: usize,
        size_counts: &BTreeMap<usize, usize>,
        seed: u64,
    ) -> Result<Self> {
        for &size in size_counts.keys() {
            if size < 2 || size > n {
                return Err(Error::InvalidSpec(format!(
                    "hyperedge size {size} must lie in 2..={n}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hyperedges = Vec::with_capacity(size_counts.values().sum());
        for (&size, &count) in size_counts {
            for _ in 0..count {
                let mut edge = rand::seq::index::sample(&mut rng, n, size).into_vec();
                edge.sort_unstable();
                hyperedges.push(edge);
            }
        }
        Ok(Self { n, hyperedges })
    }

    /// Partitions the hyperedges by size: a hyperedge of size `s` goes to
    /// category `s - 2`, with `K = e_max - 1` categories.
    pub fn partition_by_size(&self) -> PartitionedHypergraph {
        let k = self.e_max().saturating_sub(1).max(1);
        let categories = self.hyperedges.iter().map(|e| e.len() - 2).collect();
        PartitionedHypergraph {
            base: self.clone(),
            categories,
            k,
        }
    }
}

fn validate_hyperedge(n: usize, index: usize, edge: &[usize]) -> Result<()> {
    if edge.len() < 2 {
        return Err(Error::Hyperedge {
            index,
            message: format!("hyperedge {edge:?} has fewer than two nodes"),
        });
    }
    for pair in edge.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::Hyperedge {
                index,
                message: format!("hyperedge {edge:?} is not strictly increasing"),
            });
        }
    }
    if let Some(&last) = edge.last() {
        if last >= n {
            return Err(Error::Hyperedge {
                index,
                message: format!("node {last} out of range for n = {n}"),
            });
        }
    }
    Ok(())
}

/// A hypergraph whose hyperedges carry a category label in `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionedHypergraph {
    base: Hypergraph,
    categories: Vec<usize>,
    k: usize,
}

impl PartitionedHypergraph {
    /// Empty categories are allowed as long as `k` covers every label.
    pub fn new(base: Hypergraph, categories: Vec<usize>, k: usize) -> Result<Self> {
        if categories.len() != base.m() {
            return Err(Error::InvalidSpec(format!(
                "{} category labels for {} hyperedges",
                categories.len(),
                base.m()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidSpec(
                "category count must be at least 1".into(),
            ));
        }
        if let Some((index, &label)) = categories.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::Hyperedge {
                index,
                message: format!("category {label} out of range for K = {k}"),
            });
        }
        Ok(Self {
            base,
            categories,
            k,
        })
    }

    pub fn base(&self) -> &Hypergraph {
        &self.base
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    /// Number of categories `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// `W⁽ᵏ⁾` for every category; their sum is the base co-membership matrix.
    pub fn category_matrices(&self) -> Vec<CoMembershipMatrix> {
        let mut out = vec![CoMembershipMatrix::zeros(self.base.n()); self.k];
        for (edge, &cat) in self.base.hyperedges().iter().zip(&self.categories) {
            out[cat].add_hyperedge(edge);
        }
        out
    }
}

/// Either kind of contact structure, as read from a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Structure {
    Plain(Hypergraph),
    Partitioned(PartitionedHypergraph),
}

impl Structure {
    pub fn base(&self) -> &Hypergraph {
        match self {
            Structure::Plain(h) => h,
            Structure::Partitioned(p) => p.base(),
        }
    }

    /// Per-hyperedge category labels (all zero for a plain hypergraph).
    pub fn categories(&self) -> Vec<usize> {
        match self {
            Structure::Plain(h) => vec![0; h.m()],
            Structure::Partitioned(p) => p.categories().to_vec(),
        }
    }

    pub fn category_count(&self) -> usize {
        match self {
            Structure::Plain(_) => 1,
            Structure::Partitioned(p) => p.k(),
        }
    }

    pub fn category_matrices(&self) -> Vec<CoMembershipMatrix> {
        match self {
            Structure::Plain(h) => vec![h.co_membership()],
            Structure::Partitioned(p) => p.category_matrices(),
        }
    }

    /// Reads and validates a hypergraph file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: HypergraphFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let base = Hypergraph::new(file.n, file.hyperedges)?;
        match file.categories {
            None => {
                if file.k.is_some() {
                    return Err(Error::Parse("\"K\" given without \"categories\"".into()));
                }
                Ok(Structure::Plain(base))
            }
            Some(categories) => {
                let k = file
                    .k
                    .unwrap_or_else(|| categories.iter().max().map_or(1, |c| c + 1));
                Ok(Structure::Partitioned(PartitionedHypergraph::new(
                    base, categories, k,
                )?))
            }
        }
    }

    /// Serializes to the single-line JSON file format, with a trailing newline.
    pub fn to_json(&self) -> String {
        let base = self.base();
        let file = HypergraphFile {
            n: base.n(),
            hyperedges: base.hyperedges().to_vec(),
            categories: match self {
                Structure::Plain(_) => None,
                Structure::Partitioned(p) => Some(p.categories().to_vec()),
            },
            k: match self {
                Structure::Plain(_) => None,
                Structure::Partitioned(p) => Some(p.k()),
            },
        };
        let mut out = serde_json::to_string(&file).expect("hypergraph file serializes");
        out.push('\n');
        out
    }
}

impl From<Hypergraph> for Structure {
    fn from(h: Hypergraph) -> Self {
        Structure::Plain(h)
    }
}

impl From<PartitionedHypergraph> for Structure {
    fn from(p: PartitionedHypergraph) -> Self {
        Structure::Partitioned(p)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypergraphFile {
    n: usize,
    hyperedges: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<usize>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
}

/// Symmetric non-negative integer matrix `W = I Iᵀ`.
///
/// `W_ii` is the number of hyperedges containing `i`; `W_ij` the number
/// containing both `i` and `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoMembershipMatrix {
    n: usize,
    entries: Vec<u32>,
}

impl CoMembershipMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0; n * n],
        }
    }

    fn add_hyperedge(&mut self, edge: &[usize]) {
        for &i in edge {
            for &j in edge {
                self.entries[i * self.n + j] += 1;
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    /// The Laplacian `Δ = D − W′` of the weighted graph induced by `W`, where
    /// `W′` is `W` with its diagonal zeroed and `D_ii = Σ_{j≠i} W_ij`.
    pub fn laplacian(&self) -> Laplacian {
        let n = self.n;
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if i != j {
                    let w = self.get(i, j) as f64;
                    entries[(i, j)] = -w;
                    degree += w;
                }
            }
            entries[(i, i)] = degree;
        }
        Laplacian { entries }
    }
}

/// Weighted graph Laplacian: symmetric, zero row sums, non-positive
/// off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    entries: DMatrix<f64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> Hypergraph {
        Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap()
    }

    fn triangle() -> Hypergraph {
        Hypergraph::new(3, vec![vec![0, 1, 2]]).unwrap()
    }

    fn dense(w: &CoMembershipMatrix) -> Vec<Vec<u32>> {
        (0..w.n()).map(|i| w.row(i).to_vec()).collect()
    }

    #[test]
    fn co_membership_examples() {
        assert_eq!(dense(&triangle().co_membership()), vec![vec![1; 3]; 3]);
        assert_eq!(
            dense(&path().co_membership()),
            vec![vec![1, 1, 0], vec![1, 2, 1], vec![0, 1, 1]]
        );
        let empty = Hypergraph::new(3, vec![]).unwrap();
        assert_eq!(dense(&empty.co_membership()), vec![vec![0; 3]; 3]);
    }

    #[test]
    fn simple_graph_recovers_adjacency() {
        let edges = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3], vec![1, 3]];
        let h = Hypergraph::new(4, edges.clone()).unwrap();
        let w = h.co_membership();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let adjacent = edges.iter().any(|e| e.contains(&i) && e.contains(&j));
                assert_eq!(w.get(i, j), adjacent as u32);
            }
        }
    }

    #[test]
    fn category_matrices_examples() {
        let base = Hypergraph::new(3, vec![vec![0, 1], vec![0, 1, 2]]).unwrap();
        let p = PartitionedHypergraph::new(base.clone(), vec![0, 1], 3).unwrap();
        let mats = p.category_matrices();
        assert_eq!(mats.len(), 3);
        assert_eq!(
            dense(&mats[0]),
            vec![vec![1, 1, 0], vec![1, 1, 0], vec![0, 0, 0]]
        );
        assert_eq!(dense(&mats[1]), vec![vec![1; 3]; 3]);
        assert_eq!(dense(&mats[2]), vec![vec![0; 3]; 3]);

        let single = PartitionedHypergraph::new(base.clone(), vec![0, 0], 1).unwrap();
        assert_eq!(single.category_matrices(), vec![base.co_membership()]);
    }

    #[test]
    fn laplacian_examples() {
        let l = triangle().co_membership().laplacian();
        let expect = DMatrix::from_row_slice(3, 3, &[2., -1., -1., -1., 2., -1., -1., -1., 2.]);
        assert_eq!(l.matrix(), &expect);
        let l = path().co_membership().laplacian();
        let expect = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(l.matrix(), &expect);
        let l = CoMembershipMatrix::zeros(3).laplacian();
        assert_eq!(l.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn generator_examples() {
        let counts = BTreeMap::from([(2, 300), (3, 200), (4, 100), (5, 50)]);
        let h = Hypergraph::generate_random(400, &counts, 7).unwrap();
        assert_eq!(h.m(), 650);
        assert_eq!(h.e_max(), 5);
        assert_eq!(h, Hypergraph::generate_random(400, &counts, 7).unwrap());
        assert_ne!(h, Hypergraph::generate_random(400, &counts, 8).unwrap());

        let one = Hypergraph::generate_random(3, &BTreeMap::from([(3, 1)]), 99).unwrap();
        assert_eq!(one.hyperedges(), &[vec![0, 1, 2]]);

        assert!(Hypergraph::generate_random(3, &BTreeMap::from([(4, 1)]), 0).is_err());
        assert!(Hypergraph::generate_random(3, &BTreeMap::from([(1, 1)]), 0).is_err());
    }

    #[test]
    fn infection_pressure_examples() {
        let id = InfectionKernel::Identity;
        assert_eq!(triangle().infection_pressure(&id, &[0]).unwrap(), 2.0);
        assert_eq!(triangle().infection_pressure(&id, &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(path().infection_pressure(&id, &[1]).unwrap(), 2.0);
        assert!(path().infection_pressure(&id, &[3]).is_err());
    }

    #[test]
    fn eta_examples() {
        let id = InfectionKernel::Identity;
        assert_eq!(triangle().eta(1, &id).unwrap(), 2.0);
        // isolated nodes 0 and 1 plus the edge {2, 3}
        let h = Hypergraph::new(4, vec![vec![2, 3]]).unwrap();
        assert_eq!(h.eta(1, &id).unwrap(), 0.0);
        assert!(triangle().eta(2, &id).is_err());
        let big = Hypergraph::new(30, vec![vec![0, 1]]).unwrap();
        assert!(matches!(big.eta(1, &id), Err(Error::CapExceeded { .. })));
        let huge = Hypergraph::new(70, vec![vec![0, 1]]).unwrap();
        assert!(huge.eta_with_cap(1, &id, 100).is_err());
    }

    #[test]
    fn file_round_trip_and_errors() {
        let p = PartitionedHypergraph::new(path(), vec![0, 2], 3).unwrap();
        let s = Structure::Partitioned(p);
        assert_eq!(Structure::from_json(&s.to_json()).unwrap(), s);

        let plain = Structure::from_json(r#"{"n":3,"hyperedges":[[0,1],[1,2]]}"#).unwrap();
        assert_eq!(plain, Structure::Plain(path()));

        let err = Structure::from_json(r#"{"n":3,"hyperedges":[[0,1],[5]]}"#).unwrap_err();
        assert!(matches!(err, Error::Hyperedge { index: 1, .. }), "{err}");
        let err = Structure::from_json(r#"{"n":3,"hyperedges":[[2,1]]}"#).unwrap_err();
        assert!(matches!(err, Error::Hyperedge { index: 0, .. }), "{err}");
        let err = Structure::from_json(r#"{"n":3,"hyperedges":[[0,5]]}"#).unwrap_err();
        assert!(err.to_string().contains("hyperedge 0"));
        assert!(Structure::from_json(r#"{"n":3}"#).is_err());
        assert!(
            Structure::from_json(r#"{"n":3,"hyperedges":[[0,1]],"categories":[4],"K":2}"#).is_err()
        );
    }

    #[test]
    fn partition_by_size_labels() {
        let h = Hypergraph::new(5, vec![vec![0, 1], vec![0, 1, 2], vec![1, 2, 3, 4]]).unwrap();
        let p = h.partition_by_size();
        assert_eq!(p.k(), 3);
        assert_eq!(p.categories(), &[0, 1, 2]);
    }
}
