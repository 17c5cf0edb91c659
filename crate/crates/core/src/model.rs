//! A contact structure paired with its infection kernels.

use crate::error::{Error, Result};
use crate::hypergraph::{CoMembershipMatrix, Hypergraph, PartitionedHypergraph, Structure};
use crate::kernel::{InfectionKernel, KernelFamily};

/// Hypergraph (plain or partitioned) together with one kernel per category.
///
/// This is the shared input of the mean-field, simulation and exact-chain
/// modules. A single-kernel family is broadcast over every category.
#[derive(Debug, Clone)]
pub struct ContactModel {
    structure: Structure,
    kernels: KernelFamily,
    edge_kernel: Vec<usize>,
    memberships: Vec<Vec<usize>>,
}

impl ContactModel {
    pub fn new(structure: impl Into<Structure>, kernels: impl Into<KernelFamily>) -> Result<Self> {
        let structure = structure.into();
        let kernels = kernels.into();
        let k = structure.category_count();
        let edge_kernel = if kernels.len() == k {
            structure.categories()
        } else if kernels.len() == 1 {
            vec![0; structure.base().m()]
        } else {
            return Err(Error::InvalidSpec(format!(
                "{} kernels for {k} hyperedge categories",
                kernels.len()
            )));
        };
        let memberships = structure.base().memberships();
        Ok(Self {
            structure,
            kernels,
            edge_kernel,
            memberships,
        })
    }

    pub fn plain(h: Hypergraph, kernel: InfectionKernel) -> Self {
        Self::new(h, kernel).expect("single kernel fits a plain hypergraph")
    }

    pub fn partitioned(p: PartitionedHypergraph, kernels: KernelFamily) -> Result<Self> {
        Self::new(p, kernels)
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn hypergraph(&self) -> &Hypergraph {
        self.structure.base()
    }

    pub fn kernels(&self) -> &KernelFamily {
        &self.kernels
    }

    pub fn n(&self) -> usize {
        self.hypergraph().n()
    }

    pub fn e_max(&self) -> usize {
        self.hypergraph().e_max()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        self.hypergraph().hyperedges()
    }

    /// Kernel applied to hyperedge `h`.
    #[inline]
    pub fn kernel_of(&self, h: usize) -> &InfectionKernel {
        &self.kernels.kernels()[self.edge_kernel[h]]
    }

    /// Hyperedges containing node `i`.
    #[inline]
    pub fn memberships(&self, i: usize) -> &[usize] {
        &self.memberships[i]
    }

    pub fn all_concave(&self) -> bool {
        self.used_kernels().all(InfectionKernel::is_concave)
    }

    /// Kernels actually attached to at least one category.
    fn used_kernels(&self) -> impl Iterator<Item = &InfectionKernel> {
        let fam = self.kernels.kernels();
        let k = self.structure.category_count();
        (0..k).map(move |c| if fam.len() == 1 { &fam[0] } else { &fam[c] })
    }

    /// `Σₖ wₖ W⁽ᵏ⁾` as a dense real matrix, with per-category weights
    /// produced by `weight`.
    pub fn weighted_co_membership(
        &self,
        weight: impl Fn(&InfectionKernel) -> f64,
    ) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (h, edge) in self.hyperedges().iter().enumerate() {
            let w = weight(self.kernel_of(h));
            if w == 0.0 {
                continue;
            }
            for &i in edge {
                for &j in edge {
                    m[(i, j)] += w;
                }
            }
        }
        m
    }

    /// `M = Σₖ f′ₖ(0) W⁽ᵏ⁾`, the matrix whose largest eigenvalue sets `β_c`.
    pub fn linearized_matrix(&self) -> nalgebra::DMatrix<f64> {
        self.weighted_co_membership(InfectionKernel::derivative_at_zero)
    }

    /// `Σₖ c_{fₖ} W⁽ᵏ⁾` with the linear dominating slopes at this `e_max`.
    pub fn dominating_matrix(&self) -> nalgebra::DMatrix<f64> {
        let e_max = self.e_max().max(2);
        self.weighted_co_membership(|k| k.dominating_slope(e_max))
    }

    pub fn co_membership(&self) -> CoMembershipMatrix {
        self.hypergraph().co_membership()
    }

    /// Infected count per hyperedge for a binary state.
    pub(crate) fn edge_counts(&self, x: &[u8], out: &mut Vec<u32>) {
        out.clear();
        out.extend(
            self.hyperedges()
                .iter()
                .map(|e| e.iter().map(|&j| x[j] as u32).sum::<u32>()),
        );
    }

    /// `Σ_{h∋i} f_{k(h)}(count_h)` given precomputed per-hyperedge counts.
    #[inline]
    pub(crate) fn pressure_from_counts(&self, i: usize, counts: &[u32]) -> f64 {
        self.memberships[i]
            .iter()
            .map(|&h| {
                let c = counts[h];
                if c == 0 {
                    0.0
                } else {
                    self.kernel_of(h).eval_unchecked(c as f64)
                }
            })
            .sum()
    }
}
