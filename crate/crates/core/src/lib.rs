//! Stochastic SIS epidemics on hypergraphs with nonlinear per-hyperedge
//! infection kernels.
//!
//! A [`ContactModel`] pairs a [`Hypergraph`] (optionally partitioned into
//! hyperedge categories) with one [`InfectionKernel`] per category. From it
//! you can compute spectral thresholds and bounds ([`spectral`]), integrate
//! the mean-field ODE ([`meanfield`]), run the discrete-time stochastic
//! process ([`sim`]) or, for small instances, solve the exact Markov chain
//! ([`oracle`]).
//!
//! ```
//! use hypersis::{ContactModel, Hypergraph, InfectionKernel};
//!
//! let h = Hypergraph::new(3, vec![vec![0, 1, 2]]).unwrap();
//! let model = ContactModel::plain(h, InfectionKernel::Identity);
//! let report = hypersis::spectral::critical_beta(&model, 1.0).unwrap();
//! assert!((report.lambda_w - 3.0).abs() < 1e-9);
//! ```

// NaN-rejecting range checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hypergraph;
pub mod kernel;
pub mod meanfield;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use hypergraph::{CoMembershipMatrix, Hypergraph, Laplacian, PartitionedHypergraph, Structure};
pub use kernel::{InfectionKernel, KernelFamily};
pub use meanfield::{IntegrationOptions, MeanFieldProblem, MeanFieldState};
pub use model::ContactModel;
pub use sim::{NodeStateVector, SimParams};

// The guide's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/structure.md")]
    mod structure {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/thresholds.md")]
    mod thresholds {}
    #[doc = include_str!("../../../book/src/meanfield.md")]
    mod meanfield {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
