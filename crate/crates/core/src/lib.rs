//! Disorder-averaged quantum dynamics by orthogonal-polynomial chain mapping.
//!
//! An ensemble `H(lambda) = H0 + sum_i f_i(lambda_i)` with independent random
//! `lambda_i` is rewritten as one Hamiltonian on a semi-infinite lattice
//! whose nodes are labelled by polynomial degrees. Propagating a single
//! wavefunction on that lattice and tracing out the node label gives the
//! disorder-averaged density matrix exactly, up to lattice truncation.
//!
//! ```
//! use disorder_chain::prelude::*;
//!
//! let mut h0 = CMatrix::zeros(2, 2);
//! h0[(1, 1)] = C64::new(1.0, 0.0);
//! let mut c = CMatrix::zeros(2, 2);
//! c[(1, 1)] = C64::new(1.0, 0.0);
//! let spec = EnsembleSpec::linear(h0, c, DisorderDistribution::gaussian(1.0).unwrap()).unwrap();
//!
//! let (basis, h) = chain_map(&spec, &[48]).unwrap();
//! let s = 0.5f64.sqrt();
//! let psi0 = localized_initial(&[C64::new(s, 0.0), C64::new(s, 0.0)], &basis).unwrap();
//! let plan = PropagationPlan::uniform(2.0, 11).unwrap();
//! let run = propagate(&h, &psi0, &plan).unwrap();
//! let rho = partial_trace(run.states.last().unwrap());
//! assert!((rho[(0, 1)].norm() - 0.5 * (-2.0f64).exp()).abs() < 1e-10);
//! ```

pub mod dynamics;
pub mod lattice;
pub mod linalg;
pub mod measures;
pub mod oracle;
pub mod quadrature;
pub mod reduction;
pub mod states;

pub use num_complex::Complex64 as C64;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Measure(#[from] measures::MeasureError),
    #[error(transparent)]
    Lattice(#[from] lattice::LatticeError),
    #[error(transparent)]
    State(#[from] states::StateError),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error(transparent)]
    Reduction(#[from] reduction::ReductionError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

pub mod prelude {
    pub use crate::dynamics::{
        auto_depth, evolve, evolve_reduced, propagate, propagate_dense, PropagationPlan, DEFAULT_DEPTH_CAP,
    };
    pub use crate::lattice::{
        boundary_shell, build_general, build_linear, chain_map, Coupling, EnsembleSpec, LatticeBasis, LatticeOperator,
    };
    pub use crate::linalg::{CMatrix, CVector};
    pub use crate::measures::{
        apply_cutoff, characteristic_function, recurrence_table, DisorderDistribution, RecurrenceTable,
    };
    pub use crate::oracle::{analytic_qubit, chain_to_ensemble, mc_average, quad_average, OracleConfig};
    pub use crate::quadrature::{gauss_nodes, gauss_rule};
    pub use crate::reduction::{coherence_trace, observable_average, partial_trace, DensityTrajectory, Method};
    pub use crate::states::{expanded_initial, localized_initial, LatticeState, NormPolicy};
    pub use crate::C64;
}
