//! Disorder-averaged density matrices from lattice states.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lattice::HERMITICITY_TOL;
use crate::linalg::{hermiticity_defect, CMatrix};
use crate::states::LatticeState;
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("observable is not Hermitian: |O - O^†| = {defect:e} at ({row}, {col})")]
    NotHermitian { defect: f64, row: usize, col: usize },
    #[error("observable is {got}x{got}, system dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `rho_{nm} = sum_K psi_{n,K} conj(psi_{m,K})`, Hermitized.
pub fn partial_trace(psi: &LatticeState) -> CMatrix {
    let n = psi.basis().n();
    let mut rho = CMatrix::zeros(n, n);
    for node in psi.amplitudes().chunks_exact(n) {
        for i in 0..n {
            if node[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                rho[(i, j)] += node[i] * node[j].conj();
            }
        }
    }
    hermitize(&rho)
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// `tr(O rho)` for a Hermitian observable `O`.
pub fn observable_average(psi: &LatticeState, o: &CMatrix) -> Result<f64, ReductionError> {
    let n = psi.basis().n();
    if o.nrows() != n || o.ncols() != n {
        return Err(ReductionError::DimensionMismatch { expected: n, got: o.nrows().max(o.ncols()) });
    }
    let (defect, row, col) = hermiticity_defect(o);
    if defect > HERMITICITY_TOL {
        return Err(ReductionError::NotHermitian { defect, row, col });
    }
    let rho = partial_trace(psi);
    Ok((o * rho).trace().re)
}

/// `rho_{nm}(t)` along a trajectory of states.
///
/// # Panics
/// If `n == m` or either index is out of range.
pub fn coherence_trace(states: &[LatticeState], n: usize, m: usize) -> Vec<C64> {
    assert!(n != m, "coherence needs two distinct levels");
    states.iter().map(|s| partial_trace(s)[(n, m)]).collect()
}

/// `max` that propagates NaN.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Where a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ChainMap,
    MonteCarlo,
    GaussQuadrature,
    Analytic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ChainMap => "chain",
            Method::MonteCarlo => "mc",
            Method::GaussQuadrature => "quad",
            Method::Analytic => "analytic",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Averaged density matrices on a time grid, with optional standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub rho: Vec<CMatrix>,
    pub errors: Option<Vec<DMatrix<f64>>>,
    pub method: Method,
}

impl DensityTrajectory {
    pub fn new(times: Vec<f64>, rho: Vec<CMatrix>, method: Method) -> Self {
        assert_eq!(times.len(), rho.len());
        Self { times, rho, errors: None, method }
    }

    pub fn from_states(times: &[f64], states: &[LatticeState]) -> Self {
        Self::new(times.to_vec(), states.iter().map(partial_trace).collect(), Method::ChainMap)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.rho.first().map_or(0, |r| r.nrows())
    }

    pub fn entry(&self, n: usize, m: usize) -> Vec<C64> {
        self.rho.iter().map(|r| r[(n, m)]).collect()
    }

    pub fn coherence(&self, n: usize, m: usize) -> Vec<C64> {
        assert!(n != m, "coherence needs two distinct levels");
        self.entry(n, m)
    }

    pub fn population(&self, n: usize) -> Vec<f64> {
        self.rho.iter().map(|r| r[(n, n)].re).collect()
    }

    /// Largest `|rho_a - rho_b|` over all times and entries.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "trajectories on different grids");
        self.rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| (a - b).iter().map(|v| v.norm()).fold(0.0, nan_max))
            .fold(0.0, nan_max)
    }

    pub fn max_trace_defect(&self) -> f64 {
        self.rho.iter().map(|r| (r.trace() - C64::new(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.rho.iter().map(|r| hermiticity_defect(r).0).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of any `rho(t)`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| hermitize(r).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> Vec<f64> {
        self.rho.iter().map(|r| (r * r).trace().re).collect()
    }
}
