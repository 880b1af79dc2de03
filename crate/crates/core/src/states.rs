//! Initial lattice wavefunctions.

use log::warn;
use thiserror::Error;

use crate::lattice::{LatticeBasis, LatticeError};
use crate::linalg;
use crate::measures::{recurrence_table, DisorderDistribution, MeasureError, RecurrenceTable};
use crate::quadrature::gauss_rule;
use crate::C64;

/// Tolerance on `|c|` for disorder-independent amplitudes.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("amplitudes have norm {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("realization amplitudes at lambda = {lambda:?} have norm {norm}, expected 1")]
    RealizationNotNormalized { lambda: Vec<f64>, norm: f64 },
    #[error("norm defect {defect:e} exceeds {tolerance:e}; deepen the lattice or raise the quadrature order")]
    NormDefectExceeded { defect: f64, tolerance: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("invalid amplitude table: {0}")]
    InvalidTable(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Amplitudes over the flat indices of a [`LatticeBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    basis: LatticeBasis,
    amplitudes: Vec<C64>,
}

impl LatticeState {
    /// Wraps raw amplitudes; the norm is not checked.
    pub fn from_amplitudes(basis: LatticeBasis, amplitudes: Vec<C64>) -> Result<Self, StateError> {
        if amplitudes.len() != basis.dim() {
            return Err(StateError::DimensionMismatch { what: "amplitudes".into(), expected: basis.dim(), got: amplitudes.len() });
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn basis(&self) -> &LatticeBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn amplitude(&self, n: usize, k: &[usize]) -> C64 {
        self.amplitudes[self.basis.flat(n, k)]
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.amplitudes)
    }
}

/// Every realization starts in `c`: the whole weight sits on node `K = 0`.
pub fn localized_initial(c: &[C64], basis: &LatticeBasis) -> Result<LatticeState, StateError> {
    if c.len() != basis.n() {
        return Err(StateError::DimensionMismatch { what: "initial amplitudes".into(), expected: basis.n(), got: c.len() });
    }
    let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(StateError::NotNormalized { norm });
    }
    let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
    amplitudes[..c.len()].copy_from_slice(c);
    Ok(LatticeState { basis: basis.clone(), amplitudes })
}

/// Thresholds on `| ||psi|| - 1 |` for expanded states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPolicy {
    pub warn: f64,
    pub error: f64,
}

impl Default for NormPolicy {
    fn default() -> Self {
        Self { warn: 1e-8, error: 1e-6 }
    }
}

/// An expanded initial state with its truncation diagnostic.
#[derive(Debug, Clone)]
pub struct ExpandedState {
    pub state: LatticeState,
    pub norm_defect: f64,
}

/// Projects realization-dependent amplitudes `c(lambda)` onto the lattice:
/// `d_{n,K} = int p(lambda) phi_K(lambda) c_n(lambda)`, by a tensor Gauss
/// rule with `quad_points` nodes per axis.
///
/// The state is not renormalized; its norm defect is returned and checked
/// against `policy`.
pub fn expanded_initial<F>(
    c_fn: F,
    tables: &[RecurrenceTable],
    basis: &LatticeBasis,
    quad_points: usize,
    policy: NormPolicy,
) -> Result<ExpandedState, StateError>
where
    F: Fn(&[f64]) -> Vec<C64>,
{
    let l = basis.l();
    if tables.len() != l {
        return Err(StateError::DimensionMismatch { what: "recurrence tables".into(), expected: l, got: tables.len() });
    }
    let mut rules = Vec::with_capacity(l);
    let mut phis: Vec<Vec<Vec<f64>>> = Vec::with_capacity(l);
    for (axis, (t, &d)) in tables.iter().zip(basis.depths()).enumerate() {
        let needed = quad_points.max(d + 1);
        if t.order() < needed {
            return Err(LatticeError::TableTooShort { axis, needed, available: t.order() }.into());
        }
        let rule = gauss_rule(t, quad_points.max(d + 1))?;
        phis.push(rule.nodes.iter().map(|&x| t.orthonormal_values(x, d + 1)).collect());
        rules.push(rule);
    }
    let n = basis.n();
    let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
    let mut counter = vec![0usize; l];
    let mut lambda = vec![0.0; l];
    let mut node_weight = vec![0.0; basis.node_count()];
    'outer: loop {
        let mut w = 1.0;
        for i in 0..l {
            lambda[i] = rules[i].nodes[counter[i]];
            w *= rules[i].weights[counter[i]];
        }
        let c = c_fn(&lambda);
        if c.len() != n {
            return Err(StateError::DimensionMismatch { what: "c(lambda)".into(), expected: n, got: c.len() });
        }
        let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(StateError::RealizationNotNormalized { lambda: lambda.clone(), norm });
        }
        // product of per-axis polynomial values over every node K
        node_weight.iter_mut().for_each(|v| *v = w);
        let mut stride = 1;
        for i in 0..l {
            let d = basis.depths()[i];
            let phi = &phis[i][counter[i]];
            for (node, v) in node_weight.iter_mut().enumerate() {
                *v *= phi[(node / stride) % (d + 1)];
            }
            stride *= d + 1;
        }
        for (node, &v) in node_weight.iter().enumerate() {
            for (m, cm) in c.iter().enumerate() {
                amplitudes[node * n + m] += cm * v;
            }
        }
        for i in 0..l {
            counter[i] += 1;
            if counter[i] < rules[i].len() {
                continue 'outer;
            }
            counter[i] = 0;
        }
        break;
    }
    let state = LatticeState { basis: basis.clone(), amplitudes };
    let norm_defect = (state.norm() - 1.0).abs();
    if norm_defect > policy.error {
        return Err(StateError::NormDefectExceeded { defect: norm_defect, tolerance: policy.error });
    }
    if norm_defect > policy.warn {
        warn!("expanded initial state has norm defect {norm_defect:e}");
    }
    Ok(ExpandedState { state, norm_defect })
}

/// Realization amplitudes tabulated on a grid of one disorder parameter,
/// interpolated linearly and renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedAmplitudes {
    grid: Vec<f64>,
    values: Vec<Vec<C64>>,
}

impl TabulatedAmplitudes {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<C64>>) -> Result<Self, StateError> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(StateError::InvalidTable(format!("{} grid points, {} amplitude rows", grid.len(), values.len())));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StateError::InvalidTable("grid must be strictly increasing".into()));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n) {
            return Err(StateError::InvalidTable("rows must share one nonzero length".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    /// Constant extrapolation outside the grid.
    pub fn eval(&self, x: f64) -> Vec<C64> {
        let g = &self.grid;
        let raw: Vec<C64> = if x <= g[0] {
            self.values[0].clone()
        } else if x >= g[g.len() - 1] {
            self.values[g.len() - 1].clone()
        } else {
            let j = g.partition_point(|&p| p <= x) - 1;
            let s = (x - g[j]) / (g[j + 1] - g[j]);
            self.values[j].iter().zip(&self.values[j + 1]).map(|(a, b)| a * (1.0 - s) + b * s).collect()
        };
        let norm = raw.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            raw.into_iter().map(|v| v / norm).collect()
        } else {
            raw
        }
    }
}

/// Eigenstate ensemble driven by the distribution of one energy: the state
/// starts on node 0 and the chain is built from the energy measure itself.
/// The returned table has order `basis depth + 1`.
pub fn spectral_disorder_initial(
    energy_dist: &DisorderDistribution,
    c: &[C64],
    basis: &LatticeBasis,
) -> Result<(LatticeState, RecurrenceTable), StateError> {
    if basis.l() != 1 {
        return Err(StateError::DimensionMismatch { what: "lattice dimensions".into(), expected: 1, got: basis.l() });
    }
    let table = recurrence_table(energy_dist, basis.depths()[0] + 1)?;
    Ok((localized_initial(c, basis)?, table))
}
