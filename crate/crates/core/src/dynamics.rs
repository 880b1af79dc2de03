//! Time propagation of lattice states.

use log::debug;
use thiserror::Error;

use crate::lattice::{boundary_shell, build_linear, chain_map, EnsembleSpec, LatticeBasis, LatticeError, LatticeOperator};
use crate::linalg::{self, symmetric_tridiagonal_eigen, CMatrix, CVector, CsrMatrix};
use crate::measures::{MeasureError, RecurrenceTable};
use crate::reduction::{partial_trace, DensityTrajectory};
use crate::states::{LatticeState, StateError};
use crate::C64;

/// Largest lattice handled by the dense cross-check path.
pub const DENSE_MAX_DIM: usize = 2000;
/// Default depth cap of [`auto_depth`].
pub const DEFAULT_DEPTH_CAP: usize = 4096;
const START_DEPTH: usize = 16;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid propagation plan: {0}")]
    InvalidPlan(String),
    #[error("operator has dimension {got}, state has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("boundary population {population:e} at t = {time} exceeds {threshold:e}; the lattice is too shallow for this horizon")]
    LeakageExceeded { time: f64, population: f64, threshold: f64 },
    #[error("Krylov step stalled at t = {time} (substep {substep:e}); reduce max_substep")]
    KrylovBreakdown { time: f64, substep: f64 },
    #[error("depth cap {cap} reached before convergence (final leakage {leakage:e}, last change {change:e})")]
    DepthCapExceeded { cap: usize, leakage: f64, change: f64 },
    #[error("dense propagation limited to dimension {max}, got {dim}")]
    DenseTooLarge { dim: usize, max: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Output grid and accuracy settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPlan {
    pub times: Vec<f64>,
    /// Error budget for the whole grid. Each substep of length `tau` may
    /// contribute `tol tau / (2 t_max)`, so no output step exceeds `tol` and
    /// the accumulated error at `t_max` stays below `tol / 2`.
    pub tol: f64,
    pub max_krylov_dim: usize,
    pub leakage_threshold: f64,
    pub leakage_width: usize,
    /// Optional upper bound on a single Krylov substep.
    pub max_substep: Option<f64>,
}

impl PropagationPlan {
    pub fn new(times: Vec<f64>) -> Result<Self, DynamicsError> {
        let plan = Self {
            times,
            tol: 1e-12,
            max_krylov_dim: 30,
            leakage_threshold: 1e-8,
            leakage_width: 1,
            max_substep: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `points` equally spaced times on `[0, t_max]`.
    pub fn uniform(t_max: f64, points: usize) -> Result<Self, DynamicsError> {
        if points < 2 || !(t_max > 0.0) || !t_max.is_finite() {
            return Err(DynamicsError::InvalidPlan(format!("need t_max > 0 and at least 2 points, got {t_max}, {points}")));
        }
        let h = t_max / (points - 1) as f64;
        let mut times: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
        times[points - 1] = t_max;
        Self::new(times)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidPlan(m.into()));
        if self.times.first() != Some(&0.0) {
            return bad("time grid must start at 0");
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) || self.times.iter().any(|t| !t.is_finite()) {
            return bad("time grid must be finite and strictly increasing");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_krylov_dim < 2 {
            return bad("max_krylov_dim must be at least 2");
        }
        if self.leakage_width == 0 {
            return bad("leakage_width must be at least 1");
        }
        if !(self.leakage_threshold >= 0.0) {
            return bad("leakage_threshold must be non-negative");
        }
        if let Some(s) = self.max_substep {
            if !(s > 0.0) {
                return bad("max_substep must be positive");
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("validated grid is non-empty")
    }
}

/// Boundary-shell population at every grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    pub times: Vec<f64>,
    pub population: Vec<f64>,
    pub threshold: f64,
    pub width: usize,
}

impl LeakageReport {
    pub fn max(&self) -> f64 {
        self.population.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> f64 {
        self.population.last().copied().unwrap_or(0.0)
    }

    /// First grid index where the threshold is exceeded.
    pub fn first_exceeded(&self) -> Option<usize> {
        self.population.iter().position(|&p| p > self.threshold)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub substeps: usize,
    pub matvecs: usize,
    pub max_substep: f64,
    pub min_substep: f64,
    pub max_dim_used: usize,
}

impl KrylovStats {
    fn record(&mut self, tau: f64, dim: usize) {
        let tau = tau.abs();
        if self.substeps == 0 || tau < self.min_substep {
            self.min_substep = tau;
        }
        self.max_substep = self.max_substep.max(tau);
        self.max_dim_used = self.max_dim_used.max(dim);
        self.substeps += 1;
    }
}

struct Krylov<'a> {
    h: &'a CsrMatrix,
    shift: f64,
    max_dim: usize,
    max_substep: Option<f64>,
    vectors: Vec<Vec<C64>>,
    stats: KrylovStats,
}

/// Eigen-decomposition of the Lanczos matrix, reused for every trial substep.
struct SmallExp {
    values: Vec<f64>,
    vectors: Vec<f64>,
    size: usize,
    residual: f64,
}

impl SmallExp {
    fn new(alpha: &[f64], beta: &[f64], residual: f64) -> Option<Self> {
        let size = alpha.len();
        let (values, vectors) = symmetric_tridiagonal_eigen(alpha, &beta[..size - 1], size)?;
        Some(Self { values, vectors, size, residual })
    }

    /// `exp(-i tau T) e_1`.
    fn coefficients(&self, tau: f64) -> Vec<C64> {
        let n = self.size;
        (0..n)
            .map(|k| {
                (0..n).fold(C64::new(0.0, 0.0), |acc, j| {
                    acc + C64::from_polar(self.vectors[k * n + j] * self.vectors[j], -tau * self.values[j])
                })
            })
            .collect()
    }

    /// `residual * |tau e_m^T phi_1(-i tau T) e_1|`, the classical a-posteriori
    /// estimate of the Krylov truncation error.
    fn error(&self, tau: f64) -> f64 {
        if self.residual == 0.0 {
            return 0.0;
        }
        let n = self.size;
        let last = (0..n).fold(C64::new(0.0, 0.0), |acc, j| {
            let z = tau * self.values[j];
            let g = if z.abs() < 1e-8 {
                C64::new(tau, -0.5 * tau * z)
            } else {
                (C64::from_polar(1.0, -z) - 1.0) / C64::new(0.0, -self.values[j])
            };
            acc + g * (self.vectors[(n - 1) * n + j] * self.vectors[j])
        });
        self.residual * last.norm()
    }
}

impl<'a> Krylov<'a> {
    fn new(h: &'a CsrMatrix, max_dim: usize, max_substep: Option<f64>) -> Self {
        let n = h.dim();
        let mut trace = 0.0;
        for r in 0..n {
            trace += h.row(r).filter(|&(c, _)| c == r).map(|(_, v)| v.re).sum::<f64>();
        }
        let shift = if n > 0 { trace / n as f64 } else { 0.0 };
        Self { h, shift, max_dim, max_substep, vectors: Vec::new(), stats: KrylovStats::default() }
    }

    fn vector(&mut self, j: usize) {
        while self.vectors.len() <= j {
            self.vectors.push(vec![C64::new(0.0, 0.0); self.h.dim()]);
        }
    }

    /// Advances `psi` by `dt` (either sign) with local error at most `tol`.
    fn advance(&mut self, psi: &mut [C64], dt: f64, tol: f64, t_start: f64) -> Result<(), DynamicsError> {
        let mut done = 0.0;
        let dir = dt.signum();
        while (dt - done).abs() > 0.0 {
            let remaining = dt - done;
            let mut cap = remaining.abs();
            if let Some(s) = self.max_substep {
                cap = cap.min(s);
            }
            let target = |tau: f64| (tol * tau.abs() / dt.abs()).max(1e-15);
            let beta0 = linalg::norm(psi);
            if beta0 == 0.0 {
                return Ok(());
            }
            self.vector(0);
            for (v, p) in self.vectors[0].iter_mut().zip(psi.iter()) {
                *v = p / beta0;
            }
            let mut alpha = Vec::with_capacity(self.max_dim);
            let mut beta = Vec::with_capacity(self.max_dim);
            let mut scale = 0.0f64;
            let mut accepted: Option<(SmallExp, f64)> = None;
            for j in 0..self.max_dim {
                self.vector(j + 1);
                let (head, tail) = self.vectors.split_at_mut(j + 1);
                let w = &mut tail[0];
                self.h.apply_shifted(&head[j], w, self.shift);
                self.stats.matvecs += 1;
                if j > 0 {
                    linalg::axpy_neg(w, C64::new(beta[j - 1], 0.0), &head[j - 1]);
                }
                let mut a = linalg::cdot(&head[j], w).re;
                linalg::axpy_neg(w, C64::new(a, 0.0), &head[j]);
                // full reorthogonalization, repeated once when it cancels
                // a large part of w
                let mut b = linalg::norm(w);
                for _ in 0..2 {
                    for (i, v) in head.iter().enumerate() {
                        let c = linalg::cdot(v, w);
                        if i == j {
                            a += c.re;
                        }
                        linalg::axpy_neg(w, c, v);
                    }
                    let before = b;
                    b = linalg::norm(w);
                    if b > 0.7 * before {
                        break;
                    }
                }
                alpha.push(a);
                scale = scale.max(a.abs()).max(b);
                let happy = b <= 1e-14 * scale.max(f64::MIN_POSITIVE);
                beta.push(if happy { 0.0 } else { b });
                let last = j + 1 == self.max_dim;
                if happy || j >= 2 || last {
                    let small = SmallExp::new(&alpha, &beta, if happy { 0.0 } else { b })
                        .ok_or(DynamicsError::KrylovBreakdown { time: t_start + done, substep: cap })?;
                    let full = dir * cap;
                    if small.error(full) * beta0 <= target(full) {
                        accepted = Some((small, full));
                    } else if last {
                        let tau = largest_step(&small, beta0, full, &target)
                            .ok_or(DynamicsError::KrylovBreakdown { time: t_start + done, substep: cap })?;
                        accepted = Some((small, tau));
                    }
                }
                if accepted.is_some() {
                    break;
                }
                let inv = 1.0 / b;
                tail[0].iter_mut().for_each(|v| *v *= inv);
            }
            let (small, tau) = accepted.expect("loop ends with an accepted step");
            let coeffs = small.coefficients(tau);
            let phase = C64::from_polar(beta0, -self.shift * tau);
            psi.iter_mut().for_each(|p| *p = C64::new(0.0, 0.0));
            for (c, v) in coeffs.iter().zip(&self.vectors) {
                let s = c * phase;
                psi.iter_mut().zip(v).for_each(|(p, x)| *p += s * x);
            }
            self.stats.record(tau, small.size);
            done = if (remaining - tau).abs() <= 1e-15 * dt.abs() { dt } else { done + tau };
        }
        Ok(())
    }
}

/// Largest substep (within a factor 1/16 of the best) meeting the target.
fn largest_step(small: &SmallExp, beta0: f64, full: f64, target: &impl Fn(f64) -> f64) -> Option<f64> {
    let ok = |tau: f64| small.error(tau) * beta0 <= target(tau);
    let mut hi = full;
    let mut lo = full;
    loop {
        lo *= 0.5;
        if lo.abs() < 1e-12 * full.abs() {
            return None;
        }
        if ok(lo) {
            break;
        }
        hi = lo;
    }
    for _ in 0..4 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// `exp(-i H t) v` for a single time `t` of either sign.
pub fn apply_exponential(
    h: &LatticeOperator,
    v: &[C64],
    t: f64,
    tol: f64,
    max_krylov_dim: usize,
) -> Result<(Vec<C64>, KrylovStats), DynamicsError> {
    if v.len() != h.dim() {
        return Err(DynamicsError::DimensionMismatch { expected: v.len(), got: h.dim() });
    }
    let csr = h.to_csr();
    let mut k = Krylov::new(&csr, max_krylov_dim.max(2), None);
    let mut psi = v.to_vec();
    if t != 0.0 {
        k.advance(&mut psi, t, tol, 0.0)?;
    }
    Ok((psi, k.stats))
}

/// Summary of a streamed propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub leakage: LeakageReport,
    pub stats: KrylovStats,
}

/// Propagates `psi0` over the plan's grid, handing every state (including
/// `t = 0`) to `observer`. Leakage is recorded but never fails the run.
pub fn evolve<F>(h: &LatticeOperator, psi0: &LatticeState, plan: &PropagationPlan, mut observer: F) -> Result<Evolution, DynamicsError>
where
    F: FnMut(usize, f64, &LatticeState),
{
    plan.validate()?;
    if h.dim() != psi0.basis().dim() {
        return Err(DynamicsError::DimensionMismatch { expected: psi0.basis().dim(), got: h.dim() });
    }
    let shell = boundary_shell(psi0.basis(), plan.leakage_width)?;
    let shell_population = |s: &LatticeState| shell.iter().map(|&i| s.amplitudes()[i].norm_sqr()).sum::<f64>();
    let csr = h.to_csr();
    let mut krylov = Krylov::new(&csr, plan.max_krylov_dim, plan.max_substep);
    let mut state = psi0.clone();
    let mut population = Vec::with_capacity(plan.times.len());
    for (i, &t) in plan.times.iter().enumerate() {
        if i > 0 {
            let t0 = plan.times[i - 1];
            krylov.advance(state.amplitudes_mut(), t - t0, 0.5 * plan.tol * (t - t0) / plan.horizon(), t0)?;
        }
        population.push(shell_population(&state));
        observer(i, t, &state);
    }
    debug!(
        "propagated dim {} over {} points: {} substeps, {} matvecs",
        h.dim(),
        plan.times.len(),
        krylov.stats.substeps,
        krylov.stats.matvecs
    );
    Ok(Evolution {
        leakage: LeakageReport {
            times: plan.times.clone(),
            population,
            threshold: plan.leakage_threshold,
            width: plan.leakage_width,
        },
        stats: krylov.stats,
    })
}

/// States at every grid time.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub states: Vec<LatticeState>,
    pub leakage: LeakageReport,
    pub stats: KrylovStats,
}

/// Like [`evolve`], but keeps the states and fails with `LeakageExceeded`
/// once the boundary population passes the plan's threshold.
pub fn propagate(h: &LatticeOperator, psi0: &LatticeState, plan: &PropagationPlan) -> Result<Propagation, DynamicsError> {
    let mut states = Vec::with_capacity(plan.times.len());
    let ev = evolve(h, psi0, plan, |_, _, s| states.push(s.clone()))?;
    if let Some(i) = ev.leakage.first_exceeded() {
        return Err(DynamicsError::LeakageExceeded {
            time: plan.times[i],
            population: ev.leakage.population[i],
            threshold: plan.leakage_threshold,
        });
    }
    Ok(Propagation { states, leakage: ev.leakage, stats: ev.stats })
}

/// Reduced density matrices along a streamed propagation.
pub fn evolve_reduced(
    h: &LatticeOperator,
    psi0: &LatticeState,
    plan: &PropagationPlan,
) -> Result<(DensityTrajectory, Evolution), DynamicsError> {
    let mut rho = Vec::with_capacity(plan.times.len());
    let ev = evolve(h, psi0, plan, |_, _, s| rho.push(partial_trace(s)))?;
    Ok((DensityTrajectory::new(plan.times.clone(), rho, crate::reduction::Method::ChainMap), ev))
}

/// Exact propagation by dense diagonalization, for cross-checks.
pub fn propagate_dense(h: &LatticeOperator, psi0: &LatticeState, times: &[f64]) -> Result<Vec<LatticeState>, DynamicsError> {
    let dim = h.dim();
    if dim > DENSE_MAX_DIM {
        return Err(DynamicsError::DenseTooLarge { dim, max: DENSE_MAX_DIM });
    }
    if dim != psi0.basis().dim() {
        return Err(DynamicsError::DimensionMismatch { expected: psi0.basis().dim(), got: dim });
    }
    let eig = h.to_dense().symmetric_eigen();
    let u: &CMatrix = &eig.eigenvectors;
    let coeff = u.adjoint() * CVector::from_column_slice(psi0.amplitudes());
    times
        .iter()
        .map(|&t| {
            let phased = CVector::from_fn(dim, |j, _| coeff[j] * C64::from_polar(1.0, -eig.eigenvalues[j] * t));
            let psi = u * phased;
            Ok(LatticeState::from_amplitudes(psi0.basis().clone(), psi.as_slice().to_vec())?)
        })
        .collect()
}

/// One depth tried by [`auto_depth`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthTrial {
    pub depths: Vec<usize>,
    pub final_leakage: f64,
    /// Max entry change of the reduced trajectory against the previous trial.
    pub change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AutoDepth {
    pub depths: Vec<usize>,
    pub trajectory: DensityTrajectory,
    pub leakage: LeakageReport,
    pub stats: KrylovStats,
    pub history: Vec<DepthTrial>,
}

/// Doubles every lattice depth from 16 until the final-time leakage is below
/// the plan's threshold and the reduced trajectory moves by less than
/// `10 tol` on the next doubling; returns the smaller, verified depth.
///
/// `tables` are extended from the spec's distributions when a trial needs a
/// longer recurrence.
pub fn auto_depth<F>(
    spec: &EnsembleSpec,
    tables: &[RecurrenceTable],
    initial: F,
    plan: &PropagationPlan,
    cap: usize,
) -> Result<AutoDepth, DynamicsError>
where
    F: Fn(&LatticeBasis) -> Result<LatticeState, StateError>,
{
    if !(plan.horizon() > 0.0) {
        return Err(DynamicsError::InvalidPlan("auto_depth needs a positive horizon".into()));
    }
    let mut tables = tables.to_vec();
    let mut depth = START_DEPTH.min(cap).max(plan.leakage_width);
    let mut history: Vec<DepthTrial> = Vec::new();
    let mut previous: Option<(Vec<usize>, DensityTrajectory, Evolution)> = None;
    loop {
        let depths = vec![depth; spec.l()];
        let basis = LatticeBasis::new(spec.n(), &depths)?;
        let h = if spec.is_linear() {
            if tables.len() != spec.l() || tables.iter().any(|t| t.order() < depth + 1) {
                tables = spec.tables(&vec![depth + 1; spec.l()])?;
            }
            build_linear(spec, &tables, &depths)?
        } else {
            chain_map(spec, &depths)?.1
        };
        let psi0 = initial(&basis)?;
        let (traj, ev) = evolve_reduced(&h, &psi0, plan)?;
        let change = previous.as_ref().map(|(_, p, _)| p.max_abs_diff(&traj));
        history.push(DepthTrial { depths: depths.clone(), final_leakage: ev.leakage.last(), change });
        debug!("auto_depth: depth {depth}, leakage {:e}, change {change:?}", ev.leakage.last());
        if let (Some((pd, ptraj, pev)), Some(change)) = (previous.take(), change) {
            if pev.leakage.last() < plan.leakage_threshold && change < 10.0 * plan.tol {
                return Ok(AutoDepth { depths: pd, trajectory: ptraj, leakage: pev.leakage, stats: pev.stats, history });
            }
        }
        if depth * 2 > cap {
            return Err(DynamicsError::DepthCapExceeded {
                cap,
                leakage: ev.leakage.last(),
                change: change.unwrap_or(f64::INFINITY),
            });
        }
        previous = Some((depths, traj, ev));
        depth *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeOperator;
    use crate::states::localized_initial;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn plan_validation() {
        assert!(PropagationPlan::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(PropagationPlan::new(vec![0.5, 1.0]).is_err());
        let mut p = PropagationPlan::uniform(2.0, 5).unwrap();
        assert_eq!(p.times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        p.tol = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn two_level_rabi() {
        // H = [[0, g], [g, 0]] from |0>: |<1|psi>|^2 = sin^2(g t)
        let g = 0.7;
        let h = LatticeOperator::from_entries(2, vec![(0, 1, c(g, 0.0))]).unwrap();
        let basis = LatticeBasis::new(2, &[0]).unwrap();
        let psi0 = localized_initial(&[c(1.0, 0.0), c(0.0, 0.0)], &basis).unwrap();
        let (v, _) = apply_exponential(&h, psi0.amplitudes(), 2.3, 1e-13, 30).unwrap();
        assert!((v[0] - c((g * 2.3f64).cos(), 0.0)).norm() < 1e-13);
        assert!((v[1] - c(0.0, -(g * 2.3f64).sin())).norm() < 1e-13);
    }

    #[test]
    fn krylov_matches_dense_on_a_chain() {
        let n = 60;
        let entries: Vec<_> = (0..n)
            .flat_map(|i| {
                let mut e = vec![(i, i, c((i as f64 * 0.37).sin(), 0.0))];
                if i + 1 < n {
                    e.push((i, i + 1, c(1.0 + 0.1 * i as f64, 0.2)));
                }
                e
            })
            .collect();
        let h = LatticeOperator::from_entries(n, entries).unwrap();
        let basis = LatticeBasis::new(1, &[n - 1]).unwrap();
        let psi0 = localized_initial(&[c(1.0, 0.0)], &basis).unwrap();
        let mut plan = PropagationPlan::uniform(3.0, 7).unwrap();
        plan.leakage_threshold = 1.0;
        let k = propagate(&h, &psi0, &plan).unwrap();
        let d = propagate_dense(&h, &psi0, &plan.times).unwrap();
        for (a, b) in k.states.iter().zip(&d) {
            let err = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-11, "{err}");
        }
    }

    #[test]
    fn leakage_is_reported_and_enforced() {
        let n = 8;
        let entries: Vec<_> = (0..n - 1).map(|i| (i, i + 1, c(1.0, 0.0))).collect();
        let h = LatticeOperator::from_entries(n, entries).unwrap();
        let basis = LatticeBasis::new(1, &[n - 1]).unwrap();
        let psi0 = localized_initial(&[c(1.0, 0.0)], &basis).unwrap();
        let plan = PropagationPlan::uniform(5.0, 11).unwrap();
        assert!(matches!(propagate(&h, &psi0, &plan), Err(DynamicsError::LeakageExceeded { .. })));
        let ev = evolve(&h, &psi0, &plan, |_, _, _| {}).unwrap();
        assert_eq!(ev.leakage.population[0], 0.0);
        assert!(ev.leakage.max() > 1e-3);
    }
}
