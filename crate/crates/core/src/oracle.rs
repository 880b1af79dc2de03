//! Reference averages over explicit realizations, closed-form qubit
//! dephasing and the semicircle reverse map.

use log::info;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use crate::quadrature::gauss_nodes;

use crate::lattice::{Coupling, EnsembleSpec, LatticeError};
use crate::linalg::{CMatrix, CVector};
use crate::measures::{characteristic_function, recurrence_table, sample, DisorderDistribution, MeasureError};
use crate::quadrature::gauss_rule;
use crate::reduction::{DensityTrajectory, Method};
use crate::states::{StateError, NORM_TOL};
use crate::C64;

/// Largest system handled by per-realization diagonalization.
pub const MAX_SYSTEM_DIM: usize = 64;
/// Samples per deterministic work unit.
const MC_CHUNK: usize = 512;
/// Quadrature nodes per work unit.
const QUAD_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("system dimension {n} exceeds the oracle limit {max}")]
    SystemTooLarge { n: usize, max: usize },
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
    #[error("closed-form coherence unavailable: {0}")]
    UnsupportedFamily(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    MonteCarlo,
    GaussQuadrature,
    AnalyticQubit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub samples: usize,
    pub seed: u64,
    /// Nodes per disorder axis; a single entry applies to every axis.
    pub quad_order: Vec<usize>,
    pub method: OracleMethod,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0, quad_order: vec![40], method: OracleMethod::MonteCarlo }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.samples == 0 {
            return Err(OracleError::InvalidConfig("samples must be at least 1".into()));
        }
        if self.quad_order.is_empty() || self.quad_order.contains(&0) {
            return Err(OracleError::InvalidConfig("quad_order entries must be at least 1".into()));
        }
        Ok(())
    }

    fn orders(&self, l: usize) -> Result<Vec<usize>, OracleError> {
        match self.quad_order.len() {
            1 => Ok(vec![self.quad_order[0]; l]),
            k if k == l => Ok(self.quad_order.clone()),
            k => Err(OracleError::InvalidConfig(format!("quad_order has {k} entries for {l} disorder axes"))),
        }
    }
}

/// Exact `rho(t)` of one realization, `H` diagonalized once.
fn realization_rho(h: &CMatrix, psi0: &CVector, times: &[f64]) -> Vec<CMatrix> {
    let eig = h.clone().symmetric_eigen();
    let coeff = eig.eigenvectors.adjoint() * psi0;
    times
        .iter()
        .map(|&t| {
            let phased = CVector::from_fn(coeff.len(), |j, _| coeff[j] * C64::from_polar(1.0, -eig.eigenvalues[j] * t));
            let psi = &eig.eigenvectors * phased;
            &psi * psi.adjoint()
        })
        .collect()
}

fn initial_vector<F>(c_fn: &F, lambda: &[f64], n: usize) -> Result<CVector, OracleError>
where
    F: Fn(&[f64]) -> Vec<C64>,
{
    let c = c_fn(lambda);
    if c.len() != n {
        return Err(StateError::DimensionMismatch { what: "c(lambda)".into(), expected: n, got: c.len() }.into());
    }
    let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(StateError::RealizationNotNormalized { lambda: lambda.to_vec(), norm }.into());
    }
    Ok(CVector::from_vec(c))
}

fn check_size(spec: &EnsembleSpec) -> Result<(), OracleError> {
    if spec.n() > MAX_SYSTEM_DIM {
        return Err(OracleError::SystemTooLarge { n: spec.n(), max: MAX_SYSTEM_DIM });
    }
    Ok(())
}

/// Running mean and squared deviations of complex matrices (Welford), per time.
struct Moments {
    count: usize,
    mean: Vec<CMatrix>,
    m2: Vec<DMatrix<f64>>,
}

impl Moments {
    fn new(times: usize, n: usize) -> Self {
        Self { count: 0, mean: vec![CMatrix::zeros(n, n); times], m2: vec![DMatrix::zeros(n, n); times] }
    }

    fn push(&mut self, rho: &[CMatrix]) {
        self.count += 1;
        let k = self.count as f64;
        for ((mean, m2), x) in self.mean.iter_mut().zip(&mut self.m2).zip(rho) {
            for ((mu, s), v) in mean.iter_mut().zip(m2.iter_mut()).zip(x.iter()) {
                let d = v - *mu;
                *mu += d / k;
                let d2 = v - *mu;
                *s += d.re * d2.re + d.im * d2.im;
            }
        }
    }

    fn merge(&mut self, other: Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for ((mean, m2), (omean, om2)) in self.mean.iter_mut().zip(&mut self.m2).zip(other.mean.iter().zip(&other.m2)) {
            for (((mu, s), ou), os) in mean.iter_mut().zip(m2.iter_mut()).zip(omean.iter()).zip(om2.iter()) {
                let d = ou - *mu;
                *mu += d * (nb / n);
                *s += os + d.norm_sqr() * na * nb / n;
            }
        }
        self.count += other.count;
    }
}

/// Monte Carlo average over `cfg.samples` realizations. Sample `s` draws its
/// disorder from its own ChaCha stream `(seed, s)`, and samples are reduced
/// in fixed chunks in index order, so the result does not depend on the
/// thread count. `errors` holds the standard error of the mean per entry.
pub fn mc_average<F>(spec: &EnsembleSpec, c_fn: F, times: &[f64], cfg: &OracleConfig) -> Result<DensityTrajectory, OracleError>
where
    F: Fn(&[f64]) -> Vec<C64> + Sync,
{
    cfg.validate()?;
    check_size(spec)?;
    let n = spec.n();
    let chunks = cfg.samples.div_ceil(MC_CHUNK);
    let partial: Vec<Result<Moments, OracleError>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Moments::new(times.len(), n);
            let mut lambda = vec![0.0; spec.l()];
            for s in chunk * MC_CHUNK..((chunk + 1) * MC_CHUNK).min(cfg.samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(s as u64);
                for (x, d) in lambda.iter_mut().zip(spec.distributions()) {
                    *x = sample(d, &mut rng);
                }
                let psi0 = initial_vector(&c_fn, &lambda, n)?;
                acc.push(&realization_rho(&spec.realization(&lambda), &psi0, times));
            }
            Ok(acc)
        })
        .collect();
    let mut total = Moments::new(times.len(), n);
    for p in partial {
        total.merge(p?);
    }
    let count = total.count as f64;
    let errors: Vec<DMatrix<f64>> = total
        .m2
        .iter()
        .map(|m2| m2.map(|s| if total.count > 1 { (s / (count - 1.0) / count).sqrt() } else { 0.0 }))
        .collect();
    if cfg.samples > 1 && errors.iter().all(|e| e.iter().all(|&v| v == 0.0)) {
        info!("all {} realizations gave identical dynamics", cfg.samples);
    }
    let rho = total.mean.iter().map(|r| (r + r.adjoint()) * C64::new(0.5, 0.0)).collect();
    let mut traj = DensityTrajectory::new(times.to_vec(), rho, Method::MonteCarlo);
    traj.errors = Some(errors);
    Ok(traj)
}

/// Weighted average over the tensor-product Gauss nodes of the disorder
/// measures, `cfg.quad_order` nodes per axis.
pub fn quad_average<F>(spec: &EnsembleSpec, c_fn: F, times: &[f64], cfg: &OracleConfig) -> Result<DensityTrajectory, OracleError>
where
    F: Fn(&[f64]) -> Vec<C64> + Sync,
{
    cfg.validate()?;
    check_size(spec)?;
    let orders = cfg.orders(spec.l())?;
    let rules = spec
        .distributions()
        .iter()
        .zip(&orders)
        .map(|(d, &q)| Ok(gauss_rule(&recurrence_table(d, q)?, q)?))
        .collect::<Result<Vec<_>, OracleError>>()?;
    let total: usize = orders.iter().product();
    let n = spec.n();
    let chunks = total.div_ceil(QUAD_CHUNK);
    let partial: Vec<Result<Vec<CMatrix>, OracleError>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![CMatrix::zeros(n, n); times.len()];
            let mut lambda = vec![0.0; spec.l()];
            for flat in chunk * QUAD_CHUNK..((chunk + 1) * QUAD_CHUNK).min(total) {
                let mut rest = flat;
                let mut w = 1.0;
                for (i, rule) in rules.iter().enumerate() {
                    let j = rest % orders[i];
                    rest /= orders[i];
                    lambda[i] = rule.nodes[j];
                    w *= rule.weights[j];
                }
                let psi0 = initial_vector(&c_fn, &lambda, n)?;
                for (a, r) in acc.iter_mut().zip(realization_rho(&spec.realization(&lambda), &psi0, times)) {
                    *a += r * C64::new(w, 0.0);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut rho = vec![CMatrix::zeros(n, n); times.len()];
    for p in partial {
        for (a, b) in rho.iter_mut().zip(p?) {
            *a += b;
        }
    }
    let rho = rho.iter().map(|r| (r + r.adjoint()) * C64::new(0.5, 0.0)).collect();
    Ok(DensityTrajectory::new(times.to_vec(), rho, Method::GaussQuadrature))
}

/// Closed-form dephasing of `H = diag(E0, E1 + lambda)` from `(a, b)`:
/// populations stay put and `rho_01(t) = a conj(b) exp(-i (E0 - E1) t) phi(t)`
/// with `phi` the characteristic function of `lambda`.
pub fn analytic_qubit(
    a: C64,
    b: C64,
    e0: f64,
    e1: f64,
    dist: &DisorderDistribution,
    times: &[f64],
) -> Result<DensityTrajectory, OracleError> {
    let rho = times
        .iter()
        .map(|&t| {
            let phi = characteristic_function(dist, t).map_err(|e| match e {
                MeasureError::RequiresUncut => {
                    OracleError::UnsupportedFamily(format!("cut {} distribution", dist.family_name()))
                }
                MeasureError::UnsupportedFamily(f) => OracleError::UnsupportedFamily(f.to_string()),
                other => other.into(),
            })?;
            let coh = a * b.conj() * C64::from_polar(1.0, -(e0 - e1) * t) * phi;
            let mut r = CMatrix::zeros(2, 2);
            r[(0, 0)] = C64::new(a.norm_sqr(), 0.0);
            r[(1, 1)] = C64::new(b.norm_sqr(), 0.0);
            r[(0, 1)] = coh;
            r[(1, 0)] = coh.conj();
            Ok(r)
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(DensityTrajectory::new(times.to_vec(), rho, Method::Analytic))
}

/// The ensemble whose chain is a uniform semi-infinite lattice with hopping
/// `g` attached to level `attach` of `unit_cell`: a single semicircle
/// variable of width `2g` shifting that level's energy.
pub fn chain_to_ensemble(g: f64, unit_cell: &CMatrix, attach: usize) -> Result<EnsembleSpec, OracleError> {
    let n = unit_cell.nrows();
    if attach >= n {
        return Err(OracleError::InvalidConfig(format!("attach index {attach} outside a {n}-level unit cell")));
    }
    let mut c = CMatrix::zeros(n, n);
    c[(attach, attach)] = C64::new(1.0, 0.0);
    let dist = DisorderDistribution::semicircle(2.0 * g)?;
    Ok(EnsembleSpec::new(unit_cell.clone(), vec![Coupling::Linear(c)], vec![dist])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit(dist: DisorderDistribution, coupled: f64) -> EnsembleSpec {
        let mut h0 = CMatrix::zeros(2, 2);
        h0[(1, 1)] = C64::new(1.0, 0.0);
        let mut c = CMatrix::zeros(2, 2);
        c[(1, 1)] = C64::new(coupled, 0.0);
        EnsembleSpec::linear(h0, c, dist).unwrap()
    }

    fn plus(_: &[f64]) -> Vec<C64> {
        let s = 0.5f64.sqrt();
        vec![C64::new(s, 0.0), C64::new(s, 0.0)]
    }

    #[test]
    fn zero_disorder_gives_unitary_dynamics_without_error_bars() {
        let spec = qubit(DisorderDistribution::gaussian(1.0).unwrap(), 0.0);
        let times = [0.0, 0.5, 1.0];
        let cfg = OracleConfig { samples: 300, ..Default::default() };
        let mc = mc_average(&spec, plus, &times, &cfg).unwrap();
        for (t, (r, e)) in times.iter().zip(mc.rho.iter().zip(mc.errors.as_ref().unwrap())) {
            assert!((r[(0, 1)] - C64::from_polar(0.5, *t)).norm() < 1e-14);
            assert!(e.iter().all(|&v| v < 1e-15));
        }
    }

    #[test]
    fn mc_is_independent_of_thread_count() {
        let spec = qubit(DisorderDistribution::uniform(1.0).unwrap(), 1.0);
        let times = [0.0, 1.0, 2.0];
        let cfg = OracleConfig { samples: 3000, seed: 7, ..Default::default() };
        let a = mc_average(&spec, plus, &times, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mc_average(&spec, plus, &times, &cfg).unwrap());
        assert_eq!(a, b);
        let other = mc_average(&spec, plus, &times, &OracleConfig { seed: 8, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn welford_merge_matches_direct_variance() {
        let xs: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 13.0).collect();
        let mk = |v: f64| vec![CMatrix::from_element(1, 1, C64::new(v, -0.5 * v))];
        let mut whole = Moments::new(1, 1);
        xs.iter().for_each(|&x| whole.push(&mk(x)));
        let mut a = Moments::new(1, 1);
        let mut b = Moments::new(1, 1);
        xs[..10].iter().for_each(|&x| a.push(&mk(x)));
        xs[10..].iter().for_each(|&x| b.push(&mk(x)));
        a.merge(b);
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let ss: f64 = xs.iter().map(|x| 1.25 * (x - mean).powi(2)).sum();
        assert!((a.m2[0][(0, 0)] - ss).abs() < 1e-10 * ss);
        assert!((whole.m2[0][(0, 0)] - ss).abs() < 1e-10 * ss);
        assert!((a.mean[0][(0, 0)].re - mean).abs() < 1e-13);
    }

    #[test]
    fn one_point_rule_is_disorder_free() {
        let spec = qubit(DisorderDistribution::semicircle(2.0).unwrap(), 1.0);
        let times = [0.0, 0.7];
        let q = quad_average(&spec, plus, &times, &OracleConfig { quad_order: vec![1], ..Default::default() }).unwrap();
        assert!((q.rho[1][(0, 1)] - C64::from_polar(0.5, 0.7)).norm() < 1e-14);
    }

    #[test]
    fn analytic_qubit_cases() {
        let s = 0.5f64.sqrt();
        let g = DisorderDistribution::gaussian(1.0).unwrap();
        let a = analytic_qubit(C64::new(s, 0.0), C64::new(s, 0.0), 0.0, 1.0, &g, &[0.0, 1.5]).unwrap();
        assert!((a.rho[0][(0, 1)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((a.rho[1][(0, 1)].norm() - 0.5 * (-1.125f64).exp()).abs() < 1e-15);
        let b0 = analytic_qubit(C64::new(1.0, 0.0), C64::new(0.0, 0.0), 0.0, 1.0, &g, &[2.0]).unwrap();
        assert_eq!(b0.rho[0][(0, 1)], C64::new(0.0, 0.0));
        let cut = crate::measures::apply_cutoff(&g, -3.0, 3.0).unwrap();
        assert!(matches!(analytic_qubit(C64::new(1.0, 0.0), C64::new(0.0, 0.0), 0.0, 1.0, &cut, &[0.0]), Err(OracleError::UnsupportedFamily(_))));
    }

    #[test]
    fn too_large_systems_are_rejected() {
        let spec = EnsembleSpec::linear(CMatrix::identity(65, 65), CMatrix::identity(65, 65), DisorderDistribution::uniform(1.0).unwrap())
            .unwrap();
        let c = |_: &[f64]| {
            let mut v = vec![C64::new(0.0, 0.0); 65];
            v[0] = C64::new(1.0, 0.0);
            v
        };
        assert!(matches!(mc_average(&spec, c, &[0.0], &OracleConfig::default()), Err(OracleError::SystemTooLarge { .. })));
    }
}
