//! Shared models, tolerances and reporting for the acceptance run.
//!
//! Each criterion produces one line, `PASS` or `FAIL`, with the measured
//! value next to its limit. The harness exits nonzero if any line fails.

use std::fmt::Write as _;
use std::time::Duration;

use disorder_chain::prelude::*;

/// Chain-map vs closed-form qubit coherence.
pub const QUBIT_EXACTNESS: f64 = 1e-10;
/// Wall-clock per distribution for the auto-depth qubit runs.
pub const QUBIT_RUNTIME: Duration = Duration::from_secs(30);
/// Cut-lattice vs uncut closed-form Cauchy coherence.
pub const CAUCHY_UNCUT: f64 = 5e-3;
/// Monte Carlo agreement band, in standard errors.
pub const SEM_BAND: f64 = 4.0;
/// Added to the SEM band for entries that do not fluctuate at all.
pub const SEM_FLOOR: f64 = 1e-12;
/// Chain-map vs quadrature dimer populations.
pub const DIMER_AGREEMENT: f64 = 1e-8;
/// Lower bound on the late-time variance of the dimer site-1 population.
pub const DIMER_LATE_VARIANCE: f64 = 1e-4;
/// Constancy, trace and positivity of reduced density matrices.
pub const CONSERVATION: f64 = 1e-10;
/// Hermiticity of reduced density matrices.
pub const HERMITICITY: f64 = 1e-12;
/// Stieltjes vs closed-form recurrence coefficients.
pub const RECURRENCE_AGREEMENT: f64 = 1e-10;
/// Relative moment error of Gauss rules.
pub const MOMENT_EXACTNESS: f64 = 1e-10;
/// Constant-chain survival amplitude vs the Bessel form.
pub const SURVIVAL_AGREEMENT: f64 = 1e-8;
/// Series coefficients of the semicircle initial-state example.
pub const SERIES_AGREEMENT: f64 = 1e-10;
/// Coefficients that vanish by polynomial exactness of the rule.
pub const EXACT_COEFFICIENT: f64 = 1e-14;
/// Relative energy drift across a propagation grid.
pub const ENERGY_DRIFT: f64 = 1e-10;

/// Collected pass/fail lines.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<String>,
    failures: usize,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// `value <= limit`; NaN fails.
    pub fn at_most(&mut self, id: &str, what: &str, value: f64, limit: f64) -> bool {
        let ok = value <= limit;
        self.push(id, ok, format!("{what}: {value:.3e} (limit {limit:.1e})"))
    }

    /// `value > limit`; NaN fails.
    pub fn above(&mut self, id: &str, what: &str, value: f64, limit: f64) -> bool {
        let ok = value > limit;
        self.push(id, ok, format!("{what}: {value:.3e} (must exceed {limit:.1e})"))
    }

    pub fn check(&mut self, id: &str, ok: bool, detail: impl Into<String>) -> bool {
        self.push(id, ok, detail.into())
    }

    /// Records an error raised by a criterion that could not run at all.
    pub fn error(&mut self, id: &str, err: impl std::fmt::Display) {
        self.push(id, false, format!("error: {err}"));
    }

    fn push(&mut self, id: &str, ok: bool, detail: String) -> bool {
        let line = format!("{} {id:<4} {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push(line);
        if !ok {
            self.failures += 1;
        }
        ok
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{} checks, {} failed", self.lines.len(), self.failures);
        s
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn projector(n: usize, i: usize) -> CMatrix {
    let mut c = CMatrix::zeros(n, n);
    c[(i, i)] = real(1.0);
    c
}

/// `H = diag(e0, e1 + lambda)`.
pub fn qubit(e0: f64, e1: f64, dist: DisorderDistribution) -> EnsembleSpec {
    let mut h0 = CMatrix::zeros(2, 2);
    h0[(0, 0)] = real(e0);
    h0[(1, 1)] = real(e1);
    EnsembleSpec::linear(h0, projector(2, 1), dist).expect("qubit spec")
}

/// Two sites with independent energy disorder of width `sigma`, cut to
/// `± cut·sigma` unless `cut` is infinite.
pub fn dimer(e1: f64, e2: f64, v: f64, sigma: f64, cut: f64) -> EnsembleSpec {
    let mut h0 = CMatrix::zeros(2, 2);
    h0[(0, 0)] = real(e1);
    h0[(1, 1)] = real(e2);
    h0[(0, 1)] = real(v);
    h0[(1, 0)] = real(v);
    let mut d = DisorderDistribution::gaussian(sigma).expect("gaussian");
    if cut.is_finite() {
        d = apply_cutoff(&d, -cut * sigma, cut * sigma).expect("cutoff");
    }
    EnsembleSpec::new(
        h0,
        vec![Coupling::Linear(projector(2, 0)), Coupling::Linear(projector(2, 1))],
        vec![d.clone(), d],
    )
    .expect("dimer spec")
}

/// Worst excess of `|a - b|` over `band·SEM + floor`, and the worst
/// `|a - b| / SEM` over entries whose SEM exceeds `floor`. `mc` must carry
/// errors.
pub fn sem_excess(chain: &DensityTrajectory, mc: &DensityTrajectory, band: f64, floor: f64) -> (f64, f64) {
    let errors = mc.errors.as_ref().expect("Monte Carlo trajectory without errors");
    let mut excess = f64::NEG_INFINITY;
    let mut ratio: f64 = 0.0;
    for ((a, b), e) in chain.rho.iter().zip(&mc.rho).zip(errors) {
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let d = (a[(i, j)] - b[(i, j)]).norm();
                excess = excess.max(d - band * e[(i, j)] - floor);
                if e[(i, j)] > floor {
                    ratio = ratio.max(d / e[(i, j)]);
                }
            }
        }
    }
    (excess, ratio)
}

/// Closed-form `E|X|^m` for the uncut classical families, used as the scale
/// for odd moments whose exact value is zero.
pub fn absolute_moment(dist: &DisorderDistribution, m: u32) -> f64 {
    use disorder_chain::measures::Family;
    let mf = m as f64;
    match *dist.family() {
        Family::Gaussian { sigma } => {
            sigma.powi(m as i32) * 2f64.powf(mf / 2.0) * libm::tgamma((mf + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
        }
        Family::Uniform { v } => v.powi(m as i32) / (mf + 1.0),
        Family::Semicircle { w } => {
            2.0 * w.powi(m as i32) / std::f64::consts::PI * libm::tgamma((mf + 1.0) / 2.0) * libm::tgamma(1.5)
                / libm::tgamma(mf / 2.0 + 2.0)
        }
        _ => panic!("no closed-form absolute moment for {}", dist.family_name()),
    }
}

/// `2 J1(x) / x`, with its limit 1 at the origin.
pub fn bessel_envelope(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 8.0
    } else {
        2.0 * libm::j1(x) / x
    }
}
