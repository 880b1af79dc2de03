use std::f64::consts::PI;

use super::{DisorderDistribution, Family, MeasureError};
use crate::linalg::gauss_legendre;

/// Points per Gauss–Legendre panel used to discretize a measure.
const PANEL_ORDER: usize = 20;

/// Monic three-term recurrence coefficients of a measure,
/// `P_{k+1}(x) = (x - alpha_k) P_k(x) - beta_k P_{k-1}(x)`.
///
/// `alpha` holds `alpha_0 .. alpha_{K-1}` and `beta` holds `beta_1 .. beta_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceTable {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl RecurrenceTable {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, MeasureError> {
        if alpha.is_empty() {
            return Err(MeasureError::InvalidOrder(0));
        }
        if alpha.len() != beta.len() {
            return Err(MeasureError::InvalidTable(format!(
                "alpha has {} entries but beta has {}",
                alpha.len(),
                beta.len()
            )));
        }
        if let Some(k) = beta.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(MeasureError::NumericalBreakdown { k: k + 1, beta: beta[k] });
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(MeasureError::InvalidTable("non-finite alpha".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    /// `alpha_k`, the on-node energy shift of lattice node `k`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k]
    }

    /// `beta_k` for `1 <= k <= order`.
    pub fn beta(&self, k: usize) -> f64 {
        assert!(k >= 1, "beta is indexed from 1");
        self.beta[k - 1]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// `beta_1 .. beta_K`.
    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// Hopping between nodes `k` and `k + 1`: `sqrt(beta_{k+1})`.
    pub fn hopping(&self, k: usize) -> f64 {
        self.beta[k].sqrt()
    }

    /// Squared norms of the monic polynomials, `zeta_0 = 1`,
    /// `zeta_k = beta_1 ... beta_k`. Saturates at `inf` for large orders of
    /// unbounded measures.
    pub fn zeta(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.beta.len() + 1);
        z.push(1.0);
        let mut acc = 1.0;
        for b in &self.beta {
            acc *= b;
            z.push(acc);
        }
        z
    }

    pub fn truncated(&self, order: usize) -> Result<Self, MeasureError> {
        if order == 0 {
            return Err(MeasureError::InvalidOrder(0));
        }
        if order > self.order() {
            return Err(MeasureError::TableTooShort { needed: order, available: self.order() });
        }
        Ok(Self { alpha: self.alpha[..order].to_vec(), beta: self.beta[..order].to_vec() })
    }

    /// Orthonormal polynomials `phi_0(x) .. phi_{count-1}(x)`; requires
    /// `count <= order + 1`.
    pub fn orthonormal_values(&self, x: f64, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        self.orthonormal_into(x, &mut out, count);
        out
    }

    pub(crate) fn orthonormal_into(&self, x: f64, out: &mut Vec<f64>, count: usize) {
        assert!(count <= self.order() + 1, "table order {} too short for {count} polynomials", self.order());
        out.clear();
        if count == 0 {
            return;
        }
        out.push(1.0);
        let (mut prev, mut cur) = (0.0, 1.0);
        for k in 0..count - 1 {
            let back = if k == 0 { 0.0 } else { self.beta[k - 1].sqrt() };
            let next = ((x - self.alpha[k]) * cur - back * prev) / self.beta[k].sqrt();
            prev = cur;
            cur = next;
            out.push(cur);
        }
    }
}

/// Closed-form monic coefficients for the uncut Gaussian, semicircle and
/// uniform families.
pub fn recurrence_analytic(dist: &DisorderDistribution, order: usize) -> Result<RecurrenceTable, MeasureError> {
    if order < 1 {
        return Err(MeasureError::InvalidOrder(order));
    }
    if dist.effective_cutoff().is_some() {
        return Err(MeasureError::RequiresUncut);
    }
    let beta: Vec<f64> = match dist.family() {
        // Hermite: beta_k = k sigma^2
        Family::Gaussian { sigma } => (1..=order).map(|k| k as f64 * sigma * sigma).collect(),
        // Chebyshev U on [-w, w]: beta_k = w^2 / 4
        Family::Semicircle { w } => vec![0.25 * w * w; order],
        // Legendre on [-v, v]: beta_k = v^2 k^2 / (4k^2 - 1)
        Family::Uniform { v } => (1..=order)
            .map(|k| {
                let k2 = (k * k) as f64;
                v * v * k2 / (4.0 * k2 - 1.0)
            })
            .collect(),
        Family::Cauchy { .. } | Family::Tabulated(_) => {
            return Err(MeasureError::UnsupportedFamily(dist.family_name()));
        }
    };
    RecurrenceTable::new(vec![0.0; order], beta)
}

/// Default discretization size for the Stieltjes procedure.
pub fn default_grid_points(order: usize) -> usize {
    (4 * order).max(1000)
}

/// Discrete approximation `(nodes, weights)` of a bounded measure; weights
/// sum to one.
///
/// Closed-form families are integrated in the angle variable
/// `lambda = c + h cos(t)` with composite Gauss–Legendre panels, which keeps
/// square-root edges (semicircle) and hard cutoffs spectrally accurate.
/// Tabulated densities use panels aligned with the table grid, where the
/// interpolant is linear.
pub fn discretize(dist: &DisorderDistribution, points: usize) -> Result<(Vec<f64>, Vec<f64>), MeasureError> {
    let (a, b) = dist.support();
    if !(a.is_finite() && b.is_finite()) {
        return Err(MeasureError::UnboundedSupport);
    }
    let (mut nodes, mut weights) = (Vec::with_capacity(points), Vec::with_capacity(points));
    match dist.family() {
        Family::Tabulated(t) => {
            let mut breaks: Vec<f64> = vec![a];
            breaks.extend(t.grid().iter().copied().filter(|&g| g > a && g < b));
            breaks.push(b);
            let width = b - a;
            for w in breaks.windows(2) {
                let n = ((points as f64 * (w[1] - w[0]) / width).ceil() as usize).max(4);
                let (x, wt) = gauss_legendre(n);
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (xi, wi) in x.iter().zip(&wt) {
                    let lam = mid + half * xi;
                    nodes.push(lam);
                    weights.push(wi * half * dist.density(lam));
                }
            }
        }
        _ => {
            let panels = points.div_ceil(PANEL_ORDER).max(1);
            let (x, wt) = gauss_legendre(PANEL_ORDER);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let dt = PI / panels as f64;
            for p in 0..panels {
                for (xi, wi) in x.iter().zip(&wt) {
                    let theta = dt * (p as f64 + 0.5 * (xi + 1.0));
                    let lam = mid + half * theta.cos();
                    nodes.push(lam);
                    weights.push(wi * 0.5 * dt * half * theta.sin() * dist.density(lam));
                }
            }
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(MeasureError::EmptySupport);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// Recurrence coefficients by the discretized Stieltjes procedure: the
/// measure is replaced by a quadrature sum and the orthonormal recurrence is
/// run on the node values, with `alpha_k` and `beta_{k+1}` taken from
/// discrete inner products.
pub fn recurrence_stieltjes(
    dist: &DisorderDistribution,
    order: usize,
    grid_points: usize,
) -> Result<RecurrenceTable, MeasureError> {
    if order < 1 {
        return Err(MeasureError::InvalidOrder(order));
    }
    if grid_points < 4 * order {
        return Err(MeasureError::InsufficientGrid { order, grid_points });
    }
    let (x, w) = discretize(dist, grid_points)?;
    let m = x.len();
    let mut prev = vec![0.0; m];
    let mut cur = vec![1.0; m];
    let mut next = vec![0.0; m];
    let mut alpha = Vec::with_capacity(order);
    let mut beta = Vec::with_capacity(order);
    let mut back = 0.0;
    for k in 0..order {
        let a: f64 = (0..m).map(|j| w[j] * x[j] * cur[j] * cur[j]).sum();
        for j in 0..m {
            next[j] = (x[j] - a) * cur[j] - back * prev[j];
        }
        let b: f64 = (0..m).map(|j| w[j] * next[j] * next[j]).sum();
        if !(b > 0.0 && b.is_finite()) {
            return Err(MeasureError::NumericalBreakdown { k: k + 1, beta: b });
        }
        let s = b.sqrt();
        next.iter_mut().for_each(|v| *v /= s);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        alpha.push(a);
        beta.push(b);
        back = s;
    }
    RecurrenceTable::new(alpha, beta)
}

/// Closed form when one exists, otherwise Stieltjes on the default grid.
pub fn recurrence_table(dist: &DisorderDistribution, order: usize) -> Result<RecurrenceTable, MeasureError> {
    match recurrence_analytic(dist, order) {
        Ok(t) => Ok(t),
        Err(MeasureError::UnsupportedFamily(_) | MeasureError::RequiresUncut) => {
            if dist.moments_undefined() {
                return Err(MeasureError::MomentsUndefined);
            }
            recurrence_stieltjes(dist, order, default_grid_points(order))
        }
        Err(e) => Err(e),
    }
}
