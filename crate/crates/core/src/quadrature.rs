//! Gauss rules generated from recurrence tables.

use crate::linalg::symmetric_tridiagonal_eigen;
use crate::measures::{MeasureError, RecurrenceTable};

/// A Gauss rule for a probability measure; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().copied().zip(self.weights.iter().copied()).collect()
    }
}

/// `order`-point Gauss rule of the measure described by `table`.
///
/// Nodes are the eigenvalues of the Jacobi matrix (`alpha` on the diagonal,
/// `sqrt(beta)` off it), polished by a Newton step on the orthonormal
/// polynomial of degree `order`. Weights are the Christoffel numbers
/// `1 / sum_k phi_k(x)^2`, which equal the squared first eigenvector
/// components but keep full relative accuracy for tiny tail weights.
pub fn gauss_rule(table: &RecurrenceTable, order: usize) -> Result<GaussRule, MeasureError> {
    if order == 0 {
        return Err(MeasureError::InvalidOrder(0));
    }
    if order > table.order() {
        return Err(MeasureError::TableTooShort { needed: order, available: table.order() });
    }
    let diag = &table.alphas()[..order];
    let off: Vec<f64> = (0..order - 1).map(|k| table.hopping(k)).collect();
    let (mut nodes, _) =
        symmetric_tridiagonal_eigen(diag, &off, 0).ok_or(MeasureError::NumericalBreakdown { k: order, beta: f64::NAN })?;
    let scale = nodes.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut weights = Vec::with_capacity(order);
    for x in nodes.iter_mut() {
        let (p, dp) = orthonormal_with_derivative(table, *x, order);
        if dp != 0.0 && dp.is_finite() {
            let dx = p / dp;
            if dx.abs() < 1e-8 * scale {
                *x -= dx;
            }
        }
        weights.push(christoffel(table, *x, order));
    }
    Ok(GaussRule { nodes, weights })
}

/// Rescale the recurrence once values pass this magnitude.
const BIG: f64 = 1e150;

/// `1 / sum_{k < count} phi_k(x)^2`, evaluated with running rescaling so far
/// tail nodes get an underflowing weight instead of `inf / inf`.
fn christoffel(table: &RecurrenceTable, x: f64, count: usize) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum = 1.0;
    // all of prev, cur, sum are stored divided by 2^exp (sum by 2^(2 exp))
    let mut exp = 0i32;
    for k in 0..count - 1 {
        let back = if k == 0 { 0.0 } else { table.hopping(k - 1) };
        let next = ((x - table.alpha(k)) * cur - back * prev) / table.hopping(k);
        prev = cur;
        cur = next;
        sum += cur * cur;
        if cur.abs() > BIG {
            let s = cur.abs().log2().floor() as i32;
            let f = (-s as f64).exp2();
            prev *= f;
            cur *= f;
            sum *= f * f;
            exp += s;
        }
    }
    if exp == 0 {
        1.0 / sum
    } else {
        // 2^(-2 exp) / sum, kept finite until it underflows
        (-(sum.log2()) - 2.0 * exp as f64).exp2()
    }
}

/// The same rule as `(node, weight)` pairs.
pub fn gauss_nodes(table: &RecurrenceTable, order: usize) -> Result<Vec<(f64, f64)>, MeasureError> {
    gauss_rule(table, order).map(|r| r.pairs())
}

/// Classical Golub–Welsch weights (squared first eigenvector components).
pub fn golub_welsch(table: &RecurrenceTable, order: usize) -> Result<GaussRule, MeasureError> {
    if order == 0 || order > table.order() {
        return Err(MeasureError::TableTooShort { needed: order, available: table.order() });
    }
    let diag = &table.alphas()[..order];
    let off: Vec<f64> = (0..order - 1).map(|k| table.hopping(k)).collect();
    let (nodes, first) =
        symmetric_tridiagonal_eigen(diag, &off, 1).ok_or(MeasureError::NumericalBreakdown { k: order, beta: f64::NAN })?;
    let weights = first.iter().map(|v| v * v).collect();
    Ok(GaussRule { nodes, weights })
}

/// `phi_degree(x)` and its derivative, up to a common positive factor.
fn orthonormal_with_derivative(table: &RecurrenceTable, x: f64, degree: usize) -> (f64, f64) {
    let (mut p_prev, mut p) = (0.0f64, 1.0f64);
    let (mut d_prev, mut d) = (0.0f64, 0.0f64);
    for k in 0..degree {
        if p.abs().max(d.abs()) > BIG {
            let f = 1.0 / BIG;
            p_prev *= f;
            p *= f;
            d_prev *= f;
            d *= f;
        }
        let back = if k == 0 { 0.0 } else { table.hopping(k - 1) };
        let h = table.hopping(k);
        let a = table.alpha(k);
        let p_next = ((x - a) * p - back * p_prev) / h;
        let d_next = (p + (x - a) * d - back * d_prev) / h;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Tensor product of one-dimensional rules: every combination of nodes with
/// the product weight.
pub fn tensor_product(rules: &[GaussRule]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points = vec![Vec::with_capacity(rules.len())];
    let mut weights = vec![1.0];
    for rule in rules {
        let mut np = Vec::with_capacity(points.len() * rule.len());
        let mut nw = Vec::with_capacity(points.len() * rule.len());
        for (p, w) in points.iter().zip(&weights) {
            for (x, v) in rule.nodes.iter().zip(&rule.weights) {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(w * v);
            }
        }
        points = np;
        weights = nw;
    }
    (points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{recurrence_analytic, DisorderDistribution};

    #[test]
    fn two_point_legendre() {
        let t = recurrence_analytic(&DisorderDistribution::uniform(1.0).unwrap(), 2).unwrap();
        let r = gauss_rule(&t, 2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + x).abs() < 1e-15 && (r.nodes[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15 && (r.weights[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_point_semicircle() {
        let t = recurrence_analytic(&DisorderDistribution::semicircle(1.0).unwrap(), 1).unwrap();
        assert_eq!(gauss_nodes(&t, 1).unwrap(), vec![(0.0, 1.0)]);
    }

    #[test]
    fn three_point_hermite_by_moment_matching() {
        // brute force: symmetric rule {-x, 0, x} with weights {a, 1-2a, a}
        // matching m2 = 1 and m4 = 3 gives x^2 = 3, a = 1/6
        let t = recurrence_analytic(&DisorderDistribution::gaussian(1.0).unwrap(), 3).unwrap();
        let r = gauss_rule(&t, 3).unwrap();
        let s3 = 3f64.sqrt();
        let want = [(-s3, 1.0 / 6.0), (0.0, 2.0 / 3.0), (s3, 1.0 / 6.0)];
        for ((x, w), (ex, ew)) in r.pairs().into_iter().zip(want) {
            assert!((x - ex).abs() < 1e-14 && (w - ew).abs() < 1e-14, "{x} {w}");
        }
    }

    #[test]
    fn christoffel_weights_agree_with_golub_welsch() {
        let t = recurrence_analytic(&DisorderDistribution::uniform(2.0).unwrap(), 30).unwrap();
        let a = gauss_rule(&t, 30).unwrap();
        let b = golub_welsch(&t, 30).unwrap();
        for j in 0..30 {
            assert!((a.nodes[j] - b.nodes[j]).abs() < 1e-13);
            assert!((a.weights[j] - b.weights[j]).abs() < 1e-13);
        }
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn high_order_hermite_weights_stay_finite() {
        let t = recurrence_analytic(&DisorderDistribution::gaussian(1.0).unwrap(), 1500).unwrap();
        let r = gauss_rule(&t, 1500).unwrap();
        assert!(r.weights.iter().all(|w| w.is_finite() && *w >= 0.0));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((r.integrate(|x| x * x) - 1.0).abs() < 1e-11);
        // cut-free characteristic function at sigma t = 10
        assert!(r.integrate(|x| (10.0 * x).cos()).abs() < 1e-15);
    }

    #[test]
    fn table_too_short() {
        let t = recurrence_analytic(&DisorderDistribution::uniform(1.0).unwrap(), 3).unwrap();
        assert!(matches!(gauss_rule(&t, 4), Err(MeasureError::TableTooShort { .. })));
    }

    #[test]
    fn tensor_product_weights() {
        let t = recurrence_analytic(&DisorderDistribution::uniform(1.0).unwrap(), 3).unwrap();
        let r = gauss_rule(&t, 3).unwrap();
        let (pts, w) = tensor_product(&[r.clone(), r]);
        assert_eq!(pts.len(), 9);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // integrates x^2 y^2 exactly: (1/3)^2
        let q: f64 = pts.iter().zip(&w).map(|(p, w)| w * p[0] * p[0] * p[1] * p[1]).sum();
        assert!((q - 1.0 / 9.0).abs() < 1e-15);
    }
}
