//! Small dense and sparse kernels shared by the recurrence, quadrature and
//! propagation code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Rows below this size are processed serially; rayon overhead dominates otherwise.
const PARALLEL_MIN_LEN: usize = 8192;
/// Fixed chunk length for deterministic parallel reductions.
const REDUCTION_CHUNK: usize = 4096;

/// Maximum entrywise `|A - A^†|`, together with the offending index pair.
pub fn hermiticity_defect(a: &CMatrix) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for r in 0..a.nrows() {
        for c in r..a.ncols() {
            let d = (a[(r, c)] - a[(c, r)].conj()).norm();
            if d > worst.0 {
                worst = (d, r, c);
            }
        }
    }
    worst
}

/// Eigen-decomposition of a real symmetric tridiagonal matrix by implicit QL
/// with Wilkinson-type shifts.
///
/// `diag` has length `n`, `offdiag` length `n - 1` (`offdiag[i]` couples `i` and
/// `i + 1`). When `rows > 0` the first `rows` rows of the eigenvector matrix are
/// accumulated and returned row-major (`rows x n`); `rows = 1` is the
/// Golub–Welsch case, `rows = n` gives all eigenvectors. Eigenvalues are
/// returned in ascending order with the vector columns permuted to match.
pub(crate) fn symmetric_tridiagonal_eigen(
    diag: &[f64],
    offdiag: &[f64],
    rows: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert!(n >= 1 && offdiag.len() + 1 == n && rows <= n);
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    let mut z = vec![0.0; rows * n];
    for r in 0..rows {
        z[r * n + r] = 1.0;
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..rows {
                    let row = &mut z[k * n..(k + 1) * n];
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&j| d[j]).collect();
    let mut vectors = vec![0.0; rows * n];
    for k in 0..rows {
        for (dst, &src) in order.iter().enumerate() {
            vectors[k * n + dst] = z[k * n + src];
        }
    }
    Some((values, vectors))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Deterministic `<a, b> = sum conj(a_i) b_i`: fixed-size chunks reduced in
/// order, so the result does not depend on the thread count.
pub(crate) fn cdot(a: &[C64], b: &[C64]) -> C64 {
    fn serial(a: &[C64], b: &[C64]) -> C64 {
        a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
    }
    if a.len() < PARALLEL_MIN_LEN {
        return serial(a, b);
    }
    let partial: Vec<C64> = a
        .par_chunks(REDUCTION_CHUNK)
        .zip(b.par_chunks(REDUCTION_CHUNK))
        .map(|(x, y)| serial(x, y))
        .collect();
    partial.into_iter().fold(C64::new(0.0, 0.0), |acc, v| acc + v)
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    cdot(a, a).re.max(0.0).sqrt()
}

/// `y -= s * x`
pub(crate) fn axpy_neg(y: &mut [C64], s: C64, x: &[C64]) {
    if y.len() < PARALLEL_MIN_LEN {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi -= s * xi);
    } else {
        y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi -= s * xi);
    }
}

/// Compressed sparse row storage of a full (both triangles) complex matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from unsorted `(row, col, value)` entries; duplicates are summed.
    pub fn from_entries(dim: usize, mut entries: Vec<(usize, usize, C64)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `y = (A - shift) x`.
    pub fn apply_shifted(&self, x: &[C64], y: &mut [C64], shift: f64) {
        let row = |r: usize| -> C64 {
            let mut acc = C64::new(-shift, 0.0) * x[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            acc
        };
        if self.dim < PARALLEL_MIN_LEN {
            y.iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
        } else {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
        }
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_shifted(x, y, 0.0);
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_eigen_matches_dense() {
        let diag = [1.0, -2.0, 0.5, 3.0, 0.0];
        let off = [0.7, 1.1, -0.3, 2.0];
        let (vals, vecs) = symmetric_tridiagonal_eigen(&diag, &off, 5).unwrap();
        let n = 5;
        let mut t = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = diag[i];
        }
        for i in 0..n - 1 {
            t[(i, i + 1)] = off[i];
            t[(i + 1, i)] = off[i];
        }
        for j in 0..n {
            let v = DVector::from_iterator(n, (0..n).map(|k| vecs[k * n + j]));
            let r = &t * &v - &v * vals[j];
            assert!(r.norm() < 1e-13, "residual {}", r.norm());
            assert!((v.norm() - 1.0).abs() < 1e-13);
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 20] {
            let (x, w) = gauss_legendre(n);
            for m in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(m as i32)).sum();
                let exact = if m % 2 == 1 { 0.0 } else { 2.0 / (m as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} m={m}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn csr_merges_duplicates() {
        let a = CsrMatrix::from_entries(
            2,
            vec![(0, 1, C64::new(1.0, 0.0)), (0, 1, C64::new(0.5, 0.0)), (1, 0, C64::new(2.0, 0.0))],
        );
        assert_eq!(a.nnz(), 2);
        let mut y = vec![C64::new(0.0, 0.0); 2];
        a.apply(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)], &mut y);
        assert_eq!(y, vec![C64::new(1.5, 0.0), C64::new(2.0, 0.0)]);
    }
}
