//! Ensemble specifications and the truncated lattice Hamiltonian.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{hermiticity_defect, CMatrix, CsrMatrix};
use crate::measures::{recurrence_table, DisorderDistribution, MeasureError, RecurrenceTable};
use crate::quadrature::gauss_rule;
use crate::C64;

/// Largest tolerated `|A - A^†|` entry for user-supplied matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Default degree of the polynomial fitted to tabulated couplings.
pub const DEFAULT_FIT_DEGREE: usize = 8;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("{what} is not Hermitian: |A - A^†| = {defect:e} at ({row}, {col})")]
    NotHermitian { what: String, defect: f64, row: usize, col: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("ensemble needs at least one disorder parameter")]
    NoDisorder,
    #[error("recurrence table for axis {axis} has order {available}, need {needed}")]
    TableTooShort { axis: usize, needed: usize, available: usize },
    #[error("coupling {axis} is not linear; use build_general")]
    NotLinear { axis: usize },
    #[error("{got} quadrature points on axis {axis} do not resolve the couplings exactly, need {needed}")]
    QuadratureUnderResolved { axis: usize, needed: usize, got: usize },
    #[error("invalid lattice basis: {0}")]
    InvalidBasis(String),
    #[error("shell width {width} outside 1..={max}")]
    InvalidWidth { width: usize, max: usize },
    #[error("invalid tabulated coupling: {0}")]
    InvalidCoupling(String),
    #[error("triplet file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A coupling function `f(lambda)` sampled on a grid, one matrix per point.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCoupling {
    grid: Vec<f64>,
    values: Vec<CMatrix>,
    degree: usize,
}

impl TabulatedCoupling {
    pub fn new(grid: Vec<f64>, values: Vec<CMatrix>, degree: usize) -> Result<Self, LatticeError> {
        if grid.len() != values.len() {
            return Err(LatticeError::InvalidCoupling(format!(
                "{} grid points but {} matrices",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < degree + 1 {
            return Err(LatticeError::InvalidCoupling(format!(
                "degree {degree} fit needs at least {} points, got {}",
                degree + 1,
                grid.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
            return Err(LatticeError::InvalidCoupling("grid must be finite and strictly increasing".into()));
        }
        Ok(Self { grid, values, degree })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Linear interpolation of the table; constant extrapolation outside it.
    pub fn interpolate(&self, x: f64) -> CMatrix {
        let g = &self.grid;
        if x <= g[0] {
            return self.values[0].clone();
        }
        if x >= g[g.len() - 1] {
            return self.values[g.len() - 1].clone();
        }
        let j = g.partition_point(|&p| p <= x) - 1;
        let s = (x - g[j]) / (g[j + 1] - g[j]);
        &self.values[j] * C64::new(1.0 - s, 0.0) + &self.values[j + 1] * C64::new(s, 0.0)
    }

    /// Least-squares polynomial fit of every matrix entry in a Chebyshev
    /// basis over the grid range.
    pub fn fit(&self) -> PolynomialFit {
        let (a, b) = (self.grid[0], self.grid[self.grid.len() - 1]);
        let n = self.values[0].nrows();
        let rows = self.grid.len();
        let d = self.degree;
        let design = DMatrix::<f64>::from_fn(rows, d + 1, |r, c| chebyshev(d, scaled(self.grid[r], a, b))[c]);
        let svd = design.clone().svd(true, true);
        let mut coeffs = vec![CMatrix::zeros(n, n); d + 1];
        let mut residual = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let re = DMatrix::from_fn(rows, 1, |r, _| self.values[r][(i, j)].re);
                let im = DMatrix::from_fn(rows, 1, |r, _| self.values[r][(i, j)].im);
                let cre = svd.solve(&re, 1e-14).expect("svd has both factors");
                let cim = svd.solve(&im, 1e-14).expect("svd has both factors");
                let fre = &design * &cre;
                let fim = &design * &cim;
                for r in 0..rows {
                    residual = residual.max((C64::new(fre[r], fim[r]) - self.values[r][(i, j)]).norm());
                }
                for c in 0..=d {
                    coeffs[c][(i, j)] = C64::new(cre[c], cim[c]);
                }
            }
        }
        PolynomialFit { lo: a, hi: b, coeffs, residual }
    }
}

/// A fitted matrix polynomial, evaluated in the Chebyshev basis.
#[derive(Debug, Clone)]
pub struct PolynomialFit {
    lo: f64,
    hi: f64,
    coeffs: Vec<CMatrix>,
    residual: f64,
}

impl PolynomialFit {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Largest entrywise deviation from the table at the grid points.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn eval(&self, x: f64) -> CMatrix {
        let t = chebyshev(self.degree(), scaled(x, self.lo, self.hi));
        let n = self.coeffs[0].nrows();
        let mut out = CMatrix::zeros(n, n);
        for (c, tk) in self.coeffs.iter().zip(t) {
            out += c * C64::new(tk, 0.0);
        }
        out
    }
}

fn scaled(x: f64, a: f64, b: f64) -> f64 {
    if b > a {
        (2.0 * x - a - b) / (b - a)
    } else {
        0.0
    }
}

fn chebyshev(d: usize, x: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(d + 1);
    t.push(1.0);
    if d >= 1 {
        t.push(x);
    }
    for k in 2..=d {
        t.push(2.0 * x * t[k - 1] - t[k - 2]);
    }
    t
}

/// How one disorder parameter enters the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    /// `lambda * C`.
    Linear(CMatrix),
    /// `sum_p lambda^p A_p`, coefficients from `p = 0` upwards.
    Polynomial(Vec<CMatrix>),
    Tabulated(TabulatedCoupling),
}

impl Coupling {
    pub fn eval(&self, x: f64) -> CMatrix {
        match self {
            Coupling::Linear(c) => c * C64::new(x, 0.0),
            Coupling::Polynomial(ps) => {
                let mut out = CMatrix::zeros(ps[0].nrows(), ps[0].ncols());
                for p in ps.iter().rev() {
                    out = out * C64::new(x, 0.0) + p;
                }
                out
            }
            Coupling::Tabulated(t) => t.interpolate(x),
        }
    }

    fn matrices(&self) -> Vec<&CMatrix> {
        match self {
            Coupling::Linear(c) => vec![c],
            Coupling::Polynomial(ps) => ps.iter().collect(),
            Coupling::Tabulated(t) => t.values.iter().collect(),
        }
    }
}

/// `H(lambda) = H0 + sum_i f_i(lambda_i)` with independent `lambda_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    h0: CMatrix,
    couplings: Vec<Coupling>,
    distributions: Vec<DisorderDistribution>,
}

impl EnsembleSpec {
    pub fn new(
        h0: CMatrix,
        couplings: Vec<Coupling>,
        distributions: Vec<DisorderDistribution>,
    ) -> Result<Self, LatticeError> {
        let n = h0.nrows();
        if n == 0 || h0.ncols() != n {
            return Err(LatticeError::DimensionMismatch { what: "H0 columns".into(), expected: n, got: h0.ncols() });
        }
        check_hermitian("H0", &h0)?;
        if couplings.is_empty() {
            return Err(LatticeError::NoDisorder);
        }
        if couplings.len() != distributions.len() {
            return Err(LatticeError::DimensionMismatch {
                what: "distributions".into(),
                expected: couplings.len(),
                got: distributions.len(),
            });
        }
        for (i, c) in couplings.iter().enumerate() {
            if let Coupling::Polynomial(ps) = c {
                if ps.is_empty() {
                    return Err(LatticeError::InvalidCoupling(format!("coupling {i} has no coefficients")));
                }
            }
            for (p, m) in c.matrices().into_iter().enumerate() {
                if m.nrows() != n || m.ncols() != n {
                    return Err(LatticeError::DimensionMismatch {
                        what: format!("coupling {i} matrix {p}"),
                        expected: n,
                        got: m.nrows().max(m.ncols()),
                    });
                }
                check_hermitian(&format!("coupling {i} matrix {p}"), m)?;
            }
        }
        Ok(Self { h0, couplings, distributions })
    }

    /// Single-parameter linear ensemble `H0 + lambda C`.
    pub fn linear(h0: CMatrix, c: CMatrix, dist: DisorderDistribution) -> Result<Self, LatticeError> {
        Self::new(h0, vec![Coupling::Linear(c)], vec![dist])
    }

    pub fn n(&self) -> usize {
        self.h0.nrows()
    }

    pub fn l(&self) -> usize {
        self.couplings.len()
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn distributions(&self) -> &[DisorderDistribution] {
        &self.distributions
    }

    pub fn is_linear(&self) -> bool {
        self.couplings.iter().all(|c| matches!(c, Coupling::Linear(_)))
    }

    /// Same couplings, different disorder measures.
    pub fn with_distributions(&self, distributions: Vec<DisorderDistribution>) -> Result<Self, LatticeError> {
        Self::new(self.h0.clone(), self.couplings.clone(), distributions)
    }

    /// Hamiltonian of the realization `lambda`.
    pub fn realization(&self, lambda: &[f64]) -> CMatrix {
        assert_eq!(lambda.len(), self.l());
        let mut h = self.h0.clone();
        for (c, &x) in self.couplings.iter().zip(lambda) {
            h += c.eval(x);
        }
        h
    }

    /// Recurrence tables of every disorder measure to `orders[i]`.
    pub fn tables(&self, orders: &[usize]) -> Result<Vec<RecurrenceTable>, LatticeError> {
        if orders.len() != self.l() {
            return Err(LatticeError::DimensionMismatch { what: "orders".into(), expected: self.l(), got: orders.len() });
        }
        self.distributions.iter().zip(orders).map(|(d, &k)| Ok(recurrence_table(d, k)?)).collect()
    }
}

fn check_hermitian(what: &str, m: &CMatrix) -> Result<(), LatticeError> {
    let (defect, row, col) = hermiticity_defect(m);
    if defect > HERMITICITY_TOL {
        return Err(LatticeError::NotHermitian { what: what.into(), defect, row, col });
    }
    Ok(())
}

/// Truncated basis `|n, K>` with `0 <= k_i <= D_i`. The system index runs
/// fastest, then `k_1`, then `k_2`, and so on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBasis {
    n: usize,
    depths: Vec<usize>,
    strides: Vec<usize>,
    nodes: usize,
}

impl LatticeBasis {
    pub fn new(n: usize, depths: &[usize]) -> Result<Self, LatticeError> {
        if n == 0 {
            return Err(LatticeError::InvalidBasis("system dimension must be positive".into()));
        }
        if depths.is_empty() {
            return Err(LatticeError::InvalidBasis("need at least one lattice dimension".into()));
        }
        let mut strides = Vec::with_capacity(depths.len());
        let mut nodes = 1usize;
        for &d in depths {
            strides.push(nodes);
            nodes = nodes
                .checked_mul(d + 1)
                .filter(|&v| v.checked_mul(n).is_some())
                .ok_or_else(|| LatticeError::InvalidBasis("basis size overflows".into()))?;
        }
        Ok(Self { n, depths: depths.to_vec(), strides, nodes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.depths.len()
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.nodes * self.n
    }

    pub fn node_index(&self, k: &[usize]) -> usize {
        debug_assert_eq!(k.len(), self.l());
        k.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn node_multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut k = vec![0; self.l()];
        for (ki, d) in k.iter_mut().zip(&self.depths) {
            *ki = node % (d + 1);
            node /= d + 1;
        }
        k
    }

    pub fn flat(&self, n: usize, k: &[usize]) -> usize {
        self.node_index(k) * self.n + n
    }

    pub fn unflat(&self, idx: usize) -> (usize, Vec<usize>) {
        (idx % self.n, self.node_multi_index(idx / self.n))
    }
}

/// Flat indices whose multi-index has some `k_i > D_i - width`.
pub fn boundary_shell(basis: &LatticeBasis, width: usize) -> Result<Vec<usize>, LatticeError> {
    let max = *basis.depths().iter().min().expect("basis has a dimension");
    if width == 0 || width > max {
        return Err(LatticeError::InvalidWidth { width, max });
    }
    let mut out = Vec::new();
    for node in 0..basis.node_count() {
        let k = basis.node_multi_index(node);
        if k.iter().zip(basis.depths()).any(|(&k, &d)| k + width > d) {
            out.extend((0..basis.n()).map(|n| node * basis.n() + n));
        }
    }
    Ok(out)
}

/// Sparse Hermitian operator stored as its upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOperator {
    dim: usize,
    triplets: Vec<(usize, usize, C64)>,
}

impl LatticeOperator {
    /// Accepts entries from either triangle; lower ones are conjugated into
    /// the upper triangle, duplicates are summed and exact zeros dropped.
    pub fn from_entries(dim: usize, entries: Vec<(usize, usize, C64)>) -> Result<Self, LatticeError> {
        let mut upper: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if r >= dim || c >= dim {
                return Err(LatticeError::DimensionMismatch {
                    what: "triplet index".into(),
                    expected: dim,
                    got: r.max(c) + 1,
                });
            }
            if r <= c {
                upper.push((r, c, v));
            } else {
                upper.push((c, r, v.conj()));
            }
        }
        upper.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(upper.len());
        for (r, c, v) in upper {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != C64::new(0.0, 0.0));
        for t in merged.iter_mut().filter(|t| t.0 == t.1) {
            if t.2.im.abs() > 1e-14 {
                return Err(LatticeError::NotHermitian {
                    what: "operator diagonal".into(),
                    defect: 2.0 * t.2.im.abs(),
                    row: t.0,
                    col: t.1,
                });
            }
            t.2.im = 0.0;
        }
        Ok(Self { dim, triplets: merged })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle entries sorted by `(row, col)`.
    pub fn triplets(&self) -> &[(usize, usize, C64)] {
        &self.triplets
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Full (both triangles) sparse form.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut e = Vec::with_capacity(2 * self.triplets.len());
        for &(r, c, v) in &self.triplets {
            e.push((r, c, v));
            if r != c {
                e.push((c, r, v.conj()));
            }
        }
        CsrMatrix::from_entries(self.dim, e)
    }

    pub fn to_dense(&self) -> CMatrix {
        self.to_csr().to_dense()
    }

    /// `-H`, for backward propagation.
    pub fn negated(&self) -> Self {
        Self { dim: self.dim, triplets: self.triplets.iter().map(|&(r, c, v)| (r, c, -v)).collect() }
    }

    /// Text dump: `dim nnz`, then `row col re im` per upper-triangle entry.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.dim, self.triplets.len())?;
        for &(r, c, v) in &self.triplets {
            writeln!(w, "{r} {c} {:.16e} {:.16e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self, LatticeError> {
        let mut lines = r.lines().enumerate();
        let parse_err = |line: usize, msg: &str| LatticeError::Parse { line: line + 1, msg: msg.into() };
        let (i, header) = lines.next().ok_or_else(|| parse_err(0, "empty file"))?;
        let header = header?;
        let mut it = header.split_whitespace();
        let dim: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(i, "bad dim"))?;
        let nnz: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(i, "bad nnz"))?;
        let mut entries = Vec::with_capacity(nnz);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(parse_err(i, "expected `row col re im`"));
            }
            let r: usize = f[0].parse().map_err(|_| parse_err(i, "bad row"))?;
            let c: usize = f[1].parse().map_err(|_| parse_err(i, "bad col"))?;
            let re: f64 = f[2].parse().map_err(|_| parse_err(i, "bad real part"))?;
            let im: f64 = f[3].parse().map_err(|_| parse_err(i, "bad imaginary part"))?;
            if r > c {
                return Err(parse_err(i, "entry below the diagonal"));
            }
            entries.push((r, c, C64::new(re, im)));
        }
        if entries.len() != nnz {
            return Err(parse_err(0, &format!("header announces {nnz} entries, found {}", entries.len())));
        }
        Self::from_entries(dim, entries)
    }

    /// Distinct node pairs `(K, K')`, `K <= K'`, joined by a stored entry.
    pub fn node_blocks(&self, n: usize) -> BTreeSet<(usize, usize)> {
        self.triplets.iter().map(|&(r, c, _)| (r / n, c / n)).collect()
    }
}

fn check_tables(tables: &[RecurrenceTable], spec: &EnsembleSpec, depths: &[usize]) -> Result<(), LatticeError> {
    if tables.len() != spec.l() {
        return Err(LatticeError::DimensionMismatch { what: "recurrence tables".into(), expected: spec.l(), got: tables.len() });
    }
    if depths.len() != spec.l() {
        return Err(LatticeError::DimensionMismatch { what: "depths".into(), expected: spec.l(), got: depths.len() });
    }
    for (axis, (t, &d)) in tables.iter().zip(depths).enumerate() {
        if t.order() < d + 1 {
            return Err(LatticeError::TableTooShort { axis, needed: d + 1, available: t.order() });
        }
    }
    Ok(())
}

fn push_block(out: &mut Vec<(usize, usize, C64)>, n: usize, a: usize, b: usize, m: &CMatrix, scale: f64) {
    // `a < b` (whole block upper) or `a == b` (upper half of the block)
    for i in 0..n {
        let j0 = if a == b { i } else { 0 };
        for j in j0..n {
            let v = m[(i, j)] * scale;
            if v != C64::new(0.0, 0.0) {
                out.push((a * n + i, b * n + j, v));
            }
        }
    }
}

/// Nearest-neighbour lattice for linear disorder: on-node blocks
/// `H0 + sum_i alpha_{k_i} C_i`, hops `sqrt(beta_{k_i + 1}) C_i` along axis `i`.
pub fn build_linear(
    spec: &EnsembleSpec,
    tables: &[RecurrenceTable],
    depths: &[usize],
) -> Result<LatticeOperator, LatticeError> {
    check_tables(tables, spec, depths)?;
    let cs: Vec<&CMatrix> = spec
        .couplings()
        .iter()
        .enumerate()
        .map(|(axis, c)| match c {
            Coupling::Linear(m) => Ok(m),
            _ => Err(LatticeError::NotLinear { axis }),
        })
        .collect::<Result<_, _>>()?;
    let basis = LatticeBasis::new(spec.n(), depths)?;
    let n = spec.n();
    let mut entries = Vec::new();
    for node in 0..basis.node_count() {
        let k = basis.node_multi_index(node);
        let mut onsite = spec.h0().clone();
        for (i, c) in cs.iter().enumerate() {
            onsite += *c * C64::new(tables[i].alpha(k[i]), 0.0);
        }
        push_block(&mut entries, n, node, node, &onsite, 1.0);
        for (i, c) in cs.iter().enumerate() {
            if k[i] < depths[i] {
                push_block(&mut entries, n, node, node + basis.strides[i], c, tables[i].hopping(k[i]));
            }
        }
    }
    LatticeOperator::from_entries(basis.dim(), entries)
}

/// Result of [`build_general`]: the operator and, per axis, the residual of
/// the polynomial fit when the coupling was tabulated.
#[derive(Debug, Clone)]
pub struct GeneralBuild {
    pub operator: LatticeOperator,
    pub fit_residuals: Vec<Option<f64>>,
}

/// Lattice for polynomial or tabulated couplings. Node blocks
/// `int p f phi_k phi_k'` are evaluated by Gauss quadrature with
/// `quad_points` nodes per axis; tabulated couplings are first replaced by
/// their polynomial fit, so every axis has a finite bandwidth.
pub fn build_general(
    spec: &EnsembleSpec,
    tables: &[RecurrenceTable],
    depths: &[usize],
    quad_points: usize,
) -> Result<GeneralBuild, LatticeError> {
    check_tables(tables, spec, depths)?;
    let basis = LatticeBasis::new(spec.n(), depths)?;
    let n = spec.n();
    let mut fit_residuals = Vec::with_capacity(spec.l());
    // per axis: banded blocks F[k][k' - k] for 0 <= k' - k <= band
    let mut axis_blocks: Vec<(usize, Vec<Vec<CMatrix>>)> = Vec::with_capacity(spec.l());
    for (axis, coupling) in spec.couplings().iter().enumerate() {
        let d = depths[axis];
        let (band, f): (usize, Box<dyn Fn(f64) -> CMatrix>) = match coupling {
            Coupling::Linear(c) => {
                fit_residuals.push(None);
                let c = c.clone();
                (1, Box::new(move |x| &c * C64::new(x, 0.0)))
            }
            Coupling::Polynomial(ps) => {
                fit_residuals.push(None);
                let c = coupling.clone();
                (ps.len() - 1, Box::new(move |x| c.eval(x)))
            }
            Coupling::Tabulated(t) => {
                let fit = t.fit();
                fit_residuals.push(Some(fit.residual()));
                (fit.degree(), Box::new(move |x| fit.eval(x)))
            }
        };
        let needed = d + band + 1;
        if quad_points < needed {
            return Err(LatticeError::QuadratureUnderResolved { axis, needed, got: quad_points });
        }
        if tables[axis].order() < quad_points {
            return Err(LatticeError::TableTooShort { axis, needed: quad_points, available: tables[axis].order() });
        }
        let rule = gauss_rule(&tables[axis], quad_points)?;
        let mut blocks = vec![vec![CMatrix::zeros(n, n); band + 1]; d + 1];
        let mut phi = Vec::with_capacity(d + 1);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let fx = f(x);
            tables[axis].orthonormal_into(x, &mut phi, d + 1);
            for k in 0..=d {
                for off in 0..=band.min(d - k) {
                    blocks[k][off] += &fx * C64::new(w * phi[k] * phi[k + off], 0.0);
                }
            }
        }
        axis_blocks.push((band, blocks));
    }
    let mut entries = Vec::new();
    for node in 0..basis.node_count() {
        let k = basis.node_multi_index(node);
        let mut onsite = spec.h0().clone();
        for (i, (_, blocks)) in axis_blocks.iter().enumerate() {
            onsite += &blocks[k[i]][0];
        }
        push_block(&mut entries, n, node, node, &onsite, 1.0);
        for (i, (band, blocks)) in axis_blocks.iter().enumerate() {
            for off in 1..=(*band).min(depths[i] - k[i]) {
                push_block(&mut entries, n, node, node + off * basis.strides[i], &blocks[k[i]][off], 1.0);
            }
        }
    }
    Ok(GeneralBuild { operator: LatticeOperator::from_entries(basis.dim(), entries)?, fit_residuals })
}

/// Builds the lattice of `spec` at `depths`, computing the recurrence tables
/// from the spec's distributions. Linear specs use the nearest-neighbour fast
/// path; others use `build_general` with `depth + bandwidth + 1` points.
pub fn chain_map(spec: &EnsembleSpec, depths: &[usize]) -> Result<(LatticeBasis, LatticeOperator), LatticeError> {
    let basis = LatticeBasis::new(spec.n(), depths)?;
    if spec.is_linear() {
        let orders: Vec<usize> = depths.iter().map(|d| d + 1).collect();
        let tables = spec.tables(&orders)?;
        return Ok((basis, build_linear(spec, &tables, depths)?));
    }
    let band = spec
        .couplings()
        .iter()
        .map(|c| match c {
            Coupling::Linear(_) => 1,
            Coupling::Polynomial(ps) => ps.len() - 1,
            Coupling::Tabulated(t) => t.degree(),
        })
        .max()
        .unwrap_or(1);
    let q = depths.iter().max().expect("at least one depth") + band + 1;
    let tables = spec.tables(&vec![q; spec.l()])?;
    Ok((basis, build_general(spec, &tables, depths, q)?.operator))
}
