//! Turns a [`RunConfig`] into library objects, collecting every problem
//! found on the way instead of stopping at the first.

use std::fmt;
use std::path::Path;

use disorder_chain::lattice::HERMITICITY_TOL;
use disorder_chain::linalg::hermiticity_defect;
use disorder_chain::measures::Family;
use disorder_chain::prelude::*;
use disorder_chain::states::{TabulatedAmplitudes, NORM_TOL};

use crate::config::{Depths, Distribution, Entry, Initial, Matrix, MethodName, RunConfig, TimeUnit};

/// One validation failure, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone)]
pub enum InitialModel {
    Fixed(Vec<C64>),
    Tabulated(TabulatedAmplitudes),
}

impl InitialModel {
    pub fn amplitudes(&self, lambda: &[f64]) -> Vec<C64> {
        match self {
            InitialModel::Fixed(c) => c.clone(),
            InitialModel::Tabulated(t) => t.eval(lambda[0]),
        }
    }
}

/// Everything one run needs: the ensemble, its initial state and the
/// requested lattice depths.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: Option<String>,
    pub spec: EnsembleSpec,
    pub initial: InitialModel,
    pub depths: Depths,
}

/// Dry-run schema and physics checks; an empty list means the config runs.
pub fn validate(cfg: &RunConfig) -> Vec<Issue> {
    build(cfg).err().unwrap_or_default()
}

pub fn build(cfg: &RunConfig) -> Result<Vec<Problem>, Vec<Issue>> {
    let mut issues = Vec::new();
    let methods = cfg.method.methods();
    let needs_moments = methods.iter().any(|m| m.needs_moments());
    check_scalars(cfg, &methods, &mut issues);

    let h0 = collect(load_matrix(&cfg.system.h0, "system.h0"), &mut issues);
    let n = h0.as_ref().map(|m| m.nrows());
    if let Some(h0) = &h0 {
        issues.extend(check_hermitian(h0, "system.h0"));
    }
    let l = cfg.system.disorder.len();
    if l == 0 {
        issues.push(Issue::new("system.disorder", "at least one disorder axis is required"));
    }

    let mut couplings = Vec::with_capacity(l);
    let mut system_dists = Vec::with_capacity(l);
    for (i, axis) in cfg.system.disorder.iter().enumerate() {
        let path = format!("system.disorder[{i}]");
        couplings.push(collect(coupling(axis, n, &path), &mut issues));
        system_dists.push(collect(distribution(&axis.distribution, cfg, &format!("{path}.distribution")), &mut issues));
    }

    let initial = match &cfg.initial {
        Initial::Localized { amplitudes } => collect(fixed_amplitudes(amplitudes, n, "initial.amplitudes"), &mut issues),
        Initial::Spectral { amplitudes, energy } => {
            if l != 1 {
                issues.push(Issue::new("initial", format!("spectral initial states need exactly one disorder axis, found {l}")));
            }
            if let Some(d) = collect(distribution(energy, cfg, "initial.energy"), &mut issues) {
                if let Some(slot) = system_dists.first_mut() {
                    *slot = Some(d);
                }
            }
            collect(fixed_amplitudes(amplitudes, n, "initial.amplitudes"), &mut issues)
        }
        Initial::Tabulated { file } => {
            if l != 1 {
                issues.push(Issue::new("initial", format!("tabulated initial states need exactly one disorder axis, found {l}")));
            }
            collect(tabulated_amplitudes(file, n, "initial.file"), &mut issues)
        }
    };

    // one entry per run: (name, distributions, depths, path prefix)
    let mut runs = Vec::new();
    if cfg.variants.is_empty() {
        runs.push((None, system_dists.clone(), cfg.numeric.depths.clone(), "system.disorder".to_string()));
    }
    for (v, variant) in cfg.variants.iter().enumerate() {
        let path = format!("variants[{v}]");
        if variant.name.is_empty()
            || !variant.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            || cfg.variants[..v].iter().any(|o| o.name == variant.name)
        {
            issues.push(Issue::new(format!("{path}.name"), "names must be unique and use only [A-Za-z0-9_-]"));
        }
        let dists = match &variant.distributions {
            None => system_dists.clone(),
            Some(ds) => {
                if ds.len() != l {
                    issues.push(Issue::new(format!("{path}.distributions"), format!("expected {l} distributions, found {}", ds.len())));
                }
                ds.iter()
                    .enumerate()
                    .map(|(i, d)| collect(distribution(d, cfg, &format!("{path}.distributions[{i}]")), &mut issues))
                    .collect()
            }
        };
        let depths = variant.depths.clone().map(Depths::Fixed).unwrap_or_else(|| cfg.numeric.depths.clone());
        let prefix = if variant.distributions.is_some() { format!("{path}.distributions") } else { "system.disorder".into() };
        runs.push((Some(variant.name.clone()), dists, depths, prefix));
    }

    let mut problems = Vec::new();
    for (name, dists, depths, prefix) in runs {
        let where_ = name.as_ref().map(|v| format!(" (variant {v})")).unwrap_or_default();
        if let Depths::Fixed(d) = &depths {
            if d.len() != l || d.contains(&0) {
                issues.push(Issue::new("numeric.depths", format!("need {l} positive depths{where_}, found {d:?}")));
            }
        }
        for (i, d) in dists.iter().enumerate() {
            let Some(d) = d else { continue };
            let path = if matches!(cfg.initial, Initial::Spectral { .. }) && prefix == "system.disorder" {
                "initial.energy".to_string()
            } else if prefix == "system.disorder" {
                format!("system.disorder[{i}].distribution")
            } else {
                format!("{prefix}[{i}]")
            };
            if needs_moments && d.moments_undefined() {
                issues.push(Issue::new(path, "moments undefined; set cutoff"));
            }
        }
        let (Some(h0), Some(initial)) = (&h0, &initial) else { continue };
        if couplings.iter().any(Option::is_none) || dists.iter().any(Option::is_none) || dists.len() != l {
            continue;
        }
        let spec = match EnsembleSpec::new(
            h0.clone(),
            couplings.iter().flatten().cloned().collect(),
            dists.into_iter().flatten().collect(),
        ) {
            Ok(s) => s,
            Err(e) => {
                issues.push(Issue::new("system", e.to_string()));
                continue;
            }
        };
        if methods.contains(&MethodName::Analytic) {
            issues.extend(check_analytic(&spec, initial, &where_));
        }
        problems.push(Problem { name, spec, initial: initial.clone(), depths });
    }
    if issues.is_empty() {
        Ok(problems)
    } else {
        Err(issues)
    }
}

fn collect<T>(r: Result<T, Issue>, issues: &mut Vec<Issue>) -> Option<T> {
    r.map_err(|e| issues.push(e)).ok()
}

fn check_scalars(cfg: &RunConfig, methods: &[MethodName], issues: &mut Vec<Issue>) {
    let mut bad = |path: &str, msg: String| issues.push(Issue::new(path, msg));
    let t = &cfg.time;
    if !(t.t_max > 0.0 && t.t_max.is_finite()) {
        bad("time.t_max", format!("must be positive and finite, got {}", t.t_max));
    }
    if t.n_steps < 2 {
        bad("time.n_steps", format!("must be at least 2, got {}", t.n_steps));
    }
    if t.unit == TimeUnit::Ps && cfg.system.unit.as_deref() != Some("cm^-1") {
        bad("time.unit", "picoseconds need system.unit = \"cm^-1\"".into());
    }
    let m = &cfg.method;
    if m.name == MethodName::Compare {
        let mut seen = Vec::new();
        for x in &m.compare {
            if *x == MethodName::Compare || seen.contains(x) {
                bad("method.compare", format!("{} listed twice or nested", x.as_str()));
            }
            seen.push(*x);
        }
        if seen.len() < 2 {
            bad("method.compare", "compare needs at least two methods".into());
        }
    } else if !m.compare.is_empty() {
        bad("method.compare", format!("only used with name = \"compare\", not \"{}\"", m.name.as_str()));
    }
    if !(m.tolerance > 0.0) {
        bad("method.tolerance", format!("must be positive, got {}", m.tolerance));
    }
    if !(m.sem_band > 0.0) {
        bad("method.sem_band", format!("must be positive, got {}", m.sem_band));
    }
    let nu = &cfg.numeric;
    if !(nu.tol > 0.0) {
        bad("numeric.tol", format!("must be positive, got {}", nu.tol));
    }
    if !(nu.leakage_threshold >= 0.0) {
        bad("numeric.leakage_threshold", format!("must be non-negative, got {}", nu.leakage_threshold));
    }
    if nu.depth_cap < 16 {
        bad("numeric.depth_cap", format!("must be at least 16, got {}", nu.depth_cap));
    }
    if methods.contains(&MethodName::Mc) && nu.samples == 0 {
        bad("numeric.samples", "must be at least 1".into());
    }
    let q = nu.quad_order.to_vec();
    let l = cfg.system.disorder.len();
    if methods.contains(&MethodName::Quad) && (q.is_empty() || q.contains(&0) || (q.len() != 1 && q.len() != l)) {
        bad("numeric.quad_order", format!("need one order or {l} positive orders, found {q:?}"));
    }
    if let Some(c) = nu.cutoff {
        if !(c > 0.0) {
            bad("numeric.cutoff", format!("must be positive, got {c}"));
        }
    }
    if nu.expansion_points == Some(0) {
        bad("numeric.expansion_points", "must be at least 1".into());
    }
    if !(nu.norm_warn >= 0.0 && nu.norm_error >= nu.norm_warn) {
        bad("numeric.norm_error", "need 0 <= norm_warn <= norm_error".into());
    }
}

fn load_matrix(m: &Matrix, path: &str) -> Result<CMatrix, Issue> {
    let rows: Vec<Vec<C64>> = match m {
        Matrix::Rows(rows) => rows.iter().map(|r| r.iter().map(|e| e.value()).collect()).collect(),
        Matrix::File { file } => read_matrix_file(file).map_err(|e| Issue::new(path, e))?,
    };
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Issue::new(path, "matrix must be square and non-empty"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn read_matrix_file(file: &Path) -> Result<Vec<Vec<C64>>, String> {
    let text = std::fs::read_to_string(file).map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    data_lines(&text)
        .map(|(line, fields)| {
            fields
                .iter()
                .map(|f| {
                    let mut parts = f.split(',');
                    let re = parse_number(parts.next().unwrap_or(""), file, line)?;
                    let im = parts.next().map(|p| parse_number(p, file, line)).transpose()?.unwrap_or(0.0);
                    Ok(C64::new(re, im))
                })
                .collect()
        })
        .collect()
}

/// Non-empty lines without `#` comments, split on whitespace, with their
/// 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let fields: Vec<&str> = line.split('#').next().unwrap_or("").split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_number(s: &str, file: &Path, line: usize) -> Result<f64, String> {
    s.parse().map_err(|_| format!("{}:{line}: cannot parse {s:?} as a number", file.display()))
}

fn check_hermitian(m: &CMatrix, path: &str) -> Option<Issue> {
    let (defect, r, c) = hermiticity_defect(m);
    (defect > HERMITICITY_TOL).then(|| {
        Issue::new(path, format!("not Hermitian: entries ({r}, {c}) and ({c}, {r}) are not conjugate (defect {defect:.3e})"))
    })
}

fn coupling(axis: &crate::config::Axis, n: Option<usize>, path: &str) -> Result<Coupling, Issue> {
    let sized = |m: &Matrix, p: &str| -> Result<CMatrix, Issue> {
        let m = load_matrix(m, p)?;
        if let Some(n) = n {
            if m.nrows() != n {
                return Err(Issue::new(p, format!("expected {n}x{n}, found {0}x{0}", m.nrows())));
            }
        }
        if let Some(issue) = check_hermitian(&m, p) {
            return Err(issue);
        }
        Ok(m)
    };
    match (&axis.coupling, &axis.polynomial) {
        (Some(c), None) => Ok(Coupling::Linear(sized(c, &format!("{path}.coupling"))?)),
        (None, Some(ps)) if !ps.is_empty() => Ok(Coupling::Polynomial(
            ps.iter().enumerate().map(|(p, m)| sized(m, &format!("{path}.polynomial[{p}]"))).collect::<Result<_, _>>()?,
        )),
        _ => Err(Issue::new(path, "give exactly one of coupling or a non-empty polynomial")),
    }
}

fn distribution(d: &Distribution, cfg: &RunConfig, path: &str) -> Result<DisorderDistribution, Issue> {
    let fail = |e: disorder_chain::measures::MeasureError| Issue::new(path, e.to_string());
    let (base, cutoff, width) = match d {
        Distribution::Gaussian { sigma, cutoff } => (DisorderDistribution::gaussian(*sigma), cutoff, Some(*sigma)),
        Distribution::Cauchy { theta, cutoff } => (DisorderDistribution::cauchy(*theta), cutoff, Some(*theta)),
        Distribution::Semicircle { w, cutoff } => (DisorderDistribution::semicircle(*w), cutoff, None),
        Distribution::Uniform { v, cutoff } => (DisorderDistribution::uniform(*v), cutoff, None),
        Distribution::Tabulated { file, cutoff } => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| Issue::new(format!("{path}.file"), format!("cannot read {}: {e}", file.display())))?;
            let points = data_lines(&text)
                .map(|(line, f)| {
                    if f.len() != 2 {
                        return Err(format!("{}:{line}: expected two columns (lambda, density)", file.display()));
                    }
                    Ok((parse_number(f[0], file, line)?, parse_number(f[1], file, line)?))
                })
                .collect::<Result<Vec<_>, String>>()
                .map_err(|e| Issue::new(format!("{path}.file"), e))?;
            (DisorderDistribution::tabulated(points), cutoff, None)
        }
    };
    let base = base.map_err(fail)?;
    match (cutoff, cfg.numeric.cutoff, width) {
        (Some([lo, hi]), _, _) => apply_cutoff(&base, *lo, *hi).map_err(fail),
        (None, Some(c), Some(w)) => apply_cutoff(&base, -c * w, c * w).map_err(fail),
        _ => Ok(base),
    }
}

fn fixed_amplitudes(a: &[Entry], n: Option<usize>, path: &str) -> Result<InitialModel, Issue> {
    let c: Vec<C64> = a.iter().map(|e| e.value()).collect();
    if let Some(n) = n {
        if c.len() != n {
            return Err(Issue::new(path, format!("expected {n} amplitudes, found {}", c.len())));
        }
    }
    let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Issue::new(path, format!("amplitudes must be normalized, norm is {norm}")));
    }
    Ok(InitialModel::Fixed(c))
}

fn tabulated_amplitudes(file: &Path, n: Option<usize>, path: &str) -> Result<InitialModel, Issue> {
    let text = std::fs::read_to_string(file).map_err(|e| Issue::new(path, format!("cannot read {}: {e}", file.display())))?;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (line, f) in data_lines(&text) {
        if f.len() % 2 == 0 || n.is_some_and(|n| f.len() != 2 * n + 1) {
            return Err(Issue::new(path, format!("{}:{line}: expected lambda then re/im pairs for every level", file.display())));
        }
        let nums = f.iter().map(|s| parse_number(s, file, line)).collect::<Result<Vec<_>, _>>().map_err(|e| Issue::new(path, e))?;
        grid.push(nums[0]);
        values.push(nums[1..].chunks(2).map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>());
    }
    if values.iter().any(|v| v.iter().all(|z| z.norm() == 0.0)) {
        return Err(Issue::new(path, "a tabulated row is identically zero"));
    }
    TabulatedAmplitudes::new(grid, values).map(InitialModel::Tabulated).map_err(|e| Issue::new(path, e.to_string()))
}

/// The closed form covers `H = diag(E0, E1 + lambda)` with a fixed state.
fn check_analytic(spec: &EnsembleSpec, initial: &InitialModel, where_: &str) -> Vec<Issue> {
    let mut out = Vec::new();
    let mut bad = |m: String| out.push(Issue::new("method", format!("analytic{where_}: {m}")));
    let qubit_coupling = spec.l() == 1
        && spec.n() == 2
        && matches!(&spec.couplings()[0], Coupling::Linear(c)
            if c[(0, 0)].norm() == 0.0 && c[(0, 1)].norm() == 0.0 && c[(1, 0)].norm() == 0.0 && c[(1, 1)] == C64::new(1.0, 0.0));
    if !qubit_coupling {
        bad("needs a two-level system with one coupling [[0, 0], [0, 1]]".into());
        return out;
    }
    if spec.h0()[(0, 1)].norm() != 0.0 {
        bad("needs a diagonal h0".into());
    }
    if !matches!(initial, InitialModel::Fixed(_)) {
        bad("needs realization-independent amplitudes".into());
    }
    let d = &spec.distributions()[0];
    if d.cutoff().is_some() || matches!(d.family(), Family::Tabulated(_)) {
        bad(format!("no closed form for a cut or tabulated {} distribution", d.family_name()));
    }
    out
}
