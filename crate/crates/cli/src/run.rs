//! Executes the requested methods for every problem and writes the results.

use std::path::{Path, PathBuf};
use std::time::Instant;

use disorder_chain::dynamics::AutoDepth;
use disorder_chain::oracle::OracleMethod;
use disorder_chain::prelude::*;
use disorder_chain::states::StateError;
use log::{info, warn};
use serde::Serialize;

use crate::config::{Depths, Format, MethodName, RunConfig};
use crate::model::{InitialModel, Problem};
use crate::output::{self, write_atomic};
use crate::CliError;

/// Standard errors at or below this are treated as exact.
const SEM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    /// The configuration with every default filled in, depths resolved and
    /// paths absolute; feeding this file back as `--config` repeats the run.
    pub config: RunConfig,
    pub runs: Vec<RunRecord>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: Option<String>,
    pub methods: Vec<MethodRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MethodRecord {
    pub method: String,
    pub wall_clock_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub auto_depth_trials: Vec<Trial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub krylov_substeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sem: Option<f64>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub depths: Vec<usize>,
    pub final_leakage: f64,
    pub change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub tolerance: f64,
    pub sem_band: f64,
    pub pairs: Vec<Pair>,
    pub passed: bool,
    pub file: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct Pair {
    pub a: String,
    pub b: String,
    pub max_error: f64,
    /// Largest `|a - b|` in combined standard errors, when either side is
    /// Monte Carlo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sem_ratio: Option<f64>,
    pub passed: bool,
}

#[derive(Debug)]
pub struct Outcome {
    pub manifest: Manifest,
    /// Chain runs whose boundary population passed the threshold.
    pub leakage_failures: Vec<String>,
}

impl Outcome {
    pub fn comparison_passed(&self) -> bool {
        self.manifest.runs.iter().filter_map(|r| r.comparison.as_ref()).all(|c| c.passed)
    }
}

struct Computed {
    method: MethodName,
    trajectory: DensityTrajectory,
    record: MethodRecord,
    leakage: Option<Vec<f64>>,
}

pub fn execute(cfg: &RunConfig, problems: &[Problem]) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let out = absolute(&cfg.output.directory)?;
    let mut resolved = cfg.clone();
    resolved.output.directory = out.clone();
    let display_times = cfg.time.grid();
    let scale = cfg.time.scale();
    let mut plan = PropagationPlan::new(display_times.iter().map(|t| t * scale).collect()).map_err(numeric)?;
    plan.tol = cfg.numeric.tol;
    plan.leakage_threshold = cfg.numeric.leakage_threshold;

    let mut runs = Vec::new();
    let mut leakage_failures = Vec::new();
    for (index, p) in problems.iter().enumerate() {
        let dir = match &p.name {
            Some(name) => out.join(name),
            None => out.clone(),
        };
        let label = p.name.clone().unwrap_or_else(|| "run".into());
        let mut computed = Vec::new();
        for method in cfg.method.methods() {
            info!("{label}: running {}", method.as_str());
            let t0 = Instant::now();
            let mut c = compute(method, p, cfg, &plan)?;
            c.record.wall_clock_s = t0.elapsed().as_secs_f64();
            if let (Some(max), MethodName::Chain) = (c.record.leakage_max, method) {
                if max > plan.leakage_threshold {
                    warn!("{label}: boundary population {max:e} exceeds {:e}", plan.leakage_threshold);
                    leakage_failures.push(format!(
                        "{label}: boundary population {max:e} exceeds {:e} at depths {:?}",
                        plan.leakage_threshold,
                        c.record.depths.clone().unwrap_or_default()
                    ));
                }
                let depths = c.record.depths.clone().expect("chain runs report depths");
                match resolved.variants.get_mut(index) {
                    Some(v) => v.depths = Some(depths),
                    None => resolved.numeric.depths = Depths::Fixed(depths),
                }
            }
            write_method_files(&mut c, &dir, &out, &display_times, &cfg.output.formats)?;
            computed.push(c);
        }
        let comparison = if cfg.method.name == MethodName::Compare {
            Some(compare(&computed, cfg, &dir, &out)?)
        } else {
            None
        };
        runs.push(RunRecord { name: p.name.clone(), methods: computed.into_iter().map(|c| c.record).collect(), comparison });
    }
    let manifest = Manifest {
        tool: "disorder-chain",
        version: env!("CARGO_PKG_VERSION"),
        config: resolved,
        runs,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join("manifest.json"), json.as_bytes())?;
    Ok(Outcome { manifest, leakage_failures })
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    if p.is_absolute() {
        return Ok(p.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::io(p, e))?;
    Ok(cwd.join(p))
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn compute(method: MethodName, p: &Problem, cfg: &RunConfig, plan: &PropagationPlan) -> Result<Computed, CliError> {
    let name = method.as_str().to_string();
    let amplitudes = |x: &[f64]| p.initial.amplitudes(x);
    let oracle = |m: OracleMethod| OracleConfig {
        samples: cfg.numeric.samples,
        seed: cfg.numeric.seed,
        quad_order: cfg.numeric.quad_order.to_vec(),
        method: m,
    };
    let done = |trajectory: DensityTrajectory, record: MethodRecord| Computed { method, trajectory, record, leakage: None };
    match method {
        MethodName::Chain => chain(p, cfg, plan),
        MethodName::Mc => {
            let t = mc_average(&p.spec, amplitudes, &plan.times, &oracle(OracleMethod::MonteCarlo)).map_err(numeric)?;
            let max_sem = t.errors.as_ref().map(|e| e.iter().flat_map(|m| m.iter().copied()).fold(0.0, f64::max));
            Ok(done(t, MethodRecord { method: name, max_sem, ..Default::default() }))
        }
        MethodName::Quad => {
            let t = quad_average(&p.spec, amplitudes, &plan.times, &oracle(OracleMethod::GaussQuadrature)).map_err(numeric)?;
            Ok(done(t, MethodRecord { method: name, ..Default::default() }))
        }
        MethodName::Analytic => {
            let InitialModel::Fixed(c) = &p.initial else {
                return Err(CliError::config("method", "analytic needs realization-independent amplitudes"));
            };
            let h0 = p.spec.h0();
            let t = analytic_qubit(c[0], c[1], h0[(0, 0)].re, h0[(1, 1)].re, &p.spec.distributions()[0], &plan.times)
                .map_err(numeric)?;
            Ok(done(t, MethodRecord { method: name, ..Default::default() }))
        }
        MethodName::Compare => unreachable!("compare expands to its methods"),
    }
}

fn initial_state(p: &Problem, basis: &LatticeBasis, cfg: &RunConfig) -> Result<(LatticeState, Option<f64>), StateError> {
    match &p.initial {
        InitialModel::Fixed(c) => Ok((localized_initial(c, basis)?, None)),
        InitialModel::Tabulated(t) => {
            let d = basis.depths()[0];
            let q = cfg.numeric.expansion_points.unwrap_or((2 * (d + 1)).max(2048)).max(d + 1);
            let tables = p.spec.tables(&[q])?;
            let policy = NormPolicy { warn: cfg.numeric.norm_warn, error: cfg.numeric.norm_error };
            let e = expanded_initial(|x: &[f64]| t.eval(x[0]), &tables, basis, q, policy)?;
            Ok((e.state, Some(e.norm_defect)))
        }
    }
}

fn chain(p: &Problem, cfg: &RunConfig, plan: &PropagationPlan) -> Result<Computed, CliError> {
    let mut record = MethodRecord { method: "chain".into(), ..Default::default() };
    let (trajectory, leakage, depths) = match &p.depths {
        Depths::Fixed(depths) => {
            let (basis, h) = chain_map(&p.spec, depths).map_err(numeric)?;
            let (psi0, defect) = initial_state(p, &basis, cfg).map_err(numeric)?;
            record.norm_defect = defect;
            let (t, ev) = evolve_reduced(&h, &psi0, plan).map_err(numeric)?;
            record.krylov_substeps = Some(ev.stats.substeps);
            (t, ev.leakage, depths.clone())
        }
        Depths::Auto(_) => {
            let AutoDepth { depths, trajectory, leakage, stats, history } =
                auto_depth(&p.spec, &[], |b| initial_state(p, b, cfg).map(|s| s.0), plan, cfg.numeric.depth_cap)
                    .map_err(numeric)?;
            record.auto_depth_trials = history
                .into_iter()
                .map(|t| Trial { depths: t.depths, final_leakage: t.final_leakage, change: t.change })
                .collect();
            record.krylov_substeps = Some(stats.substeps);
            if matches!(p.initial, InitialModel::Tabulated(_)) {
                let basis = LatticeBasis::new(p.spec.n(), &depths).map_err(numeric)?;
                record.norm_defect = initial_state(p, &basis, cfg).map_err(numeric)?.1;
            }
            (trajectory, leakage, depths)
        }
    };
    record.depths = Some(depths);
    record.leakage_max = Some(leakage.max());
    record.leakage_final = Some(leakage.last());
    Ok(Computed { method: MethodName::Chain, trajectory, record, leakage: Some(leakage.population) })
}

fn write_method_files(c: &mut Computed, dir: &Path, out: &Path, times: &[f64], formats: &[Format]) -> Result<(), CliError> {
    let dir = dir.join(c.method.as_str());
    let mut files: Vec<(&str, String)> = Vec::new();
    for f in formats {
        match f {
            Format::Trajectory => files.push(("trajectory.csv", output::trajectory_csv(times, &c.trajectory))),
            Format::Coherence => files.push(("coherence.csv", output::coherence_csv(times, &c.trajectory))),
            Format::Populations => files.push(("populations.csv", output::populations_csv(times, &c.trajectory))),
            Format::Leakage => {
                if let Some(p) = &c.leakage {
                    files.push(("leakage.csv", output::leakage_csv(times, p)));
                }
            }
        }
    }
    if let Some(sem) = output::sem_csv(times, &c.trajectory) {
        files.push(("sem.csv", sem));
    }
    for (name, contents) in files {
        let path = dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        c.record.files.push(path.strip_prefix(out).unwrap_or(&path).to_path_buf());
    }
    Ok(())
}

/// Per-entry maxima over time of `|rho_a - rho_b|` for every method pair,
/// and of that difference in combined standard errors where Monte Carlo is
/// involved.
fn compare(computed: &[Computed], cfg: &RunConfig, dir: &Path, out: &Path) -> Result<Comparison, CliError> {
    let n = computed[0].trajectory.n();
    let entries = output::upper_triangle(n);
    let mut columns = Vec::new();
    let mut pairs = Vec::new();
    for (ia, a) in computed.iter().enumerate() {
        for b in &computed[ia + 1..] {
            let (ta, tb) = (&a.trajectory, &b.trajectory);
            let stochastic = ta.errors.is_some() || tb.errors.is_some();
            let mut err = vec![0.0f64; entries.len()];
            let mut ratio = vec![0.0f64; entries.len()];
            let mut exact_err = 0.0f64;
            for t in 0..ta.len() {
                for (k, &(i, j)) in entries.iter().enumerate() {
                    let d = (ta.rho[t][(i, j)] - tb.rho[t][(i, j)]).norm();
                    err[k] = err[k].max(d);
                    let sem = |x: &DensityTrajectory| x.errors.as_ref().map_or(0.0, |e| e[t][(i, j)]);
                    let s = sem(ta).hypot(sem(tb));
                    if s > SEM_FLOOR {
                        ratio[k] = ratio[k].max(d / s);
                    } else {
                        exact_err = exact_err.max(d);
                    }
                }
            }
            let max_error = err.iter().copied().fold(0.0, f64::max);
            let max_ratio = ratio.iter().copied().fold(0.0, f64::max);
            let passed = if stochastic {
                max_ratio <= cfg.method.sem_band && exact_err <= cfg.method.tolerance
            } else {
                max_error <= cfg.method.tolerance
            };
            let label = format!("{}_vs_{}", a.method.as_str(), b.method.as_str());
            columns.push((label.clone(), err));
            if stochastic {
                columns.push((format!("{label}_sem_ratio"), ratio));
            }
            pairs.push(Pair {
                a: a.method.as_str().into(),
                b: b.method.as_str().into(),
                max_error,
                max_sem_ratio: stochastic.then_some(max_ratio),
                passed,
            });
        }
    }
    let path = dir.join("errors.csv");
    write_atomic(&path, output::error_table_csv(n, &columns).as_bytes())?;
    Ok(Comparison {
        tolerance: cfg.method.tolerance,
        sem_band: cfg.method.sem_band,
        passed: pairs.iter().all(|p| p.passed),
        pairs,
        file: path.strip_prefix(out).unwrap_or(&path).to_path_buf(),
    })
}
