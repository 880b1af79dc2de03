//! Run configuration: TOML on disk, or the `config` member of a run
//! manifest written by an earlier run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: System,
    pub initial: Initial,
    pub time: Time,
    pub method: MethodBlock,
    #[serde(default)]
    pub numeric: Numeric,
    #[serde(default)]
    pub output: Output,
    /// Independent runs sharing everything but the disorder distributions
    /// (and, once resolved, the depths).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    /// Energy unit shared by `h0`, couplings and distribution widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub h0: Matrix,
    pub disorder: Vec<Axis>,
}

/// One disorder variable: `lambda C` (or `sum_p lambda^p A_p`) and its
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Vec<Matrix>>,
    pub distribution: Distribution,
}

/// Inline rows, or a text file with one row per line. Entries are `re` or
/// `[re, im]` inline and `re` or `re,im` in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    Rows(Vec<Vec<Entry>>),
    File { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    pub fn value(self) -> disorder_chain::C64 {
        match self {
            Entry::Real(x) => disorder_chain::C64::new(x, 0.0),
            Entry::Complex([re, im]) => disorder_chain::C64::new(re, im),
        }
    }
}

/// A family with its width parameter and an optional absolute window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Gaussian {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<[f64; 2]>,
    },
    Cauchy {
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<[f64; 2]>,
    },
    Semicircle {
        w: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<[f64; 2]>,
    },
    Uniform {
        v: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<[f64; 2]>,
    },
    /// Two-column text file of `(lambda, density)`.
    Tabulated {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Initial {
    /// The same amplitudes for every realization.
    Localized { amplitudes: Vec<Entry> },
    /// Realization-dependent amplitudes tabulated against the single
    /// disorder variable: each line is `lambda re_0 im_0 re_1 im_1 ...`.
    Tabulated { file: PathBuf },
    /// An eigenstate ensemble: `energy` replaces the distribution of the
    /// single disorder variable.
    Spectral { amplitudes: Vec<Entry>, energy: Distribution },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// Inverse energy units, `hbar = 1`.
    #[default]
    Natural,
    /// Picoseconds, with energies in cm^-1.
    Ps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Time {
    pub t_max: f64,
    /// Grid points on `[0, t_max]`, both ends included.
    pub n_steps: usize,
    #[serde(default)]
    pub unit: TimeUnit,
}

/// Angular frequency per cm^-1, in rad/ps.
pub const CM_TO_RAD_PER_PS: f64 = 2.0 * std::f64::consts::PI * 2.997_924_58e-2;

impl Time {
    /// Factor taking output times to the `hbar = 1` times of the library.
    pub fn scale(&self) -> f64 {
        match self.unit {
            TimeUnit::Natural => 1.0,
            TimeUnit::Ps => CM_TO_RAD_PER_PS,
        }
    }

    /// Output grid, last point exactly `t_max`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.n_steps;
        let mut t: Vec<f64> = (0..n).map(|i| self.t_max * i as f64 / (n - 1) as f64).collect();
        t[n - 1] = self.t_max;
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Chain,
    Mc,
    Quad,
    Analytic,
    Compare,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Chain => "chain",
            MethodName::Mc => "mc",
            MethodName::Quad => "quad",
            MethodName::Analytic => "analytic",
            MethodName::Compare => "compare",
        }
    }

    /// Whether the method needs recurrence coefficients of the measure.
    pub fn needs_moments(self) -> bool {
        matches!(self, MethodName::Chain | MethodName::Quad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodBlock {
    pub name: MethodName,
    /// Methods run by `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compare: Vec<MethodName>,
    /// Largest accepted `max_t |rho_a - rho_b|` between deterministic methods.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Accepted deviation from Monte Carlo, in standard errors.
    #[serde(default = "default_sem_band")]
    pub sem_band: f64,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_sem_band() -> f64 {
    4.0
}

impl MethodBlock {
    pub fn methods(&self) -> Vec<MethodName> {
        if self.name == MethodName::Compare {
            self.compare.clone()
        } else {
            vec![self.name]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depths {
    Fixed(Vec<usize>),
    Auto(AutoKeyword),
}

impl Default for Depths {
    fn default() -> Self {
        Depths::Auto(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuadOrder {
    All(usize),
    PerAxis(Vec<usize>),
}

impl QuadOrder {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            QuadOrder::All(q) => vec![*q],
            QuadOrder::PerAxis(q) => q.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numeric {
    pub tol: f64,
    pub depths: Depths,
    pub depth_cap: usize,
    /// Symmetric window `+-cutoff * width` for Gaussian and Cauchy axes that
    /// declare no cutoff of their own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    pub seed: u64,
    pub samples: usize,
    pub quad_order: QuadOrder,
    pub leakage_threshold: f64,
    /// Gauss points per axis when projecting tabulated initial amplitudes;
    /// by default `max(2048, 2 (depth + 1))`, the same for every trial depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansion_points: Option<usize>,
    pub norm_warn: f64,
    pub norm_error: f64,
}

impl Default for Numeric {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            depths: Depths::default(),
            depth_cap: disorder_chain::prelude::DEFAULT_DEPTH_CAP,
            cutoff: None,
            seed: 0,
            samples: 100_000,
            quad_order: QuadOrder::All(40),
            leakage_threshold: 1e-8,
            expansion_points: None,
            norm_warn: 1e-8,
            norm_error: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Every upper-triangle entry of the averaged density matrix.
    Trajectory,
    /// `|rho_n_m|` for `n < m`.
    Coherence,
    /// Diagonal entries.
    Populations,
    /// Boundary-shell population (chain only).
    Leakage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Trajectory] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// One per disorder axis; the system's own when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<Distribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
}

impl RunConfig {
    /// Reads TOML, or JSON for `.json` files. A JSON object with a `config`
    /// member (a run manifest) yields that member. Relative input paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(&path, e.into_inner().message().trim().to_string())
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config("", format!("invalid JSON: {e}")))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(&path, e.into_inner().to_string())
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_matrix = |m: &mut Matrix| {
            if let Matrix::File { file } = m {
                fix(file);
            }
        };
        let fix_dist = |d: &mut Distribution| {
            if let Distribution::Tabulated { file, .. } = d {
                fix(file);
            }
        };
        fix_matrix(&mut self.system.h0);
        for axis in &mut self.system.disorder {
            if let Some(c) = &mut axis.coupling {
                fix_matrix(c);
            }
            for m in axis.polynomial.iter_mut().flatten() {
                fix_matrix(m);
            }
            fix_dist(&mut axis.distribution);
        }
        match &mut self.initial {
            Initial::Tabulated { file } => fix(file),
            Initial::Spectral { energy, .. } => fix_dist(energy),
            Initial::Localized { .. } => {}
        }
        for v in &mut self.variants {
            for d in v.distributions.iter_mut().flatten() {
                fix_dist(d);
            }
        }
    }
}
