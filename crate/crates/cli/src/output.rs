//! CSV layouts and atomic file writes.
//!
//! Every CSV starts with a header row; numbers use 17 significant digits so
//! binary64 values survive a round trip. Entry `(n, m)` columns cover the
//! upper triangle `n <= m`, row by row.

use std::io::Write;
use std::path::Path;

use disorder_chain::prelude::DensityTrajectory;

use crate::CliError;

pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn upper_triangle(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

fn table(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `t, re_rho_n_m, im_rho_n_m, ...`
pub fn trajectory_csv(times: &[f64], traj: &DensityTrajectory) -> String {
    let entries = upper_triangle(traj.n());
    let mut header = vec!["t".to_string()];
    for (i, j) in &entries {
        header.push(format!("re_rho_{i}_{j}"));
        header.push(format!("im_rho_{i}_{j}"));
    }
    let rows = times.iter().zip(&traj.rho).map(|(&t, r)| {
        let mut row = vec![number(t)];
        for &(i, j) in &entries {
            row.push(number(r[(i, j)].re));
            row.push(number(r[(i, j)].im));
        }
        row
    });
    table(&header, rows)
}

/// `t, sem_rho_n_m, ...`: standard error of the complex mean per entry.
pub fn sem_csv(times: &[f64], traj: &DensityTrajectory) -> Option<String> {
    let errors = traj.errors.as_ref()?;
    let entries = upper_triangle(traj.n());
    let mut header = vec!["t".to_string()];
    header.extend(entries.iter().map(|(i, j)| format!("sem_rho_{i}_{j}")));
    let rows = times.iter().zip(errors).map(|(&t, e)| {
        let mut row = vec![number(t)];
        row.extend(entries.iter().map(|&(i, j)| number(e[(i, j)])));
        row
    });
    Some(table(&header, rows))
}

/// `t, abs_rho_n_m, ...` for `n < m`.
pub fn coherence_csv(times: &[f64], traj: &DensityTrajectory) -> String {
    let entries: Vec<_> = upper_triangle(traj.n()).into_iter().filter(|(i, j)| i < j).collect();
    let mut header = vec!["t".to_string()];
    header.extend(entries.iter().map(|(i, j)| format!("abs_rho_{i}_{j}")));
    let rows = times.iter().zip(&traj.rho).map(|(&t, r)| {
        let mut row = vec![number(t)];
        row.extend(entries.iter().map(|&(i, j)| number(r[(i, j)].norm())));
        row
    });
    table(&header, rows)
}

/// `t, p_0, p_1, ...`
pub fn populations_csv(times: &[f64], traj: &DensityTrajectory) -> String {
    let n = traj.n();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("p_{i}")));
    let rows = times.iter().zip(&traj.rho).map(|(&t, r)| {
        let mut row = vec![number(t)];
        row.extend((0..n).map(|i| number(r[(i, i)].re)));
        row
    });
    table(&header, rows)
}

/// `t, boundary_population`
pub fn leakage_csv(times: &[f64], population: &[f64]) -> String {
    let header = ["t".to_string(), "boundary_population".to_string()];
    table(&header, times.iter().zip(population).map(|(&t, &p)| vec![number(t), number(p)]))
}

/// `entry, <column>, ...` with one row per upper-triangle entry.
pub fn error_table_csv(n: usize, columns: &[(String, Vec<f64>)]) -> String {
    let mut header = vec!["entry".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    let rows = upper_triangle(n).into_iter().enumerate().map(|(k, (i, j))| {
        let mut row = vec![format!("rho_{i}_{j}")];
        row.extend(columns.iter().map(|(_, v)| number(v[k])));
        row
    });
    table(&header, rows)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
