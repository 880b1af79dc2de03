//! Disorder distributions, their orthogonal-polynomial recurrence
//! coefficients, energy cutoffs, characteristic functions and sampling.

mod distribution;
mod recurrence;
mod sampling;

pub use distribution::{
    apply_cutoff, bessel_ratio, characteristic_function, DisorderDistribution, Family, TabulatedDensity,
};
pub use recurrence::{
    default_grid_points, discretize, recurrence_analytic, recurrence_stieltjes, recurrence_table, RecurrenceTable,
};
pub use sampling::sample;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("recurrence order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("no closed-form recurrence for the {0} family")]
    UnsupportedFamily(&'static str),
    #[error("operation requires an uncut distribution")]
    RequiresUncut,
    #[error("moments undefined; set cutoff")]
    MomentsUndefined,
    #[error("measure has unbounded support; set a cutoff")]
    UnboundedSupport,
    #[error("cutoff window carries no probability mass")]
    EmptySupport,
    #[error("grid of {grid_points} points too coarse for order {order} (need at least 4 per order)")]
    InsufficientGrid { order: usize, grid_points: usize },
    #[error("recurrence broke down at beta_{k} = {beta}; order too large for the grid")]
    NumericalBreakdown { k: usize, beta: f64 },
    #[error("recurrence table of order {available} too short, need {needed}")]
    TableTooShort { needed: usize, available: usize },
}
