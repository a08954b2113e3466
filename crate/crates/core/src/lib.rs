//! Ricci flow, realization and collapse checks for flag manifolds with three
//! isotropy summands.

#![allow(clippy::needless_range_loop)]

pub mod collapse_lab;
pub mod exec;
pub mod flag_model;
pub mod flow_engine;
pub mod ode;
pub mod orbit_lab;
pub mod realization;
pub mod verify;
pub mod ricci_field;

pub use exec::Execution;
pub use flag_model::{make_flag, t_root_table, Family, FlagError, FlagSpec, TRootTable};
pub use ricci_field::{CubicField, MetricCoords, SimplexPoint2};
