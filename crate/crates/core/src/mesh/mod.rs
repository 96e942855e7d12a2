//! Staggered-grid geometry, fields, differential operators and norms.

mod boundary;
mod field;
mod grid;
mod leray;
mod ops;
mod poincare;
mod snapshot;
mod suite;

pub use boundary::{boundary_functional, boundary_pair, tangential_trace};
pub use field::{CellField, EdgeField, FaceField, FieldKind, GridField, SurfaceField};
pub use grid::{build_grid, GridSpec};
pub use leray::{leray_project, LerayProjector};
pub use ops::{assemble_columns, curl, curl_adjoint, div, grad};
pub(crate) use ops::curl_adjoint_into;
pub use poincare::{
    estimate_poincare, estimate_poincare_target, sobolev_limit, trace_limit, working_exponents, PoincareEstimate,
    QuotientTarget,
};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use suite::{structure_suite, MeshSuiteReport, ADJOINT_TOL, DIV_TOL, LERAY_TOL};

/// `L^p` norm of any grid field (see [`GridField::lp_norm`]).
pub fn lp_norm<F: GridField>(field: &F, p: f64) -> crate::error::Result<f64> {
    field.lp_norm(p)
}
