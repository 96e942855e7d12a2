//! Randomized checks of the discrete complex on one grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field::{EdgeField, FaceField, GridField};
use super::grid::GridSpec;
use super::leray::LerayProjector;
use super::ops::{curl, curl_adjoint, div};
use crate::error::Result;

pub const ADJOINT_TOL: f64 = 1e-12;
pub const DIV_TOL: f64 = 1e-12;
pub const LERAY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSuiteReport {
    pub cells: [usize; 3],
    pub trials: usize,
    /// `max |div curl^T w| / (1 + |curl^T w|_inf / dx_min)`.
    pub div_curl_adjoint: f64,
    /// `max |<curl h, w> - <h, curl^T w>| / max(|<curl h, w>|, 1)`.
    pub adjointness_defect: f64,
    /// `max |P P h - P h| / |h|`.
    pub leray_idempotence: f64,
    /// `max |<P a, b> - <a, P b>| / (|a| |b|)`.
    pub leray_symmetry: f64,
    pub pass: bool,
}

fn random_face(g: &GridSpec, rng: &mut ChaCha8Rng) -> FaceField {
    let mut h = FaceField::new(g);
    h.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    h
}

fn random_edge(g: &GridSpec, rng: &mut ChaCha8Rng) -> EdgeField {
    let mut w = EdgeField::new(g);
    w.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    w
}

/// Runs `trials` random instances of each identity.
pub fn structure_suite(grid: &GridSpec, trials: usize, seed: u64) -> Result<MeshSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = LerayProjector::new(grid);
    let dmin = grid.dx.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut dca, mut adj, mut idem, mut sym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let w = random_edge(grid, &mut rng);
        let h = random_face(grid, &mut rng);
        let ctw = curl_adjoint(&w)?;
        dca = dca.max(div(&ctw)?.max_abs() / (1.0 + ctw.max_abs() / dmin));
        let lhs = curl(&h)?.dot(&w);
        let rhs = h.dot(&ctw);
        adj = adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));

        let mut a = h;
        a.zero_boundary();
        let mut b = random_face(grid, &mut rng);
        b.zero_boundary();
        let pa = proj.project(&a)?;
        let ppa = proj.project(&pa)?;
        idem = idem.max(ppa.sub(&pa).norm_sq().sqrt() / a.norm_sq().sqrt());
        let pb = proj.project(&b)?;
        let scale = (a.norm_sq() * b.norm_sq()).sqrt();
        sym = sym.max((pa.dot(&b) - a.dot(&pb)).abs() / scale);
    }
    Ok(MeshSuiteReport {
        cells: grid.cells,
        trials,
        div_curl_adjoint: dca,
        adjointness_defect: adj,
        leray_idempotence: idem,
        leray_symmetry: sym,
        pass: dca <= DIV_TOL && adj <= ADJOINT_TOL && idem <= LERAY_TOL && sym <= LERAY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;

    #[test]
    fn suite_passes_on_small_grids() {
        for cells in [[2, 2, 2], [4, 3, 2]] {
            let g = build_grid([1.0, 0.8, 1.3], cells).unwrap();
            let rep = structure_suite(&g, 10, 1).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }
}
