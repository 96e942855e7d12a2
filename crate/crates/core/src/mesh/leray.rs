//! Orthogonal projection onto discretely divergence-free face fields with
//! zero normal component on the boundary.
//!
//! The pure-Neumann cell Laplacian `div . grad` is separable on the box, so
//! the Poisson solve uses the closed-form cosine eigenbasis of each 1-D
//! Neumann operator (fast diagonalization). The constant mode is dropped,
//! which fixes the zero-mean gauge of the potential.

use std::f64::consts::PI;

use super::field::{CellField, FaceField, GridField};
use super::grid::GridSpec;
use super::ops;
use crate::error::{numeric_failure, Result};

/// Relative divergence residual above which the projection reports failure.
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LerayProjector {
    grid: GridSpec,
    // Column-major orthonormal eigenvectors `basis[a][i * n + m]`.
    basis: [Vec<f64>; 3],
    eig: [Vec<f64>; 3],
}

impl LerayProjector {
    pub fn new(grid: &GridSpec) -> Self {
        let mut basis: [Vec<f64>; 3] = Default::default();
        let mut eig: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let n = grid.cells[a];
            let h = grid.dx[a];
            let mut q = vec![0.0; n * n];
            let mut lam = vec![0.0; n];
            for m in 0..n {
                let scale = if m == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                for i in 0..n {
                    q[i * n + m] = scale * (PI * m as f64 * (i as f64 + 0.5) / n as f64).cos();
                }
                let s = (PI * m as f64 / (2.0 * n as f64)).sin();
                lam[m] = -4.0 * s * s / (h * h);
            }
            basis[a] = q;
            eig[a] = lam;
        }
        LerayProjector { grid: *grid, basis, eig }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Applies `Q^T` (forward) or `Q` (backward) along axis `a`.
    fn transform_axis(&self, data: &mut [f64], a: usize, forward: bool) {
        let [nx, ny, nz] = self.grid.cells;
        let n = self.grid.cells[a];
        let stride = match a {
            0 => ny * nz,
            1 => nz,
            _ => 1,
        };
        let q = &self.basis[a];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let lines: Vec<usize> = (0..nx * ny * nz)
            .filter(|&c| {
                let (i, j, k) = self.grid.cell_coords(c);
                [i, j, k][a] == 0
            })
            .collect();
        for start in lines {
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[start + i * stride];
            }
            for (m, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                if forward {
                    for i in 0..n {
                        s += q[i * n + m] * line[i];
                    }
                } else {
                    for i in 0..n {
                        s += q[m * n + i] * line[i];
                    }
                }
                *o = s;
            }
            for (i, v) in out.iter().enumerate() {
                data[start + i * stride] = *v;
            }
        }
    }

    /// Solves `div grad phi = rhs` for the zero-mean potential.
    pub fn solve_neumann(&self, rhs: &CellField) -> CellField {
        let g = &self.grid;
        let mut data = rhs.data.clone();
        for a in 0..3 {
            self.transform_axis(&mut data, a, true);
        }
        for c in 0..g.n_cells() {
            let (i, j, k) = g.cell_coords(c);
            let lam = self.eig[0][i] + self.eig[1][j] + self.eig[2][k];
            data[c] = if c == 0 { 0.0 } else { data[c] / lam };
        }
        for a in 0..3 {
            self.transform_axis(&mut data, a, false);
        }
        CellField { grid: *g, data }
    }

    /// Projects `h`; boundary-normal faces are zeroed first.
    pub fn project(&self, h: &FaceField) -> Result<FaceField> {
        h.check_grid(&self.grid)?;
        let mut out = h.clone();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, h: &mut FaceField) -> Result<()> {
        h.zero_boundary();
        let d = ops::div(h)?;
        let before = d.max_abs();
        if before == 0.0 {
            return Ok(());
        }
        let phi = self.solve_neumann(&d);
        let gphi = ops::grad(&phi)?;
        h.axpy(-1.0, &gphi);
        let scale = before.max(h.max_abs() / self.grid.dx.iter().cloned().fold(f64::INFINITY, f64::min));
        let after = ops::div(h)?.max_abs();
        if !(after <= RESIDUAL_TOL * scale) {
            return Err(numeric_failure(
                "leray_project",
                "divergence residual above tolerance after Poisson solve",
                after / scale,
            ));
        }
        Ok(())
    }
}

/// One-shot projection; build a [`LerayProjector`] when projecting repeatedly.
pub fn leray_project(h: &FaceField) -> Result<FaceField> {
    LerayProjector::new(&h.grid).project(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, ops};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_face(g: &GridSpec, seed: u64) -> FaceField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = FaceField::new(g);
        for v in h.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        h
    }

    #[test]
    fn neumann_solve_inverts_laplacian() {
        let g = build_grid([1.0, 2.0, 0.5], [3, 4, 5]).unwrap();
        let p = LerayProjector::new(&g);
        let mut rhs = CellField::sample(&g, |x| (3.0 * x[0]).sin() + x[1] * x[2]);
        let mean = rhs.data.iter().sum::<f64>() / rhs.data.len() as f64;
        rhs.data.iter_mut().for_each(|v| *v -= mean);
        let phi = p.solve_neumann(&rhs);
        let lap = ops::div(&ops::grad(&phi).unwrap()).unwrap();
        for (a, b) in lap.data.iter().zip(&rhs.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_is_divergence_free_and_idempotent() {
        let g = build_grid([1.0, 1.2, 0.8], [4, 3, 2]).unwrap();
        let h = random_face(&g, 1);
        let ph = leray_project(&h).unwrap();
        assert!(ops::div(&ph).unwrap().max_abs() < 1e-10);
        assert_eq!(ph.boundary_normal_max(), 0.0);
        let pph = leray_project(&ph).unwrap();
        assert!(pph.sub(&ph).max_abs() < 1e-10);
    }

    #[test]
    fn gradients_are_annihilated() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let phi = CellField::sample(&g, |x| x[0] * x[1] - (2.0 * x[2]).cos());
        let gp = ops::grad(&phi).unwrap();
        let out = leray_project(&gp).unwrap();
        assert!(out.max_abs() < 1e-10);
    }

    #[test]
    fn projection_is_self_adjoint() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let a = random_face(&g, 2);
        let b = random_face(&g, 3);
        let pa = leray_project(&a).unwrap();
        let pb = leray_project(&b).unwrap();
        assert!((pa.dot(&b) - a.dot(&pb)).abs() < 1e-12);
    }
}
