use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Axis-aligned box `[0, ex] x [0, ey] x [0, ez]` split into a uniform
/// staggered (MAC) grid.
///
/// Index conventions, all row-major with `i` (x) slowest and `k` (z) fastest:
///
/// * cells: `(i, j, k)` with `i < nx`, `j < ny`, `k < nz`.
/// * faces of axis `a`: one more entry along `a`, e.g. x-faces are
///   `(i, j, k)` with `i <= nx`, located at `(i dx, (j+1/2) dy, (k+1/2) dz)`.
///   Storage is x-faces, then y-faces, then z-faces.
/// * edges: grouped in triples anchored at the lower corner node of each
///   cell. Triple `(i, j, k)` holds the x-edge at `((i+1/2) dx, j dy, k dz)`,
///   the y-edge at `(i dx, (j+1/2) dy, k dz)` and the z-edge at
///   `(i dx, j dy, (k+1/2) dz)`. Storage is all x-components, then y, then z.
///   Edges lying on the boundary carry no curl and stay zero.
/// * surface: six sides ordered x-, x+, y-, y+, z-, z+; each side lists its
///   faces row-major over the two remaining axes in increasing axis order,
///   two tangential components per face (same axis order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extents: [f64; 3],
    pub cells: [usize; 3],
    pub dx: [f64; 3],
}

/// Builds a grid, rejecting non-positive extents and fewer than two cells per axis.
pub fn build_grid(extents: [f64; 3], cells: [usize; 3]) -> Result<GridSpec> {
    for a in 0..3 {
        if !(extents[a].is_finite() && extents[a] > 0.0) {
            return invalid(format!("extent along axis {a} must be positive, got {}", extents[a]));
        }
        if cells[a] < 2 {
            return invalid(format!("need at least 2 cells along axis {a}, got {}", cells[a]));
        }
    }
    let dx = [0, 1, 2].map(|a| extents[a] / cells[a] as f64);
    Ok(GridSpec { extents, cells, dx })
}

impl GridSpec {
    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [a, b, c] = self.extents;
        2.0 * (a * b + b * c + a * c)
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.cells[1] + j) * self.cells[2] + k
    }

    #[inline]
    pub fn cell_coords(&self, c: usize) -> (usize, usize, usize) {
        let [_, ny, nz] = self.cells;
        (c / (ny * nz), (c / nz) % ny, c % nz)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.dx[0],
            (j as f64 + 0.5) * self.dx[1],
            (k as f64 + 0.5) * self.dx[2],
        ]
    }

    /// Shape of the face array for axis `a`.
    #[inline]
    pub fn face_dims(&self, a: usize) -> [usize; 3] {
        let mut d = self.cells;
        d[a] += 1;
        d
    }

    pub fn n_faces_axis(&self, a: usize) -> usize {
        self.face_dims(a).iter().product()
    }

    pub fn n_faces(&self) -> usize {
        (0..3).map(|a| self.n_faces_axis(a)).sum()
    }

    #[inline]
    pub fn face_offset(&self, a: usize) -> usize {
        (0..a).map(|b| self.n_faces_axis(b)).sum()
    }

    #[inline]
    pub fn face_index(&self, a: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(a);
        self.face_offset(a) + (i * d[1] + j) * d[2] + k
    }

    /// Inverse of [`face_index`](Self::face_index): `(axis, i, j, k)`.
    pub fn face_coords(&self, f: usize) -> (usize, usize, usize, usize) {
        let mut rem = f;
        for a in 0..3 {
            let n = self.n_faces_axis(a);
            if rem < n {
                let d = self.face_dims(a);
                return (a, rem / (d[1] * d[2]), (rem / d[2]) % d[1], rem % d[2]);
            }
            rem -= n;
        }
        panic!("face index {f} out of range");
    }

    pub fn face_center(&self, a: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let idx = [i, j, k];
        let mut x = [0.0; 3];
        for b in 0..3 {
            let shift = if b == a { 0.0 } else { 0.5 };
            x[b] = (idx[b] as f64 + shift) * self.dx[b];
        }
        x
    }

    /// Whether a face lies on the boundary (its normal is the boundary normal).
    #[inline]
    pub fn face_is_boundary(&self, a: usize, i: usize, j: usize, k: usize) -> bool {
        let idx = [i, j, k];
        idx[a] == 0 || idx[a] == self.cells[a]
    }

    /// Quadrature weight of a face: the dual volume, halved on the boundary.
    #[inline]
    pub fn face_weight(&self, a: usize, i: usize, j: usize, k: usize) -> f64 {
        let v = self.cell_volume();
        if self.face_is_boundary(a, i, j, k) {
            0.5 * v
        } else {
            v
        }
    }

    pub fn n_edges(&self) -> usize {
        3 * self.n_cells()
    }

    #[inline]
    pub fn edge_index(&self, comp: usize, i: usize, j: usize, k: usize) -> usize {
        comp * self.n_cells() + self.cell_index(i, j, k)
    }

    /// An edge is interior when it does not lie on the boundary surface.
    #[inline]
    pub fn edge_is_interior(&self, comp: usize, i: usize, j: usize, k: usize) -> bool {
        let idx = [i, j, k];
        (0..3).filter(|&b| b != comp).all(|b| idx[b] >= 1)
    }

    pub fn edge_center(&self, comp: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let idx = [i, j, k];
        let mut x = [0.0; 3];
        for b in 0..3 {
            let shift = if b == comp { 0.5 } else { 0.0 };
            x[b] = (idx[b] as f64 + shift) * self.dx[b];
        }
        x
    }

    /// The two tangential axes of a side, in increasing order.
    #[inline]
    pub fn side_axes(side: usize) -> (usize, usize, usize) {
        let a = side / 2;
        let (b, c) = match a {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        (a, b, c)
    }

    pub fn n_side_faces(&self, side: usize) -> usize {
        let (_, b, c) = Self::side_axes(side);
        self.cells[b] * self.cells[c]
    }

    pub fn side_offset(&self, side: usize) -> usize {
        (0..side).map(|s| self.n_side_faces(s)).sum()
    }

    pub fn n_surface_faces(&self) -> usize {
        (0..6).map(|s| self.n_side_faces(s)).sum()
    }

    /// Index of surface face `(u, v)` on `side`, before the component factor 2.
    #[inline]
    pub fn surface_index(&self, side: usize, u: usize, v: usize) -> usize {
        let (_, _, c) = Self::side_axes(side);
        self.side_offset(side) + u * self.cells[c] + v
    }

    pub fn side_face_area(&self, side: usize) -> f64 {
        let (_, b, c) = Self::side_axes(side);
        self.dx[b] * self.dx[c]
    }

    /// Center of surface face `(u, v)` on `side`.
    pub fn surface_center(&self, side: usize, u: usize, v: usize) -> [f64; 3] {
        let (a, b, c) = Self::side_axes(side);
        let mut x = [0.0; 3];
        x[a] = if side % 2 == 0 { 0.0 } else { self.extents[a] };
        x[b] = (u as f64 + 0.5) * self.dx[b];
        x[c] = (v as f64 + 0.5) * self.dx[c];
        x
    }

    /// One-line description of the index order, echoed into run metadata.
    pub fn layout_description(&self) -> String {
        format!(
            "cells {}x{}x{} row-major (i slowest); faces x|y|z blocks; edges triple-per-cell x|y|z blocks; surface sides x-,x+,y-,y+,z-,z+",
            self.cells[0], self.cells[1], self.cells[2]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_is_extent_over_cells() {
        let g = build_grid([1.0, 1.0, 1.0], [4, 4, 4]).unwrap();
        assert_eq!(g.dx, [0.25, 0.25, 0.25]);
        let g = build_grid([2.0, 1.0, 1.0], [4, 2, 2]).unwrap();
        assert_eq!(g.dx, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(build_grid([1.0, 1.0, 1.0], [1, 4, 4]).is_err());
        assert!(build_grid([0.0, 1.0, 1.0], [4, 4, 4]).is_err());
        assert!(build_grid([1.0, -1.0, 1.0], [4, 4, 4]).is_err());
    }

    #[test]
    fn face_index_round_trips() {
        let g = build_grid([1.0, 2.0, 3.0], [2, 3, 4]).unwrap();
        for f in 0..g.n_faces() {
            let (a, i, j, k) = g.face_coords(f);
            assert_eq!(g.face_index(a, i, j, k), f);
        }
    }

    #[test]
    fn face_weights_sum_to_volume_per_axis() {
        let g = build_grid([1.0, 2.0, 3.0], [2, 3, 4]).unwrap();
        for a in 0..3 {
            let d = g.face_dims(a);
            let mut s = 0.0;
            for i in 0..d[0] {
                for j in 0..d[1] {
                    for k in 0..d[2] {
                        s += g.face_weight(a, i, j, k);
                    }
                }
            }
            assert!((s - g.volume()).abs() < 1e-12);
        }
    }
}
