//! Staggered differential operators.
//!
//! The interior faces and interior edges form the cochain complex of the
//! lattice of cell centers, so `curl . grad = 0` and `div . curl_adjoint = 0`
//! hold exactly, not just to truncation order.

use super::field::{CellField, EdgeField, FaceField, GridField};
use crate::error::Result;
use crate::par;

/// Circulation of `h` around every interior edge; boundary edges are zero.
pub fn curl(h: &FaceField) -> Result<EdgeField> {
    h.check_grid(&h.grid)?;
    let mut out = EdgeField::new(&h.grid);
    curl_into(h, &mut out);
    Ok(out)
}

pub(crate) fn curl_into(h: &FaceField, out: &mut EdgeField) {
    let g = h.grid;
    let [_, ny, nz] = g.cells;
    let [dx, dy, dz] = g.dx;
    let n = g.n_cells();
    let hd = &h.data;
    par::fill(&mut out.data, |e| {
        let comp = e / n;
        let t = e % n;
        let i = t / (ny * nz);
        let j = (t / nz) % ny;
        let k = t % nz;
        if !g.edge_is_interior(comp, i, j, k) {
            return 0.0;
        }
        match comp {
            0 => {
                (hd[g.face_index(2, i, j, k)] - hd[g.face_index(2, i, j - 1, k)]) / dy
                    - (hd[g.face_index(1, i, j, k)] - hd[g.face_index(1, i, j, k - 1)]) / dz
            }
            1 => {
                (hd[g.face_index(0, i, j, k)] - hd[g.face_index(0, i, j, k - 1)]) / dz
                    - (hd[g.face_index(2, i, j, k)] - hd[g.face_index(2, i - 1, j, k)]) / dx
            }
            _ => {
                (hd[g.face_index(1, i, j, k)] - hd[g.face_index(1, i - 1, j, k)]) / dx
                    - (hd[g.face_index(0, i, j, k)] - hd[g.face_index(0, i, j - 1, k)]) / dy
            }
        }
    });
}

/// Adjoint of [`curl`] under the face and edge inner products.
///
/// Boundary-normal faces receive zero, so the result is always admissible.
pub fn curl_adjoint(w: &EdgeField) -> Result<FaceField> {
    w.check_grid(&w.grid)?;
    let mut out = FaceField::new(&w.grid);
    curl_adjoint_into(w, &mut out);
    Ok(out)
}

pub(crate) fn curl_adjoint_into(w: &EdgeField, out: &mut FaceField) {
    let g = w.grid;
    let [nx, ny, nz] = g.cells;
    let [dx, dy, dz] = g.dx;
    let wd = &w.data;
    // Edge weights equal interior face weights, so the adjoint is the plain
    // transpose on interior faces. Terms from boundary edges vanish because
    // those edges carry no curl and are skipped.
    let we = |comp: usize, i: usize, j: usize, k: usize| -> f64 {
        if i >= nx || j >= ny || k >= nz || !g.edge_is_interior(comp, i, j, k) {
            0.0
        } else {
            wd[g.edge_index(comp, i, j, k)]
        }
    };
    par::fill(&mut out.data, |f| {
        let (a, i, j, k) = g.face_coords(f);
        if g.face_is_boundary(a, i, j, k) {
            return 0.0;
        }
        match a {
            // hx(i,j,k) enters curl_y(i,j,k) (+1/dz), curl_y(i,j,k+1) (-1/dz),
            // curl_z(i,j,k) (-1/dy), curl_z(i,j+1,k) (+1/dy).
            0 => {
                (we(1, i, j, k) - we(1, i, j, k + 1)) / dz
                    - (we(2, i, j, k) - we(2, i, j + 1, k)) / dy
            }
            // hy(i,j,k): curl_z(i,j,k) (+1/dx), curl_z(i+1,j,k) (-1/dx),
            // curl_x(i,j,k) (-1/dz), curl_x(i,j,k+1) (+1/dz).
            1 => {
                (we(2, i, j, k) - we(2, i + 1, j, k)) / dx
                    - (we(0, i, j, k) - we(0, i, j, k + 1)) / dz
            }
            // hz(i,j,k): curl_x(i,j,k) (+1/dy), curl_x(i,j+1,k) (-1/dy),
            // curl_y(i,j,k) (-1/dx), curl_y(i+1,j,k) (+1/dx).
            _ => {
                (we(0, i, j, k) - we(0, i, j + 1, k)) / dy
                    - (we(1, i, j, k) - we(1, i + 1, j, k)) / dx
            }
        }
    });
}

/// Net outward flux per cell divided by the cell volume.
pub fn div(h: &FaceField) -> Result<CellField> {
    h.check_grid(&h.grid)?;
    let mut out = CellField::new(&h.grid);
    div_into(h, &mut out);
    Ok(out)
}

pub(crate) fn div_into(h: &FaceField, out: &mut CellField) {
    let g = h.grid;
    let [dx, dy, dz] = g.dx;
    let hd = &h.data;
    par::fill(&mut out.data, |c| {
        let (i, j, k) = g.cell_coords(c);
        (hd[g.face_index(0, i + 1, j, k)] - hd[g.face_index(0, i, j, k)]) / dx
            + (hd[g.face_index(1, i, j + 1, k)] - hd[g.face_index(1, i, j, k)]) / dy
            + (hd[g.face_index(2, i, j, k + 1)] - hd[g.face_index(2, i, j, k)]) / dz
    });
}

/// Gradient of a cell potential on interior faces; boundary faces are zero.
///
/// On admissible fields this is minus the adjoint of [`div`].
pub fn grad(phi: &CellField) -> Result<FaceField> {
    phi.check_grid(&phi.grid)?;
    let mut out = FaceField::new(&phi.grid);
    grad_into(phi, &mut out);
    Ok(out)
}

pub(crate) fn grad_into(phi: &CellField, out: &mut FaceField) {
    let g = phi.grid;
    let pd = &phi.data;
    par::fill(&mut out.data, |f| {
        let (a, i, j, k) = g.face_coords(f);
        if g.face_is_boundary(a, i, j, k) {
            return 0.0;
        }
        let lo = match a {
            0 => g.cell_index(i - 1, j, k),
            1 => g.cell_index(i, j - 1, k),
            _ => g.cell_index(i, j, k - 1),
        };
        (pd[g.cell_index(i, j, k)] - pd[lo]) / g.dx[a]
    });
}

/// Applies `op` to every unit basis vector and collects the columns.
pub fn assemble_columns<F>(n_in: usize, n_out: usize, op: F) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut cols = Vec::with_capacity(n_in);
    let mut e = vec![0.0; n_in];
    for c in 0..n_in {
        e[c] = 1.0;
        let col = op(&e);
        debug_assert_eq!(col.len(), n_out);
        cols.push(col);
        e[c] = 0.0;
    }
    cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_face(g: &GridSpec, rng: &mut ChaCha8Rng) -> FaceField {
        let mut h = FaceField::new(g);
        for v in h.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        h
    }

    fn random_edge(g: &GridSpec, rng: &mut ChaCha8Rng) -> EdgeField {
        let mut w = EdgeField::new(g);
        for v in w.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        w
    }

    #[test]
    fn curl_of_constant_is_zero() {
        let g = build_grid([1.0, 2.0, 1.5], [3, 4, 3]).unwrap();
        let h = FaceField::sample(&g, |_| [1.0, -2.0, 0.5]);
        assert!(curl(&h).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn curl_exact_for_affine_field() {
        let g = build_grid([1.0; 3], [4, 4, 4]).unwrap();
        let h = FaceField::sample(&g, |x| [0.0, 0.0, x[0]]);
        let w = curl(&h).unwrap();
        for t in 0..g.n_cells() {
            let (i, j, k) = g.cell_coords(t);
            let v = w.triple(t);
            for comp in 0..3 {
                let expect = if comp == 1 && g.edge_is_interior(1, i, j, k) { -1.0 } else { 0.0 };
                assert!((v[comp] - expect).abs() < 1e-12, "triple {t} comp {comp}: {}", v[comp]);
            }
        }
    }

    #[test]
    fn div_exact_for_affine_field() {
        let g = build_grid([1.0, 2.0, 3.0], [3, 3, 4]).unwrap();
        let h = FaceField::sample(&g, |x| [x[0], 0.0, 0.0]);
        let d = div(&h).unwrap();
        for v in &d.data {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn div_of_curl_adjoint_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cells in [[2, 2, 2], [3, 3, 3], [4, 3, 2]] {
            let g = build_grid([1.0, 1.3, 0.7], cells).unwrap();
            for _ in 0..20 {
                let w = random_edge(&g, &mut rng);
                let h = curl_adjoint(&w).unwrap();
                let d = div(&h).unwrap();
                assert!(d.max_abs() < 1e-12 * (1.0 + h.max_abs() / g.dx[0]));
            }
        }
    }

    #[test]
    fn curl_annihilates_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = build_grid([1.0, 2.0, 1.0], [3, 4, 2]).unwrap();
        let mut phi = CellField::new(&g);
        for v in phi.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let w = curl(&grad(&phi).unwrap()).unwrap();
        assert!(w.max_abs() < 1e-12);
    }

    #[test]
    fn adjoint_identity_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        for _ in 0..100 {
            let h = random_face(&g, &mut rng);
            let w = random_edge(&g, &mut rng);
            let lhs = curl(&h).unwrap().dot(&w);
            let rhs = h.dot(&curl_adjoint(&w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn grad_is_minus_div_adjoint_on_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = build_grid([1.0, 0.5, 2.0], [3, 2, 4]).unwrap();
        let mut h = random_face(&g, &mut rng);
        h.zero_boundary();
        let mut phi = CellField::new(&g);
        for v in phi.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let lhs = div(&h).unwrap().dot(&phi);
        let rhs = -h.dot(&grad(&phi).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let bad = FaceField { grid: g, data: vec![0.0; 5] };
        assert!(curl(&bad).is_err());
        assert!(div(&bad).is_err());
    }
}
