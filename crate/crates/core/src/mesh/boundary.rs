use super::field::{FaceField, GridField, SurfaceField};
use super::grid::GridSpec;
use crate::error::Result;

/// Cell index along each axis of a cell adjacent to a surface face.
fn cell_at(a: usize, b: usize, c: usize, along_a: usize, u: usize, v: usize) -> [usize; 3] {
    let mut idx = [0; 3];
    idx[a] = along_a;
    idx[b] = u;
    idx[c] = v;
    idx
}

/// Visits the linear trace stencil: for each surface component index `s`
/// it calls `visit(s, face, coefficient)` for every face entering the
/// extrapolated tangential value.
fn for_each_trace_term<F: FnMut(usize, usize, f64)>(grid: &GridSpec, mut visit: F) {
    for side in 0..6 {
        let (a, b, c) = GridSpec::side_axes(side);
        let n = grid.cells[a];
        // One-sided second-order extrapolation from the two nearest cell centers.
        let (near, far) = if side % 2 == 0 { (0, 1) } else { (n - 1, n - 2) };
        for u in 0..grid.cells[b] {
            for v in 0..grid.cells[c] {
                let s = grid.surface_index(side, u, v);
                for (slot, comp) in [(0usize, b), (1usize, c)] {
                    for (along, w) in [(near, 1.5), (far, -0.5)] {
                        let idx = cell_at(a, b, c, along, u, v);
                        let mut hi = idx;
                        hi[comp] += 1;
                        visit(2 * s + slot, grid.face_index(comp, idx[0], idx[1], idx[2]), 0.5 * w);
                        visit(2 * s + slot, grid.face_index(comp, hi[0], hi[1], hi[2]), 0.5 * w);
                    }
                }
            }
        }
    }
}

/// Tangential trace of `h` on every boundary face.
pub fn tangential_trace(h: &FaceField) -> Result<SurfaceField> {
    h.check_grid(&h.grid)?;
    let mut out = SurfaceField::new(&h.grid);
    for_each_trace_term(&h.grid, |s, f, w| out.data[s] += w * h.data[f]);
    Ok(out)
}

/// Boundary pairing `sum_faces area * g . trace(h)`.
pub fn boundary_pair(g: &SurfaceField, h: &FaceField) -> Result<f64> {
    g.check_shape(h)?;
    g.check_grid(&h.grid)?;
    let tr = tangential_trace(h)?;
    Ok(g.dot(&tr))
}

/// Face field `G` with `<G, h>_faces = boundary_pair(g, h)` for every `h`.
pub fn boundary_functional(g: &SurfaceField) -> Result<FaceField> {
    g.check_grid(&g.grid)?;
    let grid = g.grid;
    let mut cov = vec![0.0; grid.n_faces()];
    for_each_trace_term(&grid, |s, f, w| cov[f] += w * g.data[s] * g.component_weight(s));
    let mut out = FaceField::new(&grid);
    for (f, v) in cov.into_iter().enumerate() {
        out.data[f] = v / out.component_weight(f);
    }
    Ok(out)
}
