use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{invalid, Result};
use crate::par;

/// Kind tag used in snapshot headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Face,
    Edge,
    Cell,
    Surface,
}

impl FieldKind {
    pub fn tag(self) -> &'static str {
        match self {
            FieldKind::Face => "face",
            FieldKind::Edge => "edge",
            FieldKind::Cell => "cell",
            FieldKind::Surface => "surface",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "face" => Some(FieldKind::Face),
            "edge" => Some(FieldKind::Edge),
            "cell" => Some(FieldKind::Cell),
            "surface" => Some(FieldKind::Surface),
            _ => None,
        }
    }

    pub fn len(self, grid: &GridSpec) -> usize {
        match self {
            FieldKind::Face => grid.n_faces(),
            FieldKind::Edge => grid.n_edges(),
            FieldKind::Cell => grid.n_cells(),
            FieldKind::Surface => 2 * grid.n_surface_faces(),
        }
    }
}

/// Shared behaviour of all grid-located fields.
pub trait GridField: Sized + Clone + Sync + Send {
    const KIND: FieldKind;

    fn grid(&self) -> &GridSpec;
    fn data(&self) -> &[f64];
    fn data_mut(&mut self) -> &mut [f64];
    fn from_parts(grid: GridSpec, data: Vec<f64>) -> Self;

    /// Number of quadrature locations (a location may hold several components).
    fn n_locations(&self) -> usize;
    /// Quadrature weight of location `loc`.
    fn location_weight(&self, loc: usize) -> f64;
    /// Euclidean magnitude of the value at location `loc`.
    fn location_magnitude(&self, loc: usize) -> f64;
    /// Weight applied to component `idx` in the L2 inner product.
    fn component_weight(&self, idx: usize) -> f64;

    fn zeros(grid: &GridSpec) -> Self {
        Self::from_parts(*grid, vec![0.0; Self::KIND.len(grid)])
    }

    fn from_vec(grid: &GridSpec, data: Vec<f64>) -> Result<Self> {
        let n = Self::KIND.len(grid);
        if data.len() != n {
            return invalid(format!(
                "{} field needs {n} values, got {}",
                Self::KIND.tag(),
                data.len()
            ));
        }
        Ok(Self::from_parts(*grid, data))
    }

    fn check_shape<F: GridField>(&self, other: &F) -> Result<()> {
        if self.grid() != other.grid() {
            return invalid("fields live on different grids");
        }
        if F::KIND == Self::KIND && other.data().len() != self.data().len() {
            return invalid("field lengths differ");
        }
        Ok(())
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.grid() != grid || self.data().len() != Self::KIND.len(grid) {
            return invalid(format!("{} field does not match the grid", Self::KIND.tag()));
        }
        Ok(())
    }

    fn scaled(&self, s: f64) -> Self {
        let data = self.data().iter().map(|v| v * s).collect();
        Self::from_parts(*self.grid(), data)
    }

    /// `self += s * other`.
    fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.data_mut().iter_mut().zip(other.data()) {
            *a += s * b;
        }
    }

    fn sub(&self, other: &Self) -> Self {
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Self::from_parts(*self.grid(), data)
    }

    fn add(&self, other: &Self) -> Self {
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Self::from_parts(*self.grid(), data)
    }

    /// Mesh-weighted L2 inner product.
    fn dot(&self, other: &Self) -> f64 {
        let a = self.data();
        let b = other.data();
        par::sum(a.len(), |i| self.component_weight(i) * a[i] * b[i])
    }

    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Mesh-weighted `L^p` norm over location magnitudes; `p = inf` is the max magnitude.
    fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return invalid(format!("norm exponent must be >= 1, got {p}"));
        }
        let n = self.n_locations();
        if p.is_infinite() {
            return Ok(par::max(n, |l| self.location_magnitude(l)));
        }
        let s = par::sum(n, |l| {
            let m = self.location_magnitude(l);
            if m == 0.0 {
                0.0
            } else {
                self.location_weight(l) * m.powf(p)
            }
        });
        Ok(s.powf(1.0 / p))
    }

    fn max_abs(&self) -> f64 {
        self.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }
}

macro_rules! field_struct {
    ($(#[$doc:meta])* $name:ident, $kind:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            pub grid: GridSpec,
            pub data: Vec<f64>,
        }

        impl $name {
            pub fn new(grid: &GridSpec) -> Self {
                <Self as GridField>::zeros(grid)
            }
        }
    };
}

field_struct!(
    /// Normal component of a vector field on every face, boundary faces included.
    FaceField,
    FieldKind::Face
);
field_struct!(
    /// Edge circulation densities, three components per edge triple.
    EdgeField,
    FieldKind::Edge
);
field_struct!(
    /// One scalar per cell.
    CellField,
    FieldKind::Cell
);
field_struct!(
    /// Two tangential components per boundary face.
    SurfaceField,
    FieldKind::Surface
);

impl GridField for FaceField {
    const KIND: FieldKind = FieldKind::Face;
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn from_parts(grid: GridSpec, data: Vec<f64>) -> Self {
        FaceField { grid, data }
    }
    fn n_locations(&self) -> usize {
        self.data.len()
    }
    fn location_weight(&self, loc: usize) -> f64 {
        self.component_weight(loc)
    }
    fn location_magnitude(&self, loc: usize) -> f64 {
        self.data[loc].abs()
    }
    fn component_weight(&self, idx: usize) -> f64 {
        let (a, i, j, k) = self.grid.face_coords(idx);
        self.grid.face_weight(a, i, j, k)
    }
}

impl FaceField {
    /// Samples the normal component of `f` at every face center.
    pub fn sample<F: Fn([f64; 3]) -> [f64; 3]>(grid: &GridSpec, f: F) -> Self {
        let mut out = FaceField::new(grid);
        for a in 0..3 {
            let d = grid.face_dims(a);
            for i in 0..d[0] {
                for j in 0..d[1] {
                    for k in 0..d[2] {
                        let x = grid.face_center(a, i, j, k);
                        out.data[grid.face_index(a, i, j, k)] = f(x)[a];
                    }
                }
            }
        }
        out
    }

    /// Largest absolute value on boundary-normal faces.
    pub fn boundary_normal_max(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for a in 0..3 {
            let d = g.face_dims(a);
            for i in 0..d[0] {
                for j in 0..d[1] {
                    for k in 0..d[2] {
                        if g.face_is_boundary(a, i, j, k) {
                            m = m.max(self.data[g.face_index(a, i, j, k)].abs());
                        }
                    }
                }
            }
        }
        m
    }

    /// Sets all boundary-normal faces to zero.
    pub fn zero_boundary(&mut self) {
        let g = self.grid;
        for a in 0..3 {
            let d = g.face_dims(a);
            for j in 0..d[1] {
                for k in 0..d[2] {
                    for i in 0..d[0] {
                        if g.face_is_boundary(a, i, j, k) {
                            self.data[g.face_index(a, i, j, k)] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

impl GridField for EdgeField {
    const KIND: FieldKind = FieldKind::Edge;
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn from_parts(grid: GridSpec, data: Vec<f64>) -> Self {
        EdgeField { grid, data }
    }
    fn n_locations(&self) -> usize {
        self.grid.n_cells()
    }
    fn location_weight(&self, _loc: usize) -> f64 {
        self.grid.cell_volume()
    }
    fn location_magnitude(&self, loc: usize) -> f64 {
        let v = self.triple(loc);
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }
    fn component_weight(&self, _idx: usize) -> f64 {
        self.grid.cell_volume()
    }
}

impl EdgeField {
    /// The three components of triple `t`.
    #[inline]
    pub fn triple(&self, t: usize) -> [f64; 3] {
        let n = self.grid.n_cells();
        [self.data[t], self.data[n + t], self.data[2 * n + t]]
    }

    #[inline]
    pub fn set_triple(&mut self, t: usize, v: [f64; 3]) {
        let n = self.grid.n_cells();
        self.data[t] = v[0];
        self.data[n + t] = v[1];
        self.data[2 * n + t] = v[2];
    }

    /// Magnitude per triple, as a cell-indexed field.
    pub fn magnitudes(&self) -> CellField {
        let mut out = CellField::new(&self.grid);
        par::fill(&mut out.data, |t| self.location_magnitude(t));
        out
    }

    /// Fills every triple with the same vector, boundary edges included.
    pub fn constant(grid: &GridSpec, v: [f64; 3]) -> Self {
        let mut out = EdgeField::new(grid);
        for t in 0..grid.n_cells() {
            out.set_triple(t, v);
        }
        out
    }
}

impl GridField for CellField {
    const KIND: FieldKind = FieldKind::Cell;
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn from_parts(grid: GridSpec, data: Vec<f64>) -> Self {
        CellField { grid, data }
    }
    fn n_locations(&self) -> usize {
        self.data.len()
    }
    fn location_weight(&self, _loc: usize) -> f64 {
        self.grid.cell_volume()
    }
    fn location_magnitude(&self, loc: usize) -> f64 {
        self.data[loc].abs()
    }
    fn component_weight(&self, _idx: usize) -> f64 {
        self.grid.cell_volume()
    }
}

impl CellField {
    pub fn constant(grid: &GridSpec, v: f64) -> Self {
        CellField {
            grid: *grid,
            data: vec![v; grid.n_cells()],
        }
    }

    pub fn sample<F: Fn([f64; 3]) -> f64>(grid: &GridSpec, f: F) -> Self {
        let mut out = CellField::new(grid);
        for c in 0..grid.n_cells() {
            let (i, j, k) = grid.cell_coords(c);
            out.data[c] = f(grid.cell_center(i, j, k));
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl GridField for SurfaceField {
    const KIND: FieldKind = FieldKind::Surface;
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn from_parts(grid: GridSpec, data: Vec<f64>) -> Self {
        SurfaceField { grid, data }
    }
    fn n_locations(&self) -> usize {
        self.data.len() / 2
    }
    fn location_weight(&self, loc: usize) -> f64 {
        let side = self.side_of(loc);
        self.grid.side_face_area(side)
    }
    fn location_magnitude(&self, loc: usize) -> f64 {
        let (a, b) = (self.data[2 * loc], self.data[2 * loc + 1]);
        (a * a + b * b).sqrt()
    }
    fn component_weight(&self, idx: usize) -> f64 {
        self.location_weight(idx / 2)
    }
}

impl SurfaceField {
    fn side_of(&self, loc: usize) -> usize {
        let mut rem = loc;
        for s in 0..6 {
            let n = self.grid.n_side_faces(s);
            if rem < n {
                return s;
            }
            rem -= n;
        }
        panic!("surface location {loc} out of range");
    }

    /// Samples the tangential components of `f` at boundary face centers.
    pub fn sample<F: Fn([f64; 3]) -> [f64; 3]>(grid: &GridSpec, f: F) -> Self {
        let mut out = SurfaceField::new(grid);
        for side in 0..6 {
            let (_, b, c) = GridSpec::side_axes(side);
            for u in 0..grid.cells[b] {
                for v in 0..grid.cells[c] {
                    let x = grid.surface_center(side, u, v);
                    let val = f(x);
                    let s = grid.surface_index(side, u, v);
                    out.data[2 * s] = val[b];
                    out.data[2 * s + 1] = val[c];
                }
            }
        }
        out
    }

    /// Same two local tangential components on every boundary face.
    pub fn constant_local(grid: &GridSpec, t: [f64; 2]) -> Self {
        let n = grid.n_surface_faces();
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            data.extend_from_slice(&t);
        }
        SurfaceField { grid: *grid, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;

    #[test]
    fn zero_field_has_zero_norm() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        assert_eq!(FaceField::new(&g).lp_norm(2.0).unwrap(), 0.0);
        assert_eq!(EdgeField::new(&g).lp_norm(f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn unit_cell_field_on_unit_box_has_unit_norm() {
        let g = build_grid([1.0; 3], [4, 3, 5]).unwrap();
        let c = CellField::constant(&g, 1.0);
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert!((c.lp_norm(p).unwrap() - 1.0).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn rejects_sub_unit_exponent() {
        let g = build_grid([1.0; 3], [2, 2, 2]).unwrap();
        assert!(CellField::new(&g).lp_norm(0.5).is_err());
    }

    #[test]
    fn l2_norm_matches_direct_summation() {
        let g = build_grid([1.0, 2.0, 0.5], [3, 2, 4]).unwrap();
        let mut h = FaceField::new(&g);
        for (n, v) in h.data.iter_mut().enumerate() {
            *v = ((n * 37 % 11) as f64 - 5.0) / 3.0;
        }
        let mut direct = 0.0;
        for n in 0..g.n_faces() {
            let (a, i, j, k) = g.face_coords(n);
            direct += g.face_weight(a, i, j, k) * h.data[n] * h.data[n];
        }
        assert!((h.lp_norm(2.0).unwrap() - direct.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn edge_infinity_norm_uses_triple_magnitude() {
        let g = build_grid([1.0; 3], [2, 2, 2]).unwrap();
        let w = EdgeField::constant(&g, [3.0, 4.0, 0.0]);
        assert!((w.lp_norm(f64::INFINITY).unwrap() - 5.0).abs() < 1e-15);
        assert!((w.lp_norm(2.0).unwrap() - 5.0).abs() < 1e-12);
    }
}
