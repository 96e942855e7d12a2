//! Dense reference solvers for tiny grids.
//!
//! Everything here works in coefficients of an explicit orthonormal basis of
//! the divergence-free face fields and shares nothing with the production
//! solvers beyond the mesh operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesData;
use crate::error::{invalid, numeric_failure, Result};
use crate::mesh::{self, CellField, EdgeField, FaceField, GridField, GridSpec, SurfaceField};

pub const MAX_FACES: usize = 4000;

/// Orthonormal (face-weighted) basis of the admissible subspace.
#[derive(Debug, Clone)]
pub struct DivFreeBasis {
    pub grid: GridSpec,
    /// `n_faces x dim`; rows of boundary-normal faces are zero.
    pub matrix: DMatrix<f64>,
    /// Curl of every column, `n_edges x dim`.
    pub curls: DMatrix<f64>,
}

fn interior_faces(grid: &GridSpec) -> Vec<usize> {
    (0..grid.n_faces())
        .filter(|&f| {
            let (a, i, j, k) = grid.face_coords(f);
            !grid.face_is_boundary(a, i, j, k)
        })
        .collect()
}

/// Null space of the dense divergence on interior faces.
pub fn divfree_basis(grid: &GridSpec) -> Result<DivFreeBasis> {
    let nf = grid.n_faces();
    if nf > MAX_FACES {
        return invalid(format!("oracle grids are limited to {MAX_FACES} faces, got {nf}"));
    }
    let interior = interior_faces(grid);
    let ni = interior.len();
    let nc = grid.n_cells();
    let mut d = DMatrix::<f64>::zeros(nc, ni);
    for (col, &f) in interior.iter().enumerate() {
        let mut e = FaceField::new(grid);
        e.data[f] = 1.0;
        let dv = mesh::div(&e)?;
        for r in 0..nc {
            d[(r, col)] = dv.data[r];
        }
    }
    let gram = d.transpose() * &d;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..ni).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top).collect();
    let w = grid.cell_volume();
    let mut matrix = DMatrix::<f64>::zeros(nf, null.len());
    for (c, &i) in null.iter().enumerate() {
        for (r, &f) in interior.iter().enumerate() {
            // Interior faces all carry the cell volume as weight.
            matrix[(f, c)] = eig.eigenvectors[(r, i)] / w.sqrt();
        }
    }
    let ne = grid.n_edges();
    let mut curls = DMatrix::<f64>::zeros(ne, null.len());
    for c in 0..null.len() {
        let col = FaceField::from_parts(*grid, matrix.column(c).iter().cloned().collect());
        let cc = mesh::curl(&col)?;
        for r in 0..ne {
            curls[(r, c)] = cc.data[r];
        }
    }
    Ok(DivFreeBasis {
        grid: *grid,
        matrix,
        curls,
    })
}

impl DivFreeBasis {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn lift(&self, y: &DVector<f64>) -> FaceField {
        FaceField::from_parts(self.grid, (&self.matrix * y).iter().cloned().collect())
    }

    /// `B^T W h`.
    pub fn coefficients(&self, h: &FaceField) -> DVector<f64> {
        let wh = DVector::from_iterator(
            h.data.len(),
            h.data.iter().enumerate().map(|(i, v)| v * h.component_weight(i)),
        );
        self.matrix.transpose() * wh
    }

    /// `B B^T W h`, the orthogonal projection onto the admissible subspace.
    pub fn project(&self, h: &FaceField) -> FaceField {
        self.lift(&self.coefficients(h))
    }

    /// Linear functional `y -> <f, B y> + <g, B y>_bdry` as a vector.
    pub fn load(&self, f: &FaceField, g: &SurfaceField) -> Result<DVector<f64>> {
        let mut b = self.coefficients(f);
        for c in 0..self.dim() {
            let col = FaceField::from_parts(self.grid, self.matrix.column(c).iter().cloned().collect());
            b[c] += mesh::boundary_pair(g, &col)?;
        }
        Ok(b)
    }
}

/// Power-law step energy in basis coefficients:
/// `inv_dt/2 |y - y_prev|^2 + sum vol nu/p |K y|^p - b.y`.
#[derive(Debug, Clone)]
pub struct CoefficientEnergy<'a> {
    pub basis: &'a DivFreeBasis,
    pub p: f64,
    pub nu: &'a CellField,
    pub inv_dt: f64,
    pub y_prev: DVector<f64>,
    pub b: DVector<f64>,
}

impl<'a> CoefficientEnergy<'a> {
    pub fn new(
        basis: &'a DivFreeBasis,
        p: f64,
        nu: &'a CellField,
        dt: f64,
        h_prev: &FaceField,
        f: &FaceField,
        g: &SurfaceField,
    ) -> Result<Self> {
        Ok(CoefficientEnergy {
            basis,
            p,
            nu,
            inv_dt: 1.0 / dt,
            y_prev: basis.coefficients(h_prev),
            b: basis.load(f, g)?,
        })
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let c = &self.basis.curls * y;
        let n = self.basis.grid.n_cells();
        let vol = self.basis.grid.cell_volume();
        let mut e = 0.0;
        for t in 0..n {
            let m2 = c[t] * c[t] + c[n + t] * c[n + t] + c[2 * n + t] * c[2 * n + t];
            e += vol * self.nu.data[t] / self.p * m2.powf(0.5 * self.p);
        }
        if self.inv_dt > 0.0 {
            e += 0.5 * self.inv_dt * (y - &self.y_prev).norm_squared();
        }
        e - self.b.dot(y)
    }

    /// Exact minimizer for `p = 2`.
    pub fn solve_quadratic(&self) -> Result<DVector<f64>> {
        if self.p != 2.0 {
            return invalid("closed-form solve needs p = 2");
        }
        let k = &self.basis.curls;
        let n = self.basis.grid.n_cells();
        let vol = self.basis.grid.cell_volume();
        let weights = DVector::from_iterator(k.nrows(), (0..k.nrows()).map(|r| vol * self.nu.data[r % n]));
        let mut a = k.transpose() * DMatrix::from_diagonal(&weights) * k;
        for i in 0..a.nrows() {
            a[(i, i)] += self.inv_dt;
        }
        let rhs = &self.b + &self.y_prev * self.inv_dt;
        let chol = a
            .cholesky()
            .ok_or_else(|| numeric_failure("oracle", "quadratic form is not positive definite", 0.0))?;
        Ok(chol.solve(&rhs))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DenseDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Whether the iteration stopped on the round-off floor of the
    /// differenced gradient rather than the requested tolerance.
    pub stalled: bool,
}

/// Fourth-order central differences; the wide step keeps round-off in the
/// differenced energy below the truncation error.
fn numeric_gradient<F: Fn(&DVector<f64>) -> f64>(e: &F, y: &DVector<f64>, step: f64) -> DVector<f64> {
    let mut g = DVector::zeros(y.len());
    let mut x = y.clone();
    let at = |x: &mut DVector<f64>, i: usize, v: f64| {
        x[i] = v;
        e(x)
    };
    for i in 0..y.len() {
        let h = step * y[i].abs().max(1.0);
        let p1 = at(&mut x, i, y[i] + h);
        let m1 = at(&mut x, i, y[i] - h);
        let p2 = at(&mut x, i, y[i] + 2.0 * h);
        let m2 = at(&mut x, i, y[i] - 2.0 * h);
        x[i] = y[i];
        g[i] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    }
    g
}

/// BFGS with differenced gradients, started at `y0`. The difference step
/// is refined whenever the iteration stalls at its truncation floor.
pub fn dense_minimize<F: Fn(&DVector<f64>) -> f64>(
    e: &F,
    y0: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, DenseDiagnostics)> {
    const STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];
    let g0 = numeric_gradient(e, y0, STEPS[0]).norm();
    let mut y = y0.clone();
    let mut total = 0;
    let mut last = None;
    for (k, &step) in STEPS.iter().enumerate() {
        let (next, d) = bfgs_stage(e, y, step, tol, g0)?;
        y = next;
        total += d.iterations;
        let done = !d.stalled;
        last = Some(DenseDiagnostics { iterations: total, ..d });
        if done && k > 0 {
            break;
        }
    }
    Ok((y, last.expect("at least one stage")))
}

fn bfgs_stage<F: Fn(&DVector<f64>) -> f64>(
    e: &F,
    mut y: DVector<f64>,
    step: f64,
    tol: f64,
    g0: f64,
) -> Result<(DVector<f64>, DenseDiagnostics)> {
    const MAX_ITERS: usize = 5000;
    const STALL_ACCEPT: f64 = 1e-6;
    let n = y.len();
    let mut fy = e(&y);
    let mut g = numeric_gradient(e, &y, step);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut flat = 0;
    let stop = |y, it, gn, stalled| Ok((y, DenseDiagnostics { iterations: it, gradient_norm: gn, stalled }));
    for it in 0..MAX_ITERS {
        let gn = g.norm();
        if gn <= tol * (1.0 + g0) {
            return stop(y, it, gn, false);
        }
        if flat >= 10 && gn <= STALL_ACCEPT * (1.0 + g0) {
            return stop(y, it, gn, true);
        }
        let mut d = -(&hinv * &g);
        if d.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            d = -g.clone();
        }
        let slope = d.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &y + &d * alpha;
            let ft = e(&trial);
            if ft.is_finite() && ft <= fy + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((ynew, fnew)) = accepted else {
            if gn <= STALL_ACCEPT * (1.0 + g0) {
                return stop(y, it, gn, true);
            }
            return Err(numeric_failure("dense_minimize", "line search failed", gn));
        };
        let gnew = numeric_gradient(e, &ynew, step);
        let s = &ynew - &y;
        let yv = &gnew - &g;
        let sy = s.dot(&yv);
        if sy > 1e-300 {
            if first {
                hinv *= sy / yv.norm_squared();
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        if fy - fnew <= 4.0 * f64::EPSILON * fy.abs() {
            flat += 1;
        } else {
            flat = 0;
        }
        y = ynew;
        fy = fnew;
        g = gnew;
    }
    Err(numeric_failure("dense_minimize", "iteration cap exceeded", g.norm()))
}

/// Power-law trajectory computed step by step with [`dense_minimize`].
pub fn dense_trajectory(data: &TimeSeriesData, p: f64, nu: &CellField, tol: f64) -> Result<Vec<FaceField>> {
    let basis = divfree_basis(data.grid())?;
    let mut h = basis.project(&data.h0);
    let mut out = vec![h.clone()];
    for k in 1..data.t_grid.len() {
        let dt = data.t_grid[k] - data.t_grid[k - 1];
        let en = CoefficientEnergy::new(&basis, p, nu, dt, &h, &data.f[k], &data.g[k])?;
        let y = if p == 2.0 {
            en.solve_quadratic()?
        } else {
            dense_minimize(&|y: &DVector<f64>| en.value(y), &en.y_prev, tol)?.0
        };
        h = basis.lift(&y);
        out.push(h.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedReference {
    pub h: FaceField,
    /// Split variable, `|w| <= psi` on every triple.
    pub w: EdgeField,
    pub iterations: usize,
    /// `|w - curl h| / max(|w|, |curl h|)`.
    pub consistency: f64,
    /// Primal residual every 1000 iterations.
    pub residual_trace: Vec<f64>,
}

/// Root of `nu r^(p-1) + rho (r - z) = 0` on `[0, z]`.
fn radial_prox(nu: f64, p: f64, rho: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, z);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if nu * mid.powf(p - 1.0) + rho * (mid - z) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// ADMM for `min E(y) + sum vol nu/p |w|^p` subject to `w = K y`,
/// `|w_t| <= psi_t`. `dt = inf` gives the stationary problem.
#[allow(clippy::too_many_arguments)]
pub fn constrained_reference(
    basis: &DivFreeBasis,
    p: f64,
    nu: &CellField,
    dt: f64,
    h_prev: &FaceField,
    f: &FaceField,
    g: &SurfaceField,
    psi: &CellField,
    tol: f64,
) -> Result<ConstrainedReference> {
    const MAX_ITERS: usize = 2_000_000;
    let grid = basis.grid;
    let n = grid.n_cells();
    let ne = grid.n_edges();
    let vol = grid.cell_volume();
    let inv_dt = 1.0 / dt;
    let y_prev = basis.coefficients(h_prev);
    let b = basis.load(f, g)?;
    let k = &basis.curls;
    let ktk = k.transpose() * k * vol;
    let factor = |rho: f64| {
        let mut a = &ktk * rho;
        for i in 0..a.nrows() {
            a[(i, i)] += inv_dt;
        }
        a.cholesky()
            .ok_or_else(|| numeric_failure("constrained_reference", "normal matrix is singular", 0.0))
    };
    let mut rho = 1.0;
    let mut chol = factor(rho)?;
    let mut y = y_prev.clone();
    let mut w = k * &y;
    let mut lam = DVector::<f64>::zeros(ne);
    let mut trace = Vec::new();
    for it in 0..MAX_ITERS {
        // y-update.
        let rhs = &b + &y_prev * inv_dt + k.transpose() * (&w * rho + &lam) * vol;
        y = chol.solve(&rhs);
        let ky = k * &y;
        // w-update: radial prox, then the ball constraint.
        let w_old = w.clone();
        for t in 0..n {
            let z = [
                ky[t] - lam[t] / rho,
                ky[n + t] - lam[n + t] / rho,
                ky[2 * n + t] - lam[2 * n + t] / rho,
            ];
            let zm = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
            let r = radial_prox(nu.data[t], p, rho, zm).min(psi.data[t]);
            let s = if zm > 0.0 { r / zm } else { 0.0 };
            for c in 0..3 {
                w[c * n + t] = s * z[c];
            }
        }
        let r_prim = &w - &ky;
        lam += &r_prim * rho;
        let prim = r_prim.norm();
        let dual = rho * (k.transpose() * (&w - &w_old)).norm();
        let scale = w.norm().max(ky.norm()).max(1e-300);
        let dscale = (k.transpose() * &lam).norm().max(b.norm()).max(1e-300);
        if it % 1000 == 0 {
            trace.push(prim / scale);
        }
        if (prim <= tol * scale && dual <= tol * dscale) || (w.norm() == 0.0 && ky.norm() == 0.0 && b.norm() == 0.0)
        {
            let h = basis.lift(&y);
            let wf = EdgeField::from_parts(grid, w.iter().cloned().collect());
            return Ok(ConstrainedReference {
                consistency: prim / scale,
                h,
                w: wf,
                iterations: it + 1,
                residual_trace: trace,
            });
        }
        // Residual balancing.
        if it % 50 == 49 {
            let rel_p = prim / scale;
            let rel_d = dual / dscale;
            let new_rho = if rel_p > 10.0 * rel_d {
                rho * 2.0
            } else if rel_d > 10.0 * rel_p {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho {
                rho = new_rho;
                chol = factor(rho)?;
            }
        }
    }
    Err(numeric_failure(
        "constrained_reference",
        format!("no convergence, residual trace {trace:?}"),
        trace.last().cloned().unwrap_or(f64::NAN),
    ))
}
