//! Projected Barzilai-Borwein descent with Armijo backtracking on the
//! discretely divergence-free subspace.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, numeric_failure, Result};
use crate::mesh::{FaceField, GridField, LerayProjector};

/// Smooth convex objective over face fields.
pub trait Objective {
    /// Objective value.
    fn value(&self, h: &FaceField) -> f64;
    /// Objective value; writes the gradient (Riesz representative in the
    /// face inner product) into `grad`.
    fn value_grad(&self, h: &FaceField, grad: &mut FaceField) -> f64;
    /// Initial step length.
    fn step_hint(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub max_iters: usize,
    /// Relative tolerance on the projected-gradient L2 norm.
    pub tol: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub step_min: f64,
    pub step_max: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iters: 200_000,
            tol: 1e-9,
            armijo: 1e-4,
            backtrack: 0.5,
            step_min: 1e-14,
            step_max: 1e8,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return invalid("solver tolerance must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo <= 0.5) {
            return invalid("Armijo constant must lie in (0, 0.5]");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return invalid("backtracking factor must lie in (0, 1)");
        }
        if !(self.step_min > 0.0 && self.step_max > self.step_min) {
            return invalid("step bounds must satisfy 0 < step_min < step_max");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescentDiagnostics {
    pub iterations: usize,
    pub backtracks: usize,
    pub energy: f64,
    pub initial_energy: f64,
    pub pg_residual: f64,
    pub tol_abs: f64,
    /// Largest energy increase across accepted iterations (roundoff level).
    pub max_energy_increase: f64,
}

// Energy comparisons allow this many ulps of slack.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// Minimizes `obj` over `P(start) + range(P)`.
///
/// Stops when the projected gradient norm is at most `cfg.tol * (1 + scale)`.
pub fn minimize<O: Objective>(
    obj: &O,
    proj: &LerayProjector,
    start: &FaceField,
    scale: f64,
    cfg: &DescentConfig,
) -> Result<(FaceField, DescentDiagnostics)> {
    cfg.validate()?;
    let mut h = proj.project(start)?;
    let mut grad = FaceField::new(proj.grid());
    let mut energy = obj.value_grad(&h, &mut grad);
    let mut pg = proj.project(&grad)?;
    let tol_abs = cfg.tol * (1.0 + scale);
    let mut diag = DescentDiagnostics {
        initial_energy: energy,
        tol_abs,
        ..Default::default()
    };
    if !energy.is_finite() {
        return Err(numeric_failure("descent", "non-finite initial energy", f64::NAN));
    }
    let mut pg_sq = pg.norm_sq();
    let mut tau = obj.step_hint().clamp(cfg.step_min, cfg.step_max);
    let mut trial = h.clone();
    let mut new_grad = FaceField::new(proj.grid());

    for it in 0..cfg.max_iters {
        let res = pg_sq.sqrt();
        if res <= tol_abs {
            diag.iterations = it;
            diag.energy = energy;
            diag.pg_residual = res;
            return Ok((h, diag));
        }
        // Backtracking line search along -pg.
        let mut accepted = None;
        let mut step = tau;
        while step >= cfg.step_min {
            trial.data.copy_from_slice(&h.data);
            trial.axpy(-step, &pg);
            let e = obj.value(&trial);
            if e.is_finite() && e <= energy - cfg.armijo * step * pg_sq + ROUNDOFF * energy.abs() {
                accepted = Some((step, e));
                break;
            }
            step *= cfg.backtrack;
            diag.backtracks += 1;
        }
        let Some((step, _)) = accepted else {
            return Err(numeric_failure(
                "descent",
                format!("line search stalled after {it} iterations"),
                res,
            ));
        };
        if it % 64 == 63 {
            proj.project_in_place(&mut trial)?;
        }
        let e_new = obj.value_grad(&trial, &mut new_grad);
        if !e_new.is_finite() {
            return Err(numeric_failure("descent", "non-finite energy", res));
        }
        let pg_new = proj.project(&new_grad)?;
        diag.max_energy_increase = diag.max_energy_increase.max(e_new - energy);

        // Barzilai-Borwein step, alternating the two classical formulas.
        let s = trial.sub(&h);
        let y = pg_new.sub(&pg);
        let sy = s.dot(&y);
        tau = if sy > 0.0 {
            if it % 2 == 0 {
                s.norm_sq() / sy
            } else {
                sy / y.norm_sq()
            }
        } else {
            (2.0 * step).min(cfg.step_max)
        }
        .clamp(cfg.step_min, cfg.step_max);

        std::mem::swap(&mut h, &mut trial);
        pg = pg_new;
        pg_sq = pg.norm_sq();
        energy = e_new;
    }
    let res = pg_sq.sqrt();
    if res <= tol_abs {
        diag.iterations = cfg.max_iters;
        diag.energy = energy;
        diag.pg_residual = res;
        return Ok((h, diag));
    }
    Err(numeric_failure(
        "descent",
        format!("iteration cap {} exceeded", cfg.max_iters),
        res,
    ))
}
