//! Stationary states: minimizers of
//! `J(h) = sum vol W(|curl h|) - <f, h> - <g, h>_bdry` and the
//! curl-constrained variational inequality solved through the penalty.

use serde::{Deserialize, Serialize};

use crate::constitutive::{ConstitutiveParams, LocalLaw};
use crate::data::StepData;
use crate::descent::DescentDiagnostics;
use crate::error::{invalid, Error, Result};
use crate::evolution::{solve_step, StepperConfig};
use crate::mesh::{self, CellField, FaceField, GridField, LerayProjector, SurfaceField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProblem {
    pub f_inf: FaceField,
    pub g_inf: SurfaceField,
    pub params: ConstitutiveParams,
    pub psi_inf: Option<CellField>,
}

impl StationaryProblem {
    pub fn alpha(&self) -> Option<f64> {
        self.psi_inf.as_ref().map(CellField::min)
    }

    fn data(&self) -> StepData<'_> {
        StepData {
            f: &self.f_inf,
            g: &self.g_inf,
            psi: self.psi_inf.as_ref(),
        }
    }

    fn validate(&self) -> Result<()> {
        let grid = self.f_inf.grid;
        self.g_inf.check_grid(&grid)?;
        if let Some(psi) = &self.psi_inf {
            psi.check_grid(&grid)?;
            if !(psi.min() > 0.0) {
                return invalid("stationary constraint must be positive");
            }
        }
        self.params.validate()
    }
}

/// Minimizes `J` from `start` (or zero).
pub fn minimize_j_from(
    problem: &StationaryProblem,
    start: Option<&FaceField>,
    proj: &LerayProjector,
    cfg: &StepperConfig,
) -> Result<(FaceField, DescentDiagnostics)> {
    problem.validate()?;
    let zero = FaceField::new(&problem.f_inf.grid);
    let start = start.unwrap_or(&zero);
    let (h, d) = solve_step(proj, start, f64::INFINITY, problem.data(), &problem.params, cfg)?;
    Ok((h, d.solver))
}

/// Unconstrained stationary state.
pub fn minimize_j(problem: &StationaryProblem, cfg: &StepperConfig) -> Result<FaceField> {
    if problem.psi_inf.is_some() {
        return invalid("minimize_j is the unconstrained problem; drop psi_inf or use solve_stationary_vi");
    }
    let proj = LerayProjector::new(&problem.f_inf.grid);
    Ok(minimize_j_from(problem, None, &proj, cfg)?.0)
}

pub const DEFAULT_EPS_SCHEDULE: [f64; 4] = [0.5, 0.2, 0.1, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsStage {
    pub eps: f64,
    pub iterations: usize,
    pub pg_residual: f64,
    /// `max (|curl h| - psi) / psi`.
    pub max_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub stages: Vec<EpsStage>,
    pub feasibility_tol: f64,
    pub max_excess: f64,
    pub feasible: bool,
    pub test_directions: usize,
    /// Smallest normalized variational-inequality pairing over test fields.
    pub vi_residual: f64,
    pub vi_tol: f64,
    pub vi_ok: bool,
}

pub const FEASIBILITY_TOL: f64 = 1e-3;
pub const VI_TOL: f64 = 1e-7;
const TEST_DIRECTIONS: usize = 100;

/// `max_t (|c_t| - psi_t) / psi_t`.
pub fn max_relative_excess(h: &FaceField, psi: &CellField) -> Result<f64> {
    let mags = mesh::curl(h)?.magnitudes();
    Ok(mags
        .data
        .iter()
        .zip(&psi.data)
        .map(|(m, s)| (m - s) / s)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest `theta <= 1` with `|curl (theta u)| <= psi` everywhere.
pub fn ball_scaling(u: &FaceField, psi: &CellField) -> Result<f64> {
    let mags = mesh::curl(u)?.magnitudes();
    Ok(mags
        .data
        .iter()
        .zip(&psi.data)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, s)| s / m)
        .fold(1.0, f64::min))
}

/// Solves the penalized stationary problem along `eps_schedule`, warm
/// starting each stage, and checks feasibility and the inequality.
pub fn solve_stationary_vi(
    problem: &StationaryProblem,
    eps_schedule: &[f64],
    cfg: &StepperConfig,
) -> Result<(FaceField, StationaryReport)> {
    problem.validate()?;
    let Some(psi) = problem.psi_inf.as_ref() else {
        return invalid("solve_stationary_vi needs psi_inf");
    };
    if eps_schedule.is_empty()
        || eps_schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0))
        || eps_schedule.windows(2).any(|w| !(w[1] < w[0]))
    {
        return invalid("eps schedule must be non-empty, decreasing and inside (0, 1)");
    }
    let grid = problem.f_inf.grid;
    let proj = LerayProjector::new(&grid);
    let mut h = FaceField::new(&grid);
    let mut stages = Vec::new();
    for (pos, &eps) in eps_schedule.iter().enumerate() {
        let staged = StationaryProblem {
            params: problem.params.clone().with_penalty(eps),
            ..problem.clone()
        };
        let (next, d) = minimize_j_from(&staged, Some(&h), &proj, cfg).map_err(|e| match e {
            Error::NumericFailure { stage, reason, residual } => Error::NumericFailure {
                stage: format!("eps schedule position {pos} (eps = {eps}): {stage}"),
                reason,
                residual,
            },
            other => other,
        })?;
        h = next;
        stages.push(EpsStage {
            eps,
            iterations: d.iterations,
            pg_residual: d.pg_residual,
            max_excess: max_relative_excess(&h, psi)?,
        });
    }
    let max_excess = stages.last().map_or(0.0, |s| s.max_excess);
    let vi_residual = vi_residual(problem, &h, &proj, TEST_DIRECTIONS)?;
    let report = StationaryReport {
        stages,
        feasibility_tol: FEASIBILITY_TOL,
        max_excess,
        feasible: max_excess <= FEASIBILITY_TOL,
        test_directions: TEST_DIRECTIONS,
        vi_residual,
        vi_tol: VI_TOL,
        vi_ok: vi_residual >= -VI_TOL,
    };
    Ok((h, report))
}

/// Smallest `[sum vol a(curl h).(curl phi - curl h) - <L, phi - h>] / scale`
/// over feasible test fields `phi`, with `a` the unpenalized law.
pub fn vi_residual(problem: &StationaryProblem, h: &FaceField, proj: &LerayProjector, count: usize) -> Result<f64> {
    let psi = problem
        .psi_inf
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("inequality residual needs psi_inf".into()))?;
    let grid = h.grid;
    let load = problem.f_inf.add(&mesh::boundary_functional(&problem.g_inf)?);
    let ch = mesh::curl(h)?;
    let n = grid.n_cells();
    let vol = grid.cell_volume();
    let mut flux = ch.clone();
    for t in 0..n {
        let v = ch.triple(t);
        let law = LocalLaw {
            eps: None,
            ..problem.params.local(t)
        };
        flux.set_triple(t, law.apply(v, psi.data[t]));
    }
    let mut tests = vec![FaceField::new(&grid), h.scaled(0.5)];
    for j in 0..count.saturating_sub(2) {
        let raw = crate::data::FieldPreset::Random {
            amplitude: 1.0,
            seed: 0x5eed_0000 + j as u64,
        }
        .sample(&grid);
        let u = proj.project(&raw)?;
        let theta = ball_scaling(&u, psi)?;
        // Mix with h so the directions probe the neighbourhood of the solution.
        let lam = (j % 5) as f64 / 5.0;
        let mut phi = u.scaled(theta * (1.0 - lam));
        phi.axpy(lam, &h.scaled(ball_scaling(h, psi)?));
        tests.push(phi);
    }
    let mut worst = f64::INFINITY;
    for phi in &tests {
        let d = phi.sub(h);
        let cd = mesh::curl(&d)?;
        let work = flux.dot(&cd);
        let lin = load.dot(&d);
        let mut scale = lin.abs();
        for t in 0..n {
            let a = flux.triple(t);
            let c = cd.triple(t);
            scale += vol * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        }
        let r = work - lin;
        worst = worst.min(if scale > 0.0 { r / scale } else { 0.0 });
    }
    Ok(worst)
}
