//! Alternating-direction solver for step energies whose flux is not Lipschitz
//! at zero curl (`p < 2`). The curl is split off as `w = curl h`:
//!
//! * `h`: `(1/dt + rho curl^T curl) h = h_prev / dt + P L + curl^T (rho w - lambda)`
//!   by conjugate gradients on the divergence-free subspace,
//! * `w`: cellwise radial prox of the potential,
//! * `lambda += rho (curl h - w)`, over-relaxed.
//!
//! After each sweep `lambda = a(w)`, so the stopping test bounds
//! `|1/dt (h - h_prev) + curl^T a(w) - P L|` and `|curl h - w|`.

use crate::constitutive::ConstitutiveParams;
use crate::descent::{DescentConfig, DescentDiagnostics, Objective};
use crate::error::{numeric_failure, Result};
use crate::evolution::StepProblem;
use crate::mesh::{self, CellField, EdgeField, FaceField, GridField, LerayProjector};
use crate::par;

const CG_MAX: usize = 2000;
const BALANCE_EVERY: usize = 25;
const RELAX: f64 = 1.7;
const BALANCE_RATIO: f64 = 3.0;
const RHO_MIN: f64 = 1e-8;
const RHO_MAX: f64 = 1e8;

/// Radius `s` of the prox: `s (rho + F(s)) = rho m`.
fn radial_prox(m: f64, rho: f64, psi: f64, params: &ConstitutiveParams, t: usize) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let law = params.local(t);
    let (mut lo, mut hi) = (0.0, m);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * (rho + law.factor(mid, psi)) > rho * m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(inv_dt + rho curl^T curl) y = rhs` from the initial guess in `y`.
fn cg_solve(inv_dt: f64, rho: f64, rhs: &FaceField, y: &mut FaceField, rel_tol: f64) -> Result<usize> {
    let apply = |v: &FaceField| -> FaceField {
        let c = mesh::curl(v).expect("grid checked");
        let mut out = FaceField::new(&v.grid);
        mesh::curl_adjoint_into(&c, &mut out);
        let mut res = v.scaled(inv_dt);
        res.axpy(rho, &out);
        res
    };
    let b_norm = rhs.norm_sq().sqrt();
    if b_norm == 0.0 {
        y.data.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = rhs.sub(&apply(y));
    let mut d = r.clone();
    let mut rr = r.norm_sq();
    let target = (rel_tol * b_norm).powi(2);
    for it in 0..CG_MAX {
        if rr <= target {
            return Ok(it);
        }
        let ad = apply(&d);
        let alpha = rr / d.dot(&ad);
        y.axpy(alpha, &d);
        r.axpy(-alpha, &ad);
        let rr_new = r.norm_sq();
        let beta = rr_new / rr;
        rr = rr_new;
        let mut next = r.clone();
        next.axpy(beta, &d);
        d = next;
    }
    Err(numeric_failure("splitting", "inner conjugate gradients did not converge", rr.sqrt() / b_norm))
}

/// Minimizes the step energy by the splitting above; same stopping scale as
/// the descent solver.
pub(crate) fn minimize(
    prob: &StepProblem<'_>,
    proj: &LerayProjector,
    start: &FaceField,
    scale: f64,
    cfg: &DescentConfig,
) -> Result<(FaceField, DescentDiagnostics)> {
    cfg.validate()?;
    let grid = *proj.grid();
    let n = grid.n_cells();
    let params = prob.params();
    let psi_at = |t: usize| prob.psi().map_or(f64::INFINITY, |s: &CellField| s.data[t]);
    let inv_dt = prob.inv_dt();
    let tol_abs = cfg.tol * (1.0 + scale);
    let load = proj.project(prob.load())?;
    let mut base = prob.h_prev().scaled(inv_dt);
    base.axpy(1.0, &load);

    let mut h = proj.project(start)?;
    let initial_energy = prob.value(&h);
    let mut w = mesh::curl(&h)?;
    // Curvature of the potential at the typical curl size.
    let rms = (w.norm_sq() / grid.volume()).sqrt();
    let typical = if rms > 0.0 { rms } else { (scale / grid.volume().sqrt()).max(1.0) };
    let nu_mean = params.nu.data.iter().sum::<f64>() / n as f64;
    let mut rho = (nu_mean * typical.powf(params.p - 2.0)).clamp(RHO_MIN, RHO_MAX);
    // Same relative-plus-absolute form as the descent tolerance; the iterate
    // itself may collapse towards zero curl.
    let curl_ref = w.norm_sq().sqrt().max(mesh::curl(prob.h_prev())?.norm_sq().sqrt());
    let gap_tol = cfg.tol * (1.0 + curl_ref);
    let mut lambda = EdgeField::new(&grid);
    crate::evolution::curl_energy(params, prob.psi(), &w, Some(&mut lambda));

    let mut iterations = 0;
    let mut dual_res = f64::INFINITY;
    let mut last_primal = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        // h-update
        let mut rhs = base.clone();
        let mut target = w.scaled(rho);
        target.axpy(-1.0, &lambda);
        let mut back = FaceField::new(&grid);
        mesh::curl_adjoint_into(&target, &mut back);
        rhs.axpy(1.0, &back);
        cg_solve(inv_dt, rho, &rhs, &mut h, 1e-13)?;
        // w-update
        let ch = mesh::curl(&h)?;
        let w_old = w.clone();
        let mut rel = ch.scaled(RELAX);
        rel.axpy(1.0 - RELAX, &w_old);
        let mut radius = vec![0.0; n];
        par::fill(&mut radius, |t| {
            let c = rel.triple(t);
            let l = lambda.triple(t);
            let v = [c[0] + l[0] / rho, c[1] + l[1] / rho, c[2] + l[2] / rho];
            let m = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if m == 0.0 { 0.0 } else { radial_prox(m, rho, psi_at(t), params, t) / m }
        });
        for t in 0..n {
            let c = rel.triple(t);
            let l = lambda.triple(t);
            let s = radius[t];
            w.set_triple(t, [s * (c[0] + l[0] / rho), s * (c[1] + l[1] / rho), s * (c[2] + l[2] / rho)]);
        }
        // multiplier
        lambda.axpy(rho, &rel.sub(&w));
        let gap = ch.sub(&w);

        let mut dw = FaceField::new(&grid);
        mesh::curl_adjoint_into(&w.sub(&w_old), &mut dw);
        dual_res = rho * dw.norm_sq().sqrt();
        let primal = gap.norm_sq().sqrt();
        if dual_res <= tol_abs && primal <= gap_tol {
            converged = true;
            break;
        }
        if iterations % BALANCE_EVERY == 0 {
            // Progress of each residual toward its own target.
            let (pr, du) = (primal / gap_tol, dual_res / tol_abs);
            if pr > BALANCE_RATIO * du {
                rho = (2.0 * rho).min(RHO_MAX);
            } else if du > BALANCE_RATIO * pr {
                rho = (0.5 * rho).max(RHO_MIN);
            }
        }
        last_primal = primal;
    }
    if !converged {
        return Err(numeric_failure(
            "splitting",
            format!("iteration cap {} exceeded (curl gap {:.3e} of {gap_tol:.3e})", cfg.max_iters, last_primal),
            dual_res / (1.0 + scale),
        ));
    }
    proj.project_in_place(&mut h)?;
    let energy = prob.value(&h);
    Ok((
        h,
        DescentDiagnostics {
            iterations,
            backtracks: 0,
            energy,
            initial_energy,
            pg_residual: dual_res,
            tol_abs,
            max_energy_increase: 0.0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FieldPreset, StepData};
    use crate::evolution::{solve_step, StepMethod, StepperConfig};
    use crate::mesh::{build_grid, SurfaceField};

    fn run(p: f64, method: StepMethod, h0: &FaceField, f: &FaceField) -> (FaceField, f64) {
        let g = h0.grid;
        let proj = LerayProjector::new(&g);
        let s = SurfaceField::new(&g);
        let params = ConstitutiveParams::power_law(&g, p, 1.0);
        let data = StepData { f, g: &s, psi: None };
        let (h, d) = solve_step(&proj, h0, 0.05, data, &params, &StepperConfig::oracle().with_method(method)).unwrap();
        (h, d.solver.energy)
    }

    #[test]
    fn agrees_with_descent_for_smooth_laws() {
        let g = build_grid([1.0; 3], [4, 4, 4]).unwrap();
        let proj = LerayProjector::new(&g);
        let h0 = FieldPreset::Vortex { amplitude: 1.0, axis: 2 }.build(&g, &proj).unwrap();
        let f = FieldPreset::Shear { amplitude: 0.5 }.sample(&g);
        for p in [2.0, 3.0] {
            let (a, ea) = run(p, StepMethod::Descent, &h0, &f);
            let (b, eb) = run(p, StepMethod::Splitting, &h0, &f);
            let diff = a.sub(&b).norm_sq().sqrt() / a.norm_sq().sqrt();
            assert!(diff <= 1e-6, "p = {p}: {diff}");
            assert!((ea - eb).abs() <= 1e-9 * (1.0 + ea.abs()), "p = {p}: {ea} vs {eb}");
        }
    }

    #[test]
    fn singular_step_decreases_energy_and_stays_solenoidal() {
        let g = build_grid([1.0; 3], [4, 4, 4]).unwrap();
        let proj = LerayProjector::new(&g);
        let h0 = FieldPreset::Vortex { amplitude: 1.0, axis: 0 }.build(&g, &proj).unwrap();
        let zero = FaceField::new(&g);
        let (h, e) = run(1.4, StepMethod::Auto, &h0, &zero);
        assert!(h.norm_sq() < h0.norm_sq());
        let params = ConstitutiveParams::power_law(&g, 1.4, 1.0);
        let prev = crate::evolution::curl_energy(&params, None, &mesh::curl(&h0).unwrap(), None);
        assert!(e < prev);
        assert!(mesh::div(&h).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let zero = FaceField::new(&g);
        let (h, e) = run(1.5, StepMethod::Splitting, &zero, &zero);
        assert_eq!(h.max_abs(), 0.0);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn prox_radius_solves_its_equation() {
        let g = build_grid([1.0; 3], [2, 2, 2]).unwrap();
        let params = ConstitutiveParams::power_law(&g, 1.3, 2.0);
        for (m, rho) in [(1.0, 0.5), (1e-3, 10.0), (5.0, 1e-2)] {
            let s = radial_prox(m, rho, f64::INFINITY, &params, 0);
            let law = params.local(0);
            let lhs = s * (rho + law.factor(s, f64::INFINITY));
            assert!((lhs - rho * m).abs() <= 1e-12 * rho * m, "{m} {rho}: {lhs}");
            assert!(s > 0.0 && s < m);
        }
    }
}
