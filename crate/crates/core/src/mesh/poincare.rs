//! Estimator for the discrete Poincare-type constants
//! `sup ||M v||_q / ||curl v||_p` over discretely divergence-free fields,
//! where `M` is the identity (volume constant) or the tangential trace.
//!
//! The estimator is a nonlinear inverse power iteration: each outer step
//! minimizes `(1/p) ||curl u||_p^p - <s, u>` with `s` the duality map of the
//! current iterate, then renormalizes. The quotient is non-decreasing along
//! the iteration; several starting fields are tried and the best kept.

use serde::{Deserialize, Serialize};

use super::boundary::{boundary_functional, tangential_trace};
use super::field::{EdgeField, FaceField, GridField, SurfaceField};
use super::grid::GridSpec;
use super::leray::LerayProjector;
use super::ops;
use crate::descent::{self, DescentConfig, Objective};
use crate::error::{invalid, numeric_failure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuotientTarget {
    /// `||v||_q` over the volume.
    Volume,
    /// `||trace v||_q` over the boundary.
    Trace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareEstimate {
    pub p: f64,
    pub q: f64,
    pub target: QuotientTarget,
    pub constant: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub starts: usize,
    pub converged: bool,
    /// Quotient after each outer step of the best start.
    pub history: Vec<f64>,
}

/// Largest admissible `q` for the volume embedding (`inf` when unrestricted).
pub fn sobolev_limit(p: f64) -> f64 {
    if p < 3.0 {
        3.0 * p / (3.0 - p)
    } else {
        f64::INFINITY
    }
}

/// Largest admissible trace exponent.
pub fn trace_limit(p: f64) -> f64 {
    if p < 3.0 {
        2.0 * p / (3.0 - p)
    } else {
        f64::INFINITY
    }
}

/// Exponents `(q, r)` used for data norms: the embedding limits when finite,
/// otherwise `2p`.
pub fn working_exponents(p: f64) -> (f64, f64) {
    if p < 3.0 {
        (sobolev_limit(p), trace_limit(p))
    } else {
        (2.0 * p, 2.0 * p)
    }
}

fn check_exponents(p: f64, q: f64, target: QuotientTarget) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid(format!("p must be a finite exponent above 1, got {p}"));
    }
    if !(q >= 1.0 && q.is_finite()) {
        return invalid(format!("q must be finite and at least 1, got {q}"));
    }
    let limit = match target {
        QuotientTarget::Volume => sobolev_limit(p),
        QuotientTarget::Trace => trace_limit(p),
    };
    if q > limit * (1.0 + 1e-12) {
        return invalid(format!("exponent {q} is not admissible for p = {p} (limit {limit})"));
    }
    Ok(())
}

#[inline]
fn signed_pow(v: f64, e: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.abs().powf(e) * v.signum()
    }
}

/// `(1/p) ||curl u||_p^p - <s, u>`.
struct InverseStep<'a> {
    p: f64,
    source: &'a FaceField,
}

impl InverseStep<'_> {
    fn curl_power(&self, c: &EdgeField) -> (f64, EdgeField) {
        let n = c.grid.n_cells();
        let vol = c.grid.cell_volume();
        let mut flux = EdgeField::new(&c.grid);
        let mut e = 0.0;
        for t in 0..n {
            let v = c.triple(t);
            let m = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if m > 0.0 {
                e += vol * m.powf(self.p) / self.p;
                let s = m.powf(self.p - 2.0);
                flux.set_triple(t, [s * v[0], s * v[1], s * v[2]]);
            }
        }
        (e, flux)
    }
}

impl Objective for InverseStep<'_> {
    fn value(&self, h: &FaceField) -> f64 {
        let c = ops::curl(h).expect("grid checked");
        self.curl_power(&c).0 - self.source.dot(h)
    }

    fn value_grad(&self, h: &FaceField, grad: &mut FaceField) -> f64 {
        let c = ops::curl(h).expect("grid checked");
        let (e, flux) = self.curl_power(&c);
        ops::curl_adjoint_into(&flux, grad);
        grad.axpy(-1.0, self.source);
        e - self.source.dot(h)
    }
}

fn target_norm(v: &FaceField, q: f64, target: QuotientTarget) -> Result<f64> {
    match target {
        QuotientTarget::Volume => v.lp_norm(q),
        QuotientTarget::Trace => tangential_trace(v)?.lp_norm(q),
    }
}

/// Riesz representative of the derivative of `(1/q) ||M v||_q^q`.
fn duality_source(v: &FaceField, q: f64, target: QuotientTarget) -> Result<FaceField> {
    match target {
        QuotientTarget::Volume => {
            let mut s = v.clone();
            s.data.iter_mut().for_each(|x| *x = signed_pow(*x, q - 1.0));
            Ok(s)
        }
        QuotientTarget::Trace => {
            let tr: SurfaceField = tangential_trace(v)?;
            let mut j = tr.clone();
            for l in 0..tr.n_locations() {
                let m = tr.location_magnitude(l);
                let scale = if m > 0.0 { m.powf(q - 2.0) } else { 0.0 };
                j.data[2 * l] *= scale;
                j.data[2 * l + 1] *= scale;
            }
            boundary_functional(&j)
        }
    }
}

fn starting_fields(grid: &GridSpec, proj: &LerayProjector) -> Result<Vec<FaceField>> {
    use std::f64::consts::PI;
    let [lx, ly, lz] = grid.extents;
    let mut out = Vec::new();
    // Lowest solenoidal modes of the box, one per orientation, plus a rough field.
    let modes: [Box<dyn Fn([f64; 3]) -> [f64; 3]>; 4] = [
        Box::new(move |x| {
            [
                (PI * x[1] / ly).cos() * (PI * x[0] / lx).sin(),
                -(PI * x[0] / lx).cos() * (PI * x[1] / ly).sin(),
                0.0,
            ]
        }),
        Box::new(move |x| {
            [
                0.0,
                (PI * x[2] / lz).cos() * (PI * x[1] / ly).sin(),
                -(PI * x[1] / ly).cos() * (PI * x[2] / lz).sin(),
            ]
        }),
        Box::new(move |x| {
            [
                (PI * x[2] / lz).cos() * (PI * x[0] / lx).sin(),
                0.0,
                -(PI * x[0] / lx).cos() * (PI * x[2] / lz).sin(),
            ]
        }),
        Box::new(move |x| {
            let s = (x[0] * 12.9898 + x[1] * 78.233 + x[2] * 37.719).sin() * 43758.5453;
            let r = s - s.floor() - 0.5;
            [r, 0.7 * r - x[2] / lz, x[0] / lx - 0.3 * r]
        }),
    ];
    for m in modes.iter() {
        let v = proj.project(&FaceField::sample(grid, m))?;
        if v.max_abs() > 1e-12 {
            out.push(v);
        }
    }
    Ok(out)
}

/// Estimates `sup ||M v||_q / ||curl v||_p` over admissible fields.
pub fn estimate_poincare_target(
    grid: &GridSpec,
    p: f64,
    q: f64,
    target: QuotientTarget,
) -> Result<PoincareEstimate> {
    check_exponents(p, q, target)?;
    let proj = LerayProjector::new(grid);
    let cfg = DescentConfig {
        tol: 1e-10,
        max_iters: 50_000,
        ..Default::default()
    };
    const MAX_OUTER: usize = 300;
    const REL_TOL: f64 = 1e-9;

    let mut best: Option<PoincareEstimate> = None;
    let starts = starting_fields(grid, &proj)?;
    let n_starts = starts.len();
    for start in starts {
        let mut v = start;
        let nv = target_norm(&v, q, target)?;
        if nv == 0.0 {
            continue;
        }
        v = v.scaled(1.0 / nv);
        let mut ratio = 1.0 / ops::curl(&v)?.lp_norm(p)?;
        let mut history = vec![ratio];
        let mut inner = 0;
        let mut converged = false;
        let mut outer = 0;
        while outer < MAX_OUTER {
            outer += 1;
            let source = proj.project(&duality_source(&v, q, target)?)?;
            let obj = InverseStep { p, source: &source };
            let scale = source.norm_sq().sqrt();
            let (u, d) = descent::minimize(&obj, &proj, &v, scale, &cfg)?;
            inner += d.iterations;
            let nu = target_norm(&u, q, target)?;
            if !(nu > 0.0) {
                return Err(numeric_failure("estimate_poincare", "iterate collapsed to zero", 0.0));
            }
            v = u.scaled(1.0 / nu);
            let next = 1.0 / ops::curl(&v)?.lp_norm(p)?;
            history.push(next);
            let gain = (next - ratio) / ratio;
            ratio = ratio.max(next);
            if gain.abs() < REL_TOL {
                converged = true;
                break;
            }
        }
        let est = PoincareEstimate {
            p,
            q,
            target,
            constant: ratio,
            outer_iterations: outer,
            inner_iterations: inner,
            starts: n_starts,
            converged,
            history,
        };
        if best.as_ref().is_none_or(|b| est.constant > b.constant) {
            best = Some(est);
        }
    }
    let best = best.ok_or_else(|| numeric_failure("estimate_poincare", "no usable starting field", 0.0))?;
    if !best.converged {
        let h = &best.history;
        let last = h.len().saturating_sub(2);
        return Err(numeric_failure(
            "estimate_poincare",
            format!("no convergence within {MAX_OUTER} outer steps"),
            (h[h.len() - 1] - h[last]).abs() / h[last],
        ));
    }
    Ok(best)
}

/// Volume constant `sup ||v||_q / ||curl v||_p`.
pub fn estimate_poincare(grid: &GridSpec, p: f64, q: f64) -> Result<PoincareEstimate> {
    estimate_poincare_target(grid, p, q, QuotientTarget::Volume)
}
