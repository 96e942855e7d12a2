//! Long-time behaviour: `phi(t) = |h(t) - h_inf|^2` against the algebraic
//! bound (p > 2), the exponential bound with a data window (p = 2) and the
//! inverse-Hölder exponential bound (6/5 <= p < 2).
//!
//! All constants are measured on the discrete problem. Along a backward Euler
//! trajectory `w_k = h_k - h_inf` satisfies
//! `(phi_k - phi_{k-1}) / dt + 2 <A h_k - A h_inf, w_k> <= 2 <L_k - L_inf, w_k>`,
//! and the pairing is bounded below through the monotonicity of the law and
//! the discrete Poincaré constant `|w|_2 <= C_P |curl w|_p`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveParams;
use crate::data::{DataSpec, TimeSeriesData};
use crate::error::{invalid, Result};
use crate::evolution::{energy_ledger, run_from, EnergyReport, StepperConfig, Trajectory};
use crate::mesh::{
    self, estimate_poincare, estimate_poincare_target, working_exponents, FaceField, GridField,
    GridSpec, QuotientTarget,
};
use crate::report::{self, Curve, PlotSpec, Scale};
use crate::stationary::{minimize_j_from, StationaryProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `p > 2`.
    Degenerate,
    /// `p = 2`.
    Linear,
    /// `6/5 <= p < 2`.
    Singular,
}

impl Regime {
    pub fn for_exponent(p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return invalid(format!("p must exceed 1, got {p}"));
        }
        if p > 2.0 {
            Ok(Regime::Degenerate)
        } else if p == 2.0 {
            Ok(Regime::Linear)
        } else if p >= 1.2 {
            Ok(Regime::Singular)
        } else {
            invalid(format!("no decay statement for p = {p} below 6/5"))
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Degenerate => "p>2",
            Regime::Linear => "p=2",
            Regime::Singular => "6/5<=p<2",
        }
    }
}

fn dual(x: f64) -> f64 {
    x / (x - 1.0)
}

/// `(s, r', e)`: the volume norm, the boundary norm and the power applied to
/// both in the data gap `xi = |f - f_inf|_s^e + |g - g_inf|_{r'}^e`.
pub fn xi_exponents(p: f64) -> (f64, f64, f64) {
    let (q, r) = working_exponents(p);
    let pd = dual(p);
    if p >= 2.0 {
        (dual(q), dual(r), pd.min(2.0))
    } else {
        (2.0, dual(r), pd.min(2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub p: f64,
    pub grid: GridSpec,
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub xi: Vec<f64>,
    /// Operator gap; identically zero for the autonomous laws used here.
    pub zeta: Vec<f64>,
    pub xi_volume_norm: f64,
    pub xi_boundary_norm: f64,
    pub xi_power: f64,
    /// `|curl h_inf|_p`.
    pub h_inf_curl_norm: f64,
    pub h_inf_is_zero: bool,
    /// `|h_0 - h_inf| + |h_inf|`, the size used for the resolution floor.
    pub field_scale: f64,
}

/// Distances to `h_inf` and data gaps along a trajectory.
pub fn track_decay(
    traj: &Trajectory,
    h_inf: &FaceField,
    data: &TimeSeriesData,
    limit: &StationaryProblem,
) -> Result<DecaySeries> {
    let grid = h_inf.grid;
    if traj.h.len() != data.t_grid.len() || traj.t.len() != traj.h.len() {
        return invalid("trajectory and data have different time grids");
    }
    if traj.h.is_empty() {
        return invalid("empty trajectory");
    }
    for h in &traj.h {
        h.check_grid(&grid)?;
    }
    limit.f_inf.check_grid(&grid)?;
    limit.g_inf.check_grid(&grid)?;
    let p = limit.params.p;
    let (s, rd, e) = xi_exponents(p);
    let phi = traj.h.iter().map(|h| h.sub(h_inf).norm_sq()).collect();
    let mut xi = Vec::with_capacity(traj.h.len());
    for k in 0..traj.h.len() {
        let df = data.f[k].sub(&limit.f_inf).lp_norm(s)?;
        let dg = data.g[k].sub(&limit.g_inf).lp_norm(rd)?;
        xi.push(df.powf(e) + dg.powf(e));
    }
    let h_inf_norm = h_inf.norm_sq().sqrt();
    Ok(DecaySeries {
        p,
        grid,
        t: traj.t.clone(),
        phi,
        zeta: vec![0.0; traj.h.len()],
        xi,
        xi_volume_norm: s,
        xi_boundary_norm: rd,
        xi_power: e,
        h_inf_curl_norm: mesh::curl(h_inf)?.lp_norm(p)?,
        h_inf_is_zero: h_inf.max_abs() == 0.0,
        field_scale: traj.h[0].sub(h_inf).norm_sq().sqrt() + h_inf_norm,
    })
}

/// `int_a^b l` for the piecewise-linear interpolant of `(times, l)`.
pub fn integrate(times: &[f64], l: &[f64], a: f64, b: f64) -> f64 {
    if b <= a || times.len() < 2 {
        return 0.0;
    }
    let at = |x: f64, i: usize| {
        let (t0, t1) = (times[i], times[i + 1]);
        l[i] + (l[i + 1] - l[i]) * (x - t0) / (t1 - t0)
    };
    let mut sum = 0.0;
    for i in 0..times.len() - 1 {
        let lo = times[i].max(a);
        let hi = times[i + 1].min(b);
        if hi > lo {
            sum += 0.5 * (hi - lo) * (at(lo, i) + at(hi, i));
        }
    }
    sum
}

fn check_series(times: &[f64], l: &[f64]) -> Result<()> {
    if times.len() != l.len() {
        return invalid("l series and time nodes differ in length");
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time nodes must increase");
    }
    Ok(())
}

/// `((p-2)/2 c (t - t0))^(-2/(p-2)) + int_{t0}^t l`, trapezoidal in `l`.
pub fn simon_bound(c: f64, times: &[f64], l: &[f64], p: f64, t0: f64, t: f64) -> Result<f64> {
    if !(p > 2.0) {
        return invalid(format!("the algebraic bound needs p > 2, got {p}"));
    }
    if !(c > 0.0) {
        return invalid("the algebraic bound needs c > 0");
    }
    if !(t > t0) {
        return invalid("the algebraic bound needs t > t0");
    }
    check_series(times, l)?;
    let base = 0.5 * (p - 2.0) * c * (t - t0);
    Ok(base.powf(-2.0 / (p - 2.0)) + integrate(times, l, t0, t))
}

/// `sup_{tau >= t0} int_tau^{tau+1} l` over windows inside the stored horizon.
/// Window starts are the nodes and the points one unit before a node; a
/// horizon shorter than one unit gives the single window `[t0, T]`.
pub fn window_sup(times: &[f64], l: &[f64], t0: f64) -> f64 {
    let end = *times.last().unwrap_or(&t0);
    if end - t0 <= 1.0 {
        return integrate(times, l, t0, end);
    }
    let mut best: f64 = 0.0;
    let starts = times.iter().copied().chain(times.iter().map(|t| t - 1.0));
    for tau in starts.filter(|tau| *tau >= t0 && *tau + 1.0 <= end) {
        best = best.max(integrate(times, l, tau, tau + 1.0));
    }
    best
}

/// `exp(c (t0 - t)) phi0 + sup window / (1 - exp(-c))`.
pub fn haraux_bound(phi0: f64, c: f64, times: &[f64], l: &[f64], t0: f64, t: f64) -> Result<f64> {
    if !(c > 0.0) {
        return invalid("the exponential bound needs c > 0");
    }
    if !(t >= t0) {
        return invalid("the exponential bound needs t >= t0");
    }
    check_series(times, l)?;
    let window = window_sup(times, l, t0);
    Ok((c * (t0 - t)).exp() * phi0 + window / (1.0 - (-c).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    /// Discrete `L^2` Poincaré constant for `p = 2`; estimated when absent.
    pub poincare_l2: Option<f64>,
    /// Factor `D` in `l = D xi`; estimated from the data-norm embeddings
    /// when the data gap does not vanish and this is absent.
    pub data_constant: Option<f64>,
    /// Anchor of the exponential bounds; the first node when absent.
    pub t0: Option<f64>,
    /// Relative size of the solver resolution floor.
    pub resolution: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            poincare_l2: None,
            data_constant: None,
            t0: None,
            resolution: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayParameters {
    pub poincare_l2: f64,
    /// `C_P` in `|w|_2 <= C_P |curl w|_p`.
    pub poincare: f64,
    /// Monotonicity constant of the law used in the pairing.
    pub monotonicity: f64,
    /// Inverse-Hölder constant (singular regime).
    pub c4: Option<f64>,
    /// Decay rate of the continuous comparison inequality.
    pub c: f64,
    /// `ln(1 + c dt_max) / dt_max`, the rate the implicit scheme realises.
    pub c_eff: Option<f64>,
    pub data_constant: Option<f64>,
    pub l: Vec<f64>,
    pub t0_rule: String,
    /// Absolute slack added to every comparison.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayVerdict {
    pub regime: Regime,
    pub p: f64,
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    /// `None` where the bound is infinite or not evaluated.
    pub bound: Vec<Option<f64>>,
    /// First node included in the comparison.
    pub first_checked: usize,
    pub violations: usize,
    /// `max (phi - bound) / bound` over checked nodes.
    pub max_relative_violation: f64,
    /// `phi(T) / phi(0)`.
    pub final_ratio: f64,
    pub parameters: DecayParameters,
    pub pass: bool,
}

/// Monotonicity constant `m` of `nu |u|^{p-2} u`:
/// `(a(u) - a(v)).(u - v) >= m |u - v|^p` for `p >= 2`, and
/// `>= m (|u| + |v|)^{p-2} |u - v|^2` for `p < 2`.
pub fn monotonicity_constant(p: f64, nu_min: f64) -> f64 {
    if p >= 2.0 {
        nu_min * 2f64.powf(2.0 - p)
    } else {
        nu_min * (p - 1.0)
    }
}

/// `C` with `|v|_2 <= C |curl v|_p`, from the `p = 2` constant: Hölder on the
/// domain for `p > 2`, the discrete inverse inequality on cells for `p < 2`.
pub fn poincare_from_l2(c2: f64, grid: &GridSpec, p: f64) -> f64 {
    if p >= 2.0 {
        c2 * grid.volume().powf(0.5 - 1.0 / p)
    } else {
        c2 * grid.cell_volume().powf(0.5 - 1.0 / p)
    }
}

/// `D` with `2 <L - L_inf, w> <= m' |curl w|_p^p' + D xi` after the coercive
/// term has been halved; `m_eff` is the coercive coefficient per unit of
/// `|curl w|_p^p` (or `|curl w|_p^2` in the singular regime).
fn young_constant(p_eff: f64, m_eff: f64, embed: f64) -> f64 {
    // 2 B Y <= m Y^p + kappa B^{p'}, B^{p'} <= 2^{p'-1} embed^{p'} xi.
    let pd = dual(p_eff);
    let kappa = 2f64.powf(pd) * (p_eff * m_eff).powf(-pd / p_eff) / pd;
    kappa * 2f64.powf(pd - 1.0) * embed.powf(pd)
}

fn data_embedding(grid: &GridSpec, p: f64, c_p: f64) -> Result<f64> {
    let (q, r) = working_exponents(p);
    let volume = if p >= 2.0 {
        estimate_poincare(grid, p, q)?.constant
    } else {
        // s = 2: the volume pairing uses the L^2 constant directly.
        c_p
    };
    let trace = estimate_poincare_target(grid, p, r, QuotientTarget::Trace)?.constant;
    Ok(volume.max(trace))
}

/// Compares the measured `phi` with the bound of its regime.
pub fn check_decay(
    series: &DecaySeries,
    params: &ConstitutiveParams,
    ledger: Option<&EnergyReport>,
    cfg: &DecayConfig,
) -> Result<DecayVerdict> {
    let p = params.p;
    if p != series.p {
        return invalid(format!("series was tracked for p = {}, params have p = {p}", series.p));
    }
    let regime = Regime::for_exponent(p)?;
    if params.penalty_eps.is_some() {
        return invalid("decay bounds are stated for the unpenalized law");
    }
    let n = series.t.len();
    if n < 2 || series.phi.len() != n || series.xi.len() != n || series.zeta.len() != n {
        return invalid("decay series needs at least two nodes of equal length");
    }
    let grid = series.grid;
    let poincare_l2 = match cfg.poincare_l2 {
        Some(c) if c > 0.0 => c,
        Some(_) => return invalid("poincare_l2 must be positive"),
        None => estimate_poincare(&grid, 2.0, 2.0)?.constant,
    };
    let c_p = poincare_from_l2(poincare_l2, &grid, p);
    let nu_min = params.nu.min();
    let stationary_data = series.xi.iter().chain(&series.zeta).all(|v| *v == 0.0);

    let (monotonicity, c4) = match regime {
        Regime::Degenerate if series.h_inf_is_zero => (nu_min, None),
        Regime::Singular => {
            if !params.perturbation.is_zero() {
                return invalid("the singular-regime bound is stated for the pure power law");
            }
            let Some(report) = ledger else {
                return invalid(
                    "refusing a singular-regime verdict: no energy ledger was supplied to confirm the uniform curl bound",
                );
            };
            if !report.confirmed {
                return invalid(format!(
                    "refusing a singular-regime verdict: the energy ledger did not confirm the uniform curl bound (basic defect {:.3e}, derivative defect {:.3e})",
                    report.basic_chain.defect, report.derivative_chain.defect
                ));
            }
            let sup = report.curl_sup.powf(1.0 / p) + series.h_inf_curl_norm;
            (monotonicity_constant(p, nu_min), Some(sup.powf(2.0 - p).max(f64::MIN_POSITIVE)))
        }
        _ => (monotonicity_constant(p, nu_min), None),
    };
    // Coercive coefficient per unit of |curl w|^{p_eff}.
    let (p_eff, coercive) = match regime {
        Regime::Singular => (2.0, monotonicity / c4.unwrap_or(1.0)),
        _ => (p, monotonicity),
    };
    let (c, data_constant, l) = if stationary_data {
        (2.0 * coercive / c_p.powf(p_eff), None, vec![0.0; n])
    } else {
        let d = match cfg.data_constant {
            Some(d) => d,
            None => young_constant(p_eff, coercive, data_embedding(&grid, p, c_p)?),
        };
        let l = series.xi.iter().zip(&series.zeta).map(|(x, z)| d * (x + z)).collect();
        (coercive / c_p.powf(p_eff), Some(d), l)
    };
    let floor = (cfg.resolution * series.field_scale).powi(2);
    let t = &series.t;
    let phi = &series.phi;

    let mut bound = vec![None; n];
    let (t0_rule, c_eff, first_checked) = match regime {
        Regime::Degenerate => {
            for k in 1..n {
                let half = 0.5 * t[k];
                let j = t.iter().rposition(|s| *s <= half).unwrap_or(0);
                if t[k] > t[j] {
                    bound[k] = Some(simon_bound(c, t, &l, p, t[j], t[k])?);
                }
            }
            let first = (1..n).find(|&k| bound[k].is_some_and(|b| b < phi[0])).unwrap_or(n);
            ("t0 = largest node not after t/2".to_string(), None, first)
        }
        Regime::Linear | Regime::Singular => {
            let t0 = cfg.t0.unwrap_or(t[0]);
            let j = t.iter().position(|s| *s >= t0).ok_or_else(|| {
                crate::error::Error::InvalidArgument(format!("t0 = {t0} lies after the last node"))
            })?;
            let dt_max = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let ce = (c * dt_max).ln_1p() / dt_max;
            for k in j..n {
                bound[k] = Some(haraux_bound(phi[j], ce, t, &l, t[j], t[k])?);
            }
            (format!("t0 = {}", t[j]), Some(ce), j)
        }
    };
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for k in first_checked..n {
        let Some(b) = bound[k] else { continue };
        if phi[k] > b + floor {
            violations += 1;
        }
        if b > 0.0 {
            worst = worst.max((phi[k] - b) / b);
        }
    }
    let final_ratio = if phi[0] > 0.0 { phi[n - 1] / phi[0] } else { 0.0 };
    Ok(DecayVerdict {
        regime,
        p,
        t: t.clone(),
        phi: phi.clone(),
        bound,
        first_checked,
        violations,
        max_relative_violation: worst,
        final_ratio,
        parameters: DecayParameters {
            poincare_l2,
            poincare: c_p,
            monotonicity,
            c4,
            c,
            c_eff,
            data_constant,
            l,
            t0_rule,
            floor,
        },
        pass: violations == 0 && first_checked < n,
    })
}

pub const DECAY_CSV_HEADER: [&str; 4] = ["t", "phi", "xi", "bound"];

/// `decay.csv`, `decay.json` and `decay.svg` in `dir`.
pub fn write_decay(dir: &Path, series: &DecaySeries, verdict: &DecayVerdict) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..series.t.len())
        .map(|k| {
            vec![
                series.t[k],
                series.phi[k],
                series.xi[k],
                verdict.bound[k].unwrap_or(f64::INFINITY),
            ]
        })
        .collect();
    report::write_csv(&dir.join("decay.csv"), &DECAY_CSV_HEADER, &rows)?;
    report::write_json(&dir.join("decay.json"), verdict)?;
    let x = series.t.clone();
    let bound: Vec<f64> = verdict.bound.iter().map(|b| b.unwrap_or(f64::INFINITY)).collect();
    report::line_plot(
        &dir.join("decay.svg"),
        &PlotSpec {
            title: &format!("decay, regime {}", verdict.regime.label()),
            x_label: "t",
            y_label: "|h(t) - h_inf|^2",
            x_scale: Scale::Linear,
            y_scale: Scale::Log,
        },
        &[Curve::new("phi", x.clone(), series.phi.clone()), Curve::new("bound", x, bound)],
    )
}

/// Everything produced by one decay run.
#[derive(Debug, Clone)]
pub struct DecayOutcome {
    pub h_inf: FaceField,
    pub trajectory: Trajectory,
    pub ledger: EnergyReport,
    pub series: DecaySeries,
    pub verdict: DecayVerdict,
}

/// Solves the stationary limit, runs the evolution from the data's `h0`
/// and checks the decay of `|h(t) - h_inf|^2`.
pub fn decay_experiment(
    grid: &GridSpec,
    params: &ConstitutiveParams,
    spec: &DataSpec,
    stepper: &StepperConfig,
    cfg: &DecayConfig,
) -> Result<DecayOutcome> {
    if spec.psi.is_some() {
        return invalid("decay runs are unconstrained; drop psi");
    }
    let data = spec.build(grid)?;
    let (f_inf, g_inf) = spec.limits(grid);
    let limit = StationaryProblem {
        f_inf,
        g_inf,
        params: params.clone(),
        psi_inf: None,
    };
    let proj = mesh::LerayProjector::new(grid);
    // Zero load has the exact minimizer zero.
    let h_inf = if limit.f_inf.max_abs() == 0.0 && limit.g_inf.max_abs() == 0.0 {
        FaceField::new(grid)
    } else {
        minimize_j_from(&limit, None, &proj, stepper)?.0
    };
    let trajectory = run_from(&data, params, stepper, Some(&proj))?;
    let ledger = energy_ledger(&trajectory, &data, params)?;
    let series = track_decay(&trajectory, &h_inf, &data, &limit)?;
    let verdict = check_decay(&series, params, Some(&ledger), cfg)?;
    Ok(DecayOutcome {
        h_inf,
        trajectory,
        ledger,
        series,
        verdict,
    })
}
