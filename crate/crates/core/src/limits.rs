//! Limit studies: the `p -> inf` sweep toward the gradient-constrained
//! problem, the penalty sweep `eps -> 0`, the rescaling between constraint
//! sets and the continuous-dependence experiment.
//!
//! Space-time integrals use the backward-Euler rule: node `k >= 1` carries
//! weight `t_k - t_{k-1}`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constitutive::{capped_exp, log_penalty_k, pow_mag, ConstitutiveParams};
use crate::data::{DataSpec, FieldPreset, SurfacePreset, TimeSeriesData};
use crate::error::{invalid, Error, Result};
use crate::evolution::{run_from, run_warm, StepperConfig, Trajectory};
use crate::mesh::{self, write_snapshot, CellField, FaceField, GridField, GridSpec, LerayProjector};
use crate::par;
use crate::report::{self, Curve, PlotSpec, Scale};
use crate::stationary::{solve_stationary_vi, StationaryProblem, DEFAULT_EPS_SCHEDULE};

/// Largest exponent of the `p -> inf` sweep.
pub const N_CAP: f64 = 64.0;
/// Relative slack of the saturation checks.
pub const SATURATION_TOL: f64 = 0.1;
/// Allowed relative size of the single reversal of a decreasing sequence.
pub const REVERSAL_TOL: f64 = 0.1;
/// Allowed spread of the dependence ratios.
pub const RATIO_SPREAD: f64 = 3.0;
const FEASIBLE_TOL: f64 = 1e-9;
const CONTRACTION_TOL: f64 = 1e-6;

/// Everything a sweep varies around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub grid: GridSpec,
    pub params: ConstitutiveParams,
    pub data: DataSpec,
    pub stepper: StepperConfig,
}

/// Where a sweep stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub position: usize,
    pub value: f64,
    pub message: String,
}

fn step_weights(t: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; t.len()];
    for k in 1..t.len() {
        w[k] = t[k] - t[k - 1];
    }
    w
}

fn space_time_measure(grid: &GridSpec, t: &[f64]) -> f64 {
    grid.volume() * (t[t.len() - 1] - t[0])
}

/// `max_k |a_k - b_k|^2`.
fn linf_l2_sq(a: &[FaceField], b: &[FaceField]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.sub(y).norm_sq()).fold(0.0, f64::max)
}

/// `sum_k w_k |curl h_k|_q^q`.
fn curl_space_time(h: &[FaceField], w: &[f64], q: f64) -> Result<f64> {
    let mut s = 0.0;
    for (hk, wk) in h.iter().zip(w) {
        if *wk > 0.0 {
            s += wk * mesh::curl(hk)?.lp_norm(q)?.powf(q);
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `int (|curl h| - psi)+`.
    pub abs: f64,
    /// `int (|curl h|^p - psi^p)+`.
    pub pow: f64,
}

/// Space-time `L^1` norms of the constraint excess.
pub fn constraint_violation(t_grid: &[f64], h: &[FaceField], psi: &[CellField], p: f64) -> Result<Violation> {
    if h.len() != t_grid.len() {
        return invalid("field and time series lengths differ");
    }
    let mags = h.iter().map(|hk| Ok(mesh::curl(hk)?.magnitudes())).collect::<Result<Vec<_>>>()?;
    magnitude_violation(t_grid, &mags, psi, p)
}

/// [`constraint_violation`] from precomputed `|curl h|` samples.
pub fn magnitude_violation(t_grid: &[f64], mags: &[CellField], psi: &[CellField], p: f64) -> Result<Violation> {
    if mags.len() != t_grid.len() || psi.len() != t_grid.len() || t_grid.is_empty() {
        return invalid("field, constraint and time series lengths differ");
    }
    if !(p > 1.0) {
        return invalid("p must exceed 1");
    }
    let grid = mags[0].grid;
    let w = step_weights(t_grid);
    let vol = grid.cell_volume();
    let n = grid.n_cells();
    let (mut abs, mut pow) = (0.0, 0.0);
    for k in 0..mags.len() {
        mags[k].check_grid(&grid)?;
        psi[k].check_grid(&grid)?;
        if w[k] == 0.0 {
            continue;
        }
        let (m, s) = (&mags[k].data, &psi[k].data);
        abs += w[k] * vol * par::sum(n, |t| (m[t] - s[t]).max(0.0));
        pow += w[k] * vol * par::sum(n, |t| (pow_mag(m[t], p) - pow_mag(s[t], p)).max(0.0));
    }
    Ok(Violation { abs, pow })
}

/// Whether `v` decreases except for at most one rise of relative size `rel`.
pub fn decreasing_with_reversal(v: &[f64], rel: f64) -> bool {
    let mut rises = 0;
    for w in v.windows(2) {
        if w[1] > w[0] {
            rises += 1;
            if rises > 1 || w[1] - w[0] > rel * w[0] {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------- p sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLimitEntry {
    pub n: f64,
    /// `n` does not exceed `max(3, q)` for some probe `q`.
    pub below_threshold: bool,
    /// `max |curl h_n|` over all nodes.
    pub sup_curl: f64,
    pub endpoint_max_curl: f64,
    /// `|curl h_n|_{L^n(Q_T)}`.
    pub ln_norm: f64,
    /// `|curl h_n|_{L^q(Q_T)}` per probe.
    pub lq_norms: Vec<f64>,
    /// `|Q_T|^{1/q - 1/n} |curl h_n|_{L^n(Q_T)}` per probe.
    pub holder_bounds: Vec<f64>,
    /// `max_t |h_n - h_prev_entry|` in `L^2`.
    pub l2_gap_prev: Option<f64>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLimitReport {
    pub n_schedule: Vec<f64>,
    pub probes: Vec<f64>,
    pub space_time_measure: f64,
    /// Largest `(|curl h| - 1)+` of the penalized stationary problem at `psi = 1`.
    pub candidate_excess: f64,
    pub entries: Vec<PLimitEntry>,
    pub failure: Option<SweepFailure>,
    /// `sup_curl <= 1 + tol` at the largest `n`.
    pub saturated: bool,
    /// `|curl h|_{L^q(Q_T)} <= |Q_T|^{1/q} (1 + tol)` at the largest `n`, per probe.
    pub lq_within: Vec<bool>,
    pub pass: bool,
}

/// Runs the evolution with `p = n` for every entry of `n_schedule`.
pub fn p_sweep(base: &BaseConfig, n_schedule: &[f64], probes: &[f64]) -> Result<PLimitReport> {
    if n_schedule.is_empty() || n_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("n schedule must be non-empty and increasing");
    }
    if n_schedule.iter().any(|n| !(*n > 1.0 && *n <= N_CAP)) {
        return invalid(format!("n schedule entries must lie in (1, {N_CAP}]"));
    }
    if probes.iter().any(|q| !(*q >= 1.0 && q.is_finite())) {
        return invalid("probe exponents must be finite and at least 1");
    }
    if base.data.psi.is_some() {
        return invalid("the p sweep carries its own constraint; drop psi from the data");
    }
    let data = base.data.build(&base.grid)?;
    let proj = LerayProjector::new(&base.grid);
    let h0 = proj.project(&data.h0)?;
    let h0_max = mesh::curl(&h0)?.magnitudes().max();
    if h0_max > 1.0 + FEASIBLE_TOL {
        return invalid(format!("initial field violates |curl h0| <= 1 (max {h0_max:.6})"));
    }
    let candidate_excess = feasible_candidate(base)?;

    let q_t = space_time_measure(&base.grid, &data.t_grid);
    let w = step_weights(&data.t_grid);
    let runs = par::map(n_schedule, |&n| {
        let params = ConstitutiveParams { p: n, ..base.params.clone() };
        run_from(&data, &params, &base.stepper, Some(&proj))
    });
    let mut entries: Vec<PLimitEntry> = Vec::new();
    let mut failure = None;
    for (pos, (run, &n)) in runs.into_iter().zip(n_schedule).enumerate() {
        let traj = match run {
            Ok(t) => t,
            Err(e) => {
                failure = Some(SweepFailure { position: pos, value: n, message: e.to_string() });
                break;
            }
        };
        let mut sup_curl: f64 = 0.0;
        for h in &traj.h {
            sup_curl = sup_curl.max(mesh::curl(h)?.magnitudes().max());
        }
        let endpoint_max_curl = mesh::curl(traj.last())?.magnitudes().max();
        let ln_norm = curl_space_time(&traj.h, &w, n)?.powf(1.0 / n);
        let mut lq_norms = Vec::new();
        let mut holder_bounds = Vec::new();
        for &q in probes {
            lq_norms.push(curl_space_time(&traj.h, &w, q)?.powf(1.0 / q));
            holder_bounds.push(q_t.powf(1.0 / q - 1.0 / n) * ln_norm);
        }
        let l2_gap_prev = entries
            .last()
            .and_then(|e| e.trajectory.as_ref())
            .map(|prev| linf_l2_sq(&prev.h, &traj.h).sqrt());
        entries.push(PLimitEntry {
            n,
            below_threshold: probes.iter().any(|q| n <= q.max(3.0)) || n <= 3.0,
            sup_curl,
            endpoint_max_curl,
            ln_norm,
            lq_norms,
            holder_bounds,
            l2_gap_prev,
            trajectory: Some(traj),
        });
    }
    let (saturated, lq_within) = match entries.last() {
        Some(last) if failure.is_none() => (
            last.sup_curl <= 1.0 + SATURATION_TOL,
            probes
                .iter()
                .zip(&last.lq_norms)
                .map(|(q, v)| *v <= q_t.powf(1.0 / q) * (1.0 + SATURATION_TOL))
                .collect(),
        ),
        _ => (false, vec![false; probes.len()]),
    };
    let pass = failure.is_none() && saturated && lq_within.iter().all(|b| *b);
    Ok(PLimitReport {
        n_schedule: n_schedule.to_vec(),
        probes: probes.to_vec(),
        space_time_measure: q_t,
        candidate_excess,
        entries,
        failure,
        saturated,
        lq_within,
        pass,
    })
}

/// Solves the penalized stationary problem at `psi = 1` with the limit data
/// and returns its largest relative excess. Only a failed solve is an error.
fn feasible_candidate(base: &BaseConfig) -> Result<f64> {
    let (f_inf, g_inf) = base.data.limits(&base.grid);
    if f_inf.max_abs() == 0.0 && g_inf.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let problem = StationaryProblem {
        f_inf,
        g_inf,
        params: base.params.clone(),
        psi_inf: Some(CellField::constant(&base.grid, 1.0)),
    };
    let (_, rep) = solve_stationary_vi(&problem, &DEFAULT_EPS_SCHEDULE, &base.stepper).map_err(|e| {
        Error::InvalidArgument(format!("no feasible candidate: penalized problem at psi = 1 failed: {e}"))
    })?;
    Ok(rep.max_excess.max(0.0))
}

pub const PLIMIT_CSV_HEADER: [&str; 8] =
    ["n", "q", "sup_curl", "endpoint_max_curl", "ln_norm", "lq_norm", "holder_bound", "l2_gap_prev"];

/// `plimit.json`, `plimit.csv`, `plimit.svg` and one endpoint snapshot per `n`.
pub fn write_plimit(dir: &Path, rep: &PLimitReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    report::write_json(&dir.join("plimit.json"), rep)?;
    let mut rows = Vec::new();
    for e in &rep.entries {
        for (i, q) in rep.probes.iter().enumerate() {
            rows.push(vec![
                e.n,
                *q,
                e.sup_curl,
                e.endpoint_max_curl,
                e.ln_norm,
                e.lq_norms[i],
                e.holder_bounds[i],
                e.l2_gap_prev.unwrap_or(f64::NAN),
            ]);
        }
        if let Some(traj) = &e.trajectory {
            let mut w = BufWriter::new(File::create(dir.join(format!("h_n{}.field", e.n)))?);
            write_snapshot(traj.last(), &mut w)?;
            w.flush()?;
        }
    }
    report::write_csv(&dir.join("plimit.csv"), &PLIMIT_CSV_HEADER, &rows)?;
    let n: Vec<f64> = rep.entries.iter().map(|e| e.n).collect();
    report::line_plot(
        &dir.join("plimit.svg"),
        &PlotSpec {
            title: "max |curl h_n| against n",
            x_label: "n",
            y_label: "max |curl h_n|",
            x_scale: Scale::Log,
            y_scale: Scale::Linear,
        },
        &[
            Curve::new("sup over nodes", n.clone(), rep.entries.iter().map(|e| e.sup_curl).collect()),
            Curve::new("saturation level", n.clone(), vec![1.0; n.len()]),
        ],
    )
}

// ---------------------------------------------------------- penalty sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEntry {
    pub eps: f64,
    pub violation: Violation,
    /// `int k_eps(|curl h|^p - psi^p)`.
    pub penalty_mass: f64,
    /// `|dh/dt|_{L^2(Q_T)}`.
    pub time_derivative: f64,
    pub h_linf_l2: f64,
    /// `|curl h|_{L^p(Q_T)}`.
    pub curl_lp: f64,
    /// `||curl h|^p - psi^p| < sqrt(eps)`.
    pub set_a: f64,
    /// `sqrt(eps) <= |curl h|^p - psi^p <= 1/eps`.
    pub set_b: f64,
    /// `|curl h|^p - psi^p > 1/eps`.
    pub set_c: f64,
    /// `|curl h|^p - psi^p <= -sqrt(eps)`.
    pub set_rest: f64,
    /// `|A + B + C + rest - |Q_T|| / |Q_T|`.
    pub partition_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    pub eps_schedule: Vec<f64>,
    pub space_time_measure: f64,
    pub entries: Vec<PenaltyEntry>,
    pub failure: Option<SweepFailure>,
    pub violation_decreasing: bool,
    /// `max / min` of the penalty mass over the schedule.
    pub mass_spread: f64,
    pub mass_bounded: bool,
    pub set_b_decreasing: bool,
    pub partition_ok: bool,
    pub pass: bool,
}

fn penalty_entry(traj: &Trajectory, data: &TimeSeriesData, p: f64, eps: f64) -> Result<PenaltyEntry> {
    let psi = &data.constraint.as_ref().expect("checked by caller").psi;
    let grid = *data.grid();
    let w = step_weights(&data.t_grid);
    let vol = grid.cell_volume();
    let violation = constraint_violation(&data.t_grid, &traj.h, psi, p)?;
    let (root, inv) = (eps.sqrt(), 1.0 / eps);
    let mut mass = 0.0;
    let mut sets = [0.0; 4];
    for k in 1..traj.h.len() {
        let mags = mesh::curl(&traj.h[k])?.magnitudes();
        for (m, s) in mags.data.iter().zip(&psi[k].data) {
            let d = pow_mag(*m, p) - pow_mag(*s, p);
            let wt = w[k] * vol;
            mass += wt * capped_exp(log_penalty_k(d, eps));
            let slot = if d.abs() < root {
                0
            } else if d > inv {
                2
            } else if d >= root {
                1
            } else {
                3
            };
            sets[slot] += wt;
        }
    }
    let q_t = space_time_measure(&grid, &data.t_grid);
    let total: f64 = sets.iter().sum();
    let mut td = 0.0;
    for k in 1..traj.h.len() {
        td += traj.h[k].sub(&traj.h[k - 1]).norm_sq() / w[k];
    }
    Ok(PenaltyEntry {
        eps,
        violation,
        penalty_mass: mass,
        time_derivative: td.sqrt(),
        h_linf_l2: traj.h.iter().map(|h| h.norm_sq()).fold(0.0, f64::max).sqrt(),
        curl_lp: curl_space_time(&traj.h, &w, p)?.powf(1.0 / p),
        set_a: sets[0],
        set_b: sets[1],
        set_c: sets[2],
        set_rest: sets[3],
        partition_defect: (total - q_t).abs() / q_t,
    })
}

/// Penalized evolutions along `eps_schedule`, each warm started from the
/// previous one.
pub fn penalty_sweep(base: &BaseConfig, eps_schedule: &[f64]) -> Result<PenaltyReport> {
    if eps_schedule.is_empty()
        || eps_schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0))
        || eps_schedule.windows(2).any(|w| !(w[1] < w[0]))
    {
        return invalid("eps schedule must be non-empty, decreasing and inside (0, 1)");
    }
    if base.data.psi.is_none() {
        return invalid("the penalty sweep needs a constraint psi");
    }
    let data = base.data.build(&base.grid)?;
    let proj = LerayProjector::new(&base.grid);
    let p = base.params.p;
    let mut entries = Vec::new();
    let mut failure = None;
    let mut warm: Option<Trajectory> = None;
    for (pos, &eps) in eps_schedule.iter().enumerate() {
        let params = base.params.clone().with_penalty(eps);
        match run_warm(&data, &params, &base.stepper, Some(&proj), warm.as_ref()) {
            Ok(traj) => {
                entries.push(penalty_entry(&traj, &data, p, eps)?);
                warm = Some(traj);
            }
            Err(e) => {
                failure = Some(SweepFailure {
                    position: pos,
                    value: eps,
                    message: format!("eps schedule position {pos} (eps = {eps}): {e}"),
                });
                break;
            }
        }
    }
    let viol: Vec<f64> = entries.iter().map(|e| e.violation.abs).collect();
    let mass: Vec<f64> = entries.iter().map(|e| e.penalty_mass).collect();
    let set_b: Vec<f64> = entries.iter().map(|e| e.set_b).collect();
    let (lo, hi) = mass.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(*m), hi.max(*m)));
    let mass_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let violation_decreasing = decreasing_with_reversal(&viol, REVERSAL_TOL);
    let mass_bounded = mass_spread <= 2.0;
    let set_b_decreasing = decreasing_with_reversal(&set_b, f64::INFINITY)
        && set_b.last().zip(set_b.first()).is_none_or(|(l, f)| l <= f);
    let partition_ok = entries.iter().all(|e| e.partition_defect <= 1e-12);
    let pass = failure.is_none() && violation_decreasing && mass_bounded && set_b_decreasing && partition_ok;
    Ok(PenaltyReport {
        eps_schedule: eps_schedule.to_vec(),
        space_time_measure: space_time_measure(&base.grid, &data.t_grid),
        entries,
        failure,
        violation_decreasing,
        mass_spread,
        mass_bounded,
        set_b_decreasing,
        partition_ok,
        pass,
    })
}

pub const PENALTY_CSV_HEADER: [&str; 11] = [
    "eps",
    "violation_abs",
    "violation_pow",
    "penalty_mass",
    "time_derivative",
    "h_linf_l2",
    "curl_lp",
    "set_a",
    "set_b",
    "set_c",
    "set_rest",
];

/// `penalty.json`, `penalty.csv` and `penalty.svg`.
pub fn write_penalty(dir: &Path, rep: &PenaltyReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    report::write_json(&dir.join("penalty.json"), rep)?;
    let rows: Vec<Vec<f64>> = rep
        .entries
        .iter()
        .map(|e| {
            vec![
                e.eps,
                e.violation.abs,
                e.violation.pow,
                e.penalty_mass,
                e.time_derivative,
                e.h_linf_l2,
                e.curl_lp,
                e.set_a,
                e.set_b,
                e.set_c,
                e.set_rest,
            ]
        })
        .collect();
    report::write_csv(&dir.join("penalty.csv"), &PENALTY_CSV_HEADER, &rows)?;
    let eps: Vec<f64> = rep.entries.iter().map(|e| e.eps).collect();
    report::line_plot(
        &dir.join("penalty.svg"),
        &PlotSpec {
            title: "constraint violation against eps",
            x_label: "eps",
            y_label: "violation",
            x_scale: Scale::Log,
            y_scale: Scale::Log,
        },
        &[
            Curve::new("(|curl h| - psi)+", eps.clone(), rep.entries.iter().map(|e| e.violation.abs).collect()),
            Curve::new("(|curl h|^p - psi^p)+", eps, rep.entries.iter().map(|e| e.violation.pow).collect()),
        ],
    )
}

// -------------------------------------------------------------- rescaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescaled {
    pub field: FaceField,
    pub eta: f64,
    /// `max |psi1 - psi2|`.
    pub beta: f64,
    /// `max (|curl(eta h1)| - psi2)`; non-positive when feasible.
    pub max_excess: f64,
    /// `|curl(h1 - eta h1)|_p`.
    pub error: f64,
    /// `(beta / alpha) |curl h1|_p`.
    pub bound: f64,
}

/// `eta h1` with `eta = alpha / (alpha + beta)`, which moves a field feasible
/// for `psi1` into the set of `psi2`.
pub fn rescale_to_feasible(h1: &FaceField, psi1: &CellField, psi2: &CellField, alpha: f64, p: f64) -> Result<Rescaled> {
    let grid = h1.grid;
    psi1.check_grid(&grid)?;
    psi2.check_grid(&grid)?;
    if !(alpha > 0.0) || psi2.min() < alpha {
        return invalid("alpha must be positive and below min psi2");
    }
    let c = mesh::curl(h1)?;
    let mags = c.magnitudes();
    let excess = mags
        .data
        .iter()
        .zip(&psi1.data)
        .map(|(m, s)| (m - s) / s)
        .fold(f64::NEG_INFINITY, f64::max);
    if excess > FEASIBLE_TOL {
        return invalid(format!("h1 violates psi1 by a relative {excess:.3e}"));
    }
    let beta = psi1.data.iter().zip(&psi2.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let excess_of = |f: &FaceField| -> Result<f64> {
        Ok(mesh::curl(f)?
            .magnitudes()
            .data
            .iter()
            .zip(&psi2.data)
            .map(|(m, s)| m - s)
            .fold(f64::NEG_INFINITY, f64::max))
    };
    let mut eta = alpha / (alpha + beta);
    let mut field = h1.scaled(eta);
    let mut max_excess = excess_of(&field)?;
    // Rounding alone can leave a touching cell a few ulps outside.
    for _ in 0..8 {
        if max_excess <= 0.0 {
            break;
        }
        eta *= 1.0 - 4.0 * f64::EPSILON;
        field = h1.scaled(eta);
        max_excess = excess_of(&field)?;
    }
    let norm = c.lp_norm(p)?;
    Ok(Rescaled {
        error: mesh::curl(&h1.sub(&field))?.lp_norm(p)?,
        bound: beta / alpha * norm,
        field,
        eta,
        beta,
        max_excess,
    })
}

/// Node-by-node [`rescale_to_feasible`].
pub fn rescale_series(
    h1: &[FaceField],
    psi1: &[CellField],
    psi2: &[CellField],
    alpha: f64,
    p: f64,
) -> Result<Vec<Rescaled>> {
    if h1.len() != psi1.len() || h1.len() != psi2.len() {
        return invalid("series lengths differ");
    }
    (0..h1.len()).map(|k| rescale_to_feasible(&h1[k], &psi1[k], &psi2[k], alpha, p)).collect()
}

// ---------------------------------------------- continuous dependence

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    F,
    G,
    H0,
    Psi,
}

impl Channel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f" => Ok(Channel::F),
            "g" => Ok(Channel::G),
            "h0" => Ok(Channel::H0),
            "psi" => Ok(Channel::Psi),
            other => invalid(format!("unknown perturbation channel '{other}' (f, g, h0 or psi)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub channel: Channel,
    /// Positive, decreasing.
    pub deltas: Vec<f64>,
    /// Penalty parameter standing in for the inequality when psi is present.
    pub eps: f64,
}

/// Data with one channel moved by `delta`:
/// `f + delta Shear(1)`, `g + delta Twist(1)`, `h0 + delta Vortex(1, 0)` or
/// `psi + delta`.
pub fn perturbed_data(base: &TimeSeriesData, channel: Channel, delta: f64, proj: &LerayProjector) -> Result<TimeSeriesData> {
    let grid = *base.grid();
    let mut out = base.clone();
    match channel {
        Channel::F => {
            let dir = FieldPreset::Shear { amplitude: delta }.sample(&grid);
            out.f.iter_mut().for_each(|f| f.axpy(1.0, &dir));
        }
        Channel::G => {
            let dir = SurfacePreset::Twist { amplitude: delta }.build(&grid);
            out.g.iter_mut().for_each(|g| g.axpy(1.0, &dir));
        }
        Channel::H0 => {
            let dir = FieldPreset::Vortex { amplitude: delta, axis: 0 }.build(&grid, proj)?;
            out.h0.axpy(1.0, &dir);
            if let Some(c) = &out.constraint {
                let excess = crate::stationary::max_relative_excess(&out.h0, &c.psi[0])?;
                if excess > FEASIBLE_TOL {
                    return invalid(format!("perturbed initial field is infeasible (excess {excess:.3e})"));
                }
            }
        }
        Channel::Psi => {
            let Some(c) = &base.constraint else {
                return invalid("psi channel needs a constraint");
            };
            let psi = c.psi.iter().map(|s| CellField {
                data: s.data.iter().map(|v| v + delta).collect(),
                ..s.clone()
            });
            out.constraint = Some(crate::constitutive::ConstraintProfile::new(psi.collect(), &base.t_grid)?);
        }
    }
    out.validate()?;
    Ok(out)
}

/// Gap between two data sets in the channel's norm:
/// `(sum dt |df|^2)^{1/2}` raised to `min(p', 2)` for `f` and `g`,
/// `|dh0|^2`, and `max |dpsi|`.
pub fn data_gap(a: &TimeSeriesData, b: &TimeSeriesData, channel: Channel, p: f64) -> Result<f64> {
    let w = step_weights(&a.t_grid);
    let e = (p / (p - 1.0)).min(2.0);
    Ok(match channel {
        Channel::F => (0..w.len()).map(|k| w[k] * a.f[k].sub(&b.f[k]).norm_sq()).sum::<f64>().sqrt().powf(e),
        Channel::G => (0..w.len()).map(|k| w[k] * a.g[k].sub(&b.g[k]).norm_sq()).sum::<f64>().sqrt().powf(e),
        Channel::H0 => a.h0.sub(&b.h0).norm_sq(),
        Channel::Psi => match (&a.constraint, &b.constraint) {
            (Some(x), Some(y)) => x
                .psi
                .iter()
                .zip(&y.psi)
                .flat_map(|(u, v)| u.data.iter().zip(&v.data).map(|(s, t)| (s - t).abs()))
                .fold(0.0, f64::max),
            _ => return invalid("psi gap needs two constraints"),
        },
    })
}

/// `(|h1 - h2|^2_{L^inf L^2}, |curl(h1 - h2)|^{max(p, 2)}_{L^p(Q_T)})`.
pub fn solution_gap(a: &Trajectory, b: &Trajectory, p: f64) -> Result<(f64, f64)> {
    if a.t != b.t {
        return invalid("trajectories live on different time grids");
    }
    let w = step_weights(&a.t);
    let diff: Vec<FaceField> = a.h.iter().zip(&b.h).map(|(x, y)| x.sub(y)).collect();
    let curl = curl_space_time(&diff, &w, p)?.powf(p.max(2.0) / p);
    Ok((linf_l2_sq(&a.h, &b.h), curl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CDEntry {
    pub delta: f64,
    pub data_gap: f64,
    pub lhs_l2: f64,
    pub lhs_curl: f64,
    pub lhs: f64,
    pub ratio: f64,
    /// `|h1(t_k) - h2(t_k)|` per node.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CDReport {
    pub channel: Channel,
    pub eps: Option<f64>,
    pub entries: Vec<CDEntry>,
    pub failure: Option<SweepFailure>,
    /// Largest ratio.
    pub fitted_constant: f64,
    /// Largest ratio over the ratio at the largest delta.
    pub spread: f64,
    pub bounded: bool,
    /// `h0` channel: node distances never grow.
    pub contraction: Option<bool>,
    pub pass: bool,
}

/// Paired runs with one data channel perturbed by each `delta`.
pub fn continuous_dependence_experiment(base: &BaseConfig, plan: &PerturbationPlan) -> Result<CDReport> {
    if plan.deltas.is_empty() || plan.deltas.iter().any(|d| !(*d > 0.0)) || plan.deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return invalid("perturbation magnitudes must be positive and decreasing");
    }
    let data = base.data.build(&base.grid)?;
    let eps = data.constraint.as_ref().map(|_| plan.eps);
    if let Some(e) = eps {
        if !(e > 0.0 && e < 1.0) {
            return invalid("penalty eps must lie in (0, 1)");
        }
    }
    if plan.channel == Channel::Psi && eps.is_none() {
        return invalid("psi channel needs a constraint");
    }
    let params = match eps {
        Some(e) => base.params.clone().with_penalty(e),
        None => base.params.clone(),
    };
    let p = params.p;
    let proj = LerayProjector::new(&base.grid);
    let reference = run_from(&data, &params, &base.stepper, Some(&proj))?;
    let runs = par::map(&plan.deltas, |&d| -> Result<(TimeSeriesData, Trajectory)> {
        let pd = perturbed_data(&data, plan.channel, d, &proj)?;
        let traj = run_warm(&pd, &params, &base.stepper, Some(&proj), Some(&reference))?;
        Ok((pd, traj))
    });
    let mut entries = Vec::new();
    let mut failure = None;
    for (pos, (run, &delta)) in runs.into_iter().zip(&plan.deltas).enumerate() {
        let (pd, traj) = match run {
            Ok(r) => r,
            Err(e) => {
                failure = Some(SweepFailure { position: pos, value: delta, message: e.to_string() });
                break;
            }
        };
        let gap = data_gap(&data, &pd, plan.channel, p)?;
        let (l2, curl) = solution_gap(&reference, &traj, p)?;
        let distances = reference.h.iter().zip(&traj.h).map(|(a, b)| a.sub(b).norm_sq().sqrt()).collect();
        entries.push(CDEntry {
            delta,
            data_gap: gap,
            lhs_l2: l2,
            lhs_curl: curl,
            lhs: l2 + curl,
            ratio: (l2 + curl) / gap,
            distances,
        });
    }
    let ratios: Vec<f64> = entries.iter().map(|e| e.ratio).collect();
    let fitted_constant = ratios.iter().cloned().fold(0.0, f64::max);
    let spread = match ratios.first() {
        Some(r) if *r > 0.0 => fitted_constant / r,
        _ => f64::INFINITY,
    };
    let bounded = failure.is_none() && spread <= RATIO_SPREAD;
    let contraction = (plan.channel == Channel::H0).then(|| {
        entries.iter().all(|e| {
            let d0 = e.distances[0];
            e.distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + CONTRACTION_TOL) + CONTRACTION_TOL * d0)
        })
    });
    let pass = bounded && contraction.unwrap_or(true);
    Ok(CDReport {
        channel: plan.channel,
        eps,
        entries,
        failure,
        fitted_constant,
        spread,
        bounded,
        contraction,
        pass,
    })
}

pub const CDEP_CSV_HEADER: [&str; 7] = ["delta", "data_gap", "lhs_l2", "lhs_curl", "lhs", "ratio", "max_distance"];

/// `cdep.json`, `cdep.csv` and `cdep.svg`.
pub fn write_cdep(dir: &Path, rep: &CDReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    report::write_json(&dir.join("cdep.json"), rep)?;
    let rows: Vec<Vec<f64>> = rep
        .entries
        .iter()
        .map(|e| {
            vec![
                e.delta,
                e.data_gap,
                e.lhs_l2,
                e.lhs_curl,
                e.lhs,
                e.ratio,
                e.distances.iter().cloned().fold(0.0, f64::max),
            ]
        })
        .collect();
    report::write_csv(&dir.join("cdep.csv"), &CDEP_CSV_HEADER, &rows)?;
    let d: Vec<f64> = rep.entries.iter().map(|e| e.delta).collect();
    report::line_plot(
        &dir.join("cdep.svg"),
        &PlotSpec {
            title: "solution gap against perturbation",
            x_label: "delta",
            y_label: "gap",
            x_scale: Scale::Log,
            y_scale: Scale::Log,
        },
        &[
            Curve::new("lhs", d.clone(), rep.entries.iter().map(|e| e.lhs).collect()),
            Curve::new("data gap", d, rep.entries.iter().map(|e| e.data_gap).collect()),
        ],
    )
}

impl From<SweepFailure> for Error {
    fn from(f: SweepFailure) -> Self {
        Error::NumericFailure {
            stage: format!("sweep position {} (value {})", f.position, f.value),
            reason: f.message,
            residual: f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{uniform_times, PsiPreset};
    use crate::mesh::build_grid;
    use crate::stationary::ball_scaling;
    use proptest::prelude::*;

    fn small(p: f64) -> BaseConfig {
        let grid = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        BaseConfig {
            grid,
            params: ConstitutiveParams::power_law(&grid, p, 1.0),
            data: DataSpec {
                steps: 3,
                t_final: 0.3,
                f: FieldPreset::Shear { amplitude: 1.0 },
                ..Default::default()
            },
            stepper: StepperConfig::oracle(),
        }
    }

    #[test]
    fn violation_of_constant_excess() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let t = uniform_times(1.0, 4);
        let mags = vec![CellField::constant(&g, 2.0); 5];
        let psi = vec![CellField::constant(&g, 1.0); 5];
        let v = magnitude_violation(&t, &mags, &psi, 3.0).unwrap();
        assert!((v.abs - 1.0).abs() < 1e-12);
        assert!((v.pow - 7.0).abs() < 1e-12);
        let ok = magnitude_violation(&t, &psi, &mags, 3.0).unwrap();
        assert_eq!((ok.abs, ok.pow), (0.0, 0.0));
        assert!(magnitude_violation(&t[..3], &mags, &psi, 3.0).is_err());
    }

    #[test]
    fn violation_matches_direct_sum() {
        let g = build_grid([1.0, 0.5, 2.0], [3, 2, 4]).unwrap();
        let proj = LerayProjector::new(&g);
        let t = vec![0.0, 0.1, 0.35, 0.5];
        let h: Vec<FaceField> = (0..4)
            .map(|k| FieldPreset::Random { amplitude: 1.0, seed: k }.build(&g, &proj).unwrap())
            .collect();
        let psi: Vec<CellField> = (0..4).map(|k| PsiPreset { value: 0.5, bump: 0.4, growth: 0.0 }.build(&g, t[k])).collect();
        let v = constraint_violation(&t, &h, &psi, 2.5).unwrap();
        let (mut abs, mut pow) = (0.0, 0.0);
        for k in 1..4 {
            let c = mesh::curl(&h[k]).unwrap();
            for cell in 0..g.n_cells() {
                let [a, b, d] = c.triple(cell);
                let m = (a * a + b * b + d * d).sqrt();
                let s = psi[k].data[cell];
                let wt = (t[k] - t[k - 1]) * g.cell_volume();
                abs += wt * (m - s).max(0.0);
                pow += wt * (m.powf(2.5) - s.powf(2.5)).max(0.0);
            }
        }
        assert!(abs > 0.0);
        assert!((v.abs - abs).abs() <= 1e-12 * abs);
        assert!((v.pow - pow).abs() <= 1e-12 * pow);
    }

    #[test]
    fn reversal_rule() {
        assert!(decreasing_with_reversal(&[4.0, 3.0, 2.0], 0.1));
        assert!(decreasing_with_reversal(&[4.0, 3.0, 3.2, 2.0], 0.1));
        assert!(!decreasing_with_reversal(&[4.0, 3.0, 3.5, 2.0], 0.1));
        assert!(!decreasing_with_reversal(&[4.0, 3.0, 3.1, 2.0, 2.1], 0.1));
        assert!(decreasing_with_reversal(&[0.0, 0.0], 0.1));
    }

    #[test]
    fn rescale_identity_and_halving() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let proj = LerayProjector::new(&g);
        let raw = FieldPreset::Random { amplitude: 1.0, seed: 2 }.build(&g, &proj).unwrap();
        let one = CellField::constant(&g, 1.0);
        let h = raw.scaled(ball_scaling(&raw, &one).unwrap());
        let same = rescale_to_feasible(&h, &one, &one, 1.0, 3.0).unwrap();
        assert_eq!(same.eta, 1.0);
        assert_eq!(same.field, h);
        let half = CellField::constant(&g, 0.5);
        let r = rescale_to_feasible(&h, &one, &half, 0.5, 3.0).unwrap();
        assert_eq!((r.eta, r.beta), (0.5, 0.5));
        let before = mesh::curl(&h).unwrap().magnitudes();
        let after = mesh::curl(&r.field).unwrap().magnitudes();
        for (a, b) in after.data.iter().zip(&before.data) {
            assert!((a - 0.5 * b).abs() <= 1e-15 * b.max(1.0));
        }
        assert!(r.max_excess <= 0.0);
        assert!(rescale_to_feasible(&h.scaled(2.0), &one, &half, 0.5, 3.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rescaled_fields_are_feasible(seed in 0u64..1000, bump1 in -0.9f64..0.9, v2 in 0.2f64..3.0, p in 1.2f64..5.0) {
            let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
            let proj = LerayProjector::new(&g);
            let psi1 = PsiPreset { value: 1.0, bump: bump1, growth: 0.0 }.build(&g, 0.0);
            let psi2 = PsiPreset { value: v2, bump: -0.5, growth: 0.0 }.build(&g, 0.0);
            let raw = FieldPreset::Random { amplitude: 1.0, seed }.build(&g, &proj).unwrap();
            let h = raw.scaled(ball_scaling(&raw, &psi1).unwrap());
            let r = rescale_to_feasible(&h, &psi1, &psi2, psi2.min(), p).unwrap();
            prop_assert!(r.max_excess <= 0.0, "{}", r.max_excess);
            prop_assert!(r.error <= r.bound * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn inactive_penalty_has_unit_mass() {
        let mut base = small(3.0);
        base.data.psi = Some(PsiPreset::constant(1e3));
        let rep = penalty_sweep(&base, &[0.5, 0.2]).unwrap();
        for e in &rep.entries {
            assert_eq!(e.violation.abs, 0.0);
            assert!((e.penalty_mass - rep.space_time_measure).abs() <= 1e-12);
            assert!(e.partition_defect <= 1e-12);
            assert!((e.set_rest - rep.space_time_measure).abs() <= 1e-12);
        }
        assert!(rep.pass, "{rep:?}");
        assert!(penalty_sweep(&base, &[0.2, 0.5]).is_err());
        base.data.psi = None;
        assert!(penalty_sweep(&base, &[0.5]).is_err());
    }

    #[test]
    fn zero_data_sweep_is_zero() {
        let mut base = small(2.0);
        base.data.f = FieldPreset::Zero;
        let rep = p_sweep(&base, &[4.0, 8.0], &[4.0]).unwrap();
        for e in &rep.entries {
            assert_eq!((e.sup_curl, e.ln_norm, e.lq_norms[0]), (0.0, 0.0, 0.0));
        }
        assert!(rep.pass);
    }

    #[test]
    fn schedule_head_matches_plain_run() {
        let base = small(2.0);
        let rep = p_sweep(&base, &[2.0, 4.0], &[3.5]).unwrap();
        let data = base.data.build(&base.grid).unwrap();
        let plain = run_from(&data, &base.params, &base.stepper, None).unwrap();
        assert_eq!(rep.entries[0].trajectory.as_ref().unwrap().h, plain.h);
        assert!(rep.entries[0].below_threshold && !rep.entries[1].below_threshold);
        assert!(p_sweep(&base, &[4.0, 128.0], &[4.0]).is_err());
        assert!(p_sweep(&base, &[8.0, 4.0], &[4.0]).is_err());
    }

    #[test]
    fn zero_perturbation_gives_identical_solutions() {
        let base = small(3.0);
        let proj = LerayProjector::new(&base.grid);
        let data = base.data.build(&base.grid).unwrap();
        let a = run_from(&data, &base.params, &base.stepper, Some(&proj)).unwrap();
        for ch in [Channel::F, Channel::G, Channel::H0] {
            let pd = perturbed_data(&data, ch, 0.0, &proj).unwrap();
            assert_eq!(data_gap(&data, &pd, ch, 3.0).unwrap(), 0.0);
            let b = run_from(&pd, &base.params, &base.stepper, Some(&proj)).unwrap();
            assert_eq!(solution_gap(&a, &b, 3.0).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn initial_perturbations_contract() {
        let mut base = small(3.0);
        base.data.h0 = FieldPreset::Vortex { amplitude: 1.0, axis: 2 };
        let plan = PerturbationPlan { channel: Channel::H0, deltas: vec![0.1, 0.01], eps: 0.1 };
        let rep = continuous_dependence_experiment(&base, &plan).unwrap();
        assert_eq!(rep.contraction, Some(true));
        for e in &rep.entries {
            assert!(e.lhs_l2 <= e.data_gap * (1.0 + 1e-9));
        }
        let bad = PerturbationPlan { deltas: vec![0.01, 0.1], ..plan };
        assert!(continuous_dependence_experiment(&base, &bad).is_err());
    }

    #[test]
    fn reports_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = small(3.0);
        base.data.psi = Some(PsiPreset::constant(0.5));
        let rep = penalty_sweep(&base, &[0.5, 0.2]).unwrap();
        write_penalty(dir.path(), &rep).unwrap();
        let text = fs::read_to_string(dir.path().join("penalty.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), PENALTY_CSV_HEADER.join(","));
        assert!(dir.path().join("penalty.svg").exists());
    }
}
