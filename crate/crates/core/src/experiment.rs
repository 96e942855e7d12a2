//! Experiment runner behind the `pcurl` binary.
//!
//! Every run writes `run.json` (config echo, versions, seed, verdicts and a
//! kind-specific summary) plus the kind's CSV, SVG and snapshot files.
//! Wall-clock times go to `timings.json` so that `run.json` and the CSV files
//! are byte-identical across reruns.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{decay_experiment, write_decay};
use crate::config::{stationary_eps_schedule, ExperimentConfig, Kind};
use crate::constitutive::{penalized_apply, power_law_apply, verify_structure, ConstitutiveParams, StructureReport};
use crate::data::{div_tolerance, DataSpec, StepData, TimeSeriesData};
use crate::error::{Error, Result};
use crate::evolution::{
    energy_ledger, export_trajectory, run_from, step_energy, write_trajectory_csv, EnergyReport, Trajectory,
};
use crate::limits::{
    constraint_violation, continuous_dependence_experiment, p_sweep, penalty_sweep, write_cdep, write_penalty,
    write_plimit, PerturbationPlan,
};
use crate::mesh::{self, build_grid, structure_suite, write_snapshot, FaceField, GridField, GridSpec, LerayProjector};
use crate::oracle::dense_trajectory;
use crate::report::{self, Curve, PlotSpec, Scale};
use crate::stationary::{minimize_j_from, solve_stationary_vi, StationaryProblem};

/// Relative L2 agreement required of `oracle-compare`.
pub const ORACLE_TOL: f64 = 1e-6;
/// Allowed relative drift of the energy constant under step halving.
pub const HALVING_TOL: f64 = 0.1;
/// Penalty parameter of constrained `evolve` runs without an eps schedule.
pub const EVOLVE_EPS: f64 = 0.05;

pub const STATIONARY_CSV_HEADER: [&str; 4] = ["eps", "iterations", "pg_residual", "max_excess"];
pub const ORACLE_CSV_HEADER: [&str; 5] = ["step", "t", "production_l2", "oracle_l2", "rel_diff"];
pub const STRUCTURE_CSV_HEADER: [&str; 7] = ["law", "p", "samples", "coercivity", "growth", "monotonicity", "pass"];
pub const MESH_CSV_HEADER: [&str; 8] = [
    "nx",
    "ny",
    "nz",
    "trials",
    "div_curl_adjoint",
    "adjointness_defect",
    "leray_idempotence",
    "leray_symmetry",
];

/// Grids of the mesh suite when `verify` has no `[grid]`.
pub const VERIFY_GRIDS: [[usize; 3]; 3] = [[2, 2, 2], [3, 3, 3], [4, 3, 2]];

/// CSV files per kind, for `--help`.
pub fn csv_schemas() -> String {
    use crate::asymptotics::DECAY_CSV_HEADER;
    use crate::evolution::TRAJECTORY_CSV_HEADER;
    use crate::limits::{CDEP_CSV_HEADER, PENALTY_CSV_HEADER, PLIMIT_CSV_HEADER};
    let rows: [(&str, &str, String); 9] = [
        ("evolve", "trajectory.csv", TRAJECTORY_CSV_HEADER.to_string()),
        ("stationary", "stationary.csv", STATIONARY_CSV_HEADER.join(",")),
        ("decay", "decay.csv", DECAY_CSV_HEADER.join(",")),
        ("plimit", "plimit.csv", PLIMIT_CSV_HEADER.join(",")),
        ("penalty-sweep", "penalty.csv", PENALTY_CSV_HEADER.join(",")),
        ("cdep", "cdep.csv", CDEP_CSV_HEADER.join(",")),
        ("verify", "mesh_suite.csv", MESH_CSV_HEADER.join(",")),
        ("verify", "structure.csv", STRUCTURE_CSV_HEADER.join(",")),
        ("oracle-compare", "oracle.csv", ORACLE_CSV_HEADER.join(",")),
    ];
    let mut out = String::from("CSV schemas (header row of each file):\n");
    for (kind, file, header) in rows {
        out.push_str(&format!("  {kind:<15} {file:<16} {header}\n"));
    }
    out.push_str("  decay also writes trajectory.csv with the evolve schema.");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub stage: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub kind: Kind,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
    /// Files written into the output directory, sorted.
    pub artifacts: Vec<String>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    program: &'static str,
    version: &'static str,
    parallel: bool,
    kind: Kind,
    seed: u64,
    config: &'a ExperimentConfig,
    pass: bool,
    error: Option<String>,
    verdicts: &'a [Verdict],
    results: &'a Value,
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    base_dir: &'a Path,
    out: PathBuf,
    verdicts: Vec<Verdict>,
    timings: Vec<Timing>,
    results: serde_json::Map<String, Value>,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f();
        self.timings.push(Timing {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        r.map_err(|e| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        })
    }

    fn verdict(&mut self, stage: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            stage: stage.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    fn result(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.results.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn data_spec(&self) -> Result<DataSpec> {
        self.cfg.data_spec(self.base_dir)
    }
}

/// Runs `cfg`, resolving data files against `base_dir` and writing into `out`.
///
/// Returns the verdicts on completion; a stage error is returned as
/// [`Error::Stage`] after `run.json` records it.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out)?;
    let mut r = Runner {
        cfg,
        base_dir,
        out: out.to_path_buf(),
        verdicts: Vec::new(),
        timings: Vec::new(),
        results: serde_json::Map::new(),
    };
    let total = Instant::now();
    let status = match cfg.kind {
        Kind::Evolve => evolve(&mut r),
        Kind::Stationary => stationary(&mut r),
        Kind::Decay => decay(&mut r),
        Kind::Plimit => plimit(&mut r),
        Kind::PenaltySweep => penalty(&mut r),
        Kind::Cdep => cdep(&mut r),
        Kind::Verify => verify(&mut r),
        Kind::OracleCompare => oracle_compare(&mut r),
    };
    let pass = status.is_ok() && r.verdicts.iter().all(|v| v.pass);
    let results = Value::Object(std::mem::take(&mut r.results));
    let record = RunRecord {
        program: "pcurl",
        version: env!("CARGO_PKG_VERSION"),
        parallel: cfg!(feature = "parallel"),
        kind: cfg.kind,
        seed: cfg.seed,
        config: cfg,
        pass,
        error: status.as_ref().err().map(|e| e.to_string()),
        verdicts: &r.verdicts,
        results: &results,
    };
    report::write_json(&r.path("run.json"), &record)?;
    r.timings.push(Timing {
        stage: "total".into(),
        seconds: total.elapsed().as_secs_f64(),
    });
    report::write_json(&r.path("timings.json"), &r.timings)?;
    status?;
    let mut artifacts: Vec<String> = fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    artifacts.sort();
    Ok(RunOutcome {
        kind: cfg.kind,
        verdicts: r.verdicts,
        pass,
        artifacts,
    })
}

fn write_field(path: &Path, h: &FaceField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(h, &mut w)?;
    w.flush()?;
    Ok(())
}

fn max_div_defect(h: &[FaceField]) -> Result<(f64, bool)> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for hk in h {
        let d = mesh::div(hk)?.max_abs();
        worst = worst.max(d);
        ok &= d <= div_tolerance(hk);
    }
    Ok((worst, ok))
}

fn trajectory_plot(path: &Path, traj: &Trajectory) -> Result<()> {
    let t: Vec<f64> = traj.records.iter().map(|r| r.t).collect();
    let l2: Vec<f64> = traj.records.iter().map(|r| r.l2_norm).collect();
    let curl: Vec<f64> = traj.records.iter().map(|r| r.curl_lp_norm).collect();
    report::line_plot(
        path,
        &PlotSpec {
            title: &format!("trajectory, p = {}", traj.p),
            x_label: "t",
            y_label: "norm",
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
        },
        &[Curve::new("|h|", t.clone(), l2), Curve::new("|curl h|_p", t, curl)],
    )
}

fn evolve_params(cfg: &ExperimentConfig, data: &TimeSeriesData) -> Result<ConstitutiveParams> {
    let params = cfg.params()?;
    Ok(if data.constraint.is_some() {
        let eps = cfg
            .schedule
            .eps_schedule
            .as_ref()
            .and_then(|e| e.last().copied())
            .unwrap_or(EVOLVE_EPS);
        params.with_penalty(eps)
    } else {
        params
    })
}

fn ledger_constant(l: &EnergyReport) -> Option<f64> {
    l.constant.filter(|c| c.is_finite())
}

fn evolve(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let grid = cfg.grid()?;
    let spec = r.data_spec()?;
    let data = r.stage("build data", || spec.build(&grid))?;
    let params = evolve_params(cfg, &data)?;
    let proj = LerayProjector::new(&grid);
    let traj = r.stage("evolve", || run_from(&data, &params, &cfg.stepper, Some(&proj)))?;
    let ledger = r.stage("energy ledger", || energy_ledger(&traj, &data, &params))?;
    r.stage("write", || {
        if cfg.snapshots {
            export_trajectory(&traj, &out)?;
        } else {
            write_trajectory_csv(&traj, &out.join("trajectory.csv"))?;
        }
        report::write_json(&out.join("energy.json"), &ledger)?;
        trajectory_plot(&out.join("trajectory.svg"), &traj)
    })?;
    let (div, div_ok) = max_div_defect(&traj.h)?;
    r.verdict("divergence", div_ok, format!("max |div h| = {div:.3e}"));
    r.verdict(
        "energy ledger",
        ledger.confirmed,
        format!(
            "basic defect {:.3e}, derivative defect {:.3e}",
            ledger.basic_chain.defect, ledger.derivative_chain.defect
        ),
    );
    r.result("energy", &ledger)?;
    r.result("final_l2_norm", traj.last().norm_sq().sqrt())?;
    r.result("max_inner_iters", traj.records.iter().map(|s| s.inner_iters).max())?;
    if let Some(c) = &data.constraint {
        let v = constraint_violation(&data.t_grid, &traj.h, &c.psi, params.p)?;
        r.result("constraint_violation", v)?;
    }
    if cfg.halving_check {
        let fine = DataSpec {
            steps: 2 * spec.steps,
            ..spec.clone()
        };
        let fdata = r.stage("build data (half step)", || fine.build(&grid))?;
        let ftraj = r.stage("evolve (half step)", || run_from(&fdata, &params, &cfg.stepper, Some(&proj)))?;
        let fledger = r.stage("energy ledger (half step)", || energy_ledger(&ftraj, &fdata, &params))?;
        let (c1, c2) = (ledger_constant(&ledger), ledger_constant(&fledger));
        let (pass, drift) = match (c1, c2) {
            (Some(a), Some(b)) => {
                let d = (b / a - 1.0).abs();
                (d <= HALVING_TOL && fledger.confirmed, Some(d))
            }
            (None, None) => (fledger.confirmed, None),
            _ => (false, None),
        };
        r.verdict(
            "dt halving",
            pass,
            format!("C = {c1:?} -> {c2:?}, relative drift {drift:?} (limit {HALVING_TOL})"),
        );
        r.result("halving", json!({ "constant": c1, "constant_half_step": c2, "drift": drift }))?;
    }
    Ok(())
}

fn stationary(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let grid = cfg.grid()?;
    let spec = r.data_spec()?;
    let (f_inf, g_inf) = spec.limits(&grid);
    let params = cfg.params()?;
    let psi_inf = spec.psi.map(|p| p.build(&grid, 0.0));
    let problem = StationaryProblem {
        f_inf,
        g_inf,
        params,
        psi_inf,
    };
    let proj = LerayProjector::new(&grid);
    let (h, rows) = if problem.psi_inf.is_some() {
        let eps = stationary_eps_schedule(cfg);
        let (h, rep) = r.stage("stationary inequality", || solve_stationary_vi(&problem, &eps, &cfg.stepper))?;
        r.verdict(
            "feasibility",
            rep.feasible,
            format!("max relative excess {:.3e} (limit {:.0e})", rep.max_excess, rep.feasibility_tol),
        );
        r.verdict(
            "variational inequality",
            rep.vi_ok,
            format!("residual {:.3e} over {} test fields", rep.vi_residual, rep.test_directions),
        );
        let rows: Vec<Vec<f64>> = rep
            .stages
            .iter()
            .map(|s| vec![s.eps, s.iterations as f64, s.pg_residual, s.max_excess])
            .collect();
        r.result("report", &rep)?;
        (h, rows)
    } else {
        let (h, d) = r.stage("stationary minimization", || minimize_j_from(&problem, None, &proj, &cfg.stepper))?;
        r.verdict(
            "stationary minimization",
            true,
            format!("{} iterations, residual {:.3e}", d.iterations, d.pg_residual),
        );
        (h, vec![vec![f64::INFINITY, d.iterations as f64, d.pg_residual, f64::NAN]])
    };
    let law = if problem.psi_inf.is_some() {
        let eps = *stationary_eps_schedule(cfg).last().expect("non-empty schedule");
        problem.params.clone().with_penalty(eps)
    } else {
        problem.params.clone()
    };
    let data = StepData {
        f: &problem.f_inf,
        g: &problem.g_inf,
        psi: problem.psi_inf.as_ref(),
    };
    let energy = step_energy(&h, &h, f64::INFINITY, data, &law)?;
    let c = mesh::curl(&h)?;
    r.result("energy", energy)?;
    r.result("l2_norm", h.norm_sq().sqrt())?;
    r.result("curl_lp_norm", c.lp_norm(law.p)?)?;
    r.result("max_curl", c.magnitudes().max())?;
    r.stage("write", || {
        write_field(&out.join("h_stationary.field"), &h)?;
        report::write_csv(&out.join("stationary.csv"), &STATIONARY_CSV_HEADER, &rows)
    })?;
    let (div, ok) = max_div_defect(std::slice::from_ref(&h))?;
    r.verdict("divergence", ok, format!("max |div h| = {div:.3e}"));
    Ok(())
}

fn decay(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let grid = cfg.grid()?;
    let spec = r.data_spec()?;
    let params = cfg.params()?;
    let outcome = r.stage("decay", || decay_experiment(&grid, &params, &spec, &cfg.stepper, &cfg.decay))?;
    r.stage("write", || {
        write_decay(&out, &outcome.series, &outcome.verdict)?;
        write_trajectory_csv(&outcome.trajectory, &out.join("trajectory.csv"))?;
        report::write_json(&out.join("energy.json"), &outcome.ledger)?;
        write_field(&out.join("h_inf.field"), &outcome.h_inf)
    })?;
    let v = &outcome.verdict;
    r.verdict(
        "decay bound",
        v.pass,
        format!(
            "regime {}, {} violations from node {}, phi(T)/phi(0) = {:.3e}",
            v.regime.label(),
            v.violations,
            v.first_checked,
            v.final_ratio
        ),
    );
    r.verdict(
        "energy ledger",
        outcome.ledger.confirmed,
        format!(
            "basic defect {:.3e}, derivative defect {:.3e}",
            outcome.ledger.basic_chain.defect, outcome.ledger.derivative_chain.defect
        ),
    );
    r.result("decay", v)?;
    Ok(())
}

fn sweep_failure_detail(f: &Option<crate::limits::SweepFailure>) -> String {
    match f {
        Some(f) => format!("; stopped at position {} (value {}): {}", f.position, f.value, f.message),
        None => String::new(),
    }
}

fn plimit(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let base = cfg.base(r.base_dir)?;
    let n = cfg.schedule.n_schedule.clone().unwrap_or_default();
    let rep = r.stage("p sweep", || p_sweep(&base, &n, &cfg.schedule.probes))?;
    r.stage("write", || write_plimit(&out, &rep))?;
    let last = rep.entries.last();
    r.verdict(
        "p limit",
        rep.pass,
        format!(
            "saturated {}, Lq within {:?}, last sup |curl h| = {:?}{}",
            rep.saturated,
            rep.lq_within,
            last.map(|e| e.sup_curl),
            sweep_failure_detail(&rep.failure)
        ),
    );
    r.result("plimit", &rep)?;
    Ok(())
}

fn penalty(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let base = cfg.base(r.base_dir)?;
    let eps = cfg.schedule.eps_schedule.clone().unwrap_or_default();
    let rep = r.stage("penalty sweep", || penalty_sweep(&base, &eps))?;
    r.stage("write", || write_penalty(&out, &rep))?;
    r.verdict(
        "penalty recovery",
        rep.pass,
        format!(
            "violation decreasing {}, mass spread {:.4}, partition ok {}{}",
            rep.violation_decreasing,
            rep.mass_spread,
            rep.partition_ok,
            sweep_failure_detail(&rep.failure)
        ),
    );
    r.result("penalty", &rep)?;
    Ok(())
}

fn cdep(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let base = cfg.base(r.base_dir)?;
    let plan = PerturbationPlan {
        channel: cfg
            .schedule
            .channel
            .ok_or_else(|| Error::InvalidArgument("cdep needs a channel".into()))?,
        deltas: cfg.schedule.deltas.clone().unwrap_or_default(),
        eps: cfg.schedule.cd_eps,
    };
    let rep = r.stage("continuous dependence", || continuous_dependence_experiment(&base, &plan))?;
    r.stage("write", || write_cdep(&out, &rep))?;
    r.verdict(
        "continuous dependence",
        rep.pass,
        format!(
            "spread {:.3}, bounded {}, contraction {:?}{}",
            rep.spread,
            rep.bounded,
            rep.contraction,
            sweep_failure_detail(&rep.failure)
        ),
    );
    r.result("cdep", &rep)?;
    Ok(())
}

fn verify(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let grids: Vec<GridSpec> = match cfg.grid {
        Some(g) => vec![g],
        None => VERIFY_GRIDS
            .iter()
            .map(|c| build_grid([1.0; 3], *c))
            .collect::<Result<_>>()?,
    };
    let mut suites = Vec::new();
    for g in &grids {
        let [a, b, c] = g.cells;
        let name = format!("mesh suite {a}x{b}x{c}");
        let rep = r.stage(&name, || structure_suite(g, cfg.verify.trials, cfg.seed))?;
        r.verdict(
            &name,
            rep.pass,
            format!(
                "div {:.1e}, adjoint {:.1e}, idempotence {:.1e}, symmetry {:.1e}",
                rep.div_curl_adjoint, rep.adjointness_defect, rep.leray_idempotence, rep.leray_symmetry
            ),
        );
        suites.push(rep);
    }
    let nu = cfg.law.map_or(1.0, |l| l.nu);
    let v = &cfg.verify;
    let mut structure: Vec<StructureReport> = Vec::new();
    for &p in &v.exponents {
        let name = format!("structure p = {p}");
        let pair = r.stage(&name, || {
            let plain = verify_structure(
                "power-law",
                |u| power_law_apply(u, p, nu).expect("finite sample"),
                p,
                v.samples,
                cfg.seed,
            );
            let penalized = verify_structure(
                "penalized",
                |u| penalized_apply(u, v.psi, p, nu, v.penalty_eps).expect("finite sample"),
                p,
                v.samples,
                cfg.seed,
            );
            Ok((plain, penalized))
        })?;
        for rep in [pair.0, pair.1] {
            r.verdict(
                &format!("{} p = {p}", rep.label),
                rep.pass,
                format!(
                    "coercivity {:.4e}, growth {:.4e}, monotonicity {:.4e}",
                    rep.coercivity.constant, rep.growth.constant, rep.monotonicity.constant
                ),
            );
            structure.push(rep);
        }
    }
    r.stage("write", || {
        let rows: Vec<Vec<f64>> = suites
            .iter()
            .map(|s| {
                vec![
                    s.cells[0] as f64,
                    s.cells[1] as f64,
                    s.cells[2] as f64,
                    s.trials as f64,
                    s.div_curl_adjoint,
                    s.adjointness_defect,
                    s.leray_idempotence,
                    s.leray_symmetry,
                ]
            })
            .collect();
        report::write_csv(&out.join("mesh_suite.csv"), &MESH_CSV_HEADER, &rows)?;
        let mut w = csv::Writer::from_path(out.join("structure.csv"))?;
        w.write_record(STRUCTURE_CSV_HEADER)?;
        for s in &structure {
            w.write_record([
                s.label.clone(),
                report::format_value(s.p),
                s.samples.to_string(),
                report::format_value(s.coercivity.constant),
                report::format_value(s.growth.constant),
                report::format_value(s.monotonicity.constant),
                s.pass.to_string(),
            ])?;
        }
        w.flush()?;
        let curve = |label: &str| {
            let pts: Vec<&StructureReport> = structure.iter().filter(|s| s.label == label).collect();
            Curve::new(
                label,
                pts.iter().map(|s| s.p).collect(),
                pts.iter().map(|s| s.monotonicity.constant).collect(),
            )
        };
        report::line_plot(
            &out.join("structure.svg"),
            &PlotSpec {
                title: "empirical monotonicity constant",
                x_label: "p",
                y_label: "constant",
                x_scale: Scale::Linear,
                y_scale: Scale::Log,
            },
            &[curve("power-law"), curve("penalized")],
        )
    })?;
    r.result("mesh_suite", &suites)?;
    r.result("structure", &structure)?;
    Ok(())
}

fn oracle_compare(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let out = r.out.clone();
    let grid = cfg.grid()?;
    let spec = r.data_spec()?;
    let params = cfg.params()?;
    if !params.perturbation.is_zero() {
        return Err(Error::InvalidArgument("oracle-compare covers the plain power law; drop the perturbation".into()));
    }
    let data = r.stage("build data", || spec.build(&grid))?;
    let proj = LerayProjector::new(&grid);
    let traj = r.stage("production", || run_from(&data, &params, &cfg.stepper, Some(&proj)))?;
    let dense = r.stage("oracle", || dense_trajectory(&data, params.p, &params.nu, cfg.oracle_tol))?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, (a, b)) in traj.h.iter().zip(&dense).enumerate() {
        let (na, nb) = (a.norm_sq().sqrt(), b.norm_sq().sqrt());
        let d = a.sub(b).norm_sq().sqrt();
        let rel = if nb > 0.0 { d / nb } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(rel);
        rows.push(vec![k as f64, data.t_grid[k], na, nb, rel]);
    }
    r.stage("write", || {
        report::write_csv(&out.join("oracle.csv"), &ORACLE_CSV_HEADER, &rows)?;
        write_field(&out.join("h_production.field"), traj.last())?;
        write_field(&out.join("h_oracle.field"), dense.last().expect("initial node"))?;
        let t: Vec<f64> = rows.iter().map(|x| x[1]).collect();
        report::line_plot(
            &out.join("oracle.svg"),
            &PlotSpec {
                title: "production against dense oracle",
                x_label: "t",
                y_label: "relative L2 difference",
                x_scale: Scale::Linear,
                y_scale: Scale::Log,
            },
            &[Curve::new("rel diff", t, rows.iter().map(|x| x[4]).collect())],
        )
    })?;
    r.verdict(
        "oracle agreement",
        worst <= ORACLE_TOL,
        format!("max relative diff {worst:.3e} (limit {ORACLE_TOL:.0e})"),
    );
    r.result("max_relative_diff", worst)?;
    Ok(())
}
