//! Experiment configuration files.
//!
//! The format is line based: `[section]` headers, `key = value` entries and
//! `#` comments. Lists are comma separated. Every problem found while parsing
//! is collected and reported with its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asymptotics::DecayConfig;
use crate::constitutive::{ConstitutiveParams, PerturbationKind, PerturbationSpec};
use crate::data::{DataSpec, FieldPreset, PsiPreset, SurfacePreset, TimeProfile};
use crate::error::{Error, Result};
use crate::evolution::{StepMethod, StepperConfig};
use crate::limits::{BaseConfig, Channel};
use crate::mesh::{build_grid, read_snapshot, FaceField, GridSpec};
use crate::stationary::DEFAULT_EPS_SCHEDULE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Evolve,
    Stationary,
    Decay,
    Plimit,
    PenaltySweep,
    Cdep,
    Verify,
    OracleCompare,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Evolve,
        Kind::Stationary,
        Kind::Decay,
        Kind::Plimit,
        Kind::PenaltySweep,
        Kind::Cdep,
        Kind::Verify,
        Kind::OracleCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::Stationary => "stationary",
            Kind::Decay => "decay",
            Kind::Plimit => "plimit",
            Kind::PenaltySweep => "penalty-sweep",
            Kind::Cdep => "cdep",
            Kind::Verify => "verify",
            Kind::OracleCompare => "oracle-compare",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    fn sweeps(self) -> bool {
        matches!(self, Kind::Plimit | Kind::PenaltySweep | Kind::Cdep)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawConfig {
    pub p: f64,
    pub nu: f64,
    pub perturbation: PerturbationSpec,
}

impl LawConfig {
    pub fn params(&self, grid: &GridSpec) -> ConstitutiveParams {
        let mut params = ConstitutiveParams::power_law(grid, self.p, self.nu);
        params.perturbation = self.perturbation;
        params
    }
}

/// A face field given by a preset or read from a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSource {
    pub preset: FieldPreset,
    /// Snapshot path, relative to the config file.
    pub file: Option<String>,
    /// Random presets without an explicit seed follow the experiment seed.
    pub seed_from_experiment: bool,
}

impl FieldSource {
    fn zero() -> Self {
        FieldSource {
            preset: FieldPreset::Zero,
            file: None,
            seed_from_experiment: false,
        }
    }

    fn resolve(&self, seed: u64, base_dir: &Path, grid: &GridSpec) -> Result<(FieldPreset, Option<FaceField>)> {
        let preset = match self.preset {
            FieldPreset::Random { amplitude, .. } if self.seed_from_experiment => FieldPreset::Random { amplitude, seed },
            other => other,
        };
        let field = match &self.file {
            Some(f) => {
                let path = base_dir.join(f);
                let file = File::open(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                let field: FaceField = read_snapshot(BufReader::new(file))?.into_field()?;
                if field.grid.cells != grid.cells || field.grid.extents != grid.extents {
                    return Err(Error::Format(format!("{}: snapshot grid does not match [grid]", path.display())));
                }
                Some(field)
            }
            None => None,
        };
        Ok((preset, field))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub t_final: f64,
    pub steps: usize,
    pub grading: f64,
    pub f: FieldSource,
    pub f_time: TimeProfile,
    pub g: SurfacePreset,
    pub g_time: TimeProfile,
    pub h0: FieldSource,
    pub psi: Option<PsiPreset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub eps_schedule: Option<Vec<f64>>,
    pub n_schedule: Option<Vec<f64>>,
    pub probes: Vec<f64>,
    pub deltas: Option<Vec<f64>>,
    pub channel: Option<Channel>,
    pub cd_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub samples: usize,
    pub exponents: Vec<f64>,
    pub penalty_eps: f64,
    pub psi: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    /// Output directory from the config; the CLI flag takes precedence.
    pub out: Option<String>,
    /// Absent only for `verify`, which then uses its default grids.
    pub grid: Option<GridSpec>,
    /// Absent only for `verify`.
    pub law: Option<LawConfig>,
    pub data: DataConfig,
    pub stepper: StepperConfig,
    /// Tolerance of the dense reference solver.
    pub oracle_tol: f64,
    /// Also rerun with half the step size and compare energy constants.
    pub halving_check: bool,
    pub schedule: ScheduleConfig,
    pub decay: DecayConfig,
    pub verify: VerifyConfig,
    /// Write one field snapshot per time node.
    pub snapshots: bool,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        self.grid
            .ok_or_else(|| Error::InvalidArgument(format!("kind {} needs a [grid] section", self.kind)))
    }

    pub fn params(&self) -> Result<ConstitutiveParams> {
        let law = self
            .law
            .ok_or_else(|| Error::InvalidArgument(format!("kind {} needs a [law] section", self.kind)))?;
        Ok(law.params(&self.grid()?))
    }

    /// Data description with seeds resolved and field files loaded from
    /// paths relative to `base_dir`.
    pub fn data_spec(&self, base_dir: &Path) -> Result<DataSpec> {
        let grid = self.grid()?;
        let d = &self.data;
        let (f, f_field) = d.f.resolve(self.seed, base_dir, &grid)?;
        let (h0, h0_field) = d.h0.resolve(self.seed.wrapping_add(1), base_dir, &grid)?;
        Ok(DataSpec {
            t_final: d.t_final,
            steps: d.steps,
            grading: d.grading,
            f,
            f_time: d.f_time,
            g: d.g,
            g_time: d.g_time,
            h0,
            psi: d.psi,
            f_field,
            h0_field,
        })
    }

    pub fn base(&self, base_dir: &Path) -> Result<BaseConfig> {
        Ok(BaseConfig {
            grid: self.grid()?,
            params: self.params()?,
            data: self.data_spec(base_dir)?,
            stepper: self.stepper,
        })
    }
}

// ------------------------------------------------------------------ schema

const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "seed", "out"]),
    ("grid", &["extents", "cells"]),
    ("law", &["p", "nu", "perturbation", "perturbation_scale"]),
    ("time", &["t_final", "steps", "grading", "halving_check"]),
    ("f", &["kind", "amplitude", "axis", "seed", "file", "time", "rate", "floor"]),
    ("g", &["kind", "amplitude", "t1", "t2", "time", "rate", "floor"]),
    ("h0", &["kind", "amplitude", "axis", "seed", "file"]),
    ("psi", &["value", "bump", "growth"]),
    ("solver", &["tol", "max_iters", "method", "oracle_tol"]),
    ("schedule", &["eps_schedule", "n_schedule", "probes", "deltas", "channel", "cd_eps"]),
    ("decay", &["poincare_l2", "data_constant", "t0", "resolution"]),
    ("verify", &["samples", "exponents", "penalty_eps", "psi", "trials"]),
    ("output", &["dir", "snapshots"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Doc {
    sections: BTreeMap<String, Section>,
    last_line: usize,
    errors: Vec<(usize, String)>,
}

impl Doc {
    fn parse(text: &str) -> Doc {
        let mut doc = Doc {
            sections: BTreeMap::new(),
            last_line: text.lines().count().max(1),
            errors: Vec::new(),
        };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    doc.err(line, format!("malformed section header '{body}'"));
                    current = None;
                    continue;
                };
                let name = name.trim().to_string();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    doc.err(line, format!("unknown section [{name}]"));
                    current = None;
                } else if doc.sections.contains_key(&name) {
                    doc.err(line, format!("duplicate section [{name}]"));
                    current = None;
                } else {
                    doc.sections.insert(
                        name.clone(),
                        Section {
                            line,
                            entries: BTreeMap::new(),
                        },
                    );
                    current = Some(name);
                }
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                doc.err(line, format!("expected 'key = value', got '{body}'"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = current.clone() else {
                if doc.sections.is_empty() {
                    doc.err(line, format!("key '{key}' appears before any [section]"));
                }
                continue;
            };
            let allowed = SCHEMA.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                doc.err(line, format!("unknown key '{key}' in [{sec}]"));
                continue;
            }
            if value.is_empty() {
                doc.err(line, format!("empty value for '{key}'"));
                continue;
            }
            let entries = &mut doc.sections.get_mut(&sec).expect("current section exists").entries;
            if let Some(prev) = entries.get(key) {
                let msg = format!("duplicate key '{key}' in [{sec}] (first on line {})", prev.line);
                doc.err(line, msg);
                continue;
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        doc
    }

    fn err(&mut self, line: usize, msg: impl Into<String>) {
        self.errors.push((line, msg.into()));
    }

    fn has(&self, sec: &str) -> bool {
        self.sections.contains_key(sec)
    }

    fn section_line(&self, sec: &str) -> usize {
        self.sections.get(sec).map_or(self.last_line, |s| s.line)
    }

    fn raw(&self, sec: &str, key: &str) -> Option<(String, usize)> {
        self.sections
            .get(sec)
            .and_then(|s| s.entries.get(key))
            .map(|e| (e.value.clone(), e.line))
    }

    fn line_of(&self, sec: &str, key: &str) -> usize {
        self.raw(sec, key).map_or_else(|| self.section_line(sec), |(_, l)| l)
    }

    fn missing(&mut self, sec: &str, key: &str) {
        let line = self.section_line(sec);
        let msg = if self.has(sec) {
            format!("missing required key '{key}' in [{sec}]")
        } else {
            format!("missing required key '{key}' (section [{sec}] not found)")
        };
        self.err(line, msg);
    }

    fn get<T>(&mut self, sec: &str, key: &str, what: &str, conv: impl Fn(&str) -> Option<T>) -> Option<T> {
        let (v, line) = self.raw(sec, key)?;
        match conv(&v) {
            Some(x) => Some(x),
            None => {
                self.err(line, format!("malformed {what} for '{key}': '{v}'"));
                None
            }
        }
    }

    fn f64(&mut self, sec: &str, key: &str) -> Option<f64> {
        self.get(sec, key, "number", parse_f64)
    }

    fn f64_or(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        self.f64(sec, key).unwrap_or(default)
    }

    fn req_f64(&mut self, sec: &str, key: &str) -> Option<f64> {
        if self.raw(sec, key).is_none() {
            self.missing(sec, key);
            return None;
        }
        self.f64(sec, key)
    }

    fn usize(&mut self, sec: &str, key: &str) -> Option<usize> {
        self.get(sec, key, "non-negative integer", |s| s.parse::<usize>().ok())
    }

    fn u64(&mut self, sec: &str, key: &str) -> Option<u64> {
        self.get(sec, key, "non-negative integer", |s| s.parse::<u64>().ok())
    }

    fn bool(&mut self, sec: &str, key: &str) -> Option<bool> {
        self.get(sec, key, "boolean", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    fn list(&mut self, sec: &str, key: &str) -> Option<Vec<f64>> {
        self.get(sec, key, "number list", |s| s.split(',').map(|x| parse_f64(x.trim())).collect())
    }

    fn str(&mut self, sec: &str, key: &str) -> Option<String> {
        self.raw(sec, key).map(|(v, _)| v)
    }

    /// Parses a keyword value, reporting `options` on mismatch.
    fn choice<T: Copy>(&mut self, sec: &str, key: &str, options: &[(&str, T)]) -> Option<T> {
        let (v, line) = self.raw(sec, key)?;
        match options.iter().find(|(n, _)| *n == v) {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(line, format!("'{key}' must be one of {}, got '{v}'", names.join(", ")));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, sec: &str, key: &str, msg: impl Into<String>) {
        if !ok {
            let line = self.line_of(sec, key);
            self.err(line, msg);
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

// ------------------------------------------------------------------ parsing

/// Parses a config whose `[experiment]` section names the kind.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_inner(text, None)
}

/// Parses a config for `kind`; a `kind` entry in the file must agree.
pub fn parse_config_for(text: &str, kind: Kind) -> Result<ExperimentConfig> {
    parse_inner(text, Some(kind))
}

/// Reads and parses a config file for `kind`.
pub fn load_config(path: &Path, kind: Kind) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    parse_config_for(&text, kind)
}

fn parse_inner(text: &str, given: Option<Kind>) -> Result<ExperimentConfig> {
    let mut doc = Doc::parse(text);
    let kind_options: Vec<(&str, Kind)> = Kind::ALL.iter().map(|k| (k.name(), *k)).collect();
    let from_file = doc.choice("experiment", "kind", &kind_options);
    let kind = match (given, from_file) {
        (Some(g), Some(f)) if g != f => {
            let line = doc.line_of("experiment", "kind");
            doc.err(line, format!("config is for kind '{f}' but '{g}' was requested"));
            Some(g)
        }
        (Some(g), _) => Some(g),
        (None, Some(f)) => Some(f),
        (None, None) => {
            if doc.raw("experiment", "kind").is_none() {
                doc.missing("experiment", "kind");
            }
            None
        }
    };
    let seed = doc.u64("experiment", "seed").unwrap_or(0);
    let out = doc.str("output", "dir").or_else(|| doc.str("experiment", "out"));
    let verify_kind = kind == Some(Kind::Verify);

    let grid = parse_grid(&mut doc, verify_kind);
    let law = parse_law(&mut doc, verify_kind);
    let data = parse_data(&mut doc);
    let (stepper, oracle_tol) = parse_solver(&mut doc, kind);
    let halving_check = doc.bool("time", "halving_check").unwrap_or(false);
    let schedule = parse_schedule(&mut doc);
    let decay = parse_decay(&mut doc);
    let verify = parse_verify(&mut doc);
    let snapshots = doc.bool("output", "snapshots").unwrap_or(true);

    if let Some(kind) = kind {
        kind_requirements(&mut doc, kind, &data, &schedule);
    }

    if !doc.errors.is_empty() {
        let mut errors = doc.errors;
        errors.sort_by_key(|(l, _)| *l);
        return Err(Error::Config(errors.into_iter().map(|(l, m)| format!("line {l}: {m}")).collect()));
    }
    Ok(ExperimentConfig {
        kind: kind.expect("kind present when no errors"),
        seed,
        out,
        grid,
        law,
        data: data.expect("data present when no errors"),
        stepper,
        oracle_tol,
        halving_check,
        schedule,
        decay,
        verify,
        snapshots,
    })
}

fn parse_grid(doc: &mut Doc, optional: bool) -> Option<GridSpec> {
    if optional && !doc.has("grid") {
        return None;
    }
    let extents = doc.list("grid", "extents").unwrap_or_else(|| vec![1.0; 3]);
    let cells = if doc.raw("grid", "cells").is_none() {
        doc.missing("grid", "cells");
        None
    } else {
        doc.get("grid", "cells", "cell count list", |s| {
            s.split(',').map(|x| x.trim().parse::<usize>().ok()).collect::<Option<Vec<usize>>>()
        })
    };
    let cells = match cells?.as_slice() {
        [n] => [*n; 3],
        [a, b, c] => [*a, *b, *c],
        _ => {
            let line = doc.line_of("grid", "cells");
            doc.err(line, "'cells' needs one or three counts");
            return None;
        }
    };
    let extents = match extents.as_slice() {
        [e] => [*e; 3],
        [a, b, c] => [*a, *b, *c],
        _ => {
            let line = doc.line_of("grid", "extents");
            doc.err(line, "'extents' needs one or three lengths");
            return None;
        }
    };
    match build_grid(extents, cells) {
        Ok(g) => Some(g),
        Err(e) => {
            let line = doc.line_of("grid", "cells");
            doc.err(line, e.to_string());
            None
        }
    }
}

fn parse_law(doc: &mut Doc, optional: bool) -> Option<LawConfig> {
    if optional && !doc.has("law") {
        return None;
    }
    let p = doc.req_f64("law", "p");
    if let Some(p) = p {
        doc.check(p > 1.0, "law", "p", format!("p must exceed 1, got {p}"));
    }
    let nu = doc.f64_or("law", "nu", 1.0);
    doc.check(nu > 0.0, "law", "nu", "nu must be positive");
    let kind = doc
        .choice(
            "law",
            "perturbation",
            &[("zero", PerturbationKind::Zero), ("linear-saturating", PerturbationKind::LinearSaturating)],
        )
        .unwrap_or(PerturbationKind::Zero);
    let scale = doc.f64_or("law", "perturbation_scale", 0.0);
    doc.check(scale >= 0.0, "law", "perturbation_scale", "perturbation_scale must be non-negative");
    Some(LawConfig {
        p: p?,
        nu,
        perturbation: PerturbationSpec { kind, scale },
    })
}

fn parse_time_profile(doc: &mut Doc, sec: &str) -> TimeProfile {
    let kind = doc.choice(sec, "time", &[("constant", 0), ("decay", 1), ("ramp", 2)]).unwrap_or(0);
    let rate = doc.f64(sec, "rate");
    let floor = doc.f64(sec, "floor");
    match kind {
        1 => {
            let rate = rate.unwrap_or(1.0);
            let floor = floor.unwrap_or(0.0);
            doc.check(rate > 0.0, sec, "rate", "rate must be positive");
            doc.check((0.0..=1.0).contains(&floor), sec, "floor", "floor must lie in [0, 1]");
            TimeProfile::Decay { rate, floor }
        }
        2 => {
            let rate = rate.unwrap_or(1.0);
            doc.check(rate > 0.0, sec, "rate", "rate must be positive");
            TimeProfile::Ramp { rate }
        }
        _ => {
            if rate.is_some() || floor.is_some() {
                let line = doc.line_of(sec, if rate.is_some() { "rate" } else { "floor" });
                doc.err(line, format!("'rate' and 'floor' need [{sec}] time = decay or ramp"));
            }
            TimeProfile::Constant
        }
    }
}

fn parse_field(doc: &mut Doc, sec: &str) -> FieldSource {
    if !doc.has(sec) {
        return FieldSource::zero();
    }
    let kind = doc
        .choice(sec, "kind", &[("zero", 0), ("vortex", 1), ("shear", 2), ("random", 3), ("file", 4)])
        .unwrap_or(0);
    let amplitude = doc.f64_or(sec, "amplitude", 1.0);
    let axis = doc.usize(sec, "axis").unwrap_or(2);
    doc.check(axis <= 2, sec, "axis", "axis must be 0, 1 or 2");
    let seed = doc.u64(sec, "seed");
    let file = doc.str(sec, "file");
    if kind == 4 && file.is_none() {
        doc.missing(sec, "file");
    }
    if kind != 4 && file.is_some() {
        let line = doc.line_of(sec, "file");
        doc.err(line, format!("'file' needs [{sec}] kind = file"));
    }
    let preset = match kind {
        1 => FieldPreset::Vortex { amplitude, axis },
        2 => FieldPreset::Shear { amplitude },
        3 => FieldPreset::Random {
            amplitude,
            seed: seed.unwrap_or(0),
        },
        _ => FieldPreset::Zero,
    };
    FieldSource {
        preset,
        file,
        seed_from_experiment: kind == 3 && seed.is_none(),
    }
}

fn parse_data(doc: &mut Doc) -> Option<DataConfig> {
    let t_final = doc.f64_or("time", "t_final", 1.0);
    doc.check(t_final > 0.0, "time", "t_final", "t_final must be positive");
    let steps = doc.usize("time", "steps").unwrap_or(10);
    doc.check(steps >= 1, "time", "steps", "steps must be at least 1");
    let grading = doc.f64_or("time", "grading", 1.0);
    doc.check((1.0..=2.0).contains(&grading), "time", "grading", "grading must lie in [1, 2]");

    let f = parse_field(doc, "f");
    let f_time = parse_time_profile(doc, "f");
    let gk = doc
        .choice("g", "kind", &[("zero", 0), ("constant", 1), ("twist", 2)])
        .unwrap_or(0);
    let g = match gk {
        1 => SurfacePreset::Constant {
            t1: doc.f64_or("g", "t1", 0.0),
            t2: doc.f64_or("g", "t2", 0.0),
        },
        2 => SurfacePreset::Twist {
            amplitude: doc.f64_or("g", "amplitude", 1.0),
        },
        _ => SurfacePreset::Zero,
    };
    let g_time = parse_time_profile(doc, "g");
    let h0 = parse_field(doc, "h0");
    let psi = if doc.has("psi") {
        let value = doc.req_f64("psi", "value");
        let bump = doc.f64_or("psi", "bump", 0.0);
        let growth = doc.f64_or("psi", "growth", 0.0);
        if let Some(v) = value {
            doc.check(v > 0.0, "psi", "value", "psi value must be positive");
        }
        doc.check(bump.abs() < 1.0, "psi", "bump", "|bump| must be below 1");
        doc.check(growth >= 0.0, "psi", "growth", "growth must be non-negative");
        Some(PsiPreset {
            value: value?,
            bump,
            growth,
        })
    } else {
        None
    };
    Some(DataConfig {
        t_final,
        steps,
        grading,
        f,
        f_time,
        g,
        g_time,
        h0,
        psi,
    })
}

fn parse_solver(doc: &mut Doc, kind: Option<Kind>) -> (StepperConfig, f64) {
    let mut cfg = if kind.is_some_and(Kind::sweeps) {
        StepperConfig::sweep()
    } else {
        StepperConfig::oracle()
    };
    if let Some(tol) = doc.f64("solver", "tol") {
        doc.check(tol > 0.0 && tol < 1.0, "solver", "tol", "tol must lie in (0, 1)");
        cfg.solver.tol = tol;
    }
    if let Some(m) = doc.usize("solver", "max_iters") {
        doc.check(m >= 1, "solver", "max_iters", "max_iters must be at least 1");
        cfg.solver.max_iters = m;
    }
    if let Some(m) = doc.choice(
        "solver",
        "method",
        &[("auto", StepMethod::Auto), ("descent", StepMethod::Descent), ("splitting", StepMethod::Splitting)],
    ) {
        cfg.method = m;
    }
    let oracle_tol = doc.f64_or("solver", "oracle_tol", 1e-12);
    doc.check(oracle_tol > 0.0, "solver", "oracle_tol", "oracle_tol must be positive");
    (cfg, oracle_tol)
}

fn parse_schedule(doc: &mut Doc) -> ScheduleConfig {
    let eps_schedule = doc.list("schedule", "eps_schedule");
    if let Some(e) = &eps_schedule {
        let ok = !e.is_empty() && e.iter().all(|x| *x > 0.0 && *x < 1.0) && strictly_decreasing(e);
        doc.check(ok, "schedule", "eps_schedule", "eps_schedule must be decreasing inside (0, 1)");
    }
    let n_schedule = doc.list("schedule", "n_schedule");
    if let Some(n) = &n_schedule {
        let ok = !n.is_empty() && n.iter().all(|x| *x > 1.0) && strictly_increasing(n);
        doc.check(ok, "schedule", "n_schedule", "n_schedule must be increasing and above 1");
    }
    let probes = doc.list("schedule", "probes").unwrap_or_else(|| vec![4.0]);
    doc.check(
        probes.iter().all(|q| *q >= 1.0),
        "schedule",
        "probes",
        "probe exponents must be at least 1",
    );
    let deltas = doc.list("schedule", "deltas");
    if let Some(d) = &deltas {
        let ok = !d.is_empty() && d.iter().all(|x| *x > 0.0) && strictly_decreasing(d);
        doc.check(ok, "schedule", "deltas", "deltas must be positive and decreasing");
    }
    let channel = doc.choice(
        "schedule",
        "channel",
        &[("f", Channel::F), ("g", Channel::G), ("h0", Channel::H0), ("psi", Channel::Psi)],
    );
    let cd_eps = doc.f64_or("schedule", "cd_eps", 0.05);
    doc.check(cd_eps > 0.0 && cd_eps < 1.0, "schedule", "cd_eps", "cd_eps must lie in (0, 1)");
    ScheduleConfig {
        eps_schedule,
        n_schedule,
        probes,
        deltas,
        channel,
        cd_eps,
    }
}

fn parse_decay(doc: &mut Doc) -> DecayConfig {
    let mut cfg = DecayConfig::default();
    cfg.poincare_l2 = doc.f64("decay", "poincare_l2");
    cfg.data_constant = doc.f64("decay", "data_constant");
    cfg.t0 = doc.f64("decay", "t0");
    cfg.resolution = doc.f64_or("decay", "resolution", cfg.resolution);
    doc.check(cfg.resolution >= 0.0, "decay", "resolution", "resolution must be non-negative");
    cfg
}

fn parse_verify(doc: &mut Doc) -> VerifyConfig {
    let samples = doc.usize("verify", "samples").unwrap_or(100_000);
    doc.check(samples >= 1, "verify", "samples", "samples must be at least 1");
    let exponents = doc
        .list("verify", "exponents")
        .unwrap_or_else(|| vec![1.3, 1.5, 2.0, 3.0, 4.0]);
    doc.check(
        !exponents.is_empty() && exponents.iter().all(|p| *p > 1.0),
        "verify",
        "exponents",
        "verify exponents must exceed 1",
    );
    let penalty_eps = doc.f64_or("verify", "penalty_eps", 0.1);
    doc.check(
        penalty_eps > 0.0 && penalty_eps < 1.0,
        "verify",
        "penalty_eps",
        "penalty_eps must lie in (0, 1)",
    );
    let psi = doc.f64_or("verify", "psi", 1.0);
    doc.check(psi > 0.0, "verify", "psi", "psi must be positive");
    let trials = doc.usize("verify", "trials").unwrap_or(20);
    VerifyConfig {
        samples,
        exponents,
        penalty_eps,
        psi,
        trials,
    }
}

fn kind_requirements(doc: &mut Doc, kind: Kind, data: &Option<DataConfig>, schedule: &ScheduleConfig) {
    let has_psi = data.as_ref().is_some_and(|d| d.psi.is_some());
    let forbid_psi = |doc: &mut Doc| {
        if has_psi {
            let line = doc.section_line("psi");
            doc.err(line, format!("kind {kind} does not take a [psi] section"));
        }
    };
    match kind {
        Kind::PenaltySweep => {
            if !doc.has("psi") {
                doc.missing("psi", "value");
            }
            if schedule.eps_schedule.is_none() && doc.raw("schedule", "eps_schedule").is_none() {
                doc.missing("schedule", "eps_schedule");
            }
        }
        Kind::Plimit => {
            forbid_psi(doc);
            if doc.raw("schedule", "n_schedule").is_none() {
                doc.missing("schedule", "n_schedule");
            }
        }
        Kind::Cdep => {
            if doc.raw("schedule", "deltas").is_none() {
                doc.missing("schedule", "deltas");
            }
            if doc.raw("schedule", "channel").is_none() {
                doc.missing("schedule", "channel");
            }
            if schedule.channel == Some(Channel::Psi) && !doc.has("psi") {
                doc.missing("psi", "value");
            }
        }
        Kind::Decay | Kind::OracleCompare => forbid_psi(doc),
        Kind::Evolve | Kind::Stationary | Kind::Verify => {}
    }
}

/// Eps schedule for constrained stationary solves.
pub fn stationary_eps_schedule(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.schedule
        .eps_schedule
        .clone()
        .unwrap_or_else(|| DEFAULT_EPS_SCHEDULE.to_vec())
}
