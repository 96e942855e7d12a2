//! Time-sampled sources, boundary data, constraint profiles and the analytic
//! presets used by the experiment drivers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::ConstraintProfile;
use crate::error::{invalid, Result};
use crate::mesh::{self, CellField, FaceField, GridField, GridSpec, LerayProjector, SurfaceField};

/// Sources, boundary data and optional constraint on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesData {
    pub t_grid: Vec<f64>,
    /// Volume source per node.
    pub f: Vec<FaceField>,
    /// Tangential boundary data per node.
    pub g: Vec<SurfaceField>,
    pub constraint: Option<ConstraintProfile>,
    pub h0: FaceField,
}

/// Data of one implicit step.
#[derive(Debug, Clone, Copy)]
pub struct StepData<'a> {
    pub f: &'a FaceField,
    pub g: &'a SurfaceField,
    pub psi: Option<&'a CellField>,
}

pub fn uniform_times(t_final: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| t_final * k as f64 / steps as f64).collect()
}

/// Nodes on `[0, t_final]` whose steps grow by `ratio` (uniform for 1).
pub fn graded_times(t_final: f64, steps: usize, ratio: f64) -> Vec<f64> {
    if ratio == 1.0 {
        return uniform_times(t_final, steps);
    }
    let total = (ratio.powi(steps as i32) - 1.0) / (ratio - 1.0);
    let mut out = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    let mut w = 1.0;
    out.push(0.0);
    for _ in 0..steps {
        acc += w;
        w *= ratio;
        out.push(t_final * acc / total);
    }
    out[steps] = t_final;
    out
}

/// Tolerance used for the discrete divergence of admissible fields.
pub fn div_tolerance(h: &FaceField) -> f64 {
    let dmin = h.grid.dx.iter().cloned().fold(f64::INFINITY, f64::min);
    1e-10 * (1.0 + h.max_abs() / dmin)
}

impl TimeSeriesData {
    /// Same `f`, `g` and constraint at every node.
    pub fn stationary(
        t_grid: Vec<f64>,
        f: FaceField,
        g: SurfaceField,
        psi: Option<CellField>,
        h0: FaceField,
    ) -> Result<Self> {
        let n = t_grid.len();
        let constraint = match psi {
            Some(p) => Some(ConstraintProfile::new(vec![p; n], &t_grid)?),
            None => None,
        };
        let data = TimeSeriesData {
            f: vec![f; n],
            g: vec![g; n],
            t_grid,
            constraint,
            h0,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.h0.grid
    }

    pub fn n_steps(&self) -> usize {
        self.t_grid.len() - 1
    }

    pub fn at(&self, k: usize) -> StepData<'_> {
        StepData {
            f: &self.f[k],
            g: &self.g[k],
            psi: self.constraint.as_ref().map(|c| &c.psi[k]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t_grid.len();
        if n < 2 {
            return invalid("time grid needs at least two nodes");
        }
        if self.t_grid[0] < 0.0 || self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("time grid must be non-negative and strictly increasing");
        }
        if self.f.len() != n || self.g.len() != n {
            return invalid("sources must be sampled at every time node");
        }
        let grid = *self.grid();
        for f in &self.f {
            f.check_grid(&grid)?;
        }
        for g in &self.g {
            g.check_grid(&grid)?;
        }
        if self.h0.boundary_normal_max() > 0.0 {
            return invalid("initial field has nonzero boundary-normal faces");
        }
        let div = mesh::div(&self.h0)?.max_abs();
        if div > div_tolerance(&self.h0) {
            return invalid(format!("initial field is not divergence free (max |div| = {div:.3e})"));
        }
        if let Some(c) = &self.constraint {
            if c.psi.len() != n {
                return invalid("constraint must be sampled at every time node");
            }
            for psi in &c.psi {
                psi.check_grid(&grid)?;
            }
            let mags = mesh::curl(&self.h0)?.magnitudes();
            let excess = mags
                .data
                .iter()
                .zip(&c.psi[0].data)
                .map(|(m, s)| (m - s) / s)
                .fold(f64::NEG_INFINITY, f64::max);
            if excess > 1e-9 {
                return invalid(format!("initial field violates the constraint by {excess:.3e} (relative)"));
            }
        }
        Ok(())
    }
}

/// Amplitude modulation in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeProfile {
    Constant,
    /// `floor + (1 - floor) exp(-rate t)`.
    Decay { rate: f64, floor: f64 },
    /// `min(1, rate t)`.
    Ramp { rate: f64 },
}

impl TimeProfile {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Decay { rate, floor } => floor + (1.0 - floor) * (-rate * t).exp(),
            TimeProfile::Ramp { rate } => (rate * t).min(1.0),
        }
    }

    /// Value approached as `t` grows.
    pub fn limit(&self) -> f64 {
        match *self {
            TimeProfile::Constant | TimeProfile::Ramp { .. } => 1.0,
            TimeProfile::Decay { floor, .. } => floor,
        }
    }
}

/// Analytic face-field presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldPreset {
    Zero,
    /// Lowest solenoidal box mode circulating around `axis`.
    Vortex { amplitude: f64, axis: usize },
    /// `A (sin(pi y/Ly), sin(pi z/Lz), sin(pi x/Lx))`.
    Shear { amplitude: f64 },
    /// Projected uniform noise in `[-A, A]`.
    Random { amplitude: f64, seed: u64 },
}

impl FieldPreset {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FieldPreset::Vortex { axis, .. } if axis > 2 => invalid("vortex axis must be 0, 1 or 2"),
            _ => Ok(()),
        }
    }

    /// Raw sample; not projected.
    pub fn sample(&self, grid: &GridSpec) -> FaceField {
        let [lx, ly, lz] = grid.extents;
        let mut out = match *self {
            FieldPreset::Zero => FaceField::new(grid),
            FieldPreset::Vortex { amplitude: a, axis } => {
                let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                let (lb, lc) = (grid.extents[b], grid.extents[c]);
                FaceField::sample(grid, |x| {
                    let mut v = [0.0; 3];
                    v[b] = a * (PI * x[c] / lc).cos() * (PI * x[b] / lb).sin();
                    v[c] = -a * (PI * x[b] / lb).cos() * (PI * x[c] / lc).sin();
                    v
                })
            }
            FieldPreset::Shear { amplitude: a } => FaceField::sample(grid, |x| {
                [
                    a * (PI * x[1] / ly).sin(),
                    a * (PI * x[2] / lz).sin(),
                    a * (PI * x[0] / lx).sin(),
                ]
            }),
            FieldPreset::Random { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = FaceField::new(grid);
                for v in out.data.iter_mut() {
                    *v = amplitude * rng.random_range(-1.0..1.0);
                }
                out
            }
        };
        out.zero_boundary();
        out
    }

    /// Admissible (projected) sample.
    pub fn build(&self, grid: &GridSpec, proj: &LerayProjector) -> Result<FaceField> {
        let raw = self.sample(grid);
        if matches!(self, FieldPreset::Zero) {
            return Ok(raw);
        }
        proj.project(&raw)
    }
}

/// Analytic tangential boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfacePreset {
    Zero,
    /// Same local tangential pair on every face.
    Constant { t1: f64, t2: f64 },
    /// Trace of `A (-y, x, 0)` (centered).
    Twist { amplitude: f64 },
}

impl SurfacePreset {
    pub fn build(&self, grid: &GridSpec) -> SurfaceField {
        match *self {
            SurfacePreset::Zero => SurfaceField::new(grid),
            SurfacePreset::Constant { t1, t2 } => SurfaceField::constant_local(grid, [t1, t2]),
            SurfacePreset::Twist { amplitude: a } => {
                let [cx, cy, _] = grid.extents.map(|e| 0.5 * e);
                SurfaceField::sample(grid, |x| [-a * (x[1] - cy), a * (x[0] - cx), 0.0])
            }
        }
    }
}

/// Constraint level `psi(x, t) = value (1 + bump s(x)) (1 + growth t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiPreset {
    pub value: f64,
    #[serde(default)]
    pub bump: f64,
    #[serde(default)]
    pub growth: f64,
}

impl PsiPreset {
    pub fn constant(value: f64) -> Self {
        PsiPreset {
            value,
            bump: 0.0,
            growth: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value > 0.0) || !(self.bump.abs() < 1.0) || !(self.growth >= 0.0) {
            return invalid("psi needs value > 0, |bump| < 1 and growth >= 0");
        }
        Ok(())
    }

    pub fn build(&self, grid: &GridSpec, t: f64) -> CellField {
        let [lx, ly, lz] = grid.extents;
        let mut out = CellField::new(grid);
        for (c, v) in out.data.iter_mut().enumerate() {
            let (i, j, k) = grid.cell_coords(c);
            let x = [i as f64 * grid.dx[0], j as f64 * grid.dx[1], k as f64 * grid.dx[2]];
            let s = (PI * x[0] / lx).sin() * (PI * x[1] / ly).sin() * (PI * x[2] / lz).sin();
            *v = self.value * (1.0 + self.bump * s) * (1.0 + self.growth * t);
        }
        out
    }
}

/// Full data description built from presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub t_final: f64,
    pub steps: usize,
    /// Ratio of successive step sizes.
    pub grading: f64,
    pub f: FieldPreset,
    pub f_time: TimeProfile,
    pub g: SurfacePreset,
    pub g_time: TimeProfile,
    pub h0: FieldPreset,
    pub psi: Option<PsiPreset>,
    /// Replaces the `f` preset sample (read from a snapshot file).
    #[serde(skip)]
    pub f_field: Option<FaceField>,
    /// Replaces the `h0` preset; projected before use.
    #[serde(skip)]
    pub h0_field: Option<FaceField>,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            t_final: 1.0,
            steps: 10,
            grading: 1.0,
            f: FieldPreset::Zero,
            f_time: TimeProfile::Constant,
            g: SurfacePreset::Zero,
            g_time: TimeProfile::Constant,
            h0: FieldPreset::Zero,
            psi: None,
            f_field: None,
            h0_field: None,
        }
    }
}

impl DataSpec {
    pub fn build(&self, grid: &GridSpec) -> Result<TimeSeriesData> {
        if !(self.t_final > 0.0) || self.steps == 0 {
            return invalid("t_final must be positive and steps at least 1");
        }
        if !(self.grading >= 1.0 && self.grading <= 2.0) {
            return invalid("grading must lie in [1, 2]");
        }
        self.f.validate()?;
        self.h0.validate()?;
        let proj = LerayProjector::new(grid);
        let t_grid = graded_times(self.t_final, self.steps, self.grading);
        let f_raw = self.f_raw(grid)?;
        let g_raw = self.g.build(grid);
        let f = t_grid.iter().map(|&t| f_raw.scaled(self.f_time.factor(t))).collect();
        let g = t_grid.iter().map(|&t| g_raw.scaled(self.g_time.factor(t))).collect();
        let constraint = match &self.psi {
            Some(ps) => {
                ps.validate()?;
                let samples = t_grid.iter().map(|&t| ps.build(grid, t)).collect();
                Some(ConstraintProfile::new(samples, &t_grid)?)
            }
            None => None,
        };
        let data = TimeSeriesData {
            t_grid,
            f,
            g,
            constraint,
            h0: match &self.h0_field {
                Some(h) => {
                    h.check_grid(grid)?;
                    let mut h = h.clone();
                    h.zero_boundary();
                    proj.project(&h)?
                }
                None => self.h0.build(grid, &proj)?,
            },
        };
        data.validate()?;
        Ok(data)
    }

    fn f_raw(&self, grid: &GridSpec) -> Result<FaceField> {
        match &self.f_field {
            Some(f) => {
                f.check_grid(grid)?;
                let mut f = f.clone();
                f.zero_boundary();
                Ok(f)
            }
            None => Ok(self.f.sample(grid)),
        }
    }

    /// Long-time limits `(f_inf, g_inf)` of the modulated data.
    pub fn limits(&self, grid: &GridSpec) -> (FaceField, SurfaceField) {
        let f = self.f_raw(grid).unwrap_or_else(|_| self.f.sample(grid));
        (f.scaled(self.f_time.limit()), self.g.build(grid).scaled(self.g_time.limit()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;

    #[test]
    fn presets_build_admissible_data() {
        let g = build_grid([1.0, 2.0, 1.0], [4, 3, 3]).unwrap();
        let spec = DataSpec {
            f: FieldPreset::Shear { amplitude: 1.0 },
            f_time: TimeProfile::Decay { rate: 2.0, floor: 0.5 },
            g: SurfacePreset::Twist { amplitude: 0.3 },
            h0: FieldPreset::Random { amplitude: 1.0, seed: 4 },
            ..Default::default()
        };
        let d = spec.build(&g).unwrap();
        assert_eq!(d.t_grid.len(), 11);
        assert!((d.f[0].max_abs() * (0.5 + 0.5 * (-2f64).exp()) - d.f[10].max_abs()).abs() < 1e-12);
        assert!(mesh::div(&d.h0).unwrap().max_abs() <= div_tolerance(&d.h0));
    }

    #[test]
    fn vortex_is_discretely_solenoidal() {
        let g = build_grid([1.0; 3], [5, 4, 3]).unwrap();
        for axis in 0..3 {
            let v = FieldPreset::Vortex { amplitude: 1.0, axis }.sample(&g);
            assert_eq!(v.boundary_normal_max(), 0.0);
            let curl = mesh::curl(&v).unwrap();
            assert!(curl.max_abs() > 0.1);
        }
    }

    #[test]
    fn infeasible_initial_field_rejected() {
        let g = build_grid([1.0; 3], [3, 3, 3]).unwrap();
        let spec = DataSpec {
            h0: FieldPreset::Vortex { amplitude: 5.0, axis: 2 },
            psi: Some(PsiPreset::constant(0.1)),
            ..Default::default()
        };
        assert!(spec.build(&g).is_err());
    }

    #[test]
    fn graded_times_end_at_final() {
        let t = graded_times(3.0, 6, 1.5);
        assert_eq!(t.len(), 7);
        assert_eq!(t[6], 3.0);
        let d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        for w in d.windows(2) {
            assert!((w[1] / w[0] - 1.5).abs() < 1e-12);
        }
        assert_eq!(graded_times(1.0, 4, 1.0), uniform_times(1.0, 4));
    }

    #[test]
    fn time_profiles() {
        assert_eq!(TimeProfile::Constant.factor(3.0), 1.0);
        assert_eq!(TimeProfile::Ramp { rate: 2.0 }.factor(0.25), 0.5);
        let d = TimeProfile::Decay { rate: 1.0, floor: 0.2 };
        assert_eq!(d.factor(0.0), 1.0);
        assert!((d.factor(50.0) - d.limit()).abs() < 1e-12);
    }
}
