//! Constitutive laws `a(x, t, u)`: the power law, the exponential penalty
//! and a bounded monotone perturbation, plus a randomized checker for the
//! coercivity, growth and monotonicity conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mesh::CellField;
use crate::par;

/// Largest exponent ever passed to `exp`.
pub const EXP_CAP: f64 = 700.0;

/// `exp(min(x, EXP_CAP))`.
#[inline]
pub fn capped_exp(x: f64) -> f64 {
    x.min(EXP_CAP).exp()
}

/// `m^e` for `m >= 0`, evaluated as `exp(e ln m)` with `0^e = 0`.
#[inline]
pub fn pow_mag(m: f64, e: f64) -> f64 {
    if m == 0.0 {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        capped_exp(e * m.ln())
    }
}

#[inline]
fn norm3(u: [f64; 3]) -> f64 {
    (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

#[inline]
fn scale3(s: f64, u: [f64; 3]) -> [f64; 3] {
    [s * u[0], s * u[1], s * u[2]]
}

fn check_vec(u: [f64; 3]) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        invalid("non-finite vector argument")
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        invalid(format!("penalty eps must lie in (0, 1), got {eps}"))
    }
}

/// Bounded monotone perturbation `delta(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Zero,
    LinearSaturating,
}

impl PerturbationKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PerturbationKind::Zero),
            "linear-saturating" => Ok(PerturbationKind::LinearSaturating),
            other => invalid(format!("unknown perturbation kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub scale: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Zero,
            scale: 0.0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return invalid("perturbation scale must be finite and non-negative");
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.kind == PerturbationKind::Zero || self.scale == 0.0
    }

    /// Radial factor `d(m)` with `delta(u) = d(|u|) u`.
    #[inline]
    pub fn factor(&self, m: f64) -> f64 {
        match self.kind {
            PerturbationKind::Zero => 0.0,
            PerturbationKind::LinearSaturating => self.scale / (1.0 + m),
        }
    }

    /// Potential `D(m)` with `D'(m) = d(m) m` and `D(0) = 0`.
    #[inline]
    pub fn potential(&self, m: f64) -> f64 {
        match self.kind {
            PerturbationKind::Zero => 0.0,
            PerturbationKind::LinearSaturating => self.scale * (m - m.ln_1p()),
        }
    }
}

/// Exponent, coefficient field and penalty parameter of the flux law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstitutiveParams {
    pub p: f64,
    /// Coefficient per edge triple.
    pub nu: CellField,
    pub a_lower: f64,
    pub a_upper: f64,
    pub penalty_eps: Option<f64>,
    pub perturbation: PerturbationSpec,
}

impl ConstitutiveParams {
    /// Power law with constant coefficient `nu`.
    pub fn power_law(grid: &crate::mesh::GridSpec, p: f64, nu: f64) -> Self {
        ConstitutiveParams {
            p,
            nu: CellField::constant(grid, nu),
            a_lower: nu,
            a_upper: nu,
            penalty_eps: None,
            perturbation: PerturbationSpec::default(),
        }
    }

    pub fn with_penalty(mut self, eps: f64) -> Self {
        self.penalty_eps = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return invalid(format!("p must exceed 1, got {}", self.p));
        }
        if !(self.a_lower > 0.0) {
            return invalid("a_lower must be positive");
        }
        let (lo, hi) = (self.nu.min(), self.nu.max());
        if !(self.a_lower <= lo * (1.0 + 1e-14) && hi <= self.a_upper * (1.0 + 1e-14)) {
            return invalid(format!(
                "coefficient range [{lo}, {hi}] not inside [{}, {}]",
                self.a_lower, self.a_upper
            ));
        }
        if let Some(eps) = self.penalty_eps {
            check_eps(eps)?;
        }
        self.perturbation.validate()
    }

    /// The law at one location.
    pub fn local(&self, t: usize) -> LocalLaw {
        LocalLaw {
            p: self.p,
            nu: self.nu.data[t],
            eps: self.penalty_eps,
            perturbation: self.perturbation,
        }
    }
}

/// Constraint `|curl h| <= psi(t)` sampled on the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintProfile {
    /// One per-triple sample per time node.
    pub psi: Vec<CellField>,
    pub alpha: f64,
    /// Bound on `|d psi / dt|` measured over the samples.
    pub dpsi_dt_bound: f64,
}

impl ConstraintProfile {
    /// Builds the profile and measures `alpha` and the time-derivative bound.
    pub fn new(psi: Vec<CellField>, t_grid: &[f64]) -> Result<Self> {
        if psi.len() != t_grid.len() || psi.is_empty() {
            return invalid("constraint samples must match the time grid");
        }
        let alpha = psi.iter().map(CellField::min).fold(f64::INFINITY, f64::min);
        if !(alpha > 0.0) {
            return invalid(format!("constraint must be positive, min is {alpha}"));
        }
        let mut bound: f64 = 0.0;
        for k in 1..psi.len() {
            let dt = t_grid[k] - t_grid[k - 1];
            for (a, b) in psi[k].data.iter().zip(&psi[k - 1].data) {
                bound = bound.max((a - b).abs() / dt);
            }
        }
        Ok(ConstraintProfile {
            psi,
            alpha,
            dpsi_dt_bound: bound,
        })
    }
}

/// Pointwise law: `nu * F(|u|, psi) * u + delta(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLaw {
    pub p: f64,
    pub nu: f64,
    pub eps: Option<f64>,
    pub perturbation: PerturbationSpec,
}

impl LocalLaw {
    /// Radial factor `F` with `a(u) = F(|u|) u`.
    #[inline]
    pub fn factor(&self, m: f64, psi: f64) -> f64 {
        let base = match self.eps {
            None => self.nu * pow_mag(m, self.p - 2.0),
            Some(eps) => {
                if m == 0.0 {
                    0.0
                } else {
                    let s = pow_mag(m, self.p) - pow_mag(psi, self.p);
                    self.nu * capped_exp(log_penalty_k(s, eps) + (self.p - 2.0) * m.ln())
                }
            }
        };
        base + self.perturbation.factor(m)
    }

    /// Potential `W(m)` with `W'(m) = F(m) m` and `W(0) = 0`.
    #[inline]
    pub fn potential(&self, m: f64, psi: f64) -> f64 {
        let base = match self.eps {
            None => self.nu * pow_mag(m, self.p) / self.p,
            Some(eps) => {
                let pp = pow_mag(psi, self.p);
                let mp = pow_mag(m, self.p);
                if mp <= pp {
                    self.nu * mp / self.p
                } else {
                    self.nu * (primitive_unchecked(mp - pp, eps) + pp) / self.p
                }
            }
        };
        base + self.perturbation.potential(m)
    }

    #[inline]
    pub fn apply(&self, u: [f64; 3], psi: f64) -> [f64; 3] {
        scale3(self.factor(norm3(u), psi), u)
    }
}

/// `nu |u|^(p-2) u`, zero at `u = 0` for every `p > 1`.
pub fn power_law_apply(u: [f64; 3], p: f64, nu: f64) -> Result<[f64; 3]> {
    check_vec(u)?;
    if !(p > 1.0) {
        return invalid("p must exceed 1");
    }
    Ok(scale3(nu * pow_mag(norm3(u), p - 2.0), u))
}

#[inline]
fn cap_level(eps: f64) -> f64 {
    (1.0 / (eps * eps)).min(EXP_CAP)
}

/// `ln k_eps(s) = min(s+ / eps, 1 / eps^2)`, additionally capped at 700.
#[inline]
pub fn log_penalty_k(s: f64, eps: f64) -> f64 {
    (s.max(0.0) / eps).min(cap_level(eps))
}

/// `k_eps(s) = min(exp(s+ / eps), exp(1 / eps^2))`.
pub fn penalty_k(s: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(log_penalty_k(s, eps).exp())
}

/// Whether `k_eps(s)` hit the overflow cap rather than its own plateau.
pub fn penalty_saturated(s: f64, eps: f64) -> bool {
    1.0 / (eps * eps) > EXP_CAP && s.max(0.0) / eps >= EXP_CAP
}

#[inline]
fn primitive_unchecked(s: f64, eps: f64) -> f64 {
    if s <= 0.0 {
        return s;
    }
    let level = cap_level(eps);
    let knee = eps * level;
    if s <= knee {
        eps * (s / eps).exp_m1()
    } else {
        let top = level.exp();
        eps * (top - 1.0) + (s - knee) * top
    }
}

/// `phi_eps(s) = int_0^s k_eps`.
pub fn penalty_primitive(s: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(primitive_unchecked(s, eps))
}

/// `nu k_eps(|u|^p - psi^p) |u|^(p-2) u`.
pub fn penalized_apply(u: [f64; 3], psi: f64, p: f64, nu: f64, eps: f64) -> Result<[f64; 3]> {
    check_vec(u)?;
    check_eps(eps)?;
    if !(p > 1.0) {
        return invalid("p must exceed 1");
    }
    let law = LocalLaw {
        p,
        nu,
        eps: Some(eps),
        perturbation: PerturbationSpec::default(),
    };
    Ok(law.apply(u, psi))
}

/// `delta(t, u)`; both built-in kinds are time independent.
pub fn perturbation_apply(spec: &PerturbationSpec, _t: f64, u: [f64; 3]) -> Result<[f64; 3]> {
    check_vec(u)?;
    spec.validate()?;
    Ok(scale3(spec.factor(norm3(u)), u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    /// Worst sampled ratio: a minimum for lower bounds, a maximum for upper.
    pub constant: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub label: String,
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
    pub coercivity: ConditionResult,
    pub growth: ConditionResult,
    pub monotonicity: ConditionResult,
    pub pass: bool,
}

const MAG_LO: f64 = 1e-6;
const MAG_HI: f64 = 1e3;

fn sample_vec(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let m = (rng.random_range(MAG_LO.ln()..MAG_HI.ln())).exp();
    loop {
        let d = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = norm3(d);
        if n > 1e-3 && n <= 1.0 {
            return scale3(m / n, d);
        }
    }
}

/// Sample pair `i` of the stream keyed by `seed`.
pub fn sample_pair(seed: u64, i: usize) -> ([f64; 3], [f64; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let u = sample_vec(&mut rng);
    let v = sample_vec(&mut rng);
    (u, v)
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn diff3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Samples the coercivity, growth and strong monotonicity ratios of `apply`.
pub fn verify_structure<F>(label: &str, apply: F, p: f64, sample_count: usize, seed: u64) -> StructureReport
where
    F: Fn([f64; 3]) -> [f64; 3] + Sync + Send,
{
    let coercive = |u: [f64; 3]| dot3(apply(u), u) / pow_mag(norm3(u), p);
    let growth = |u: [f64; 3]| norm3(apply(u)) / pow_mag(norm3(u), p - 1.0);
    let mono = |u: [f64; 3], v: [f64; 3]| {
        let d = diff3(u, v);
        let num = dot3(diff3(apply(u), apply(v)), d);
        let nd = norm3(d);
        let den = if p >= 2.0 {
            pow_mag(nd, p)
        } else {
            pow_mag(norm3(u) + norm3(v), p - 2.0) * nd * nd
        };
        num / den
    };
    let n = sample_count;
    let c_min = par::min(n, |i| {
        let (u, v) = sample_pair(seed, i);
        coercive(u).min(coercive(v))
    });
    let g_max = par::max_signed(n, |i| {
        let (u, v) = sample_pair(seed, i);
        growth(u).max(growth(v))
    });
    let m_min = par::min(n, |i| {
        let (u, v) = sample_pair(seed, i);
        mono(u, v)
    });
    let coercivity = ConditionResult {
        name: "coercivity".into(),
        constant: c_min,
        pass: c_min.is_finite() && c_min > 0.0,
    };
    let growth = ConditionResult {
        name: "growth".into(),
        constant: g_max,
        pass: g_max.is_finite(),
    };
    let monotonicity = ConditionResult {
        name: "strong monotonicity".into(),
        constant: m_min,
        pass: m_min.is_finite() && m_min > 0.0,
    };
    let pass = coercivity.pass && growth.pass && monotonicity.pass && n > 0;
    StructureReport {
        label: label.to_string(),
        p,
        samples: n,
        seed,
        coercivity,
        growth,
        monotonicity,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    const EPS_SET: [f64; 4] = [0.5, 0.2, 0.1, 0.05];

    #[test]
    fn power_law_examples() {
        assert_eq!(power_law_apply([0.0; 3], 1.3, 2.0).unwrap(), [0.0; 3]);
        let u = [0.3, -1.7, 2.5];
        assert_eq!(power_law_apply(u, 2.0, 1.5).unwrap(), [1.5 * u[0], 1.5 * u[1], 1.5 * u[2]]);
        let v = power_law_apply([2.0, 0.0, 0.0], 3.0, 1.0).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-14 && v[1] == 0.0);
        assert!(power_law_apply([f64::NAN, 0.0, 0.0], 3.0, 1.0).is_err());
    }

    #[test]
    fn penalty_k_clauses() {
        assert_eq!(penalty_k(-1.0, 0.5).unwrap(), 1.0);
        assert!((penalty_k(2.0, 0.5).unwrap() - 4f64.exp()).abs() < 1e-12);
        assert!((penalty_k(0.2, 0.2).unwrap() - 1f64.exp()).abs() < 1e-14);
        assert!(penalty_k(1.0, 1.0).is_err());
        assert!(penalty_k(1.0, 0.0).is_err());
    }

    #[test]
    fn penalty_k_monotone_bounded() {
        for eps in EPS_SET {
            let top = (1.0 / (eps * eps)).exp();
            let mut prev = 0.0;
            for i in 0..20_000 {
                let s = -2.0 + i as f64 * (3.0 / eps) / 20_000.0;
                let k = penalty_k(s, eps).unwrap();
                assert!(k >= prev && k >= 1.0 && k <= top * (1.0 + 1e-14));
                prev = k;
            }
        }
    }

    #[test]
    fn primitive_examples_and_lower_bound() {
        assert_eq!(penalty_primitive(-2.0, 0.3).unwrap(), -2.0);
        assert_eq!(penalty_primitive(0.0, 0.3).unwrap(), 0.0);
        for eps in EPS_SET {
            for i in 0..2000 {
                let s = -3.0 + i as f64 * 0.01 / eps;
                assert!(penalty_primitive(s, eps).unwrap() >= s);
            }
        }
    }

    #[test]
    fn primitive_derivative_is_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let eps = EPS_SET[rng.random_range(0..4)];
            let s = rng.random_range(-1.0..(1.2 / eps));
            let h = 1e-5 * eps;
            let fd = (penalty_primitive(s + h, eps).unwrap() - penalty_primitive(s - h, eps).unwrap()) / (2.0 * h);
            let k = penalty_k(s, eps).unwrap();
            // Kinks at 0 and 1/eps are only one-sided differentiable.
            if s.abs() > 2.0 * h && (s - 1.0 / eps).abs() > 2.0 * h {
                assert!((fd - k).abs() <= 1e-6 * k, "s={s} eps={eps} fd={fd} k={k}");
            }
        }
    }

    #[test]
    fn penalized_matches_power_law_below_constraint() {
        let u = [0.2, 0.1, -0.3];
        let a = penalized_apply(u, 1.0, 3.0, 1.7, 0.1).unwrap();
        let b = power_law_apply(u, 3.0, 1.7).unwrap();
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() <= 1e-15 * b[c].abs().max(1e-300));
        }
        assert_eq!(penalized_apply([0.0; 3], 1.0, 1.5, 1.0, 0.1).unwrap(), [0.0; 3]);
    }

    #[test]
    fn penalized_is_gradient_of_potential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = rng.random_range(1.3..4.0);
            let eps = EPS_SET[rng.random_range(0..4)];
            let psi = rng.random_range(0.5..2.0);
            let u = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let law = LocalLaw {
                p,
                nu: 1.3,
                eps: Some(eps),
                perturbation: PerturbationSpec::default(),
            };
            let a = penalized_apply(u, psi, p, 1.3, eps).unwrap();
            let s = pow_mag(norm3(u), p) - pow_mag(psi, p);
            if norm3(u) < 1e-2 || s.abs() < 1e-4 || (s - 1.0 / eps).abs() < 1e-4 {
                continue;
            }
            for c in 0..3 {
                let h = 1e-6 * norm3(u) * eps;
                let mut up = u;
                let mut dn = u;
                up[c] += h;
                dn[c] -= h;
                let fd = (law.potential(norm3(up), psi) - law.potential(norm3(dn), psi)) / (2.0 * h);
                assert!((fd - a[c]).abs() <= 1e-6 * norm3(a), "{fd} vs {}", a[c]);
            }
        }
    }

    #[test]
    fn perturbation_examples() {
        let z = PerturbationSpec::default();
        assert_eq!(perturbation_apply(&z, 0.3, [1.0, 2.0, 3.0]).unwrap(), [0.0; 3]);
        let s = PerturbationSpec {
            kind: PerturbationKind::LinearSaturating,
            scale: 0.7,
        };
        assert_eq!(perturbation_apply(&s, 0.0, [0.0; 3]).unwrap(), [0.0; 3]);
        let bad = PerturbationSpec { scale: -1.0, ..s };
        assert!(perturbation_apply(&bad, 0.0, [1.0; 3]).is_err());
        assert!(PerturbationKind::parse("cubic").is_err());
    }

    #[test]
    fn perturbation_is_monotone() {
        let s = PerturbationSpec {
            kind: PerturbationKind::LinearSaturating,
            scale: 2.0,
        };
        let worst = par::min(10_000, |i| {
            let (u, v) = sample_pair(3, i);
            let du = perturbation_apply(&s, 0.0, u).unwrap();
            let dv = perturbation_apply(&s, 0.0, v).unwrap();
            dot3(diff3(du, dv), diff3(u, v))
        });
        assert!(worst >= 0.0);
    }

    #[test]
    fn structure_of_linear_law_is_exact() {
        let r = verify_structure("p2", |u| power_law_apply(u, 2.0, 1.5).unwrap(), 2.0, 2000, 1);
        assert!(r.pass);
        for c in [&r.coercivity, &r.growth, &r.monotonicity] {
            assert!((c.constant - 1.5).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn structure_of_cubic_law() {
        let r = verify_structure("p3", |u| power_law_apply(u, 3.0, 1.0).unwrap(), 3.0, 5000, 2);
        assert!(r.pass);
        assert!((r.coercivity.constant - 1.0).abs() < 1e-12);
        assert!((r.growth.constant - 1.0).abs() < 1e-12);
        assert!(r.monotonicity.constant >= 0.5);
    }

    #[test]
    fn structure_report_is_reproducible() {
        let f = |u| power_law_apply(u, 1.5, 1.0).unwrap();
        let a = verify_structure("a", f, 1.5, 3000, 9);
        let b = verify_structure("a", f, 1.5, 3000, 9);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    proptest! {
        #[test]
        fn power_law_is_homogeneous(
            x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64,
            lam in 0.01..20.0f64, p in 1.1..6.0f64,
        ) {
            let u = [x, y, z];
            let a = power_law_apply(u, p, 1.0).unwrap();
            let b = power_law_apply(scale3(lam, u), p, 1.0).unwrap();
            let s = lam.powf(p - 1.0);
            for c in 0..3 {
                prop_assert!((b[c] - s * a[c]).abs() <= 1e-12 * (s * norm3(a)).max(1e-300));
            }
        }

        #[test]
        fn penalized_dominates_power_law_monotonicity(seed in 0u64..1000, p in 1.2..4.0f64) {
            let (u, v) = sample_pair(seed, 0);
            let (u, v) = (scale3(1e-3, u), scale3(1e-3, v));
            let a = |w| penalized_apply(w, 0.5, p, 1.0, 0.2).unwrap();
            let b = |w| power_law_apply(w, p, 1.0).unwrap();
            let d = diff3(u, v);
            let pa = dot3(diff3(a(u), a(v)), d);
            let pb = dot3(diff3(b(u), b(v)), d);
            prop_assert!(pa >= pb * (1.0 - 1e-9) - 1e-300);
        }
    }
}
