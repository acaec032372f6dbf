//! Coefficients of the linear invariant Î(t) = A p_x + B p_y + C x + D y + α.
//!
//! The coefficient equations follow from ∂Î/∂t + [Î, H_c]/iħ = 0 using the
//! commutators computed by the operator engine. The closed forms are the
//! constrained solution A₀ = B₀ = 0, B₁ = ±iB₂.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::report::{DiscrepancyEntry, DiscrepancyReport};

/// Minimum number of RK4 steps per period 2π/ω.
pub const MIN_STEPS_PER_PERIOD: usize = 100;

/// Values (A, B, C, D, α) at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coeffs {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
    pub alpha: C64,
}

impl Coeffs {
    pub const NAMES: [&'static str; 5] = ["A", "B", "C", "D", "alpha"];

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(self) -> [C64; 5] {
        [self.a, self.b, self.c, self.d, self.alpha]
    }

    pub fn from_array(v: [C64; 5]) -> Self {
        Coeffs { a: v[0], b: v[1], c: v[2], d: v[3], alpha: v[4] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add for Coeffs {
    type Output = Coeffs;
    fn add(self, o: Coeffs) -> Coeffs {
        let (a, b) = (self.to_array(), o.to_array());
        Coeffs::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Sub for Coeffs {
    type Output = Coeffs;
    fn sub(self, o: Coeffs) -> Coeffs {
        let (a, b) = (self.to_array(), o.to_array());
        Coeffs::from_array(std::array::from_fn(|i| a[i] - b[i]))
    }
}

impl Mul<f64> for Coeffs {
    type Output = Coeffs;
    fn mul(self, s: f64) -> Coeffs {
        Coeffs::from_array(self.to_array().map(|z| z * s))
    }
}

/// Which prefactor to use for α(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaForm {
    /// α = −(1+ζ)(g m³ħ²/η²) B₁ e^{iωt}, the quadrature of α̇ = mgA + (mgθ/2ħ)D.
    Corrected,
    /// α = −(1+ζ)(m²ħ²/η²) B₁ e^{iωt}, as printed.
    Printed,
    /// α ≡ 0.
    Zero,
}

/// Branch of the constraint B₁ = ±iB₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum B1Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    OdeIntegrated,
}

/// Closed-form coefficient functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffSet {
    pub b1: C64,
    pub branch: B1Branch,
    pub alpha_form: AlphaForm,
    pub provenance: Provenance,
    omega: f64,
    half_eta_over_hbar: f64,
    alpha_amplitude: C64,
}

impl CoeffSet {
    pub fn at(&self, t: f64) -> Coeffs {
        let e = C64::from_polar(1.0, self.omega * t);
        let a = -C64::i() * self.b1 * e / self.omega;
        let b = self.b1 * e / self.omega;
        Coeffs {
            a,
            b,
            c: -self.half_eta_over_hbar * b,
            d: self.half_eta_over_hbar * a,
            alpha: self.alpha_amplitude * e,
        }
    }

    /// B₂ from B₁ = ±iB₂.
    pub fn b2(&self) -> C64 {
        match self.branch {
            B1Branch::Plus => -C64::i() * self.b1,
            B1Branch::Minus => C64::i() * self.b1,
        }
    }

    /// Integration constants A₀ and B₀ of the general solution; zero here.
    pub fn a0_b0(&self) -> (C64, C64) {
        (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedFormOptions {
    /// Override for B₁; defaults to |B₁| = √η/mħ with phase ωτ.
    pub b1: Option<C64>,
    pub alpha: AlphaForm,
    pub branch: B1Branch,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        ClosedFormOptions { b1: None, alpha: AlphaForm::Corrected, branch: B1Branch::Plus }
    }
}

/// Closed-form coefficients with the corrected α prefactor.
pub fn closed_form_coeffs(p: &PhysicalParams) -> CoeffSet {
    closed_form_coeffs_with(p, ClosedFormOptions::default())
}

pub fn closed_form_coeffs_with(p: &PhysicalParams, opts: ClosedFormOptions) -> CoeffSet {
    let omega = p.omega();
    let b1 = opts.b1.unwrap_or_else(|| p.b1());
    let one_plus_zeta = 1.0 + p.zeta();
    let eta2 = p.eta * p.eta;
    let alpha_amplitude = match opts.alpha {
        AlphaForm::Corrected => -one_plus_zeta * p.g * p.m.powi(3) * p.hbar * p.hbar / eta2 * b1,
        AlphaForm::Printed => -one_plus_zeta * p.m * p.m * p.hbar * p.hbar / eta2 * b1,
        AlphaForm::Zero => C64::new(0.0, 0.0),
    };
    CoeffSet {
        b1,
        branch: opts.branch,
        alpha_form: opts.alpha,
        provenance: Provenance::ClosedForm,
        omega,
        half_eta_over_hbar: p.eta / (2.0 * p.hbar),
        alpha_amplitude,
    }
}

/// Time derivative of (A, B, C, D, α) implied by the invariance condition.
pub fn ode_rhs(v: &Coeffs, p: &PhysicalParams) -> Coeffs {
    let r = p.eta / (2.0 * p.m * p.hbar);
    let q = p.eta * p.eta / (4.0 * p.m * p.hbar * p.hbar);
    Coeffs {
        a: r * v.b - v.c / p.m,
        b: -r * v.a - v.d / p.m,
        c: q * v.a + r * v.d,
        d: q * v.b - r * v.c,
        alpha: p.m * p.g * v.a + p.m * p.g * p.theta / (2.0 * p.hbar) * v.d,
    }
}

/// The printed 5×5 coefficient matrix.
pub fn paper_ode_matrix(p: &PhysicalParams) -> [[f64; 5]; 5] {
    let r = p.eta / (2.0 * p.m * p.hbar);
    let q = p.eta * p.eta / (4.0 * p.m * p.hbar * p.hbar);
    let mg = p.m * p.g;
    [
        [0.0, -r, 1.0 / p.m, 0.0, 0.0],
        [r, 0.0, 0.0, 1.0 / p.m, 0.0],
        [-q, 0.0, 0.0, -r, 0.0],
        [0.0, -q, r, 0.0, 0.0],
        [mg, 0.0, 0.0, mg * p.theta / (2.0 * p.hbar), 0.0],
    ]
}

/// The printed matrix applied verbatim to `v`.
pub fn paper_ode_rhs(v: &Coeffs, p: &PhysicalParams) -> Coeffs {
    let m = paper_ode_matrix(p);
    let x = v.to_array();
    Coeffs::from_array(std::array::from_fn(|i| (0..5).map(|j| x[j] * m[i][j]).sum()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Coeffs>,
    pub step: f64,
}

/// RK4 integration of [`ode_rhs`] over `t_span` with `steps` uniform steps.
pub fn integrate_coeffs(
    v0: Coeffs,
    t_span: (f64, f64),
    steps: usize,
    p: &PhysicalParams,
) -> Result<CoeffTrajectory> {
    integrate_with(v0, t_span, steps, p, ode_rhs)
}

/// RK4 integration with an arbitrary right-hand side.
pub fn integrate_with<F>(
    v0: Coeffs,
    t_span: (f64, f64),
    steps: usize,
    p: &PhysicalParams,
    rhs: F,
) -> Result<CoeffTrajectory>
where
    F: Fn(&Coeffs, &PhysicalParams) -> Coeffs,
{
    let (t0, t1) = t_span;
    let span = t1 - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidParameter { name: "t_span", reason: "t1 must exceed t0".into() });
    }
    let periods = span / p.period();
    let required = (MIN_STEPS_PER_PERIOD as f64 * periods).ceil() as usize;
    if steps < required.max(1) {
        let per_period = (steps as f64 / periods).floor() as usize;
        return Err(Error::StepTooCoarse { steps: per_period, required: MIN_STEPS_PER_PERIOD });
    }
    let h = span / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut v = v0;
    times.push(t0);
    values.push(v);
    for i in 0..steps {
        let k1 = rhs(&v, p);
        let k2 = rhs(&(v + k1 * (0.5 * h)), p);
        let k3 = rhs(&(v + k2 * (0.5 * h)), p);
        let k4 = rhs(&(v + k3 * h), p);
        v = v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !v.is_finite() {
            return Err(Error::Instability(format!("non-finite coefficients at step {}", i + 1)));
        }
        times.push(t0 + (i + 1) as f64 * h);
        values.push(v);
    }
    Ok(CoeffTrajectory { times, values, step: h })
}

/// Per-component maximum deviation of `traj` from `cf`, relative to the
/// component's largest closed-form modulus over the trajectory.
pub fn cross_check(cf: &CoeffSet, traj: &CoeffTrajectory, tol: f64) -> DiscrepancyReport {
    let mut max_dev = [0.0f64; 5];
    let mut max_mod = [0.0f64; 5];
    let mut worst = [(C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0); 5];
    for (t, v) in traj.times.iter().zip(&traj.values) {
        let exact = cf.at(*t).to_array();
        let got = v.to_array();
        for k in 0..5 {
            max_mod[k] = max_mod[k].max(exact[k].norm());
            let dev = (got[k] - exact[k]).norm();
            if dev > max_dev[k] {
                max_dev[k] = dev;
                worst[k] = (got[k], exact[k], *t);
            }
        }
    }
    let mut report = DiscrepancyReport::new();
    for k in 0..5 {
        let rel = if max_mod[k] > 0.0 { max_dev[k] / max_mod[k] } else { max_dev[k] };
        let (got, exact, t) = worst[k];
        let mut e = DiscrepancyEntry::compare(
            format!("coeffs.{}", Coeffs::NAMES[k]),
            "closed-form coefficients vs RK4 trajectory",
            format!("max deviation relative to max |{}|", Coeffs::NAMES[k]),
            Some(t),
            exact,
            got,
            tol,
        );
        e.rel_diff = Some(rel);
        e.verdict = if rel <= tol { crate::report::Verdict::Match } else { crate::report::Verdict::Mismatch };
        report.push(e);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Verdict;

    fn r0(tau: f64) -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, 0.05, 0.1, tau, 0.5).unwrap()
    }

    #[test]
    fn zero_is_fixed_point() {
        let p = r0(0.0);
        assert_eq!(ode_rhs(&Coeffs::zero(), &p), Coeffs::zero());
        let traj = integrate_coeffs(Coeffs::zero(), (0.0, p.period()), 200, &p).unwrap();
        assert!(traj.values.iter().all(|v| *v == Coeffs::zero()));
    }

    #[test]
    fn rhs_matches_closed_form_derivative() {
        let p = r0(0.0);
        let cf = closed_form_coeffs(&p);
        let v = cf.at(0.0);
        let rhs = ode_rhs(&v, &p);
        assert!((rhs.a - p.omega() * v.b).norm() < 1e-14);
        // central difference of the closed form
        let h = 1e-4;
        let fd = (cf.at(h) - cf.at(-h)) * (0.5 / h);
        for (x, y) in rhs.to_array().iter().zip(fd.to_array()) {
            assert!((x - y).norm() < 1e-6 * (1.0 + y.norm()), "{x} vs {y}");
        }
    }

    #[test]
    fn printed_matrix_flips_sign_of_a_dot() {
        let p = r0(0.0);
        let v = closed_form_coeffs(&p).at(0.0);
        let oracle = ode_rhs(&v, &p);
        let paper = paper_ode_rhs(&v, &p);
        assert!((paper.a + oracle.a).norm() < 1e-14);
        assert!(oracle.a.norm() > 1e-3);
        // the alpha row agrees in sign
        assert!((paper.alpha - oracle.alpha).norm() < 1e-14);
    }

    #[test]
    fn closed_form_constraints() {
        let p = r0(3.0);
        let cf = closed_form_coeffs(&p);
        assert_eq!(cf.a0_b0(), (C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        assert!((cf.b1 - C64::i() * cf.b2()).norm() < 1e-15);
        for k in 0..20 {
            let t = k as f64 * 3.7;
            let v = cf.at(t);
            let m = p.b1_mod() / p.omega();
            assert!((v.a.norm() - m).abs() < 1e-12);
            assert!((v.b.norm() - m).abs() < 1e-12);
            assert!((v.a + C64::i() * v.b).norm() < 1e-12);
            assert!((v.c / v.b + p.eta / 2.0).norm() < 1e-12);
            assert!((v.d / v.a - p.eta / 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn alpha_at_zero_regime_value() {
        let p = r0(0.0);
        let a0 = closed_form_coeffs(&p).at(0.0).alpha;
        let expected = -1.00125 * 100.0 * 0.1f64.sqrt();
        assert!((a0.re - expected).abs() < 1e-12 && a0.im.abs() < 1e-12);
        assert!((a0.re + 31.662).abs() < 1e-3);
    }

    #[test]
    fn minus_branch_keeps_b1() {
        let p = r0(0.0);
        let cf = closed_form_coeffs_with(&p, ClosedFormOptions { branch: B1Branch::Minus, ..Default::default() });
        assert!((cf.b1 + C64::i() * cf.b2()).norm() < 1e-15);
    }

    #[test]
    fn rk4_one_period_and_order() {
        let p = r0(0.7);
        let cf = closed_form_coeffs(&p);
        let t1 = p.period();
        let end = |steps| {
            let tr = integrate_coeffs(cf.at(0.0), (0.0, t1), steps, &p).unwrap();
            let got = *tr.values.last().unwrap();
            let exact = cf.at(t1);
            let num: f64 = (got - exact).to_array().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let den: f64 = exact.to_array().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            num / den
        };
        assert!(end(10_000) < 1e-8);
        let e1 = end(200);
        let e2 = end(400);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn rejects_coarse_steps() {
        let p = r0(0.0);
        let err = integrate_coeffs(Coeffs::zero(), (0.0, p.period()), 50, &p).unwrap_err();
        assert!(matches!(err, Error::StepTooCoarse { required: 100, .. }));
    }

    #[test]
    fn cross_check_verdicts() {
        let p = r0(0.4);
        let cf = closed_form_coeffs(&p);
        let traj = integrate_coeffs(cf.at(0.0), (0.0, 3.0 * p.period()), 30_000, &p).unwrap();
        assert!(cross_check(&cf, &traj, 1e-6).all_match());

        // flipped sign rhs drifts away within the first period
        let flipped = integrate_with(cf.at(0.0), (0.0, p.period()), 10_000, &p, |v, p| {
            let r = ode_rhs(v, p);
            Coeffs { alpha: r.alpha, ..(Coeffs::zero() - r) }
        })
        .unwrap();
        let rep = cross_check(&cf, &flipped, 1e-6);
        assert_eq!(rep.find("coeffs.A").unwrap().verdict, Verdict::Mismatch);
    }

    #[test]
    fn printed_alpha_off_by_gm() {
        let p = PhysicalParams::new(2.0, 3.0, 1.0, 0.05, 0.1, 0.0, 0.5).unwrap();
        let printed = closed_form_coeffs_with(&p, ClosedFormOptions { alpha: AlphaForm::Printed, ..Default::default() });
        let traj = integrate_coeffs(printed.at(0.0), (0.0, p.period()), 10_000, &p).unwrap();
        let rep = cross_check(&printed, &traj, 1e-6);
        assert_eq!(rep.find("coeffs.alpha").unwrap().verdict, Verdict::Mismatch);
        let corrected = closed_form_coeffs(&p);
        let ratio = corrected.at(1.3).alpha / printed.at(1.3).alpha;
        assert!((ratio - 6.0).norm() < 1e-12);
    }
}
