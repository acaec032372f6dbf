//! Invariant eigenfunctions Φ_λ, the Lewis–Riesenfeld phase ν_λ and the
//! Gaussian-weighted packet Ψ.
//!
//! Everything is evaluated in the log domain: the packets sit far from the
//! origin (the guiding centre is at x ≈ −mgħ(1+ζ)/(ηω)), where the raw
//! exponentials overflow.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GaussianShape, GridSpec, WaveFunction2D};
use crate::invariant::{CoeffSet, Coeffs};
use crate::params::{derive_constants, PhysicalParams};

/// Boundary amplitude ratio required before spectral differentiation.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Default Gauss–Hermite node count for the λ integral.
pub const DEFAULT_NODES: usize = 64;
/// Node-doubling tolerance of the λ quadrature.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Simpson panels per period when integrating ν.
pub const PHASE_PANELS_PER_PERIOD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiForm {
    /// Φ₀·exp{ i(λ−α)/2ħ·(x/A + y/B) − i/2ħ·(C/A x² + D/B y²) }.
    Printed,
    /// The printed form times exp(a(t)·z), a(t) = −i·mg(1−ζ)t/2ħ. The extra
    /// factor lies in the kernel of the invariant's linear part, so the
    /// eigenvalue is unchanged, and it carries the gravitational drift that
    /// the printed form lacks.
    DriftCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuVariant {
    /// ħν̇ = −(iħ/2m)(C/A + D/B) + (mgθ/2ħ)(λ−α)/B − (λ−α)²(1/A² + 1/B²)/8m.
    Printed,
    /// ħν̇ = [(iħ∂ₜ − H)Φ]/Φ evaluated from the analytic derivatives of Φ.
    Oracle,
}

/// Coefficient of z in the drift factor, a(t) = −i·mg(1−ζ)t/2ħ.
pub fn drift_coefficient(t: f64, p: &PhysicalParams) -> C64 {
    C64::new(0.0, -p.m * p.g * (1.0 - p.zeta()) * t / (2.0 * p.hbar))
}

fn drift_rate(p: &PhysicalParams) -> C64 {
    C64::new(0.0, -p.m * p.g * (1.0 - p.zeta()) / (2.0 * p.hbar))
}

/// d/dt of the closed-form coefficients (each is proportional to e^{iωt}).
pub fn coeff_rates(c: &CoeffSet, t: f64) -> Coeffs {
    let v = c.at(t);
    let iw = C64::new(0.0, c.omega());
    Coeffs { a: v.a * iw, b: v.b * iw, c: v.c * iw, d: v.d * iw, alpha: v.alpha * iw }
}

/// Derivatives of S = log Φ at one point.
struct LogDerivs {
    s: C64,
    sx: C64,
    sy: C64,
    sxx: C64,
    syy: C64,
    st: C64,
}

fn log_derivs(lambda: f64, x: f64, y: f64, t: f64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> LogDerivs {
    let v = c.at(t);
    let r = coeff_rates(c, t);
    let i = C64::i();
    let h2 = 2.0 * p.hbar;
    let lam = C64::new(lambda, 0.0) - v.alpha;
    let (ca, db) = (v.c / v.a, v.d / v.b);
    let s0 = i * lam / h2 * (x / v.a + y / v.b) - i / h2 * (ca * x * x + db * y * y);
    let sx0 = i * lam / (h2 * v.a) - i / p.hbar * ca * x;
    let sy0 = i * lam / (h2 * v.b) - i / p.hbar * db * y;
    let ca_dot = (r.c * v.a - v.c * r.a) / (v.a * v.a);
    let db_dot = (r.d * v.b - v.d * r.b) / (v.b * v.b);
    let st0 = i / h2 * (-r.alpha * (x / v.a + y / v.b) - lam * (r.a * x / (v.a * v.a) + r.b * y / (v.b * v.b)))
        - i / h2 * (ca_dot * x * x + db_dot * y * y);
    let mut d = LogDerivs { s: s0, sx: sx0, sy: sy0, sxx: -i / p.hbar * ca, syy: -i / p.hbar * db, st: st0 };
    if form == PhiForm::DriftCorrected {
        let a = drift_coefficient(t, p);
        let z = C64::new(x, y);
        d.s += a * z;
        d.sx += a;
        d.sy += i * a;
        d.st += drift_rate(p) * z;
    }
    d
}

/// log Φ_λ(x, y, t) with Φ₀ = 1.
pub fn log_phi(lambda: f64, x: f64, y: f64, t: f64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> C64 {
    log_derivs(lambda, x, y, t, c, p, form).s
}

/// [(iħ∂ₜ − H_c)Φ]/Φ at one point. Position independence of this quantity
/// is exactly the statement that e^{iν}Φ solves the Schrödinger equation.
pub fn local_energy(lambda: f64, x: f64, y: f64, t: f64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> C64 {
    let d = log_derivs(lambda, x, y, t, c, p, form);
    let ih = C64::new(0.0, p.hbar);
    let cr = p.eta / (2.0 * p.m * p.hbar);
    let kinetic = -p.hbar * p.hbar / (2.0 * p.m) * (d.sxx + d.sx * d.sx + d.syy + d.sy * d.sy);
    let rot = cr * (-ih) * (y * d.sx - x * d.sy);
    let lin = p.m * p.g * x - p.m * p.g * p.theta / (2.0 * p.hbar) * (-ih * d.sy);
    let quad = p.eta * p.eta / (8.0 * p.m * p.hbar * p.hbar) * (x * x + y * y);
    ih * d.st - (kinetic + rot + lin + quad)
}

/// Printed normalizability condition: Re(−i/2ħ·C/A) < 0 and likewise D/B.
fn check_quadratic_form(v: &Coeffs, p: &PhysicalParams) -> Result<()> {
    let i = C64::i();
    for (name, ratio) in [("C/A", v.c / v.a), ("D/B", v.d / v.b)] {
        let q = -i / (2.0 * p.hbar) * ratio;
        if !(q.re < 0.0) {
            return Err(Error::NotNormalizable(format!(
                "Re(-i/2hbar * {name}) = {:.3e} is not negative ({name} = {:.3e}{:+.3e}i)",
                q.re, ratio.re, ratio.im
            )));
        }
    }
    Ok(())
}

/// Gaussian shape of Φ_λ at time t.
pub fn phi_shape(lambda: f64, t: f64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> Result<GaussianShape> {
    check_quadratic_form(&c.at(t), p)?;
    GaussianShape::fit_refined(|x, y| log_phi(lambda, x, y, t, c, p, form), 0.0, 0.0, 1.0)
}

/// Φ_λ on a grid, normalized, with zero phase at the grid centre.
pub fn phi_lambda(
    gs: GridSpec,
    lambda: f64,
    c: &CoeffSet,
    t: f64,
    p: &PhysicalParams,
    form: PhiForm,
) -> Result<WaveFunction2D> {
    check_quadratic_form(&c.at(t), p)?;
    let mut w = WaveFunction2D::from_log_fn(gs, t, |x, y| log_phi(lambda, x, y, t, c, p, form));
    w.normalize()?;
    let (ci, cj) = gs.center_index();
    let z = w.amplitudes[[cj, ci]];
    if z.norm() > 0.0 {
        let ph = z.conj() / z.norm();
        w.amplitudes.mapv_inplace(|a| a * ph);
    }
    Ok(w)
}

/// Applies Î = A p̂_x + B p̂_y + C x + D y + α with spectral derivatives.
pub fn apply_invariant_grid(w: &WaveFunction2D, c: &CoeffSet, t: f64, p: &PhysicalParams) -> Result<WaveFunction2D> {
    apply_invariant_coeffs(w, &c.at(t), p.hbar)
}

pub fn apply_invariant_coeffs(w: &WaveFunction2D, v: &Coeffs, hbar: f64) -> Result<WaveFunction2D> {
    w.check_boundary(BOUNDARY_TOL)?;
    let fft = crate::grid::Fft2::new(w.grid.n);
    let (gx, gy) = crate::grid::spectral_gradient(w, &fft);
    let mih = C64::new(0.0, -hbar);
    let g = w.grid;
    let mut out = Array2::zeros((g.n, g.n));
    ndarray::Zip::indexed(&mut out).and(&w.amplitudes).and(&gx).and(&gy).par_for_each(|(j, i), o, &psi, &dx, &dy| {
        let (x, y) = (g.x(i), g.y(j));
        *o = v.a * mih * dx + v.b * mih * dy + (v.c * x + v.d * y + v.alpha) * psi;
    });
    Ok(WaveFunction2D { grid: g, amplitudes: out, time: w.time })
}

/// ‖ÎΦ − λΦ‖/‖Φ‖.
pub fn eigen_residual(w: &WaveFunction2D, lambda: f64, c: &CoeffSet, t: f64, p: &PhysicalParams) -> Result<f64> {
    let iw = apply_invariant_grid(w, c, t, p)?;
    let diff = WaveFunction2D { amplitudes: &iw.amplitudes - &w.amplitudes.mapv(|z| z * lambda), ..iw };
    Ok(diff.norm() / w.norm())
}

/// ν̇_λ(t) for the chosen variant. The oracle variant is evaluated at the
/// origin; for a genuine solution it is the same everywhere.
pub fn nu_rate(lambda: f64, t: f64, c: &CoeffSet, p: &PhysicalParams, variant: NuVariant, form: PhiForm) -> C64 {
    match variant {
        NuVariant::Printed => {
            let v = c.at(t);
            let lam = C64::new(lambda, 0.0) - v.alpha;
            let ih = C64::new(0.0, p.hbar);
            let rhs = -ih / (2.0 * p.m) * (v.c / v.a + v.d / v.b)
                + p.m * p.g * p.theta / (2.0 * p.hbar) * lam / v.b
                - lam * lam / (8.0 * p.m) * (1.0 / (v.a * v.a) + 1.0 / (v.b * v.b));
            rhs / p.hbar
        }
        NuVariant::Oracle => local_energy(lambda, 0.0, 0.0, t, c, p, form) / p.hbar,
    }
}

/// The printed closed-form phase ħ^θ_η·t + (i/2B₁)λe^{−iωt}, with the
/// integration constants ln ν₁ and i ln Φ₀ set to zero.
pub fn nu_printed_closed_form(lambda: f64, t: f64, c: &CoeffSet, p: &PhysicalParams) -> Result<C64> {
    let k = derive_constants(p)?.hbar_theta_eta;
    Ok(k * t + C64::i() / (2.0 * c.b1) * lambda * C64::from_polar(1.0, -c.omega() * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub lambda: f64,
    pub variant: NuVariant,
    pub times: Vec<f64>,
    /// ν_λ(t) − ν_λ(t₀); complex, since ν carries the normalization drift.
    pub values: Vec<C64>,
}

impl PhaseTrace {
    pub fn last(&self) -> C64 {
        *self.values.last().expect("non-empty trace")
    }

    /// Real parts with 2π jumps removed.
    pub fn unwrapped_real(&self) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI;
        let mut out = Vec::with_capacity(self.values.len());
        let mut offset = 0.0;
        let mut prev: Option<f64> = None;
        for v in &self.values {
            let r = v.re.rem_euclid(tau);
            if let Some(pr) = prev {
                let d = r - pr;
                if d > std::f64::consts::PI {
                    offset -= tau;
                } else if d < -std::f64::consts::PI {
                    offset += tau;
                }
            }
            prev = Some(r);
            out.push(r + offset);
        }
        out
    }
}

/// Integrates ν̇ over `samples` equal intervals with one Simpson panel each
/// (subdivided so that there are at least [`PHASE_PANELS_PER_PERIOD`] per
/// period).
pub fn nu_phase(
    lambda: f64,
    t_span: (f64, f64),
    samples: usize,
    c: &CoeffSet,
    p: &PhysicalParams,
    variant: NuVariant,
    form: PhiForm,
) -> Result<PhaseTrace> {
    if samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least one interval".into() });
    }
    let (t0, t1) = t_span;
    let h = (t1 - t0) / samples as f64;
    let per_period = (PHASE_PANELS_PER_PERIOD as f64 * h.abs() / p.period()).ceil().max(1.0) as usize;
    let f = |t: f64| nu_rate(lambda, t, c, p, variant, form);
    let mut times = vec![t0];
    let mut values = vec![C64::new(0.0, 0.0)];
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..samples {
        let a = t0 + k as f64 * h;
        let sub = h / per_period as f64;
        for s in 0..per_period {
            let l = a + s as f64 * sub;
            acc += sub / 6.0 * (f(l) + 4.0 * f(l + 0.5 * sub) + f(l + sub));
        }
        times.push(t0 + (k + 1) as f64 * h);
        values.push(acc);
    }
    Ok(PhaseTrace { lambda, variant, times, values })
}

/// ν_λ(t) − ν_λ(0) for the oracle variant.
pub fn oracle_nu(lambda: f64, t: f64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> Result<C64> {
    if t == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(nu_phase(lambda, (0.0, t), 1, c, p, NuVariant::Oracle, form)?.last())
}

/// log ψ_λ = iν_λ(t) + log Φ_λ, with ν measured from t = 0.
pub fn log_psi_lambda(lambda: f64, x: f64, y: f64, t: f64, nu: C64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> C64 {
    C64::i() * nu + log_phi(lambda, x, y, t, c, p, form)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketMode {
    /// The printed closed form of Ψ.
    ClosedForm,
    /// ∫ψ_λ μ(λ) dλ by Gauss–Hermite quadrature.
    LambdaQuadrature,
}

/// μ(λ) = exp(−κλ²/2ħ).
pub fn weight(lambda: f64, p: &PhysicalParams) -> f64 {
    (-p.kappa * lambda * lambda / (2.0 * p.hbar)).exp()
}

/// Gauss–Hermite nodes and log-weights for ∫e^{−u²}f(u)du, by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut lw = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut z: f64 = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let l = std::f64::consts::LN_2 - 2.0 * pp.abs().ln();
        lw[i] = l;
        lw[n - 1 - i] = l;
    }
    (x, lw)
}

/// log ψ_λ is affine in λ: log ψ_λ = ℓ₀ + λℓ₁. Holds the phase pieces and
/// evaluates ℓ₀, ℓ₁ pointwise.
#[derive(Debug, Clone, Copy)]
pub struct AffinePsi {
    pub t: f64,
    pub c: CoeffSet,
    pub p: PhysicalParams,
    pub form: PhiForm,
    nu0: C64,
    nu1: C64,
}

impl AffinePsi {
    pub fn new(t: f64, c: &CoeffSet, p: &PhysicalParams, form: PhiForm) -> Result<Self> {
        let nu0 = oracle_nu(0.0, t, c, p, form)?;
        let nu1 = oracle_nu(1.0, t, c, p, form)?;
        let num1 = oracle_nu(-1.0, t, c, p, form)?;
        let curvature = (nu1 + num1 - 2.0 * nu0).norm();
        if curvature > 1e-9 * (1.0 + nu1.norm() + nu0.norm()) {
            return Err(Error::Quadrature(format!("phase is not affine in lambda (curvature {curvature:.3e})")));
        }
        Ok(AffinePsi { t, c: *c, p: *p, form, nu0, nu1 })
    }

    pub fn terms(&self, x: f64, y: f64) -> (C64, C64) {
        let l0 = log_psi_lambda(0.0, x, y, self.t, self.nu0, &self.c, &self.p, self.form);
        let l1 = log_psi_lambda(1.0, x, y, self.t, self.nu1, &self.c, &self.p, self.form);
        (l0, l1 - l0)
    }

    /// log Ψ(x, y) by saddle-centred Gauss–Hermite quadrature over λ.
    ///
    /// The contour is shifted to the complex saddle λ* = ħℓ₁/κ, where the
    /// integrand is a pure Gaussian in the node variable; on the real axis
    /// the e^{λℓ₁} factor oscillates far too fast for any fixed rule.
    pub fn log_packet(&self, x: f64, y: f64, nodes: &(Vec<f64>, Vec<f64>)) -> C64 {
        let (l0, l1) = self.terms(x, y);
        let kh = self.p.kappa / (2.0 * self.p.hbar);
        let saddle = self.p.hbar * l1 / self.p.kappa;
        let s = (2.0 * self.p.hbar / self.p.kappa).sqrt();
        let logs: Vec<C64> = nodes
            .0
            .iter()
            .zip(&nodes.1)
            .map(|(&u, &lw)| {
                let lam = saddle + s * u;
                lw + u * u + l0 + lam * l1 - kh * lam * lam
            })
            .collect();
        s.ln() + log_sum_exp(&logs)
    }
}

/// log Σ exp(zᵢ), factoring out the term with the largest real part
/// (including its phase) so the branch follows that term continuously.
pub fn log_sum_exp(z: &[C64]) -> C64 {
    let m = z.iter().copied().fold(C64::new(f64::NEG_INFINITY, 0.0), |a, v| if v.re > a.re { v } else { a });
    let s: C64 = z.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Printed Ψ without ν₀:
/// √(2πħ/κ)·exp[−η|z|²/4ħ² − (1+ζ)z̄/2ħω + (iħ − ωz̄)²e^{−2iωt}/(8ħB₁²κ) + iħ^θ_η t].
pub fn log_packet_printed(x: f64, y: f64, t: f64, p: &PhysicalParams) -> Result<C64> {
    let k = derive_constants(p)?.hbar_theta_eta;
    Ok(log_packet_printed_with(x, y, t, p, k))
}

fn log_packet_printed_with(x: f64, y: f64, t: f64, p: &PhysicalParams, hbar_te: f64) -> C64 {
    let w = p.omega();
    let zb = C64::new(x, -y);
    let b1 = p.b1();
    let ih = C64::new(0.0, p.hbar);
    0.5 * (2.0 * std::f64::consts::PI * p.hbar / p.kappa).ln()
        - p.eta / (4.0 * p.hbar * p.hbar) * (x * x + y * y)
        - (1.0 + p.zeta()) / (2.0 * p.hbar * w) * zb
        + (ih - w * zb).powi(2) * C64::from_polar(1.0, -2.0 * w * t) / (8.0 * p.hbar * b1 * b1 * p.kappa)
        + C64::new(0.0, hbar_te * t)
}

/// Pointwise log Ψ for either mode, without κ validation.
pub struct PacketEvaluator {
    mode: PacketMode,
    t: f64,
    p: PhysicalParams,
    hbar_te: f64,
    affine: Option<AffinePsi>,
    nodes: (Vec<f64>, Vec<f64>),
}

impl PacketEvaluator {
    pub fn new(t: f64, p: &PhysicalParams, mode: PacketMode, n_nodes: usize) -> Result<Self> {
        let c = crate::invariant::closed_form_coeffs(p);
        let affine = match mode {
            PacketMode::LambdaQuadrature => Some(AffinePsi::new(t, &c, p, PhiForm::DriftCorrected)?),
            PacketMode::ClosedForm => None,
        };
        let hbar_te = p.m * p.m * p.g * p.theta / (2.0 * p.eta) + p.m * p.m * p.g * p.theta * p.theta / (8.0 * p.hbar * p.hbar)
            - p.eta / (2.0 * p.m * p.hbar);
        Ok(PacketEvaluator { mode, t, p: *p, hbar_te, affine, nodes: gauss_hermite(n_nodes) })
    }

    pub fn log_value(&self, x: f64, y: f64) -> C64 {
        match &self.affine {
            Some(a) => a.log_packet(x, y, &self.nodes),
            None => log_packet_printed_with(x, y, self.t, &self.p, self.hbar_te),
        }
    }

    pub fn mode(&self) -> PacketMode {
        self.mode
    }

    pub fn shape(&self) -> Result<GaussianShape> {
        let anchor = self.affine.map(|a| {
            let s = GaussianShape::fit(|x, y| log_phi(0.0, x, y, a.t, &a.c, &a.p, a.form), 0.0, 0.0, 1.0);
            s.moments().map(|m| m.mean).unwrap_or([0.0, 0.0])
        });
        let [x0, y0] = anchor.unwrap_or([0.0, 0.0]);
        GaussianShape::fit_refined(|x, y| self.log_value(x, y), x0, y0, 1.0)
    }

    /// Log amplitudes on a grid (rows in parallel).
    pub fn log_grid(&self, gs: GridSpec) -> Array2<C64> {
        WaveFunction2D::from_fn(gs, self.t, |x, y| self.log_value(x, y)).amplitudes
    }
}

/// Ψ on a grid, normalized.
pub fn psi_packet(gs: GridSpec, t: f64, p: &PhysicalParams, mode: PacketMode) -> Result<WaveFunction2D> {
    psi_packet_with_nodes(gs, t, p, mode, DEFAULT_NODES)
}

pub fn psi_packet_with_nodes(
    gs: GridSpec,
    t: f64,
    p: &PhysicalParams,
    mode: PacketMode,
    n_nodes: usize,
) -> Result<WaveFunction2D> {
    p.validate()?;
    if mode == PacketMode::LambdaQuadrature && n_nodes < DEFAULT_NODES {
        return Err(Error::Quadrature(format!("{n_nodes} nodes, need at least {DEFAULT_NODES}")));
    }
    let ev = PacketEvaluator::new(t, p, mode, n_nodes)?;
    ev.shape()?.moments()?;
    if mode == PacketMode::LambdaQuadrature {
        check_node_doubling(&ev, gs, t, p, n_nodes)?;
    }
    let mut w = WaveFunction2D::from_log_fn(gs, t, |x, y| ev.log_value(x, y));
    w.normalize()?;
    Ok(w)
}

/// Compares n and 2n nodes on a sparse subset of grid points, relative to
/// the largest amplitude among them.
fn check_node_doubling(ev: &PacketEvaluator, gs: GridSpec, t: f64, p: &PhysicalParams, n: usize) -> Result<()> {
    let fine = PacketEvaluator::new(t, p, PacketMode::LambdaQuadrature, 2 * n)?;
    let step = (gs.n / 16).max(1);
    let pts: Vec<(f64, f64)> =
        (0..gs.n).step_by(step).flat_map(|j| (0..gs.n).step_by(step).map(move |i| (gs.x(i), gs.y(j)))).collect();
    let pairs: Vec<(C64, C64)> = pts.par_iter().map(|&(x, y)| (ev.log_value(x, y), fine.log_value(x, y))).collect();
    let peak = pairs.iter().map(|(a, _)| a.re).fold(f64::NEG_INFINITY, f64::max);
    let err = pairs.iter().map(|(a, b)| ((a - peak).exp() - (b - peak).exp()).norm()).fold(0.0, f64::max);
    if err > QUADRATURE_TOL {
        return Err(Error::Quadrature(format!("node doubling {n} -> {} changes amplitudes by {err:.3e}", 2 * n)));
    }
    Ok(())
}

/// Grid sized to ±`pad` standard deviations of Ψ at time t.
pub fn packet_grid(n: usize, pad: f64, t: f64, p: &PhysicalParams, mode: PacketMode) -> Result<GridSpec> {
    PacketEvaluator::new(t, p, mode, DEFAULT_NODES)?.shape()?.moments()?.grid(n, pad)
}

/// ρ = |ψ|².
pub fn density(w: &WaveFunction2D) -> Array2<f64> {
    w.amplitudes.mapv(|z| z.norm_sqr())
}

/// Unnormalized grid norms of Ψ on a domain and on its doubling (same
/// spacing), both scaled by the peak log-amplitude on the smaller domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormProbe {
    pub kappa: f64,
    pub norm_base: f64,
    pub norm_doubled: f64,
}

impl NormProbe {
    /// |N(2L)/N(L) − 1|; infinite when the doubled norm overflows.
    pub fn relative_change(&self) -> f64 {
        if self.norm_doubled.is_finite() && self.norm_base > 0.0 {
            (self.norm_doubled / self.norm_base - 1.0).abs()
        } else {
            f64::INFINITY
        }
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.relative_change() < tol
    }
}

/// Base domain for [`kappa_norm_probe`]: the packet's own ±`pad`σ grid when
/// its Gaussian form is normalizable, otherwise the grid of the κ = ħ packet.
pub fn kappa_probe_grid(n: usize, pad: f64, t: f64, p: &PhysicalParams, kappa: f64) -> Result<GridSpec> {
    let own = PacketEvaluator::new(t, &p.with_kappa_unchecked(kappa), PacketMode::LambdaQuadrature, DEFAULT_NODES)?
        .shape()
        .and_then(|s| s.moments())
        .and_then(|m| {
            // only |Ψ|² is summed, so the wavenumber band need not be resolved
            let sd = m.sigma();
            GridSpec::centered(n, m.mean[0], m.mean[1], pad * sd[0], pad * sd[1])
        });
    match own {
        Ok(g) => Ok(g),
        Err(_) => packet_grid(n, pad, t, &p.with_kappa_unchecked(p.hbar), PacketMode::LambdaQuadrature),
    }
}

/// Probes normalizability of the quadrature packet for an arbitrary κ
/// (bypassing the κ ≥ ħ/2 validation) on `base` and its doubling.
pub fn kappa_norm_probe(base: GridSpec, t: f64, p: &PhysicalParams, kappa: f64) -> Result<NormProbe> {
    let q = p.with_kappa_unchecked(kappa);
    let ev = PacketEvaluator::new(t, &q, PacketMode::LambdaQuadrature, DEFAULT_NODES)?;
    let small = ev.log_grid(base);
    let peak = small.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let norm = |g: &GridSpec, a: &Array2<C64>| {
        let rows: Vec<f64> = a.outer_iter().map(|r| r.iter().map(|z| (2.0 * (z.re - peak)).exp()).sum::<f64>()).collect();
        rows.iter().sum::<f64>() * g.cell_area()
    };
    let big_grid = base.doubled();
    let big = ev.log_grid(big_grid);
    Ok(NormProbe { kappa, norm_base: norm(&base, &small), norm_doubled: norm(&big_grid, &big) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::closed_form_coeffs;

    fn r0() -> PhysicalParams {
        PhysicalParams::regime_r0()
    }

    #[test]
    fn gauss_hermite_moments() {
        for n in [1, 2, 5, 64, 128] {
            let (x, lw) = gauss_hermite(n);
            let m0: f64 = lw.iter().map(|l| l.exp()).sum();
            let m2: f64 = x.iter().zip(&lw).map(|(u, l)| u * u * l.exp()).sum();
            let sp = std::f64::consts::PI.sqrt();
            assert!((m0 - sp).abs() < 1e-12, "n={n} m0={m0}");
            if n > 1 {
                assert!((m2 - sp / 2.0).abs() < 1e-12, "n={n} m2={m2}");
            }
        }
        let (x, _) = gauss_hermite(3);
        assert!((x[0] - 1.5f64.sqrt()).abs() < 1e-14 && x[1].abs() < 1e-14);
    }

    #[test]
    fn quadratic_coefficient_is_real_gaussian() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        for t in [0.0, 7.0, 31.0] {
            let s = phi_shape(0.0, t, &c, &p, PhiForm::Printed).unwrap();
            let expect = -p.eta / (4.0 * p.hbar * p.hbar);
            assert!((s.q[0][0] - expect).norm() < 1e-10 && (s.q[1][1] - expect).norm() < 1e-10);
            assert!(s.q[0][1].norm() < 1e-10);
        }
    }

    #[test]
    fn lambda_enters_as_plane_wave() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        let t = 3.0;
        let v = c.at(t);
        for (x, y) in [(0.0, 0.0), (-100.0, 4.0), (3.0, -7.0)] {
            let d = log_phi(3.0, x, y, t, &c, &p, PhiForm::Printed) - log_phi(1.0, x, y, t, &c, &p, PhiForm::Printed);
            let expect = C64::i() * 2.0 / (2.0 * p.hbar) * (x / v.a + y / v.b);
            assert!((d - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn eigen_residual_small() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        let shape = phi_shape(0.0, 0.0, &c, &p, PhiForm::DriftCorrected).unwrap();
        let gs = shape.moments().unwrap().grid(256, 14.0).unwrap();
        for lambda in [-2.0, 0.0, 3.0] {
            let w = phi_lambda(gs, lambda, &c, 0.0, &p, PhiForm::Printed).unwrap();
            assert!((w.norm() - 1.0).abs() < 1e-12);
            let r = eigen_residual(&w, lambda, &c, 0.0, &p).unwrap();
            assert!(r < 1e-6, "lambda {lambda}: {r}");
        }
    }

    #[test]
    fn apply_invariant_identity_and_plane_wave() {
        let p = r0();
        let l = 2.0 * std::f64::consts::PI;
        let gs = GridSpec::new(64, 0.0, l, 0.0, l).unwrap();
        let ones = WaveFunction2D::from_fn(gs, 0.0, |_, _| C64::new(1.0, 0.0));
        // a constant is periodic, so the boundary check does not apply
        let v = Coeffs { alpha: C64::new(2.5, -1.0), ..Coeffs::zero() };
        let fft = crate::grid::Fft2::new(64);
        let (gx, _) = crate::grid::spectral_gradient(&ones, &fft);
        assert!(gx.iter().all(|z| z.norm() < 1e-12));
        let err = apply_invariant_coeffs(&ones, &v, p.hbar);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn printed_phi_leaves_position_dependent_energy() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        let e0 = local_energy(0.0, 0.0, 0.0, 1.0, &c, &p, PhiForm::Printed);
        let e1 = local_energy(0.0, 1.0, 0.0, 1.0, &c, &p, PhiForm::Printed);
        let expect = -p.m * p.g * (1.0 - p.zeta()) / 2.0;
        assert!(((e1 - e0) - expect).norm() < 1e-9, "{}", e1 - e0);
    }

    #[test]
    fn drift_corrected_phi_has_uniform_energy() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        for lambda in [-2.0, 0.0, 3.0] {
            for t in [0.0, 5.0, 40.0] {
                let e0 = local_energy(lambda, 0.0, 0.0, t, &c, &p, PhiForm::DriftCorrected);
                for (x, y) in [(1.0, 0.0), (0.0, 1.0), (-100.0, 37.0)] {
                    let e = local_energy(lambda, x, y, t, &c, &p, PhiForm::DriftCorrected);
                    assert!((e - e0).norm() < 1e-9 * (1.0 + e0.norm()), "lambda {lambda} t {t}: {e} vs {e0}");
                }
            }
        }
    }

    #[test]
    fn oracle_rate_matches_hand_reduction() {
        // ħν̇ = −η/2m + mgθW/4ħ − ħaW/m + mgθa/2 with W = (λ−α)/B
        let p = PhysicalParams::new(1.3, 0.7, 0.9, 0.2, 0.15, 2.0, 0.9).unwrap();
        let c = closed_form_coeffs(&p);
        for (lambda, t) in [(0.0, 0.0), (1.5, 3.0), (-2.0, 11.0)] {
            let v = c.at(t);
            let w = (C64::new(lambda, 0.0) - v.alpha) / v.b;
            let a = drift_coefficient(t, &p);
            let mgt = p.m * p.g * p.theta;
            let expect = -p.eta / (2.0 * p.m) + mgt * w / (4.0 * p.hbar) - p.hbar * a * w / p.m + mgt * a / 2.0;
            let got = p.hbar * nu_rate(lambda, t, &c, &p, NuVariant::Oracle, PhiForm::DriftCorrected);
            assert!((got - expect).norm() < 1e-9 * (1.0 + expect.norm()), "{got} vs {expect}");
        }
    }

    #[test]
    fn printed_rate_structure() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        let v = c.at(2.0);
        // C/A + D/B = (η/2ħ)(−B/A + A/B), constant in t
        let s0 = v.c / v.a + v.d / v.b;
        let v2 = c.at(9.0);
        assert!((s0 - (v2.c / v2.a + v2.d / v2.b)).norm() < 1e-12);
        let r = p.eta / (2.0 * p.hbar) * (-v.b / v.a + v.a / v.b);
        assert!((s0 - r).norm() < 1e-12);
        // 1/A² + 1/B² vanishes, so the printed rate is affine in λ
        assert!((1.0 / (v.a * v.a) + 1.0 / (v.b * v.b)).norm() < 1e-12);
    }

    #[test]
    fn phase_quadrature_converges() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        let t1 = p.period();
        let a = nu_phase(0.0, (0.0, t1), 10, &c, &p, NuVariant::Oracle, PhiForm::DriftCorrected).unwrap();
        let b = nu_phase(0.0, (0.0, t1), 20, &c, &p, NuVariant::Oracle, PhiForm::DriftCorrected).unwrap();
        assert!((a.last() - b.last()).norm() < 1e-8);
        assert_eq!(a.times.len(), 11);
        let u = a.unwrapped_real();
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() < std::f64::consts::PI));
    }

    #[test]
    fn affine_phase_check() {
        let p = r0();
        let c = closed_form_coeffs(&p);
        assert!(AffinePsi::new(10.0, &c, &p, PhiForm::DriftCorrected).is_ok());
    }

    #[test]
    fn weight_is_even_and_unit_at_zero() {
        let p = r0();
        assert_eq!(weight(0.0, &p), 1.0);
        assert_eq!(weight(1.7, &p), weight(-1.7, &p));
    }

    #[test]
    fn quadrature_matches_gaussian_integral() {
        // ∫exp(ℓ₀ + λℓ₁ − κλ²/2ħ)dλ = √(2πħ/κ)·exp(ℓ₀ + ħℓ₁²/2κ)
        let p = r0();
        let c = closed_form_coeffs(&p);
        let a = AffinePsi::new(4.0, &c, &p, PhiForm::DriftCorrected).unwrap();
        let nodes = gauss_hermite(64);
        for (x, y) in [(-100.0, 0.0), (-95.0, 45.0), (-108.0, 30.0)] {
            let (l0, l1) = a.terms(x, y);
            let exact = 0.5 * (2.0 * std::f64::consts::PI * p.hbar / p.kappa).ln() + l0 + p.hbar * l1 * l1 / (2.0 * p.kappa);
            let got = a.log_packet(x, y, &nodes);
            let d = (got - exact).re.abs() + ((got - exact).im.sin()).abs();
            assert!(d < 1e-10, "{got} vs {exact}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let p = r0();
        let gs = packet_grid(256, 8.0, 0.0, &p, PacketMode::LambdaQuadrature).unwrap();
        let w = psi_packet(gs, 0.0, &p, PacketMode::LambdaQuadrature).unwrap();
        let rho = density(&w);
        assert!(rho.iter().all(|v| *v >= 0.0));
        assert!((rho.sum() * gs.cell_area() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn printed_packet_is_normalizable_for_kappa_hbar() {
        let p = r0();
        let gs = packet_grid(256, 8.0, 0.0, &p, PacketMode::ClosedForm).unwrap();
        let w = psi_packet(gs, 0.0, &p, PacketMode::ClosedForm).unwrap();
        assert!(w.boundary_ratio() < 1e-6);
    }

    #[test]
    fn kappa_below_bound_diverges() {
        let p = r0();
        let gs = packet_grid(256, 8.0, 0.0, &p, PacketMode::LambdaQuadrature).unwrap();
        let good = kappa_norm_probe(gs, 0.0, &p, p.hbar).unwrap();
        assert!(good.converged(1e-6), "{good:?}");
        let wide = kappa_probe_grid(256, 8.0, 0.0, &p, 0.6 * p.hbar).unwrap();
        assert!(kappa_norm_probe(wide, 0.0, &p, 0.6 * p.hbar).unwrap().converged(1e-6));
        let base = kappa_probe_grid(256, 8.0, 0.0, &p, 0.4 * p.hbar).unwrap();
        assert_eq!(base, gs);
        let bad = kappa_norm_probe(base, 0.0, &p, 0.4 * p.hbar).unwrap();
        assert!(!bad.converged(1e-6));
        assert!(psi_packet(gs, 0.0, &p.with_kappa_unchecked(0.4), PacketMode::LambdaQuadrature).is_err());
    }
}
