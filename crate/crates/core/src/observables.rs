//! Expectation values and the uncertainty product of the packet Ψ, two ways:
//! the closed forms built from the auxiliary constants a, b, c, d, h, k, and
//! an oracle from the Gaussian moments of Ψ or from grid quadrature.

use ndarray::{Array2, Axis};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{spectral_gradient, Fft2, GridSpec, WaveFunction2D};
use crate::params::{derive_constants, PhysicalParams};
use crate::report::{DiscrepancyEntry, DiscrepancyReport, Verdict, MATCH_TOLERANCE};
use crate::states::{PacketEvaluator, PacketMode, DEFAULT_NODES};

/// Largest edge-to-peak amplitude ratio accepted for grid moments.
pub const MOMENT_BOUNDARY_TOL: f64 = 1e-6;
/// Minimum samples per period π/2ω of the uncertainty product.
pub const SAMPLES_PER_PERIOD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxConstants {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
    pub h: C64,
    pub k: C64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub d0: f64,
    pub h0: f64,
    pub k0: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub delta0: f64,
    pub delta1: f64,
    /// |ν₀| = (1/π)(a₀β₀/4)^{1/4}e^{δ₀}.
    pub nu0_mod: f64,
}

pub fn aux_constants(t: f64, p: &PhysicalParams) -> Result<AuxConstants> {
    let dc = derive_constants(p)?;
    let (m, hb, eta) = (p.m, p.hbar, p.eta);
    let w = p.omega();
    let e_tau = C64::from_polar(1.0, -2.0 * w * p.tau);
    let e_t = C64::from_polar(1.0, -2.0 * w * (t + p.tau));
    let i = C64::i();
    let one_z = 1.0 + dc.zeta;
    let a = eta / (4.0 * hb * hb) * (1.0 - e_tau);
    let b = eta / (4.0 * hb * hb) * (1.0 + e_tau);
    let c = m / (2.0 * eta) * one_z + i * m / 2.0 * e_t;
    let d = -i * m / (2.0 * eta) * one_z + m / 2.0 * e_t;
    let h = i * eta / (2.0 * hb * hb) * e_t;
    let k = m * m * hb * hb / (4.0 * eta) * e_t - i * dc.hbar_theta_eta * t;
    let (a0, b0, c0, d0, h0, k0) = (a.re, b.re, c.re, d.re, h.re, k.re);
    if a0 <= 0.0 || b0 <= 0.0 {
        return Err(Error::Degenerate(format!("a0 = {a0:.3e}, b0 = {b0:.3e} at t = {t}: Gaussian has no width")));
    }
    let beta0 = b0 - h0 * h0 / (4.0 * a0);
    let beta1 = a0 - h0 * h0 / (4.0 * b0);
    if beta0 <= 0.0 || beta1 <= 0.0 {
        return Err(Error::Degenerate(format!("beta0 = {beta0:.3e}, beta1 = {beta1:.3e} at t = {t}")));
    }
    let gamma0 = (d0 - c0 * h0) / (2.0 * beta0);
    let gamma1 = (c0 - d0 * h0) / (2.0 * beta1);
    let delta0 = (k0 - c0 * c0 / (4.0 * a0)) - (d0 - c0 * h0).powi(2) / (4.0 * beta0);
    let delta1 = (k0 - d0 * d0 / (4.0 * b0)) - (c0 - d0 * h0).powi(2) / (4.0 * beta1);
    let nu0_mod = (a0 * beta0 / 4.0).powf(0.25) * delta0.exp() / std::f64::consts::PI;
    Ok(AuxConstants {
        a,
        b,
        c,
        d,
        h,
        k,
        a0,
        b0,
        c0,
        d0,
        h0,
        k0,
        beta0,
        beta1,
        gamma0,
        gamma1,
        delta0,
        delta1,
        nu0_mod,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Paper,
    Oracle,
}

/// The printed shortcuts for the dispersions, kept next to the values
/// obtained from the nine formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintedDispersions {
    /// (1/4a₀)(1 + h₀²/4a₀β₀).
    pub var_x: f64,
    /// 2ħ²a; complex unless 2ωτ ≡ 0 mod π.
    pub var_px: C64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub source: Source,
    pub time: f64,
    pub tau: f64,
    pub x: C64,
    pub y: C64,
    pub px: C64,
    pub py: C64,
    pub x2: C64,
    pub y2: C64,
    pub px2: C64,
    pub py2: C64,
    pub xy: C64,
    pub var_x: C64,
    pub var_px: C64,
    pub dx: C64,
    pub dpx: C64,
    pub product: C64,
    pub printed: Option<PrintedDispersions>,
}

impl ExpectationReport {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        source: Source,
        time: f64,
        tau: f64,
        means: [C64; 4],
        seconds: [C64; 5],
        printed: Option<PrintedDispersions>,
    ) -> Self {
        let [x, y, px, py] = means;
        let [x2, y2, px2, py2, xy] = seconds;
        let var_x = x2 - x * x;
        let var_px = px2 - px * px;
        let (dx, dpx) = (var_x.sqrt(), var_px.sqrt());
        ExpectationReport { source, time, tau, x, y, px, py, x2, y2, px2, py2, xy, var_x, var_px, dx, dpx, product: dx * dpx, printed }
    }

    /// ⟨xy⟩ − ⟨x⟩⟨y⟩.
    pub fn cov_xy(&self) -> C64 {
        self.xy - self.x * self.y
    }

    pub fn get(&self, name: &str) -> Option<C64> {
        Some(match name {
            "x" => self.x,
            "y" => self.y,
            "px" => self.px,
            "py" => self.py,
            "x2" => self.x2,
            "y2" => self.y2,
            "px2" => self.px2,
            "py2" => self.py2,
            "xy" => self.xy,
            "var_x" => self.var_x,
            "var_px" => self.var_px,
            "product" => self.product,
            _ => return None,
        })
    }
}

/// Names accepted by [`ExpectationReport::get`] for the nine moments.
pub const MOMENT_NAMES: [&str; 9] = ["x", "y", "px", "py", "x2", "y2", "px2", "py2", "xy"];

/// f_τ(t) = 2cscωτ / (1 − csc²2ωτ·sin²2ω(t+τ)), as printed.
pub fn f_tau(t: f64, p: &PhysicalParams) -> f64 {
    let w = p.omega();
    let s2 = (2.0 * w * (t + p.tau)).sin().powi(2);
    let csc = 1.0 / (w * p.tau).sin();
    let csc2 = 1.0 / (2.0 * w * p.tau).sin().powi(2);
    2.0 * csc / (1.0 - csc2 * s2)
}

/// The nine printed expectation formulas evaluated verbatim.
pub fn paper_expectations(t: f64, p: &PhysicalParams) -> Result<ExpectationReport> {
    let k = aux_constants(t, p)?;
    let pi = std::f64::consts::PI;
    let nt2 = 4.0 * pi * k.nu0_mod * k.nu0_mod;
    let hb = p.hbar;
    let ex0 = (-2.0 * k.delta0).exp();
    let ex1 = (-2.0 * k.delta1).exp();
    let x = nt2 * pi / (4.0 * k.a0 * (k.a0 * k.beta0).sqrt()) * (k.h0 * k.gamma0 - k.c0) * ex0;
    let y = nt2 * pi / (4.0 * k.b0 * (k.b0 * k.beta1).sqrt()) * (k.h0 * k.gamma1 - k.d0) * ex1;
    let x2 = nt2 * pi / (8.0 * k.a0 * (k.a0 * k.beta0).sqrt())
        * (1.0 + k.h0 * k.h0 / (4.0 * k.a0 * k.beta0) + (k.c0 - k.h0 * k.gamma0).powi(2) / k.a0)
        * ex0;
    let y2 = nt2 * pi / (8.0 * k.b0 * (k.b0 * k.beta1).sqrt())
        * (1.0 + k.h0 * k.h0 / (4.0 * k.b0 * k.beta1) + (k.d0 - k.h0 * k.gamma1).powi(2) / k.b0)
        * ex1;
    let xy = nt2 * pi / (4.0 * k.a0 * (k.a0 * k.beta0).sqrt())
        * (k.c0 * k.gamma0 - k.h0 * k.gamma0 * k.gamma0 - k.h0 / (4.0 * k.beta0))
        * ex0;
    let (x, y, x2, y2, xy) = (C64::from(x), C64::from(y), C64::from(x2), C64::from(y2), C64::from(xy));
    let mih = -hb / C64::i();
    let px = mih * (k.c + 2.0 * k.a * x + k.h * y);
    let py = mih * (k.d + 2.0 * k.b * y + k.h * x);
    let px2 = hb * hb
        * ((2.0 * k.a - k.c * k.c) - 4.0 * k.a * k.c * x - 2.0 * k.c * k.h * y - 4.0 * k.a * k.a * x2 - k.h * k.h * y2
            - 4.0 * k.a * k.h * xy);
    let py2 = hb * hb
        * ((2.0 * k.b - k.d * k.d) - 4.0 * k.b * k.d * y - 2.0 * k.d * k.h * x - 4.0 * k.b * k.b * y2 - k.h * k.h * x2
            - 4.0 * k.b * k.h * xy);
    let printed = PrintedDispersions {
        var_x: (1.0 + k.h0 * k.h0 / (4.0 * k.a0 * k.beta0)) / (4.0 * k.a0),
        var_px: 2.0 * hb * hb * k.a,
        f: f_tau(t, p),
    };
    Ok(ExpectationReport::assemble(Source::Paper, t, p.tau, [x, y, px, py], [x2, y2, px2, py2, xy], Some(printed)))
}

fn weighted_sum<F>(a: &Array2<C64>, g: &GridSpec, f: F) -> C64
where
    F: Fn(f64, f64, usize, usize) -> C64 + Sync,
{
    let rows: Vec<C64> = a
        .axis_iter(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(j, row)| (0..row.len()).map(|i| f(g.x(i), g.y(j), j, i)).sum::<C64>())
        .collect();
    rows.iter().sum::<C64>() * g.cell_area()
}

/// Moments of a grid state: positions by trapezoid sums (the periodic grid
/// makes the trapezoid rule a plain sum), momenta by spectral derivatives.
pub fn oracle_expectations(w: &WaveFunction2D) -> Result<ExpectationReport> {
    w.check_boundary(MOMENT_BOUNDARY_TOL)?;
    let g = w.grid;
    let a = &w.amplitudes;
    let hb_free = 1.0;
    let n2 = w.norm_sqr();
    let rho = |j: usize, i: usize| a[[j, i]].norm_sqr();
    let pos = |f: &(dyn Fn(f64, f64) -> f64 + Sync)| weighted_sum(a, &g, |x, y, j, i| C64::from(f(x, y) * rho(j, i))) / n2;
    let x = pos(&|x, _| x);
    let y = pos(&|_, y| y);
    let x2 = pos(&|x, _| x * x);
    let y2 = pos(&|_, y| y * y);
    let xy = pos(&|x, y| x * y);
    let fft = Fft2::new(g.n);
    let (gx, gy) = spectral_gradient(w, &fft);
    let mi = C64::new(0.0, -hb_free);
    let px = weighted_sum(a, &g, |_, _, j, i| a[[j, i]].conj() * mi * gx[[j, i]]) / n2;
    let py = weighted_sum(a, &g, |_, _, j, i| a[[j, i]].conj() * mi * gy[[j, i]]) / n2;
    let px2 = weighted_sum(a, &g, |_, _, j, i| C64::from(gx[[j, i]].norm_sqr())) / n2;
    let py2 = weighted_sum(a, &g, |_, _, j, i| C64::from(gy[[j, i]].norm_sqr())) / n2;
    Ok(ExpectationReport::assemble(Source::Oracle, w.time, f64::NAN, [x, y, px, py], [x2, y2, px2, py2, xy], None))
}

/// [`oracle_expectations`] with momenta scaled by ħ and τ recorded.
pub fn oracle_expectations_with(w: &WaveFunction2D, p: &PhysicalParams) -> Result<ExpectationReport> {
    let mut r = oracle_expectations(w)?;
    let hb = p.hbar;
    r.px *= hb;
    r.py *= hb;
    r.px2 *= hb * hb;
    r.py2 *= hb * hb;
    r.tau = p.tau;
    Ok(ExpectationReport::assemble(
        Source::Oracle,
        r.time,
        r.tau,
        [r.x, r.y, r.px, r.py],
        [r.x2, r.y2, r.px2, r.py2, r.xy],
        None,
    ))
}

/// Exact moments of Ψ read off its Gaussian exponent.
pub fn moment_expectations(t: f64, p: &PhysicalParams, mode: PacketMode) -> Result<ExpectationReport> {
    p.validate()?;
    let m = PacketEvaluator::new(t, p, mode, DEFAULT_NODES)?.shape()?.moments()?;
    let hb = p.hbar;
    let [mx, my] = m.mean;
    let [kx, ky] = m.k_mean;
    let means = [mx, my, hb * kx, hb * ky].map(C64::from);
    let seconds = [
        m.cov[0][0] + mx * mx,
        m.cov[1][1] + my * my,
        hb * hb * (m.k_cov[0][0] + kx * kx),
        hb * hb * (m.k_cov[1][1] + ky * ky),
        m.cov[0][1] + mx * my,
    ]
    .map(C64::from);
    Ok(ExpectationReport::assemble(Source::Oracle, t, p.tau, means, seconds, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    Paper,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub t: f64,
    pub f: f64,
    pub product: f64,
    /// Even n nearest to 4ω(t + τ)/π.
    pub n: i64,
    /// t − (nπ/4ω − τ).
    pub location_error: f64,
    /// 2cscωτ.
    pub candidate_plain: f64,
    /// 2cscωτ·csc²2ωτ.
    pub candidate_printed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTrace {
    pub mode: ScanMode,
    pub times: Vec<f64>,
    /// |ΔxΔp_x|; NaN where f ≤ 0 or undefined.
    pub product: Vec<f64>,
    pub f: Vec<f64>,
    pub minima: Vec<Minimum>,
    /// Sample intervals where f ≤ 0 or is not finite.
    pub flagged: Vec<(f64, f64)>,
}

/// 4|ΔxΔp_x|²/ħ² of Ψ from its Gaussian moments.
pub fn oracle_f(t: f64, p: &PhysicalParams) -> Result<f64> {
    let r = moment_expectations(t, p, PacketMode::LambdaQuadrature)?;
    Ok(4.0 * (r.var_x.re * r.var_px.re) / (p.hbar * p.hbar))
}

fn f_value(mode: ScanMode, t: f64, p: &PhysicalParams) -> Result<f64> {
    match mode {
        ScanMode::Paper => Ok(f_tau(t, p)),
        ScanMode::Oracle => oracle_f(t, p),
    }
}

fn usable(f: f64) -> bool {
    f.is_finite() && f > 0.0
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}

pub fn uncertainty_scan(t_span: (f64, f64), samples: usize, p: &PhysicalParams, mode: ScanMode) -> Result<UncertaintyTrace> {
    p.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::InvalidParameter { name: "t_span", reason: "end must exceed start".into() });
    }
    let w = p.omega();
    let period = std::f64::consts::PI / (2.0 * w);
    let required = ((SAMPLES_PER_PERIOD as f64) * (t1 - t0) / period).ceil() as usize + 1;
    if samples < required.max(3) {
        return Err(Error::StepTooCoarse { steps: samples, required: required.max(3) });
    }
    let times: Vec<f64> = (0..samples).map(|i| t0 + (t1 - t0) * i as f64 / (samples - 1) as f64).collect();
    let f: Vec<f64> = times.par_iter().map(|&t| f_value(mode, t, p)).collect::<Result<_>>()?;
    let product: Vec<f64> = f.iter().map(|&v| if usable(v) { 0.5 * p.hbar * v.sqrt() } else { f64::NAN }).collect();

    let mut flagged = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &v) in f.iter().enumerate() {
        match (usable(v), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                flagged.push((times[s.saturating_sub(1)], times[i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        flagged.push((times[s.saturating_sub(1)], t1));
    }

    let csc = 1.0 / (w * p.tau).sin();
    let csc2 = 1.0 / (2.0 * w * p.tau).sin().powi(2);
    let mut minima = Vec::new();
    for i in 1..samples - 1 {
        let (a, b, c) = (f[i - 1], f[i], f[i + 1]);
        if !(usable(a) && usable(b) && usable(c)) || !(b < a && b <= c) {
            continue;
        }
        let (tm, fm) = golden_min(|t| f_value(mode, t, p), times[i - 1], times[i + 1], 1e-10 * period)?;
        let n = {
            let r = 4.0 * w * (tm + p.tau) / std::f64::consts::PI;
            2 * (r / 2.0).round() as i64
        };
        let predicted = n as f64 * std::f64::consts::PI / (4.0 * w) - p.tau;
        minima.push(Minimum {
            t: tm,
            f: fm,
            product: 0.5 * p.hbar * fm.sqrt(),
            n,
            location_error: tm - predicted,
            candidate_plain: 2.0 * csc,
            candidate_printed: 2.0 * csc * csc2,
        });
    }
    Ok(UncertaintyTrace { mode, times, product, f, minima, flagged })
}

/// Closed form of 4|ΔxΔp_x|²/ħ² for Ψ:
/// [1 + s²sin²2ω(t+τ)/(1 − s²)]/(1 − s²) with s = ħ/2κ.
pub fn oracle_f_closed_form(t: f64, p: &PhysicalParams) -> f64 {
    let s2 = (p.hbar / (2.0 * p.kappa)).powi(2);
    let sn = (2.0 * p.omega() * (t + p.tau)).sin().powi(2);
    (1.0 + s2 * sn / (1.0 - s2)) / (1.0 - s2)
}

fn entry_or_degenerate(id: &str, relation: &str, description: &str, t: f64, paper: Option<C64>, oracle: C64) -> DiscrepancyEntry {
    match paper {
        Some(v) => DiscrepancyEntry::compare(id, relation, description, Some(t), v, oracle, MATCH_TOLERANCE),
        None => DiscrepancyEntry::compare(id, relation, description, Some(t), C64::new(f64::NAN, 0.0), oracle, MATCH_TOLERANCE)
            .with_verdict(Verdict::PaperDegenerate),
    }
}

/// Compares the printed expectation values, dispersions, the
/// uncorrelatedness assumption and f_τ against the moments of Ψ.
pub fn discrepancy_report(p: &PhysicalParams, t_samples: &[f64]) -> Result<DiscrepancyReport> {
    let mut rep = DiscrepancyReport::new();
    for &t in t_samples {
        let oracle = moment_expectations(t, p, PacketMode::LambdaQuadrature)?;
        let paper = paper_expectations(t, p).ok();
        for name in MOMENT_NAMES {
            let pv = paper.and_then(|r| r.get(name));
            rep.push(entry_or_degenerate(
                &format!("moment-{name}"),
                &format!("<{name}>"),
                "printed expectation value vs moments of the Gaussian packet",
                t,
                pv,
                oracle.get(name).unwrap_or_default(),
            ));
        }
        let printed = paper.and_then(|r| r.printed);
        rep.push(entry_or_degenerate(
            "dispersion-x",
            "<x^2> - <x>^2 = (1/4a0)(1 + h0^2/4a0 beta0)",
            "printed position dispersion",
            t,
            printed.map(|d| C64::from(d.var_x)),
            oracle.var_x,
        ));
        let var_px = printed.map(|d| d.var_px);
        let mut e = entry_or_degenerate(
            "dispersion-px",
            "<px^2> - <px>^2 = 2 hbar^2 a",
            "printed momentum dispersion; complex whenever 2 omega tau is not a multiple of pi",
            t,
            var_px,
            oracle.var_px,
        );
        if let Some(v) = var_px {
            if v.im.abs() > MATCH_TOLERANCE * v.norm() {
                e = e.with_verdict(Verdict::PaperDegenerate);
            }
        }
        rep.push(e);
        rep.push(DiscrepancyEntry::compare(
            "correlation-xy",
            "<x><y> = <xy>",
            "uncorrelatedness assumption: paper covariance 0 vs packet covariance",
            Some(t),
            C64::new(0.0, 0.0),
            oracle.cov_xy(),
            MATCH_TOLERANCE,
        ));
        let fp = f_tau(t, p);
        let fo = 4.0 * oracle.var_x.re * oracle.var_px.re / (p.hbar * p.hbar);
        let mut e = DiscrepancyEntry::compare(
            "f-tau",
            "|dx dpx|^2 = (hbar^2/4) f_tau(t)",
            "printed f_tau vs 4|dx dpx|^2/hbar^2 of the packet",
            Some(t),
            C64::from(fp),
            C64::from(fo),
            MATCH_TOLERANCE,
        );
        if !usable(fp) {
            e = e.with_verdict(Verdict::PaperDegenerate);
        }
        rep.push(e);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{packet_grid, psi_packet};
    use std::f64::consts::PI;

    fn r0() -> PhysicalParams {
        PhysicalParams::regime_r0()
    }

    #[test]
    fn aux_constants_at_quarter_period_phase() {
        let p = r0();
        let k = aux_constants(0.3, &p).unwrap();
        assert!((k.a0 - 0.025).abs() < 1e-14 && (k.b0 - 0.025).abs() < 1e-14);
        let sum = k.a + k.b;
        assert!((sum - C64::from(p.eta / (2.0 * p.hbar * p.hbar))).norm() < 1e-15);
        assert!((k.beta0 - (k.b0 - k.h0 * k.h0 / (4.0 * k.a0))).abs() < 1e-15);
    }

    #[test]
    fn aux_constants_degenerate_when_b_vanishes() {
        let p = r0().with_tau(PI / 2.0 / 0.1);
        assert!(matches!(aux_constants(0.3, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn aux_constants_degenerate_at_paper_t_zero() {
        // h0² = 4a0b0 when 2ω(t+τ) = π/2
        assert!(matches!(aux_constants(0.0, &r0()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn printed_momentum_dispersion_is_complex() {
        let p = r0();
        let e = paper_expectations(1.0, &p).unwrap();
        let v = e.printed.unwrap().var_px;
        assert!(v.im.abs() > 1e-3, "{v}");
    }

    #[test]
    fn printed_position_moments_reduce() {
        // the normalization cancels: ⟨x⟩ = (h0γ0 − c0)/2a0
        let p = r0();
        let t = 2.5;
        let k = aux_constants(t, &p).unwrap();
        let e = paper_expectations(t, &p).unwrap();
        let expect = (k.h0 * k.gamma0 - k.c0) / (2.0 * k.a0);
        assert!((e.x.re - expect).abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn f_tau_printed_values() {
        let p = r0();
        let w = p.omega();
        let t = 2.0 * PI / (4.0 * w) - p.tau;
        assert!((f_tau(t, &p) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(f_tau(0.0, &p).abs() > 1e12 || !f_tau(0.0, &p).is_finite());
        assert!((f_tau(-p.tau, &p) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_moments_of_minimum_gaussian() {
        let gs = GridSpec::centered(128, 0.0, 0.0, 14.0, 14.0).unwrap();
        let s = 1.3;
        let k0 = 0.7;
        let mut w = WaveFunction2D::from_fn(gs, 0.0, |x, y| C64::from_polar((-(x * x + y * y) / (4.0 * s * s)).exp(), k0 * x));
        w.normalize().unwrap();
        let r = oracle_expectations(&w).unwrap();
        assert!((r.x2.re - s * s).abs() < 1e-10);
        assert!((r.px.re - k0).abs() < 1e-10);
        assert!((r.var_px.re - 1.0 / (4.0 * s * s)).abs() < 1e-10);
        assert!((r.product.re - 0.5).abs() < 1e-10);
    }

    #[test]
    fn moment_oracle_matches_grid() {
        let p = r0();
        let t = 3.0;
        let gs = packet_grid(256, 12.0, t, &p, PacketMode::LambdaQuadrature).unwrap();
        let w = psi_packet(gs, t, &p, PacketMode::LambdaQuadrature).unwrap();
        let g = oracle_expectations_with(&w, &p).unwrap();
        let m = moment_expectations(t, &p, PacketMode::LambdaQuadrature).unwrap();
        for name in MOMENT_NAMES {
            let (a, b) = (g.get(name).unwrap(), m.get(name).unwrap());
            assert!((a - b).norm() < 1e-7 * b.norm().max(1.0), "{name}: grid {a} vs moments {b}");
        }
        assert!(g.var_x.re >= 0.0 && g.var_px.re >= 0.0);
    }

    #[test]
    fn oracle_product_closed_form() {
        let p = r0();
        for t in [0.0, 1.3, 4.0, 11.0] {
            let f = oracle_f(t, &p).unwrap();
            let expect = oracle_f_closed_form(t, &p);
            assert!((f - expect).abs() < 1e-9, "t={t}: {f} vs {expect}");
        }
    }

    #[test]
    fn oracle_scan_minima() {
        let p = r0();
        let w = p.omega();
        let per = PI / (2.0 * w);
        let tr = uncertainty_scan((0.0, 3.0 * per), 200, &p, ScanMode::Oracle).unwrap();
        assert!(tr.flagged.is_empty());
        assert!(tr.product.iter().all(|&v| v >= 0.5 * p.hbar - 1e-9));
        assert!(tr.minima.len() >= 2);
        for m in &tr.minima {
            assert!(m.location_error.abs() < 1e-4 * per, "{m:?}");
            let s2 = 0.25f64;
            assert!((m.product - 0.5 / (1.0 - s2).sqrt()).abs() < 1e-8);
            assert!(m.product > 0.5 * p.hbar);
        }
        for pair in tr.minima.windows(2) {
            assert!((pair[1].t - pair[0].t - per).abs() < 1e-4 * per);
        }
    }

    #[test]
    fn paper_scan_flags_negative_region() {
        let p = r0().with_tau(0.3 / 0.1);
        let per = PI / (2.0 * p.omega());
        let tr = uncertainty_scan((0.0, 2.0 * per), 200, &p, ScanMode::Paper).unwrap();
        assert!(!tr.flagged.is_empty());
        for m in &tr.minima {
            assert!((m.f - m.candidate_plain).abs() < 1e-9);
            assert!((m.candidate_printed - m.candidate_plain).abs() > 1e-3);
        }
    }

    #[test]
    fn scan_requires_enough_samples() {
        let p = r0();
        let per = PI / (2.0 * p.omega());
        assert!(matches!(uncertainty_scan((0.0, 4.0 * per), 20, &p, ScanMode::Paper), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn discrepancy_report_flags() {
        let p = r0();
        let rep = discrepancy_report(&p, &[0.0, 1.7]).unwrap();
        assert_eq!(rep.find("dispersion-px").unwrap().verdict, Verdict::PaperDegenerate);
        assert!(rep.entries.iter().filter(|e| e.time == Some(0.0)).all(|e| e.verdict != Verdict::Match || e.id == "correlation-xy"));
        assert_eq!(rep.count(Verdict::OracleFailure), 0);
    }
}
