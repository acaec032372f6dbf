//! Collects every printed-versus-oracle comparison into one report.
//!
//! Entries either compare a printed relation against an oracle (verdicts
//! match, mismatch or paper-degenerate) or record a self-check of an oracle
//! (match or oracle-failure). Only the latter decide the exit status.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WaveFunction2D;
use crate::invariant::{closed_form_coeffs, closed_form_coeffs_with, integrate_coeffs, AlphaForm, ClosedFormOptions, Coeffs};
use crate::invariant::{cross_check, paper_ode_rhs};
use crate::observables::{self, uncertainty_scan, ScanMode};
use crate::opalg::{self, build_canonical_ops, compose_hamiltonian, default_length_scale, InvarianceChecker};
use crate::params::{bopp_map, induced_commutators, CommutatorTable, PhysicalParams};
use crate::report::{ComplexValue, DiscrepancyEntry, DiscrepancyReport, Verdict, MATCH_TOLERANCE};
use crate::states::{self, kappa_norm_probe, kappa_probe_grid, NormProbe, PacketMode, PhiForm};
use crate::tdse::{self, FidelityReport, PropagatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub n_cut: usize,
    /// Grid for the κ probes and the packet overlap.
    pub grid_n: usize,
    /// Run the TDSE checks (one period each).
    pub propagate: bool,
    pub propagation_n: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { n_cut: 32, grid_n: 256, propagate: true, propagation_n: 256, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub params: PhysicalParams,
    pub discrepancies: DiscrepancyReport,
    pub algebra: opalg::AlgebraReport,
    pub ladder: opalg::LadderReport,
    pub max_invariance_residual: f64,
    pub kappa_probes: Vec<NormProbe>,
    pub lr: Option<FidelityReport>,
    pub invariant_drift: Option<f64>,
}

impl AuditReport {
    pub fn oracles_passed(&self) -> bool {
        self.discrepancies.count(Verdict::OracleFailure) == 0
    }
}

/// Entry for an oracle self-check: `value` must not exceed `limit`.
pub fn oracle_check(id: &str, relation: &str, description: &str, time: Option<f64>, value: f64, limit: f64) -> DiscrepancyEntry {
    DiscrepancyEntry {
        id: id.into(),
        relation: relation.into(),
        description: description.into(),
        time,
        paper: ComplexValue::from_c64(C64::from(limit)),
        oracle: ComplexValue::from_c64(C64::from(value)),
        rel_diff: Some(value),
        verdict: if value <= limit { Verdict::Match } else { Verdict::OracleFailure },
    }
}

/// α amplitude from α̇ = mgA + (mgθ/2ħ)D with A, D ∝ e^{iωt}.
pub fn alpha_amplitude_oracle(p: &PhysicalParams) -> C64 {
    let v = closed_form_coeffs(p).at(0.0);
    let mg = p.m * p.g;
    (mg * v.a + mg * p.theta / (2.0 * p.hbar) * v.d) / (C64::i() * p.omega())
}

/// Central-difference derivative of the closed-form coefficients.
fn coeff_derivative(p: &PhysicalParams, t: f64) -> Coeffs {
    let c = closed_form_coeffs(p);
    let h = 1e-4 / p.omega();
    (c.at(t + h) - c.at(t - h)) * (0.5 / h)
}

fn algebra_entries(rep: &mut DiscrepancyReport, alg: &opalg::AlgebraReport) {
    for e in &alg.entries {
        let mut d = DiscrepancyEntry::compare(
            format!("algebra.{}.{}", e.relation, e.channel),
            format!("{} coefficient of {}", e.relation, e.channel),
            "printed quasi-algebra coefficient vs truncated-basis decomposition",
            None,
            C64::new(e.paper_coefficient[0], e.paper_coefficient[1]),
            C64::new(e.oracle_coefficient[0], e.oracle_coefficient[1]),
            1e-8,
        );
        d.verdict = e.verdict;
        rep.push(d);
    }
    for (r, res) in opalg::RELATIONS.iter().zip(&alg.closure_residuals) {
        rep.push(oracle_check(
            &format!("closure.{r}"),
            &format!("{r} in span{{x, y, px, py, 1}}"),
            "least-squares residual on the interior block",
            None,
            *res,
            1e-8,
        ));
    }
}

fn ode_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams) {
    let t = 0.3 * p.period();
    let v = closed_form_coeffs(p).at(t);
    let deriv = coeff_derivative(p, t).to_array();
    let mv = paper_ode_rhs(&v, p).to_array();
    for k in 0..5 {
        let name = Coeffs::NAMES[k];
        rep.push(DiscrepancyEntry::compare(
            format!("ode.{name}.as-printed"),
            format!("d{name}/dt = (M v)_{name}"),
            "printed coefficient matrix applied to the closed form vs its time derivative",
            Some(t),
            mv[k],
            deriv[k],
            1e-6,
        ));
        rep.push(DiscrepancyEntry::compare(
            format!("ode.{name}.negated"),
            format!("d{name}/dt = -(M v)_{name}"),
            "reading dv/dt + Mv = 0",
            Some(t),
            -mv[k],
            deriv[k],
            1e-6,
        ));
        rep.push(DiscrepancyEntry::compare(
            format!("ode.{name}.zero"),
            format!("d{name}/dt = 0"),
            "the trailing '= 0' read as a statement about the derivative",
            Some(t),
            C64::new(0.0, 0.0),
            deriv[k],
            1e-6,
        ));
    }
}

fn alpha_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams) -> Result<()> {
    // at mg = 1 the printed and corrected amplitudes coincide; the probe
    // doubles g to separate them
    let probe = PhysicalParams { g: 2.0 * p.g, ..*p };
    probe.validate()?;
    for (id, q) in [("alpha-prefactor", p), ("alpha-prefactor.probe-2g", &probe)] {
        let printed = closed_form_coeffs_with(q, ClosedFormOptions { alpha: AlphaForm::Printed, ..Default::default() }).at(0.0).alpha;
        rep.push(DiscrepancyEntry::compare(
            id,
            "alpha(t) = -(1+zeta)(m^2 hbar^2/eta^2) B1 e^{i omega t}",
            format!("printed amplitude vs (mgA0 + mg theta D0/2hbar)/(i omega), g = {}", q.g),
            Some(0.0),
            printed,
            alpha_amplitude_oracle(q),
            MATCH_TOLERANCE,
        ));
    }
    Ok(())
}

fn invariance_entries(rep: &mut DiscrepancyReport, ops: &opalg::OperatorSet, p: &PhysicalParams) -> Result<f64> {
    let h = compose_hamiltonian(ops, p);
    let chk = InvarianceChecker::new(ops, &h, p.omega());
    let dt = chk.max_dt();
    let corrected = closed_form_coeffs(p);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let t = p.period() * i as f64 / 100.0;
        worst = worst.max(chk.residual(&corrected, t, dt)?.relative);
    }
    rep.push(oracle_check(
        "invariance.corrected",
        "dI/dt + [I, H]/(i hbar) = 0",
        "max relative residual over 100 times in one period, corrected alpha",
        None,
        worst,
        1e-6,
    ));
    let probe = PhysicalParams { g: 2.0 * p.g, ..*p };
    let hp = compose_hamiltonian(ops, &probe);
    let cp = InvarianceChecker::new(ops, &hp, probe.omega());
    let printed = closed_form_coeffs_with(&probe, ClosedFormOptions { alpha: AlphaForm::Printed, ..Default::default() });
    let r = cp.residual(&printed, 0.0, cp.max_dt())?;
    rep.push(DiscrepancyEntry::compare(
        "invariance.printed-alpha.probe-2g",
        "dI/dt + [I, H]/(i hbar) = 0 with the printed alpha",
        "identity-channel residual with the printed prefactor at g doubled",
        Some(0.0),
        C64::new(0.0, 0.0),
        r.channels[4],
        1e-6,
    ));
    let traj = integrate_coeffs(corrected.at(0.0), (0.0, 3.0 * p.period()), 3000, p)?;
    for e in cross_check(&corrected, &traj, 1e-6).entries {
        let v = e.rel_diff.unwrap_or(f64::INFINITY);
        rep.push(oracle_check(&e.id, &e.relation, &e.description, e.time, v, 1e-6));
    }
    Ok(worst)
}

fn nu_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams) -> Result<()> {
    let c = closed_form_coeffs(p);
    let t = p.period() / 3.0;
    for lambda in [0.0, 1.0] {
        let printed = states::nu_printed_closed_form(lambda, t, &c, p)? - states::nu_printed_closed_form(lambda, 0.0, &c, p)?;
        let oracle = states::oracle_nu(lambda, t, &c, p, PhiForm::DriftCorrected)?;
        rep.push(DiscrepancyEntry::compare(
            format!("nu.lambda={lambda}"),
            "nu(t) = hbar_eta^theta t + i lambda e^{-i omega t}/2B1",
            "printed phase increment vs quadrature of the local-energy rate",
            Some(t),
            printed,
            oracle,
            MATCH_TOLERANCE,
        ));
    }
    Ok(())
}

fn packet_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams, n: usize) -> Result<()> {
    let t = 0.25 * p.period();
    let gs = states::packet_grid(n, 10.0, t, p, PacketMode::LambdaQuadrature)?;
    let quad = states::psi_packet(gs, t, p, PacketMode::LambdaQuadrature)?;
    let closed: Result<WaveFunction2D> = states::psi_packet(gs, t, p, PacketMode::ClosedForm);
    let e = match closed {
        Ok(w) => DiscrepancyEntry::compare(
            "psi.closed-form-overlap",
            "printed closed form of Psi",
            "fidelity of the printed Psi against the lambda-quadrature packet",
            Some(t),
            C64::new(1.0, 0.0),
            C64::from(w.fidelity(&quad)?),
            MATCH_TOLERANCE,
        ),
        Err(err) => DiscrepancyEntry::compare(
            "psi.closed-form-overlap",
            "printed closed form of Psi",
            format!("printed Psi is not a usable state: {err}"),
            Some(t),
            C64::new(f64::NAN, 0.0),
            C64::new(0.0, 0.0),
            MATCH_TOLERANCE,
        )
        .with_verdict(Verdict::PaperDegenerate),
    };
    rep.push(e);
    Ok(())
}

fn kappa_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams, n: usize) -> Result<Vec<NormProbe>> {
    let mut probes = Vec::new();
    for (factor, allowed) in [(0.5, true), (0.4, false), (1.0, true)] {
        let kappa = factor * p.hbar;
        let base = kappa_probe_grid(n, 8.0, 0.0, p, kappa)?;
        let probe = kappa_norm_probe(base, 0.0, p, kappa)?;
        let converged = probe.converged(1e-6);
        let mut e = DiscrepancyEntry::compare(
            format!("kappa-bound.{factor}hbar"),
            "kappa >= hbar/2",
            format!(
                "paper value 1 = normalizable; oracle = 1 when the norm is stable under domain doubling (relative change {:.3e})",
                probe.relative_change()
            ),
            Some(0.0),
            C64::from(if allowed { 1.0 } else { 0.0 }),
            C64::from(if converged { 1.0 } else { 0.0 }),
            MATCH_TOLERANCE,
        );
        e.rel_diff = Some(probe.relative_change());
        rep.push(e);
        probes.push(probe);
    }
    Ok(probes)
}

fn uncertainty_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams) -> Result<()> {
    let per = std::f64::consts::PI / (2.0 * p.omega());
    let t0 = -p.tau;
    let tr = uncertainty_scan((t0, t0 + 2.0 * per), 129, p, ScanMode::Oracle)?;
    let floor = tr.product.iter().copied().fold(f64::INFINITY, f64::min);
    rep.push(oracle_check(
        "uncertainty.heisenberg",
        "dx dpx >= hbar/2",
        "smallest sampled oracle product, as (hbar/2 - min)/(hbar/2)",
        None,
        (0.5 * p.hbar - floor) / (0.5 * p.hbar),
        1e-9,
    ));
    let Some(m) = tr.minima.first().copied() else {
        rep.push(oracle_check("uncertainty.minima", "oracle trace has minima", "no minimum found", None, 1.0, 0.0));
        return Ok(());
    };
    let oracle_f = m.f;
    rep.push(DiscrepancyEntry::compare(
        "f-min.location",
        "minima at t = n pi/4 omega - tau, n even",
        "printed location vs refined oracle minimum",
        Some(m.t),
        C64::from(m.t - m.location_error),
        C64::from(m.t),
        1e-4,
    ));
    rep.push(DiscrepancyEntry::compare(
        "f-min.value.formula",
        "min f = 2 csc(omega tau) (the f formula at sin = 0)",
        "printed f at its minimum vs 4|dx dpx|^2/hbar^2 of the packet",
        Some(m.t),
        C64::from(m.candidate_plain),
        C64::from(oracle_f),
        MATCH_TOLERANCE,
    ));
    rep.push(DiscrepancyEntry::compare(
        "f-min.value.printed",
        "min f = 2 csc(omega tau) csc^2(2 omega tau)",
        "printed minimum vs 4|dx dpx|^2/hbar^2 of the packet",
        Some(m.t),
        C64::from(m.candidate_printed),
        C64::from(oracle_f),
        MATCH_TOLERANCE,
    ));
    // the two printed minimum claims agree only when csc²2ωτ = 1
    let probe = p.with_tau(0.3 / p.omega());
    let ptr = uncertainty_scan((0.0, 2.0 * per), 257, &probe, ScanMode::Paper)?;
    if let Some(pm) = ptr.minima.first() {
        rep.push(DiscrepancyEntry::compare(
            "f-min.conflict.probe-tau",
            "2 csc(omega tau) csc^2(2 omega tau) = min of printed f",
            "printed minimum value vs numerical minimum of the printed f, omega tau = 0.3",
            Some(pm.t),
            C64::from(pm.candidate_printed),
            C64::from(pm.f),
            MATCH_TOLERANCE,
        ));
    }
    rep.push(DiscrepancyEntry::compare(
        "f-flagged.probe-tau",
        "f_tau(t) > 0",
        "count of sample intervals where the printed f is non-positive or infinite, omega tau = 0.3",
        None,
        C64::from(0.0),
        C64::from(ptr.flagged.len() as f64),
        MATCH_TOLERANCE,
    ));
    Ok(())
}

fn tdse_entries(rep: &mut DiscrepancyReport, p: &PhysicalParams, opts: &AuditOptions) -> Result<(FidelityReport, f64)> {
    let cfg = PropagatorConfig::default_for(p, 1.0);
    let lr = tdse::verify_lr_solution(0.0, p.period(), p, &cfg, opts.propagation_n, 11.0)?;
    rep.push(oracle_check(
        "tdse.lr-fidelity",
        "psi_lambda = e^{i nu} Phi_lambda solves the TDSE",
        "1 - fidelity after one period, lambda = 0, drift-corrected Phi",
        Some(lr.t_end),
        1.0 - lr.fidelity,
        1e-5,
    ));
    rep.push(DiscrepancyEntry::compare(
        "tdse.printed-phi",
        "printed Phi_lambda solves the TDSE up to a phase",
        "fidelity of the printed Phi_lambda against the propagated state",
        Some(lr.t_end),
        C64::from(1.0),
        C64::from(lr.printed_fidelity),
        1e-5,
    ));
    rep.push(oracle_check(
        "tdse.norm-drift",
        "|psi| conserved",
        "relative norm change over one period",
        Some(lr.t_end),
        lr.stats.norm_drift,
        1e-8 * lr.steps as f64 / 1000.0,
    ));
    let c = closed_form_coeffs(p);
    let w = tdse::invariant_test_packet(p, &cfg, opts.propagation_n, opts.seed)?;
    let drift = tdse::track_invariant(&w, p, &c, &cfg, 50)?;
    rep.push(oracle_check(
        "tdse.invariant-drift",
        "<I> conserved",
        "max relative drift of <I> over one period for a random Gaussian mixture",
        None,
        drift.max_relative_drift,
        1e-6,
    ));
    rep.push(oracle_check(
        "tdse.energy-drift",
        "<H> conserved",
        "relative change of <H> in the propagation frame",
        None,
        drift.energy_drift,
        1e-8,
    ));
    Ok((lr, drift.max_relative_drift))
}

/// Runs every comparison for `p`.
pub fn run_audit(p: &PhysicalParams, opts: &AuditOptions) -> Result<AuditReport> {
    p.validate()?;
    let mut rep = DiscrepancyReport::new();

    let table = induced_commutators(&bopp_map(p)?, p.hbar);
    rep.push(oracle_check(
        "bopp-table",
        "[x',y'] = i theta, [px',py'] = i eta, [x_i',p_j'] = i hbar_eff delta_ij",
        "relative deviation of the induced commutator table",
        None,
        table.max_relative_deviation(&CommutatorTable::noncommutative(p.theta, p.eta, p.hbar)),
        1e-12,
    ));

    let ops = build_canonical_ops(opts.n_cut, p.hbar, default_length_scale(p))?;
    let algebra = opalg::verify_quasi_algebra(&ops, p, 1e-8);
    algebra_entries(&mut rep, &algebra);
    ode_entries(&mut rep, p);
    alpha_entries(&mut rep, p)?;
    let max_invariance_residual = invariance_entries(&mut rep, &ops, p)?;

    let c = closed_form_coeffs(p);
    let ladder = opalg::ladder_check(&ops, &c, p, 0.0, 1e-10);
    for pair in &ladder.pairs {
        rep.push(oracle_check(
            &format!("ladder.{}", pair.name),
            &format!("{} = {}", pair.name, pair.expected),
            "largest entrywise deviation on the interior block",
            Some(0.0),
            pair.residual,
            1e-10,
        ));
    }

    nu_entries(&mut rep, p)?;
    packet_entries(&mut rep, p, opts.grid_n)?;
    let kappa_probes = kappa_entries(&mut rep, p, opts.grid_n)?;

    let per = p.period();
    let samples: Vec<f64> = [0.0, 0.1, 0.25, 0.4].iter().map(|f| f * per).collect();
    rep.extend(observables::discrepancy_report(p, &samples)?);
    uncertainty_entries(&mut rep, p)?;

    let (lr, invariant_drift) = if opts.propagate {
        let (lr, d) = tdse_entries(&mut rep, p, opts)?;
        (Some(lr), Some(d))
    } else {
        (None, None)
    };
    Ok(AuditReport {
        params: *p,
        discrepancies: rep,
        algebra,
        ladder,
        max_invariance_residual,
        kappa_probes,
        lr,
        invariant_drift,
    })
}

/// Audit failures that are configuration problems rather than oracle ones.
pub fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter { .. } | Error::Json(_))
}
