//! Subcommand implementations. Each stage reads only the configuration and
//! writes its own files, so the pipeline is a plain sequence of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ncgw_core::audit::{run_audit, AuditOptions, AuditReport};
use ncgw_core::grid::{GridSpec, WaveFunction2D};
use ncgw_core::invariant::closed_form_coeffs;
use ncgw_core::observables::{
    moment_expectations, oracle_expectations_with, paper_expectations, uncertainty_scan, ExpectationReport, ScanMode,
    UncertaintyTrace,
};
use ncgw_core::report::Verdict;
use ncgw_core::states::{self, PacketEvaluator, PacketMode, PhiForm, DEFAULT_NODES};
use ncgw_core::tdse::{self, energy_expectation, invariant_expectation, Frame, HamiltonianTerms, PropagatorConfig, Scheme};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{num, write_atomic, write_json, CsvTable};
use crate::plot::{heatmap, line_plot, Series};
use crate::CliError;

/// Relative tolerance for golden-fixture regression.
pub const GOLDEN_TOL: f64 = 1e-8;
pub const GOLDEN_VERSION: u32 = 1;
/// Side of the sampled grid used for density snapshots.
const HEATMAP_N: usize = 64;
/// Fock truncation for the operator checks run by `validate`.
const VALIDATE_NCUT: usize = 32;

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn fail_if_oracles_failed(rep: &AuditReport) -> Result<(), CliError> {
    if rep.oracles_passed() {
        return Ok(());
    }
    let ids: Vec<&str> = rep.discrepancies.oracle_failures().map(|e| e.id.as_str()).collect();
    Err(CliError::OracleFailure(ids.join(", ")))
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let opts = AuditOptions { n_cut: VALIDATE_NCUT, grid_n: cfg.grid.n, propagate: false, ..AuditOptions::default() };
    let rep = run_audit(&cfg.params, &opts)?;
    println!("config {}", cfg.hash());
    println!("quasi-algebra closed: {} (max residual {:.3e})", rep.algebra.closed(), max(&rep.algebra.closure_residuals));
    for e in &rep.algebra.entries {
        if e.verdict != Verdict::Match {
            println!(
                "  {} [{}]: paper {:+.6e}{:+.6e}i, oracle {:+.6e}{:+.6e}i ({})",
                e.relation,
                e.channel,
                e.paper_coefficient[0],
                e.paper_coefficient[1],
                e.oracle_coefficient[0],
                e.oracle_coefficient[1],
                e.verdict.as_str()
            );
        }
    }
    println!("invariance residual: {:.3e}", rep.max_invariance_residual);
    println!("ladder algebra: {}", if rep.ladder.passed { "ok" } else { "FAILED" });
    print!("{}", rep.discrepancies.summary());
    fail_if_oracles_failed(&rep)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

pub fn coeffs(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    let c = closed_form_coeffs(&cfg.params);
    let names = ["A", "B", "C", "D", "alpha"];
    let mut header = vec!["t".to_string()];
    for n in names {
        header.push(format!("{n}_re"));
        header.push(format!("{n}_im"));
    }
    let mut table = CsvTable::new(&header);
    let times = cfg.times.grid();
    let mut moduli: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 5];
    for &t in &times {
        let v = c.at(t).to_array();
        let mut row = vec![num(t)];
        for (k, z) in v.iter().enumerate() {
            row.push(num(z.re));
            row.push(num(z.im));
            moduli[k].push((t, z.norm()));
        }
        table.push(row);
    }
    table.write(&out(cfg, "coeffs.csv"), &cfg.hash())?;
    let series: Vec<Series> = names.iter().zip(moduli).map(|(n, points)| Series { name: n, points }).collect();
    write_atomic(&out(cfg, "coeffs.svg"), line_plot("invariant coefficient moduli", "t", "modulus", &series).as_bytes())?;
    Ok(())
}

pub fn state(cfg: &RunConfig, t: f64, lambda: Option<f64>) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    let p = &cfg.params;
    let (w, stem) = match lambda {
        None => {
            let gs = states::packet_grid(cfg.grid.n, cfg.grid.padding_sigmas, t, p, PacketMode::LambdaQuadrature)?;
            (states::psi_packet(gs, t, p, PacketMode::LambdaQuadrature)?, "state-psi".to_string())
        }
        Some(l) => {
            let c = closed_form_coeffs(p);
            let gs = states::phi_shape(l, t, &c, p, PhiForm::DriftCorrected)?.moments()?.grid(cfg.grid.n, cfg.grid.padding_sigmas)?;
            (states::phi_lambda(gs, l, &c, t, p, PhiForm::DriftCorrected)?, "state-phi".to_string())
        }
    };
    w.check_boundary(states::BOUNDARY_TOL)?;
    dump(&w, &out(cfg, &format!("{stem}.bin")))?;
    let g = w.grid;
    let rho = coarse(&states::density(&w), HEATMAP_N);
    let svg = heatmap(&format!("|{stem}|^2 at t = {t:.4}"), &rho, (g.x_min, g.x_max, g.y_min, g.y_max));
    write_atomic(&out(cfg, &format!("{stem}.svg")), svg.as_bytes())?;
    println!("wrote {stem}.bin on {}x{} grid, boundary ratio {:.3e}", g.n, g.n, w.boundary_ratio());
    Ok(())
}

/// Dumps into a temporary directory next to the target and renames both
/// files into place.
fn dump(w: &WaveFunction2D, path: &Path) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = tempfile::tempdir_in(dir)?;
    let name = path.file_name().expect("dump path has a file name");
    let staged = tmp.path().join(name);
    w.dump(&staged)?;
    fs::rename(ncgw_core::grid::sidecar_path(&staged), ncgw_core::grid::sidecar_path(path))?;
    fs::rename(&staged, path)?;
    Ok(())
}

/// Block-averages a square array down to at most `n` per side.
fn coarse(a: &Array2<f64>, n: usize) -> Array2<f64> {
    let (ny, nx) = a.dim();
    let (by, bx) = (ny.div_ceil(n).max(1), nx.div_ceil(n).max(1));
    Array2::from_shape_fn((ny / by, nx / bx), |(j, i)| {
        let mut s = 0.0;
        for jj in 0..by {
            for ii in 0..bx {
                s += a[[j * by + jj, i * bx + ii]];
            }
        }
        s / (by * bx) as f64
    })
}

const EXPECT_FIELDS: [&str; 12] = ["x", "y", "px", "py", "x2", "y2", "px2", "py2", "xy", "var_x", "var_px", "product"];

fn expect_row(label: &str, t: f64, r: Option<&ExpectationReport>) -> Vec<String> {
    let mut row = vec![label.to_string(), num(t)];
    for f in EXPECT_FIELDS {
        let z = r.and_then(|r| r.get(f));
        row.push(num(z.map_or(f64::NAN, |z| z.re)));
        row.push(num(z.map_or(f64::NAN, |z| z.im)));
    }
    row
}

/// Times at which the full grid quadrature is repeated. Early in the window
/// because the lab-frame carrier of Ψ grows with t and soon outruns the grid.
fn grid_check_times(cfg: &RunConfig) -> Vec<f64> {
    let t = cfg.times;
    vec![t.t0, t.t0 + 0.125 * (t.t1 - t.t0)]
}

pub fn expect(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    let p = &cfg.params;
    let mut header = vec!["source".to_string(), "t".to_string()];
    for f in EXPECT_FIELDS {
        header.push(format!("{f}_re"));
        header.push(format!("{f}_im"));
    }
    let mut table = CsvTable::new(&header);
    for &t in &cfg.times.grid() {
        let paper = paper_expectations(t, p).ok();
        table.push(expect_row("paper", t, paper.as_ref()));
        let oracle = moment_expectations(t, p, PacketMode::LambdaQuadrature)?;
        table.push(expect_row("oracle-moments", t, Some(&oracle)));
    }
    for t in grid_check_times(cfg) {
        let r = grid_expectations(cfg, t)?;
        table.push(expect_row("oracle-grid", t, Some(&r)));
    }
    table.write(&out(cfg, "expectations.csv"), &cfg.hash())?;
    Ok(())
}

fn grid_expectations(cfg: &RunConfig, t: f64) -> Result<ExpectationReport, CliError> {
    let p = &cfg.params;
    let gs = states::packet_grid(cfg.grid.n, cfg.grid.padding_sigmas, t, p, PacketMode::LambdaQuadrature)?;
    let w = states::psi_packet(gs, t, p, PacketMode::LambdaQuadrature)?;
    Ok(oracle_expectations_with(&w, p)?)
}

pub struct Traces {
    pub oracle: UncertaintyTrace,
    pub paper: UncertaintyTrace,
}

pub fn uncertainty_traces(cfg: &RunConfig) -> Result<Traces, CliError> {
    let span = (cfg.times.t0, cfg.times.t1);
    let p = &cfg.params;
    Ok(Traces {
        oracle: uncertainty_scan(span, cfg.times.samples, p, ScanMode::Oracle)?,
        paper: uncertainty_scan(span, cfg.times.samples, p, ScanMode::Paper)?,
    })
}

pub fn uncertainty(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    write_uncertainty(cfg).map(|_| ())
}

fn write_uncertainty(cfg: &RunConfig) -> Result<Traces, CliError> {
    let tr = uncertainty_traces(cfg)?;
    let hash = cfg.hash();
    let mut table = CsvTable::new(&["t", "product_oracle", "product_paper", "f_paper", "flag"]);
    for (k, &t) in tr.oracle.times.iter().enumerate() {
        let f = tr.paper.f[k];
        let flag = if f.is_finite() && f > 0.0 { "ok" } else { "paper-flagged" };
        table.push(vec![num(t), num(tr.oracle.product[k]), num(tr.paper.product[k]), num(f), flag.into()]);
    }
    table.write(&out(cfg, "uncertainty.csv"), &hash)?;

    let mut minima =
        CsvTable::new(&["mode", "n", "t", "f", "product", "location_error", "candidate_plain", "candidate_printed"]);
    for (mode, trace) in [("oracle", &tr.oracle), ("paper", &tr.paper)] {
        for m in &trace.minima {
            minima.push(vec![
                mode.into(),
                m.n.to_string(),
                num(m.t),
                num(m.f),
                num(m.product),
                num(m.location_error),
                num(m.candidate_plain),
                num(m.candidate_printed),
            ]);
        }
    }
    minima.write(&out(cfg, "minima.csv"), &hash)?;

    let hbar = cfg.params.hbar;
    let pts = |tr: &UncertaintyTrace| tr.times.iter().zip(&tr.product).map(|(&t, &v)| (t, v)).collect();
    let bound = vec![(cfg.times.t0, hbar / 2.0), (cfg.times.t1, hbar / 2.0)];
    let series = [
        Series { name: "oracle", points: pts(&tr.oracle) },
        Series { name: "paper", points: pts(&tr.paper) },
        Series { name: "hbar/2", points: bound },
    ];
    write_atomic(&out(cfg, "uncertainty.svg"), line_plot("uncertainty product", "t", "|dx dpx|", &series).as_bytes())?;
    for m in &tr.oracle.minima {
        println!("oracle minimum t = {:.10} product = {:.12} (n = {}, offset {:.3e})", m.t, m.product, m.n, m.location_error);
    }
    Ok(tr)
}

pub struct EvolveOptions {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub dump_every: Option<usize>,
    pub lambda: Option<f64>,
    pub seed: u64,
}

/// Propagates in the co-moving frame; dumps and the trace are reported in
/// lab coordinates.
pub fn evolve(cfg: &RunConfig, opts: &EvolveOptions) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    let p = &cfg.params;
    let t_end = opts.t_end.unwrap_or(p.period());
    if !(t_end > 0.0) {
        return Err(CliError::Config(format!("--t-end must be positive, got {t_end}")));
    }
    let mut pc = PropagatorConfig::default_for(p, 1.0);
    pc.scheme = opts.scheme;
    if let Some(dt) = opts.dt {
        pc.dt = dt;
    }
    pc.n_steps = (t_end / pc.dt).round().max(1.0) as usize;
    pc.validate()?;
    if opts.dump_every == Some(0) {
        return Err(CliError::Config("--dump-every must be at least 1".into()));
    }
    let c = closed_form_coeffs(p);
    let w0 = match opts.lambda {
        Some(l) => {
            let gs = tdse::propagation_grid(l, cfg.grid.n, 11.0, p, &pc)?;
            states::phi_lambda(gs, l, &c, 0.0, p, PhiForm::DriftCorrected)?
        }
        None => tdse::invariant_test_packet(p, &pc, cfg.grid.n, opts.seed)?,
    };
    let h = HamiltonianTerms::for_frame(p, pc.frame);
    let every = opts.dump_every.unwrap_or((pc.n_steps / 100).max(1));
    let mut table = CsvTable::new(&["step", "t", "norm", "invariant_re", "invariant_im", "energy_re", "energy_im"]);
    let mut record = |step: usize, w: &WaveFunction2D| -> Result<(), CliError> {
        let inv = invariant_expectation(w, &c.at(w.time), p.hbar)?;
        let e = energy_expectation(w, &h)?;
        table.push(vec![step.to_string(), num(w.time), num(w.norm()), num(inv.re), num(inv.im), num(e.re), num(e.im)]);
        if opts.dump_every.is_some() {
            dump(&tdse::to_lab_frame(w, p, pc.frame), &out(cfg, &format!("evolve-{step:06}.bin")))?;
        }
        Ok(())
    };
    record(0, &w0)?;
    let mut failure = None;
    let (_, stats) = tdse::propagate_with(&w0, &h, &pc, |step, w| {
        if step % every == 0 || step == pc.n_steps {
            if let Err(e) = record(step, w) {
                let msg = e.to_string();
                failure = Some(e);
                return Err(ncgw_core::Error::Io(std::io::Error::other(msg)));
            }
        }
        Ok(())
    })
    .map_err(|e| failure.take().unwrap_or(CliError::Core(e)))?;
    table.write(&out(cfg, "evolve.csv"), &cfg.hash())?;
    write_json(&out(cfg, "evolve-stats.json"), &stats)?;
    println!(
        "{} steps of dt = {:.6e} ({}), norm drift {:.3e}, max boundary ratio {:.3e}",
        stats.steps,
        pc.dt,
        match pc.scheme {
            Scheme::SplitOperator4way => "split operator",
            Scheme::CrankNicolson => "Crank-Nicolson",
        },
        stats.norm_drift,
        stats.max_boundary_ratio
    );
    debug_assert_eq!(pc.frame, Frame::CoMoving);
    Ok(())
}

pub fn audit(cfg: &RunConfig, fast: bool, seed: u64) -> Result<AuditReport, CliError> {
    let opts = AuditOptions { grid_n: cfg.grid.n, propagation_n: cfg.grid.n, propagate: !fast, seed, ..AuditOptions::default() };
    Ok(run_audit(&cfg.params, &opts)?)
}

fn write_report(cfg: &RunConfig, rep: &AuditReport) -> Result<(), CliError> {
    write_json(&out(cfg, "discrepancies.json"), &rep.discrepancies)?;
    write_json(&out(cfg, "audit.json"), rep)?;
    let mut s = format!("config-hash: {}\n", cfg.hash());
    s.push_str(&rep.discrepancies.summary());
    write_atomic(&out(cfg, "summary.txt"), s.as_bytes())
}

pub fn report(cfg: &RunConfig, fast: bool, seed: u64) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    let rep = audit(cfg, fast, seed)?;
    write_report(cfg, &rep)?;
    print!("{}", rep.discrepancies.summary());
    fail_if_oracles_failed(&rep)
}

/// Density snapshots at the start, middle and end of the time window.
fn snapshots(cfg: &RunConfig) -> Result<(), CliError> {
    let p = &cfg.params;
    let (t0, t1) = (cfg.times.t0, cfg.times.t1);
    for (k, t) in [t0, 0.5 * (t0 + t1), t1].into_iter().enumerate() {
        let ev = PacketEvaluator::new(t, p, PacketMode::LambdaQuadrature, DEFAULT_NODES)?;
        // only |Ψ|² is drawn, so the carrier need not be resolved
        let m = ev.shape()?.moments()?;
        let [sx, sy] = m.sigma().map(|s| s * cfg.grid.padding_sigmas);
        let gs = GridSpec::centered(HEATMAP_N, m.mean[0], m.mean[1], sx, sy)?;
        let logs = ev.log_grid(gs);
        let peak = logs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let rho = logs.mapv(|z| (2.0 * (z.re - peak)).exp());
        let svg = heatmap(&format!("|Psi|^2 at t = {t:.4}"), &rho, (gs.x_min, gs.x_max, gs.y_min, gs.y_max));
        write_atomic(&out(cfg, &format!("density-{k}.svg")), svg.as_bytes())?;
    }
    Ok(())
}

/// Self-generated reference values checked on every later run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixture {
    pub version: u32,
    pub config_hash: String,
    pub values: BTreeMap<String, f64>,
}

pub fn golden_values(cfg: &RunConfig, traces: &Traces) -> Result<BTreeMap<String, f64>, CliError> {
    let p = &cfg.params;
    let t0 = cfg.times.t0;
    let mut v = BTreeMap::new();
    let m = moment_expectations(t0, p, PacketMode::LambdaQuadrature)?;
    v.insert("product-t0-moments".to_string(), m.product.re);
    let g = grid_expectations(cfg, t0)?;
    v.insert("product-t0-grid".to_string(), g.product.re);
    for (k, min) in traces.oracle.minima.iter().enumerate() {
        v.insert(format!("oracle-minimum-{k}-t"), min.t);
        v.insert(format!("oracle-minimum-{k}-product"), min.product);
    }
    Ok(v)
}

pub fn golden_path(cfg: &RunConfig) -> PathBuf {
    cfg.fixtures_dir.join(format!("golden-v{GOLDEN_VERSION}-{}.json", cfg.hash()))
}

/// Writes the fixture if absent, otherwise compares against it. Returns the
/// keys that moved by more than [`GOLDEN_TOL`].
pub fn check_golden(cfg: &RunConfig, values: &BTreeMap<String, f64>) -> Result<Vec<String>, CliError> {
    let path = golden_path(cfg);
    if !path.exists() {
        let fx = GoldenFixture { version: GOLDEN_VERSION, config_hash: cfg.hash(), values: values.clone() };
        write_json(&path, &fx)?;
        println!("golden fixture written to {}", path.display());
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path)?;
    let fx: GoldenFixture =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut bad = Vec::new();
    for (k, &v) in values {
        match fx.values.get(k) {
            Some(&r) if (v - r).abs() <= GOLDEN_TOL * r.abs().max(1e-300) => {}
            Some(&r) => bad.push(format!("{k}: {v:.15e} vs fixture {r:.15e}")),
            None => bad.push(format!("{k}: missing from fixture")),
        }
    }
    for k in fx.values.keys().filter(|k| !values.contains_key(*k)) {
        bad.push(format!("{k}: not produced by this run"));
    }
    Ok(bad)
}

pub fn pipeline(cfg: &RunConfig, fast: bool, seed: u64) -> Result<(), CliError> {
    cfg.ensure_output_dir()?;
    coeffs(cfg)?;
    expect(cfg)?;
    let traces = write_uncertainty(cfg)?;
    snapshots(cfg)?;
    let rep = audit(cfg, fast, seed)?;
    write_report(cfg, &rep)?;
    print!("{}", rep.discrepancies.summary());
    let bad = check_golden(cfg, &golden_values(cfg, &traces)?)?;
    fail_if_oracles_failed(&rep)?;
    if !bad.is_empty() {
        return Err(CliError::OracleFailure(format!("golden fixture regression: {}", bad.join("; "))));
    }
    Ok(())
}
