//! Dense operator algebra on a truncated two-mode oscillator basis.
//!
//! Truncated ladder matrices only satisfy the canonical algebra away from
//! the cutoff, so every identity is checked on the interior block: the
//! principal sub-matrix of basis states with both occupation numbers
//! below `n_cut / 2`.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariant::{CoeffSet, Coeffs};
use crate::params::PhysicalParams;
use crate::report::Verdict;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: Array2<C64>,
    pub label: String,
}

impl OperatorMatrix {
    pub fn new(entries: Array2<C64>, label: impl Into<String>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "operator matrices are square");
        OperatorMatrix { entries, label: label.into() }
    }

    pub fn zeros(dim: usize, label: impl Into<String>) -> Self {
        Self::new(Array2::zeros((dim, dim)), label)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Array2::eye(dim), "1")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Matrix product. Exact zeros of `self` are skipped, which makes the
    /// banded ladder-operator products cheap without changing the result.
    pub fn matmul(&self, rhs: &OperatorMatrix) -> OperatorMatrix {
        let n = self.dim();
        let mut out = Array2::<C64>::zeros((n, n));
        out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            for (k, &l) in self.entries.row(i).iter().enumerate() {
                if l == ZERO {
                    continue;
                }
                Zip::from(&mut row).and(rhs.entries.row(k)).for_each(|o, &r| *o += l * r);
            }
        });
        OperatorMatrix::new(out, format!("{}·{}", self.label, rhs.label))
    }

    pub fn commutator(&self, rhs: &OperatorMatrix) -> OperatorMatrix {
        let ab = self.matmul(rhs);
        let ba = rhs.matmul(self);
        OperatorMatrix::new(ab.entries - ba.entries, format!("[{},{}]", self.label, rhs.label))
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        let adj = self.entries.t().mapv(|z| z.conj());
        OperatorMatrix::new(adj.as_standard_layout().into_owned(), format!("{}†", self.label))
    }

    pub fn scaled(&self, s: C64) -> OperatorMatrix {
        OperatorMatrix::new(self.entries.mapv(|z| z * s), self.label.clone())
    }

    pub fn restrict(&self, idx: &[usize]) -> Array2<C64> {
        restrict(&self.entries, idx)
    }
}

fn restrict(m: &Array2<C64>, idx: &[usize]) -> Array2<C64> {
    Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| m[[idx[i], idx[j]]])
}

pub fn frobenius(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn frobenius_inner(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    Zip::from(a).and(b).fold(ZERO, |acc, x, y| acc + x.conj() * y)
}

/// Canonical generators on the truncated two-mode basis.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub px: OperatorMatrix,
    pub py: OperatorMatrix,
    pub n_cut: usize,
    /// Per-mode size of the interior block.
    pub interior: usize,
    pub hbar: f64,
    pub length_scale: f64,
}

impl OperatorSet {
    pub fn dim(&self) -> usize {
        self.n_cut * self.n_cut
    }

    /// Basis indices (n_x·n_cut + n_y) with n_x, n_y < interior.
    pub fn interior_indices(&self) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.interior * self.interior);
        for nx in 0..self.interior {
            for ny in 0..self.interior {
                idx.push(nx * self.n_cut + ny);
            }
        }
        idx
    }

    pub fn identity(&self) -> OperatorMatrix {
        OperatorMatrix::identity(self.dim())
    }

    pub fn generators(&self) -> [&OperatorMatrix; 4] {
        [&self.x, &self.y, &self.px, &self.py]
    }
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (na, nb) = (a.nrows(), b.nrows());
    Array2::from_shape_fn((na * nb, na * nb), |(i, j)| a[[i / nb, j / nb]] * b[[i % nb, j % nb]])
}

/// Oscillator-basis position and momentum operators for two modes:
/// x = ℓ(a + a†)/√2, p = (ħ/ℓ)·i(a† − a)/√2.
pub fn build_canonical_ops(n_cut: usize, hbar: f64, length_scale: f64) -> Result<OperatorSet> {
    if n_cut < 8 {
        return Err(Error::Truncation(format!("n_cut = {n_cut}, need at least 8")));
    }
    if !(hbar > 0.0 && length_scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "length_scale",
            reason: "hbar and length scale must be positive".into(),
        });
    }
    let mut a = Array2::<C64>::zeros((n_cut, n_cut));
    for n in 1..n_cut {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    let ad = a.t().to_owned();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x1 = (&a + &ad).mapv(|z| z * (length_scale * s));
    let p1 = (&ad - &a).mapv(|z| z * C64::new(0.0, hbar / length_scale * s));
    let id = Array2::<C64>::eye(n_cut);
    Ok(OperatorSet {
        x: OperatorMatrix::new(kron(&x1, &id), "x"),
        y: OperatorMatrix::new(kron(&id, &x1), "y"),
        px: OperatorMatrix::new(kron(&p1, &id), "px"),
        py: OperatorMatrix::new(kron(&id, &p1), "py"),
        n_cut,
        interior: n_cut / 2,
        hbar,
        length_scale,
    })
}

/// Oscillator length √(ħ/mω) matched to the regime's frequency.
pub fn default_length_scale(p: &PhysicalParams) -> f64 {
    (p.hbar / (p.m * p.omega())).sqrt()
}

/// H_c = (p_x² + p_y²)/2m + (η/2mħ)(y p_x − x p_y) + mg(x − (θ/2ħ)p_y)
///       + (η²/8mħ²)(x² + y²), built by dense products.
pub fn compose_hamiltonian(ops: &OperatorSet, p: &PhysicalParams) -> OperatorMatrix {
    compose_hamiltonian_raw(ops, p.m, p.g, p.theta, p.eta)
}

/// [`compose_hamiltonian`] without parameter validation (allows θ = η = 0).
pub fn compose_hamiltonian_raw(ops: &OperatorSet, m: f64, g: f64, theta: f64, eta: f64) -> OperatorMatrix {
    let hbar = ops.hbar;
    let c = |v: f64| C64::new(v, 0.0);
    let kinetic = ops.px.matmul(&ops.px).entries + ops.py.matmul(&ops.py).entries;
    let rot = ops.y.matmul(&ops.px).entries - ops.x.matmul(&ops.py).entries;
    let quad = ops.x.matmul(&ops.x).entries + ops.y.matmul(&ops.y).entries;
    let lin = &ops.x.entries - &ops.py.entries.mapv(|z| z * (theta / (2.0 * hbar)));
    let h = kinetic.mapv(|z| z * c(0.5 / m))
        + rot.mapv(|z| z * c(eta / (2.0 * m * hbar)))
        + lin.mapv(|z| z * c(m * g))
        + quad.mapv(|z| z * c(eta * eta / (8.0 * m * hbar * hbar)));
    OperatorMatrix::new(h, "H_c")
}

/// ‖H − H†‖_F on the interior block.
pub fn hermiticity_residual(ops: &OperatorSet, h: &OperatorMatrix) -> f64 {
    let idx = ops.interior_indices();
    let hi = h.restrict(&idx);
    let diff = &hi - &hi.t().mapv(|z| z.conj());
    frobenius(&diff)
}

/// Channels of the span {x, y, p_x, p_y, 1}.
pub const CHANNELS: [&str; 5] = ["x", "y", "px", "py", "1"];

/// Least-squares coordinates of `target` in the span of `basis` under the
/// Frobenius inner product, with the relative residual.
pub fn decompose(target: &Array2<C64>, basis: &[Array2<C64>]) -> (Vec<C64>, f64) {
    let n = basis.len();
    let mut gram = vec![vec![ZERO; n]; n];
    let mut rhs = vec![ZERO; n];
    for i in 0..n {
        for j in 0..n {
            gram[i][j] = frobenius_inner(&basis[i], &basis[j]);
        }
        rhs[i] = frobenius_inner(&basis[i], target);
    }
    let coef = solve_dense(gram, rhs).expect("basis operators are linearly independent");
    let mut resid = target.clone();
    for (c, b) in coef.iter().zip(basis) {
        resid.zip_mut_with(b, |r, &v| *r -= c * v);
    }
    let norm = frobenius(target);
    let r = frobenius(&resid);
    (coef, if norm > 0.0 { r / norm } else { r })
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Option<Vec<C64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![ZERO; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i][k] * x[k];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

/// Printed coefficients of [H_c, g] for g = x, y, p_x, p_y in the channels
/// (x, y, p_x, p_y, 1).
pub fn paper_quasi_algebra(p: &PhysicalParams) -> [[C64; 5]; 4] {
    let i = C64::i();
    let (m, g, hbar, theta, eta) = (p.m, p.g, p.hbar, p.theta, p.eta);
    let z = ZERO;
    [
        [z, -i * eta / (2.0 * m), -i * hbar / m, z, z],
        [i * eta / (2.0 * m), z, z, -i * hbar / m, i * 0.5 * m * g * theta],
        [i * eta * eta / (4.0 * m * hbar), z, -i * eta / (2.0 * m), z, i * m * g * hbar],
        [z, i * eta * eta / (4.0 * m * hbar), i * eta / (2.0 * m), z, z],
    ]
}

pub const RELATIONS: [&str; 4] = ["[H_c,x]", "[H_c,y]", "[H_c,px]", "[H_c,py]"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraEntry {
    pub relation: String,
    pub channel: String,
    pub paper_coefficient: [f64; 2],
    pub oracle_coefficient: [f64; 2],
    /// Closure residual of the relation this channel belongs to.
    pub residual: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub entries: Vec<AlgebraEntry>,
    pub closure_residuals: Vec<f64>,
    pub tol: f64,
}

impl AlgebraReport {
    /// Every commutator decomposes within `tol` in the five-element span.
    pub fn closed(&self) -> bool {
        self.closure_residuals.iter().all(|r| *r <= self.tol)
    }

    pub fn entry(&self, relation: &str, channel: &str) -> Option<&AlgebraEntry> {
        self.entries.iter().find(|e| e.relation == relation && e.channel == channel)
    }

    /// Whether every channel of `relation` agrees with the printed value.
    pub fn relation_matches_paper(&self, relation: &str) -> bool {
        self.entries.iter().filter(|e| e.relation == relation).all(|e| e.verdict == Verdict::Match)
    }

    pub fn oracle_coefficients(&self, relation: &str) -> [C64; 5] {
        std::array::from_fn(|k| {
            let e = self.entry(relation, CHANNELS[k]).expect("all channels present");
            C64::new(e.oracle_coefficient[0], e.oracle_coefficient[1])
        })
    }
}

/// Decomposes each [H_c, g] on the interior block and compares it with the
/// printed relations.
pub fn verify_quasi_algebra(ops: &OperatorSet, p: &PhysicalParams, tol: f64) -> AlgebraReport {
    let h = compose_hamiltonian(ops, p);
    let idx = ops.interior_indices();
    let basis: Vec<Array2<C64>> = ops
        .generators()
        .iter()
        .map(|g| g.restrict(&idx))
        .chain(std::iter::once(Array2::eye(idx.len())))
        .collect();
    let paper = paper_quasi_algebra(p);
    let mut entries = Vec::new();
    let mut closure_residuals = Vec::new();
    for (r, g) in ops.generators().iter().enumerate() {
        let comm = h.commutator(g).restrict(&idx);
        let (coef, residual) = decompose(&comm, &basis);
        let scale = coef.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        closure_residuals.push(residual);
        for k in 0..5 {
            let verdict = if residual > tol {
                Verdict::OracleFailure
            } else if (coef[k] - paper[r][k]).norm() <= 1e-8 * scale {
                Verdict::Match
            } else {
                Verdict::Mismatch
            };
            entries.push(AlgebraEntry {
                relation: RELATIONS[r].to_string(),
                channel: CHANNELS[k].to_string(),
                paper_coefficient: [paper[r][k].re, paper[r][k].im],
                oracle_coefficient: [coef[k].re, coef[k].im],
                residual,
                verdict,
            });
        }
    }
    AlgebraReport { entries, closure_residuals, tol }
}

/// Î = A p_x + B p_y + C x + D y + α·1.
pub fn build_invariant(ops: &OperatorSet, c: &Coeffs) -> OperatorMatrix {
    let mut m = Array2::<C64>::zeros((ops.dim(), ops.dim()));
    for (coef, g) in [(c.a, &ops.px), (c.b, &ops.py), (c.c, &ops.x), (c.d, &ops.y)] {
        m.zip_mut_with(&g.entries, |o, &v| *o += coef * v);
    }
    for i in 0..ops.dim() {
        m[[i, i]] += c.alpha;
    }
    OperatorMatrix::new(m, "I")
}

/// Evaluates the invariance residual
/// ‖(Î(t+dt) − Î(t−dt))/2dt + [Î(t), H]/iħ‖ / ‖Î(t)‖ on the interior block.
///
/// [Î, H] is linear in the generator commutators, which are computed once.
pub struct InvarianceChecker {
    idx_len: usize,
    hbar: f64,
    omega: f64,
    /// Interior blocks of x, y, p_x, p_y.
    gens: [Array2<C64>; 4],
    /// Interior blocks of [x,H], [y,H], [p_x,H], [p_y,H].
    comms: [Array2<C64>; 4],
}

/// Residual split into the five channels, plus the total relative residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceResidual {
    pub relative: f64,
    pub channels: [C64; 5],
}

impl InvarianceChecker {
    pub fn new(ops: &OperatorSet, h: &OperatorMatrix, omega: f64) -> Self {
        let idx = ops.interior_indices();
        let gens = [&ops.x, &ops.y, &ops.px, &ops.py];
        InvarianceChecker {
            idx_len: idx.len(),
            hbar: ops.hbar,
            omega,
            gens: gens.map(|g| g.restrict(&idx)),
            comms: gens.map(|g| g.commutator(h).restrict(&idx)),
        }
    }

    fn invariant_block(&self, c: &Coeffs) -> Array2<C64> {
        let mut m = Array2::<C64>::eye(self.idx_len).mapv(|z| z * c.alpha);
        for (coef, g) in [(c.c, &self.gens[0]), (c.d, &self.gens[1]), (c.a, &self.gens[2]), (c.b, &self.gens[3])] {
            m.zip_mut_with(g, |o, &v| *o += coef * v);
        }
        m
    }

    fn residual_block(&self, c: &CoeffSet, t: f64, dt: f64) -> Array2<C64> {
        let plus = c.at(t + dt);
        let minus = c.at(t - dt);
        let now = c.at(t);
        let deriv = (plus - minus) * (0.5 / dt);
        let mut r = self.invariant_block(&deriv);
        let inv_ih = C64::new(0.0, -1.0 / self.hbar);
        for (coef, comm) in [(now.c, &self.comms[0]), (now.d, &self.comms[1]), (now.a, &self.comms[2]), (now.b, &self.comms[3])] {
            r.zip_mut_with(comm, |o, &v| *o += coef * v * inv_ih);
        }
        r
    }

    /// Largest admissible finite-difference step, 1e−4·2π/ω.
    pub fn max_dt(&self) -> f64 {
        1e-4 * 2.0 * std::f64::consts::PI / self.omega
    }

    pub fn residual(&self, c: &CoeffSet, t: f64, dt: f64) -> Result<InvarianceResidual> {
        if !(dt > 0.0 && dt <= self.max_dt() * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("need 0 < dt <= 1e-4 * 2pi/omega = {}", self.max_dt()),
            });
        }
        let r = self.residual_block(c, t, dt);
        let inv = self.invariant_block(&c.at(t));
        let mut basis: Vec<Array2<C64>> = self.gens.to_vec();
        basis.push(Array2::eye(self.idx_len));
        let (coef, _) = decompose(&r, &basis);
        let norm = frobenius(&inv);
        Ok(InvarianceResidual {
            relative: if norm > 0.0 { frobenius(&r) / norm } else { frobenius(&r) },
            channels: [coef[0], coef[1], coef[2], coef[3], coef[4]],
        })
    }
}

/// One-shot invariance residual at time `t`.
pub fn invariance_residual(
    ops: &OperatorSet,
    p: &PhysicalParams,
    c: &CoeffSet,
    t: f64,
    dt: f64,
) -> Result<f64> {
    let h = compose_hamiltonian(ops, p);
    Ok(InvarianceChecker::new(ops, &h, p.omega()).residual(c, t, dt)?.relative)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPair {
    pub name: String,
    /// Expected multiple of the identity.
    pub expected: f64,
    /// Mean diagonal element of the interior block.
    pub measured: [f64; 2],
    /// Largest entrywise deviation from `expected`·1.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub time: f64,
    /// m²ħ²|B₁|²/η, the printed normalization of [J_i, J_i†].
    pub normalization: f64,
    pub pairs: Vec<LadderPair>,
    /// max |Î − (J₁ + J₂ + α)| on the interior block.
    pub decomposition_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

impl LadderReport {
    pub fn pair(&self, name: &str) -> Option<&LadderPair> {
        self.pairs.iter().find(|p| p.name == name)
    }
}

/// Checks [J_i, J_j†] = δ_ij·m²ħ²|B₁|²/η and [J_i, J_j] = 0 for
/// J₁ = A p_x + C x, J₂ = B p_y + D y.
pub fn ladder_check(ops: &OperatorSet, c: &CoeffSet, p: &PhysicalParams, t: f64, tol: f64) -> LadderReport {
    let v = c.at(t);
    let idx = ops.interior_indices();
    let lin = |a: C64, ga: &OperatorMatrix, b: C64, gb: &OperatorMatrix, label: &str| {
        let mut m = ga.entries.mapv(|z| z * a);
        m.zip_mut_with(&gb.entries, |o, &w| *o += b * w);
        OperatorMatrix::new(m, label)
    };
    let j1 = lin(v.a, &ops.px, v.c, &ops.x, "J1");
    let j2 = lin(v.b, &ops.py, v.d, &ops.y, "J2");
    let j = [&j1, &j2];
    let jd = [j1.adjoint(), j2.adjoint()];
    let normalization = p.m * p.m * p.hbar * p.hbar * c.b1.norm_sqr() / p.eta;
    let target = p.m * p.m * p.hbar * p.hbar / p.eta * c.b1.norm_sqr();
    let mut pairs = Vec::new();
    let mut measure = |name: String, m: Array2<C64>, expected: f64| {
        let n = m.nrows();
        let mean = (0..n).map(|i| m[[i, i]]).sum::<C64>() / n as f64;
        let mut resid: f64 = 0.0;
        for ((r, col), z) in m.indexed_iter() {
            let e = if r == col { expected } else { 0.0 };
            resid = resid.max((z - e).norm());
        }
        pairs.push(LadderPair { name, expected, measured: [mean.re, mean.im], residual: resid });
    };
    for a in 0..2 {
        for b in 0..2 {
            let expected = if a == b { target } else { 0.0 };
            measure(format!("[J{},J{}†]", a + 1, b + 1), j[a].commutator(&jd[b]).restrict(&idx), expected);
        }
    }
    measure("[J1,J2]".to_string(), j1.commutator(&j2).restrict(&idx), 0.0);
    measure("[J1†,J2†]".to_string(), jd[0].commutator(&jd[1]).restrict(&idx), 0.0);

    let inv = build_invariant(ops, &v);
    let mut diff = inv.entries.clone() - &j1.entries - &j2.entries;
    for i in 0..ops.dim() {
        diff[[i, i]] -= v.alpha;
    }
    let decomposition_residual = restrict(&diff, &idx).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let passed = pairs.iter().all(|p| p.residual <= tol) && decomposition_residual <= tol;
    LadderReport { time: t, normalization, pairs, decomposition_residual, tol, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::{closed_form_coeffs, closed_form_coeffs_with, AlphaForm, ClosedFormOptions};

    fn r0() -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, 0.05, 0.1, 0.0, 0.5).unwrap()
    }

    fn max_dev_from_scaled_identity(m: &Array2<C64>, s: C64) -> f64 {
        m.indexed_iter()
            .map(|((i, j), z)| (z - if i == j { s } else { ZERO }).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_small_cutoff() {
        assert!(matches!(build_canonical_ops(7, 1.0, 1.0), Err(Error::Truncation(_))));
    }

    #[test]
    fn canonical_commutators_on_interior() {
        let ops = build_canonical_ops(8, 1.0, 1.0).unwrap();
        let idx = ops.interior_indices();
        assert_eq!(idx.len(), 16);
        let c = ops.x.commutator(&ops.px).restrict(&idx);
        assert!(max_dev_from_scaled_identity(&c, C64::new(0.0, 1.0)) < 1e-12);
        let xy = ops.x.commutator(&ops.y);
        assert!(xy.entries.iter().all(|z| *z == ZERO));
        let pp = ops.px.commutator(&ops.py);
        assert!(pp.entries.iter().all(|z| *z == ZERO));
        // the boundary is where truncation shows up
        let full = ops.x.commutator(&ops.px);
        assert!(max_dev_from_scaled_identity(&full.entries, C64::new(0.0, 1.0)) > 1.0);
    }

    #[test]
    fn trace_of_x_vanishes() {
        let ops = build_canonical_ops(16, 1.0, 1.0).unwrap();
        let tr: C64 = (0..ops.dim()).map(|i| ops.x.entries[[i, i]]).sum();
        assert_eq!(tr, ZERO);
    }

    #[test]
    fn commutative_limit_hamiltonian() {
        let ops = build_canonical_ops(8, 1.0, 1.3).unwrap();
        let h = compose_hamiltonian_raw(&ops, 2.0, 1.5, 0.0, 0.0);
        let expect = (ops.px.matmul(&ops.px).entries + ops.py.matmul(&ops.py).entries).mapv(|z| z * 0.25)
            + ops.x.entries.mapv(|z| z * 3.0);
        let d = (&h.entries - &expect).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(d < 1e-13);
    }

    #[test]
    fn hamiltonian_is_hermitian_on_interior() {
        let p = r0();
        let ops = build_canonical_ops(16, 1.0, default_length_scale(&p)).unwrap();
        let h = compose_hamiltonian(&ops, &p);
        assert!(hermiticity_residual(&ops, &h) < 1e-12);
    }

    #[test]
    fn rotation_symmetry_without_gravity() {
        let ops = build_canonical_ops(16, 1.0, 1.0).unwrap();
        let h = compose_hamiltonian_raw(&ops, 1.0, 0.0, 0.0, 0.1);
        let lz = OperatorMatrix::new(
            ops.y.matmul(&ops.px).entries - ops.x.matmul(&ops.py).entries,
            "L",
        );
        let c = h.commutator(&lz).restrict(&ops.interior_indices());
        assert!(frobenius(&c) < 1e-12, "{}", frobenius(&c));
    }

    #[test]
    fn quasi_algebra_regime() {
        let p = r0();
        let ops = build_canonical_ops(16, 1.0, default_length_scale(&p)).unwrap();
        let rep = verify_quasi_algebra(&ops, &p, 1e-8);
        assert!(rep.closed(), "{:?}", rep.closure_residuals);
        assert!(rep.relation_matches_paper("[H_c,x]"));
        assert!(rep.relation_matches_paper("[H_c,y]"));
        assert!(rep.relation_matches_paper("[H_c,py]"));
        assert!(!rep.relation_matches_paper("[H_c,px]"));
        let c = rep.oracle_coefficients("[H_c,px]");
        assert!((c[3] - C64::new(0.0, -0.05)).norm() < 1e-10);
        assert!(c[2].norm() < 1e-10);
        let y1 = rep.entry("[H_c,y]", "1").unwrap();
        assert!((y1.oracle_coefficient[1] - 0.025).abs() < 1e-10);
    }

    #[test]
    fn build_invariant_recovers_basis() {
        let ops = build_canonical_ops(8, 1.0, 1.0).unwrap();
        assert!(build_invariant(&ops, &Coeffs::zero()).entries.iter().all(|z| *z == ZERO));
        let only_a = Coeffs { a: C64::new(1.0, 0.0), ..Coeffs::zero() };
        assert_eq!(build_invariant(&ops, &only_a).entries, ops.px.entries);
        let p = r0();
        let inv = build_invariant(&ops, &closed_form_coeffs(&p).at(0.0));
        assert!(frobenius(&inv.entries).is_finite());
        let herm = frobenius(&(&inv.entries - &inv.adjoint().entries));
        assert!(herm > 1e-3);
    }

    #[test]
    fn invariance_residual_closed_form_and_broken_alpha() {
        let p = r0();
        let ops = build_canonical_ops(16, 1.0, default_length_scale(&p)).unwrap();
        let h = compose_hamiltonian(&ops, &p);
        let chk = InvarianceChecker::new(&ops, &h, p.omega());
        let dt = chk.max_dt();
        let cf = closed_form_coeffs(&p);
        for k in 0..10 {
            let t = k as f64 * p.period() / 10.0;
            assert!(chk.residual(&cf, t, dt).unwrap().relative < 1e-6);
        }
        let no_alpha = closed_form_coeffs_with(&p, ClosedFormOptions { alpha: AlphaForm::Zero, ..Default::default() });
        let r = chk.residual(&no_alpha, 0.0, dt).unwrap();
        let v = no_alpha.at(0.0);
        let expected = -(p.m * p.g * v.a + p.m * p.g * p.theta / (2.0 * p.hbar) * v.d);
        assert!((r.channels[4] - expected).norm() < 1e-6 * expected.norm());
        assert!(r.relative > 1e-3);
        assert!(chk.residual(&cf, 0.0, 2.0 * dt).is_err());
    }

    #[test]
    fn gravity_only_touches_identity_channel() {
        let p = r0();
        let ops = build_canonical_ops(16, 1.0, default_length_scale(&p)).unwrap();
        let cf = closed_form_coeffs(&p);
        let with_g = InvarianceChecker::new(&ops, &compose_hamiltonian(&ops, &p), p.omega());
        let without = InvarianceChecker::new(&ops, &compose_hamiltonian_raw(&ops, p.m, 0.0, 0.0, p.eta), p.omega());
        let dt = with_g.max_dt();
        let a = with_g.residual(&cf, 1.0, dt).unwrap();
        let b = without.residual(&cf, 1.0, dt).unwrap();
        for k in 0..4 {
            assert!((a.channels[k] - b.channels[k]).norm() < 1e-9);
        }
        let alpha_dot = (cf.at(1.0 + dt).alpha - cf.at(1.0 - dt).alpha) / (2.0 * dt);
        assert!((b.channels[4] - alpha_dot).norm() < 1e-6 * alpha_dot.norm());
    }

    #[test]
    fn ladder_algebra() {
        let p = r0();
        let ops = build_canonical_ops(16, 1.0, default_length_scale(&p)).unwrap();
        let cf = closed_form_coeffs(&p);
        let rep = ladder_check(&ops, &cf, &p, 0.0, 1e-10);
        assert!(rep.passed, "{rep:?}");
        assert!((rep.normalization - 1.0).abs() < 1e-12);
        let later = ladder_check(&ops, &cf, &p, std::f64::consts::PI / p.omega(), 1e-10);
        for (a, b) in rep.pairs.iter().zip(&later.pairs) {
            assert!((a.measured[0] - b.measured[0]).abs() < 1e-10);
        }
        let doubled = closed_form_coeffs_with(&p, ClosedFormOptions { b1: Some(cf.b1 * 2.0), ..Default::default() });
        let rep2 = ladder_check(&ops, &doubled, &p, 0.0, 1e-10);
        assert!((rep2.pair("[J1,J1†]").unwrap().measured[0] - 4.0).abs() < 1e-10);
    }
}
