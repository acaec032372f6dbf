//! Physical parameters, derived constants and the Bopp-shift map between
//! noncommutative and canonical phase-space coordinates.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold above which ζ = θη/4ħ² is no longer considered small.
pub const ZETA_WARNING_THRESHOLD: f64 = 0.1;

/// Physical inputs in natural units.
///
/// `tau` is the phase parameter of the integration constant B₁
/// (B₁ = |B₁|·e^{iωτ}) and `kappa` the width of the Gaussian weight
/// μ(λ) = exp(−κλ²/2ħ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    pub m: f64,
    pub g: f64,
    pub hbar: f64,
    pub theta: f64,
    pub eta: f64,
    pub tau: f64,
    pub kappa: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::regime_r0()
    }
}

impl PhysicalParams {
    pub fn new(m: f64, g: f64, hbar: f64, theta: f64, eta: f64, tau: f64, kappa: f64) -> Result<Self> {
        let p = PhysicalParams { m, g, hbar, theta, eta, tau, kappa };
        p.validate()?;
        Ok(p)
    }

    /// The reference regime m = g = ħ = 1, θ = 0.05, η = 0.1 with ωτ = π/4
    /// and κ = ħ.
    pub fn regime_r0() -> Self {
        let omega = 0.1;
        PhysicalParams {
            m: 1.0,
            g: 1.0,
            hbar: 1.0,
            theta: 0.05,
            eta: 0.1,
            tau: std::f64::consts::FRAC_PI_4 / omega,
            kappa: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be finite, got {v}") })
            }
        }
        finite("m", self.m)?;
        finite("g", self.g)?;
        finite("hbar", self.hbar)?;
        finite("theta", self.theta)?;
        finite("eta", self.eta)?;
        finite("tau", self.tau)?;
        finite("kappa", self.kappa)?;
        if self.m <= 0.0 {
            return Err(Error::InvalidParameter { name: "m", reason: "mass must be positive".into() });
        }
        if self.hbar <= 0.0 {
            return Err(Error::InvalidParameter { name: "hbar", reason: "hbar must be positive".into() });
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParameter { name: "g", reason: "g must be non-negative".into() });
        }
        if self.theta < 0.0 {
            return Err(Error::InvalidParameter { name: "theta", reason: "theta must be non-negative".into() });
        }
        if self.eta <= 0.0 {
            return Err(Error::InvalidParameter { name: "eta", reason: "eta must be positive".into() });
        }
        if self.kappa < 0.5 * self.hbar {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: format!(
                    "kappa = {} violates the normalizability bound kappa >= hbar/2 = {}",
                    self.kappa,
                    0.5 * self.hbar
                ),
            });
        }
        Ok(())
    }

    /// Same parameters with a different κ, skipping the κ ≥ ħ/2 check.
    /// Only used to probe the normalizability boundary.
    pub fn with_kappa_unchecked(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn omega(&self) -> f64 {
        self.eta / (self.m * self.hbar)
    }

    pub fn zeta(&self) -> f64 {
        self.theta * self.eta / (4.0 * self.hbar * self.hbar)
    }

    /// |B₁| = √η/(mħ).
    pub fn b1_mod(&self) -> f64 {
        self.eta.sqrt() / (self.m * self.hbar)
    }

    /// B₁ = |B₁|·e^{iωτ}.
    pub fn b1(&self) -> C64 {
        C64::from_polar(self.b1_mod(), self.omega() * self.tau)
    }

    /// Guiding-centre drift speed along y, g(1 − ζ)/ω.
    pub fn drift_velocity(&self) -> f64 {
        self.g * (1.0 - self.zeta()) / self.omega()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub zeta: f64,
    pub hbar_eff: f64,
    pub omega: f64,
    /// ħ^θ_η = m²gθ/2η + m²gθ²/8ħ² − η/2mħ, evaluated as printed.
    pub hbar_theta_eta: f64,
    pub b1_mod: f64,
    /// Set when ζ ≥ [`ZETA_WARNING_THRESHOLD`].
    pub zeta_warning: bool,
}

pub fn derive_constants(p: &PhysicalParams) -> Result<DerivedConstants> {
    p.validate()?;
    let zeta = p.zeta();
    let hbar_theta_eta = p.m * p.m * p.g * p.theta / (2.0 * p.eta)
        + p.m * p.m * p.g * p.theta * p.theta / (8.0 * p.hbar * p.hbar)
        - p.eta / (2.0 * p.m * p.hbar);
    Ok(DerivedConstants {
        zeta,
        hbar_eff: (1.0 + zeta) * p.hbar,
        omega: p.omega(),
        hbar_theta_eta,
        b1_mod: p.b1_mod(),
        zeta_warning: zeta >= ZETA_WARNING_THRESHOLD,
    })
}

/// Linear map (x, y, p_x, p_y) → (x′, y′, p_x′, p_y′).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPhaseMap {
    pub entries: [[f64; 4]; 4],
}

impl LinearPhaseMap {
    /// Bopp shift for raw (θ, η, ħ); no parameter validation.
    pub fn bopp(theta: f64, eta: f64, hbar: f64) -> Self {
        let t = theta / (2.0 * hbar);
        let e = eta / (2.0 * hbar);
        LinearPhaseMap {
            entries: [
                [1.0, 0.0, 0.0, -t],
                [0.0, 1.0, t, 0.0],
                [0.0, e, 1.0, 0.0],
                [-e, 0.0, 0.0, 1.0],
            ],
        }
    }

    pub fn apply(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, row) in self.entries.iter().enumerate() {
            out[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Determinant by cofactor expansion.
    pub fn determinant(&self) -> f64 {
        fn det3(m: [[f64; 3]; 3]) -> f64 {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        let a = &self.entries;
        let mut det = 0.0;
        for col in 0..4 {
            let mut minor = [[0.0; 3]; 3];
            for r in 1..4 {
                let mut cc = 0;
                for c in 0..4 {
                    if c == col {
                        continue;
                    }
                    minor[r - 1][cc] = a[r][c];
                    cc += 1;
                }
            }
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * a[0][col] * det3(minor);
        }
        det
    }
}

pub fn bopp_map(p: &PhysicalParams) -> Result<LinearPhaseMap> {
    p.validate()?;
    Ok(LinearPhaseMap::bopp(p.theta, p.eta, p.hbar))
}

/// Coordinate labels in phase-space order.
pub const PHASE_LABELS: [&str; 4] = ["x", "y", "px", "py"];

/// Table of commutators [u_i, u_j] for the four phase-space coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorTable {
    pub values: [[C64; 4]; 4],
}

impl CommutatorTable {
    /// Canonical table: [x, p_x] = [y, p_y] = iħ, all others zero.
    pub fn canonical(hbar: f64) -> Self {
        let mut values = [[C64::new(0.0, 0.0); 4]; 4];
        values[0][2] = C64::new(0.0, hbar);
        values[2][0] = C64::new(0.0, -hbar);
        values[1][3] = C64::new(0.0, hbar);
        values[3][1] = C64::new(0.0, -hbar);
        CommutatorTable { values }
    }

    /// Noncommutative table: [x′, y′] = iθ, [p_x′, p_y′] = iη, [x_i′, p_j′] = iħ_eff δ_ij.
    pub fn noncommutative(theta: f64, eta: f64, hbar: f64) -> Self {
        let hbar_eff = (1.0 + theta * eta / (4.0 * hbar * hbar)) * hbar;
        let mut t = CommutatorTable::canonical(hbar_eff);
        t.values[0][1] = C64::new(0.0, theta);
        t.values[1][0] = C64::new(0.0, -theta);
        t.values[2][3] = C64::new(0.0, eta);
        t.values[3][2] = C64::new(0.0, -eta);
        t
    }

    /// Largest entrywise deviation from `other`, relative to the largest
    /// entry magnitude of `other`.
    pub fn max_relative_deviation(&self, other: &CommutatorTable) -> f64 {
        let mut scale: f64 = 0.0;
        let mut dev: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                scale = scale.max(other.values[i][j].norm());
                dev = dev.max((self.values[i][j] - other.values[i][j]).norm());
            }
        }
        if scale == 0.0 {
            dev
        } else {
            dev / scale
        }
    }
}

/// Commutators of the mapped coordinates, M Ω Mᵀ with Ω the canonical table.
pub fn induced_commutators(map: &LinearPhaseMap, hbar: f64) -> CommutatorTable {
    let omega = CommutatorTable::canonical(hbar).values;
    let m = &map.entries;
    let mut values = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..4 {
                for l in 0..4 {
                    acc += omega[k][l] * (m[i][k] * m[j][l]);
                }
            }
            values[i][j] = acc;
        }
    }
    CommutatorTable { values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r0() -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, 0.05, 0.1, 0.0, 0.5).unwrap()
    }

    #[test]
    fn rejects_zero_eta() {
        let err = PhysicalParams::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("eta must be positive"), "{err}");
    }

    #[test]
    fn rejects_small_kappa() {
        let err = PhysicalParams::new(1.0, 1.0, 1.0, 0.05, 0.1, 0.0, 0.4).unwrap_err();
        assert!(err.to_string().contains("kappa >= hbar/2"), "{err}");
    }

    #[test]
    fn derived_constants_regime() {
        let d = derive_constants(&r0()).unwrap();
        assert!((d.zeta - 0.00125).abs() < 1e-15);
        assert!((d.hbar_eff - 1.00125).abs() < 1e-15);
        assert!((d.omega - 0.1).abs() < 1e-15);
        assert!((d.b1_mod - 0.316_227_766_016_837_94).abs() < 1e-15);
        assert!(!d.zeta_warning);
    }

    #[test]
    fn hbar_eff_doubles_when_zeta_is_one() {
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, 2.0, 0.0, 0.5).unwrap();
        let d = derive_constants(&p).unwrap();
        assert_eq!(d.hbar_eff, 2.0);
        assert!(d.zeta_warning);
    }

    #[test]
    fn bopp_identity_in_commutative_limit() {
        let m = LinearPhaseMap::bopp(0.0, 0.0, 1.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.entries[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn bopp_entry_x_py() {
        let m = bopp_map(&r0()).unwrap();
        assert!((m.entries[0][3] + 0.025).abs() < 1e-16);
    }

    #[test]
    fn induced_table_entries() {
        let p = r0();
        let t = induced_commutators(&bopp_map(&p).unwrap(), p.hbar);
        assert!((t.values[0][1] - C64::new(0.0, 0.05)).norm() < 1e-15);
        assert!((t.values[2][3] - C64::new(0.0, 0.1)).norm() < 1e-15);
        assert!((t.values[0][2] - C64::new(0.0, 1.00125)).norm() < 1e-15);
        assert!(t.values[0][3].norm() < 1e-16);
    }
}
