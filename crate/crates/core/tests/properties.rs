use ncgw_core::invariant::{closed_form_coeffs, ode_rhs};
use ncgw_core::observables::moment_expectations;
use ncgw_core::opalg::{build_canonical_ops, OperatorMatrix};
use ncgw_core::params::{bopp_map, induced_commutators, PhysicalParams};
use ncgw_core::states::PacketMode;
use ncgw_core::C64;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PhysicalParams> {
    (0.5f64..2.0, 0.2f64..3.0, 0.5f64..2.0, 0.001f64..0.3, 0.02f64..0.5).prop_map(|(m, g, hbar, theta, eta)| {
        let omega = eta / (m * hbar);
        PhysicalParams { m, g, hbar, theta, eta, tau: 0.3 / omega, kappa: hbar }
    })
}

fn combo(terms: &[(f64, &OperatorMatrix)]) -> OperatorMatrix {
    let mut out = terms[0].1.scaled(C64::from(terms[0].0));
    for (c, op) in &terms[1..] {
        out.entries = &out.entries + &op.scaled(C64::from(*c)).entries;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// The shifted coordinates built from oscillator matrices reproduce the
    /// noncommutative table on the block unaffected by truncation.
    #[test]
    fn bopp_shift_reproduces_noncommutative_table(p in params()) {
        let (th, et, hb) = (p.theta, p.eta, p.hbar);
        let ops = build_canonical_ops(16, hb, 1.0).unwrap();
        let xs = combo(&[(1.0, &ops.x), (-th / (2.0 * hb), &ops.py)]);
        let ys = combo(&[(1.0, &ops.y), (th / (2.0 * hb), &ops.px)]);
        let pxs = combo(&[(1.0, &ops.px), (et / (2.0 * hb), &ops.y)]);
        let pys = combo(&[(1.0, &ops.py), (-et / (2.0 * hb), &ops.x)]);
        let shifted = [&xs, &ys, &pxs, &pys];
        let hb_eff = hb * (1.0 + th * et / (4.0 * hb * hb));
        let mut expected = [[0.0; 4]; 4];
        expected[0][1] = th;
        expected[2][3] = et;
        expected[0][2] = hb_eff;
        expected[1][3] = hb_eff;
        for i in 0..4 {
            for j in 0..4 {
                if j < i {
                    expected[i][j] = -expected[j][i];
                }
            }
        }
        let idx = ops.interior_indices();
        let table = induced_commutators(&bopp_map(&p).unwrap(), hb);
        for i in 0..4 {
            for j in 0..4 {
                let want = C64::new(0.0, expected[i][j]);
                let block = shifted[i].commutator(shifted[j]).restrict(&idx);
                let mut dev: f64 = 0.0;
                for ((r, c), z) in block.indexed_iter() {
                    let target = if r == c { want } else { C64::new(0.0, 0.0) };
                    dev = dev.max((z - target).norm());
                }
                prop_assert!(dev <= 1e-12 * hb_eff, "fock [{i},{j}] deviates by {dev:.3e}");
                let got = table.values[i][j];
                prop_assert!((got - want).norm() <= 1e-12 * hb_eff, "table [{i},{j}] = {got} vs {want}");
            }
        }
    }

    /// The closed-form coefficients satisfy the coupled linear system, checked
    /// against a central difference.
    #[test]
    fn closed_form_solves_coefficient_system(p in params(), frac in 0.0f64..1.0) {
        let c = closed_form_coeffs(&p);
        let t = frac * p.period();
        let h = 1e-4 / p.omega();
        let fd = (c.at(t + h) - c.at(t - h)) * (0.5 / h);
        let rhs = ode_rhs(&c.at(t), &p);
        for (a, b) in fd.to_array().iter().zip(rhs.to_array()) {
            prop_assert!((a - b).norm() <= 1e-6 * b.norm().max(1e-12), "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Squeezed-Gaussian variance product for Ψ: with s = ħ/2κ,
    /// 4σ_x²σ_p²/ħ² = [1 + s²sin²2ω(t+τ)/(1−s²)]/(1−s²).
    #[test]
    fn packet_product_follows_squeezing_law(kr in 0.6f64..3.0, wt in 0.2f64..1.3, frac in 0.0f64..1.0) {
        let base = PhysicalParams::regime_r0();
        let w = base.omega();
        let p = PhysicalParams { kappa: kr * base.hbar, tau: wt / w, ..base };
        let t = frac * p.period();
        let r = moment_expectations(t, &p, PacketMode::LambdaQuadrature).unwrap();
        let s2 = (p.hbar / (2.0 * p.kappa)).powi(2);
        let sn = (2.0 * w * (t + p.tau)).sin().powi(2);
        let f = (1.0 + s2 * sn / (1.0 - s2)) / (1.0 - s2);
        let want = 0.5 * p.hbar * f.sqrt();
        prop_assert!(r.product.im.abs() < 1e-12);
        prop_assert!((r.product.re - want).abs() < 1e-7 * want, "{} vs {want}", r.product.re);
        prop_assert!(r.product.re >= 0.5 * p.hbar);
    }
}
