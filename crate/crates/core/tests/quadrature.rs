use ncgw_core::observables::{moment_expectations, oracle_expectations_with, ExpectationReport};
use ncgw_core::params::PhysicalParams;
use ncgw_core::states::{packet_grid, psi_packet, PacketMode};

fn on_grid(n: usize, p: &PhysicalParams) -> ExpectationReport {
    let gs = packet_grid(n, 12.0, 0.0, p, PacketMode::LambdaQuadrature).unwrap();
    oracle_expectations_with(&psi_packet(gs, 0.0, p, PacketMode::LambdaQuadrature).unwrap(), p).unwrap()
}

/// Grid moments of Ψ at t = 0 are converged under 512² → 1024² and agree
/// with the moments read off the Gaussian exponent.
#[test]
fn packet_moments_converge_under_grid_doubling() {
    let p = PhysicalParams::regime_r0();
    let (a, b) = (on_grid(512, &p), on_grid(1024, &p));
    let exact = moment_expectations(0.0, &p, PacketMode::LambdaQuadrature).unwrap();
    for name in ["x", "y", "px", "py", "x2", "y2", "px2", "py2", "xy", "var_x", "var_px", "product"] {
        let (u, v, w) = (a.get(name).unwrap(), b.get(name).unwrap(), exact.get(name).unwrap());
        let scale = v.norm().max(1e-300);
        assert!((u - v).norm() < 1e-8 * scale, "{name}: {u} vs {v}");
        assert!((v - w).norm() < 1e-8 * scale, "{name}: grid {v} vs exponent {w}");
    }
    assert!(b.product.re > 0.5 * p.hbar);
}
