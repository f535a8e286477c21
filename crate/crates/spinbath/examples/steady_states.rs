//! Stationary states: thermal populations of a driven two-level system
//! and the reducible sector structure of the blocked ring.
//!
//!     cargo run --example steady_states

use std::sync::Arc;

use num_complex::Complex64;
use spinbath::bath::{BathModel, SpectralDensity, Susceptibility};
use spinbath::dynamics::steady_state;
use spinbath::generator::{BundleEntry, GeneratorBundle};
use spinbath::lattice::{classify_channel, Channel, CouplingGraph, SpinConfiguration};
use spinbath::operator::LocalOperator;

fn main() -> spinbath::Result<()> {
    // a single spin with one synthetic emission/absorption channel
    let beta = 1.0;
    let e = 1.0f64;
    let n_occ = 1.0 / (beta * e).exp_m1();
    let entry = BundleEntry {
        channel: Channel {
            site: 0,
            neighborhood: SpinConfiguration::all_down(0),
            energy: e,
            sign: classify_channel(e, 1e-12),
        },
        f: LocalOperator::flip_raise(0).adjoint(),
        susc: Susceptibility {
            minus: Complex64::new(1.0 + n_occ, 0.0),
            plus: Complex64::new(n_occ, 0.0),
            energy: e,
        },
    };
    let bundle = GeneratorBundle::from_parts(1, vec![entry])?;
    let steady = steady_state(&bundle)?;
    let rho = steady.states[0].matrix();
    println!("two-level steady state at beta = {beta}:");
    println!("  p(down) = {:.6}  expected {:.6}", rho[(0, 0)].re, (1.0 + n_occ) / (1.0 + 2.0 * n_occ));
    println!("  p(up)   = {:.6}  expected {:.6}", rho[(1, 1)].re, n_occ / (1.0 + 2.0 * n_occ));
    println!("  p(up)/p(down) = {:.6}  vs exp(-beta E) = {:.6}", rho[(1, 1)].re / rho[(0, 0)].re, (-beta * e).exp());

    // the 3-ring splits into two ergodic sectors because mixed
    // neighbourhoods block every escape flip
    let graph = Arc::new(CouplingGraph::ring(3, 1.0)?);
    let bath = BathModel::new(1.0, 0.0, SpectralDensity::Ohmic { eta: 1.0, cutoff: 2.0 })?;
    let ring_bundle = GeneratorBundle::assemble(&graph, &bath)?;
    let steady = steady_state(&ring_bundle)?;
    println!("\n3-site ring: null space dimension {}, reducible: {}", steady.null_dim, steady.reducible);
    for (k, (state, residual)) in steady.states.iter().zip(&steady.residuals).enumerate() {
        let populations: Vec<String> = (0..8)
            .map(|i| format!("{:.4}", state.matrix()[(i, i)].re))
            .collect();
        println!("  state {k}: residual {residual:.2e}, populations [{}]", populations.join(", "));
    }
    Ok(())
}
