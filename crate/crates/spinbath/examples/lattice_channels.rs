//! Build lattices and enumerate their flip channels.
//!
//!     cargo run --example lattice_channels

use spinbath::lattice::{CouplingGraph, SpinConfiguration, DEFAULT_NULL_TOL};

fn main() -> spinbath::Result<()> {
    let ring = CouplingGraph::ring(4, 1.0)?;
    println!("4-site ring, J = 1");
    println!("  site neighbourhood  energy  sign");
    for ch in ring.enumerate_channels(DEFAULT_NULL_TOL)? {
        println!(
            "  {:>4} {:>13} {:>7} {}",
            ch.site,
            ch.neighborhood.to_string(),
            ch.energy,
            ch.sign
        );
    }

    let up = SpinConfiguration::all_up(4);
    println!("\nH_S(all up) = {}", ring.system_energy(&up)?);
    let probs = ring.gibbs_distribution(1.0)?;
    let ground = probs[up.index()];
    println!("Gibbs weight of the all-up state at beta = 1: {ground:.6}");

    let grid = CouplingGraph::grid(&[2, 3], 0.5)?;
    println!(
        "\n2x3 grid, J = 0.5: {} sites, {} channels",
        grid.n_sites(),
        grid.enumerate_channels(DEFAULT_NULL_TOL)?.len()
    );
    for r in 0..grid.n_sites() {
        println!(
            "  site {r} at {:?}: {} coupled neighbours",
            grid.site(r),
            grid.neighbors(r).len()
        );
    }
    Ok(())
}
