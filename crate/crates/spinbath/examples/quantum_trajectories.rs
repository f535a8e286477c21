//! Monte Carlo wave-function unraveling against the master equation.
//!
//!     cargo run --example quantum_trajectories

use std::sync::Arc;

use spinbath::bath::{BathModel, SpectralDensity};
use spinbath::dynamics::{
    basis_vector, evolve_observables, observables, run_trajectories, DensityOperator,
    TrajectoryOptions,
};
use spinbath::generator::GeneratorBundle;
use spinbath::lattice::{CouplingGraph, SpinConfiguration};

fn main() -> spinbath::Result<()> {
    let graph = Arc::new(CouplingGraph::ring(3, 1.0)?);
    let bath = BathModel::new(1.0, 0.0, SpectralDensity::Ohmic { eta: 1.0, cutoff: 2.0 })?;
    let bundle = GeneratorBundle::assemble(&graph, &bath)?;
    let psi0 = basis_vector(3, &SpinConfiguration::all_up(3));
    let obs = observables(&graph, &["magnetization:0".into()])?;

    let opts = TrajectoryOptions {
        n_traj: 2000,
        seed: 7,
        t_final: 2.0,
        n_samples: 11,
    };
    let ensemble = run_trajectories(&bundle, &psi0, &opts, &obs)?;
    let rho0 = DensityOperator::from_pure(3, &psi0)?;
    let (_, master, _) = evolve_observables(&bundle, &rho0, 2.0, 1e-9, 11, &obs)?;

    println!("time,trajectories,stderr,master,deviation_in_se");
    let series = &ensemble.series[0];
    for (i, t) in ensemble.times.iter().enumerate() {
        let se = series.stderr[i];
        let dev = if se > 0.0 {
            (series.mean[i] - master[0][i]).abs() / se
        } else {
            0.0
        };
        println!("{t},{},{se},{},{dev:.2}", series.mean[i], master[0][i]);
    }
    println!(
        "# {} trajectories, {} jumps, rng {}",
        ensemble.n_traj, ensemble.total_jumps, ensemble.rng_id
    );
    Ok(())
}
