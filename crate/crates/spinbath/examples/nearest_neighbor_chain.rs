//! The nearest-neighbour ring with J > 0: a single surviving channel
//! class, blocked zero-energy moves, detailed balance, and the side-by-side
//! comparison with Glauber rates.
//!
//!     cargo run --example nearest_neighbor_chain

use spinbath::bath::{BathModel, SpectralDensity};
use spinbath::classical::{detailed_balance_check, glauber_comparison, nearest_neighbor_preset};
use spinbath::lattice::SignClass;

fn main() -> spinbath::Result<()> {
    let bath = BathModel::new(1.0, 0.0, SpectralDensity::Ohmic { eta: 1.0, cutoff: 2.0 })?;
    let (graph, bundle, model) = nearest_neighbor_preset(4, 1.0, &bath)?;

    println!("active channels (sign class positive):");
    for &idx in &bundle.positive_channels() {
        let ch = &bundle.entries()[idx].channel;
        println!(
            "  site {} neighbourhood {} energy {} (gamma- = {:.4}, gamma+ = {:.4})",
            ch.site,
            ch.neighborhood,
            ch.energy,
            bundle.entries()[idx].susc.gamma_minus(),
            bundle.entries()[idx].susc.gamma_plus(),
        );
    }
    let classes = bundle.energy_classes();
    let active: Vec<&(f64, Vec<usize>)> = classes.iter().filter(|(e, _)| *e > 0.0).collect();
    println!(
        "energy classes: {} total, {} active ({} channels at E = {})",
        classes.len(),
        active.len(),
        active[0].1.len(),
        active[0].0
    );
    let negative = bundle
        .entries()
        .iter()
        .filter(|e| e.channel.sign == SignClass::Negative)
        .count();
    println!("negative channels kept for their virtual dressing: {negative}");

    let balance = detailed_balance_check(&model, &graph, bath.beta)?;
    println!(
        "\ndetailed balance at mu = 0: max violation {:.2e} over {} pairs ({} blocked)",
        balance.max_violation, balance.unblocked_pairs, balance.blocked_pairs
    );

    let report = glauber_comparison(&model, bath.beta, 1.0)?;
    println!("\nlocal move table (centre flips):");
    println!(
        "{:>7} {:>5} {:>6} {:>7} {:>16} {:>14}",
        "centre", "left", "right", "E", "stochastic rate", "Glauber rate"
    );
    for row in &report.rows {
        println!(
            "{:>7} {:>5} {:>6} {:>7} {:>16.6} {:>14.6}",
            row.center, row.left, row.right, row.energy, row.stochastic_rate, row.glauber_rate
        );
    }
    println!(
        "\nratio structure: stochastic balances exp(beta E) to {:.2e}; Glauber balances exp(2 beta E) to {:.2e}",
        report.stochastic_ratio_violation, report.glauber_ratio_violation
    );
    println!(
        "blocked move classes: {} (Glauber attempts them, this chain cannot)",
        report.blocked_classes
    );
    Ok(())
}
