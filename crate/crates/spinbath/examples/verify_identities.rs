//! Run the full numerical identity suite on a 4-site ring and print the
//! records as JSON lines.
//!
//!     cargo run --example verify_identities

use std::sync::Arc;

use spinbath::bath::{BathModel, SpectralDensity};
use spinbath::lattice::CouplingGraph;
use spinbath::verify::run_suite;

fn main() -> spinbath::Result<()> {
    let graph = Arc::new(CouplingGraph::ring(4, 1.0)?);
    let bath = BathModel::new(1.0, 0.0, SpectralDensity::Ohmic { eta: 1.0, cutoff: 2.0 })?;
    let records = run_suite(&graph, &bath, 42)?;
    let mut failures = 0;
    for record in &records {
        println!("{}", serde_json::to_string(record).unwrap());
        if !record.pass {
            failures += 1;
        }
    }
    eprintln!("{} identities, {failures} failures", records.len());
    std::process::exit(i32::from(failures > 0));
}
