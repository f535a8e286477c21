//! Channel susceptibilities for different bath spectra: transition rates,
//! Lamb shifts, and the KMS ratio between absorption and emission.
//!
//!     cargo run --example channel_rates

use spinbath::bath::{ito_coefficients, BathModel, SpectralDensity};

fn print_table(label: &str, bath: &BathModel) -> spinbath::Result<()> {
    println!("{label} (beta = {}, mu = {})", bath.beta, bath.mu);
    println!("{:>8} {:>12} {:>12} {:>12} {:>12} {:>10}", "E", "gamma-", "gamma+", "Im-", "Im+", "KMS dev");
    for e in [-2.0, -0.5, 0.0, 0.5, 2.0, 4.0] {
        let s = bath.susceptibility(e)?;
        let (gm, gp) = ito_coefficients(&s);
        let kms = if gm > 0.0 {
            (gp / gm - (-bath.beta * (e - bath.mu)).exp()).abs()
        } else {
            0.0
        };
        println!(
            "{e:>8} {gm:>12.6} {gp:>12.6} {:>12.6} {:>12.6} {kms:>10.2e}",
            s.minus.im, s.plus.im
        );
    }
    println!();
    Ok(())
}

fn main() -> spinbath::Result<()> {
    // ohmic density: infrared-safe at mu = 0, every channel dressed
    let ohmic = BathModel::new(1.0, 0.0, SpectralDensity::Ohmic { eta: 1.0, cutoff: 2.0 })?;
    print_table("ohmic bath", &ohmic)?;

    // flat band with mu below the band edge
    let flat = BathModel::new(1.0, -0.5, SpectralDensity::Flat { height: 1.0, cutoff: 10.0 })?;
    print_table("flat bath", &flat)?;

    // a tabulated asymmetric density, gapped away from zero
    let table = BathModel::new(
        1.0,
        0.0,
        SpectralDensity::Table {
            points: vec![(0.5, 0.3), (1.0, 0.5), (2.0, 0.45), (4.0, 0.15), (6.0, 0.05)],
        },
    )?;
    print_table("tabulated bath", &table)?;

    // negative channels never dissipate but keep their virtual dressing
    let s = table.susceptibility(-2.0)?;
    println!(
        "negative channel E = -2: rates ({}, {}), Lamb shifts ({:.6}, {:.6})",
        s.gamma_minus(),
        s.gamma_plus(),
        s.minus.im,
        s.plus.im
    );
    Ok(())
}
