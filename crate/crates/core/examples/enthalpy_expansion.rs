//! Enthalpy, energy and functional increments of a unit cube perforated by
//! a small spherical void, against the h³ predictions.

use piezotopo::commands::{converge, fit_slope};
use piezotopo::config::RunConfig;
use piezotopo::mesh::MeshParams;

fn main() -> Result<(), piezotopo::Error> {
    let cfg = RunConfig {
        mesh: MeshParams::with_panel(8),
        h: vec![0.16, 0.12, 0.08],
        ..RunConfig::default()
    };
    let report = converge(&cfg)?;
    println!("{:>6} {:>12} {:>12} {:>8} {:>12} {:>12} {:>8}", "h", "dE/h^3", "T_E", "ratio", "dJ/h^3", "T_J", "ratio");
    for r in &report.rows {
        let h3 = r.h.powi(3);
        println!(
            "{:6.3} {:12.5} {:12.5} {:8.4} {:12.5} {:12.5} {:8.4}",
            r.h,
            r.delta_enthalpy / h3,
            r.td_enthalpy.value,
            r.ratio_enthalpy,
            r.delta_functional / h3,
            r.td_general.value,
            r.ratio_functional
        );
    }
    let hs: Vec<f64> = report.rows.iter().map(|r| r.h).collect();
    let de: Vec<f64> = report.rows.iter().map(|r| r.delta_enthalpy).collect();
    println!("slope of dE against h: {:.3}", fit_slope(&hs, &de).unwrap_or(f64::NAN));
    Ok(())
}
