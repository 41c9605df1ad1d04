//! Two load combinations with the same strain at the void: the enthalpy
//! derivatives agree, the energy increments do not.

use piezotopo::commands::energy_nonlocality;
use piezotopo::config::RunConfig;
use piezotopo::mesh::MeshParams;

fn main() -> Result<(), piezotopo::Error> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = RunConfig { mesh: MeshParams::with_panel(8), h: vec![0.1], seed, ..RunConfig::default() };
    let report = energy_nonlocality(&cfg)?;
    for run in [&report.coupled, &report.control] {
        println!("{}:", run.material);
        for (i, s) in run.sets.iter().enumerate() {
            println!(
                "  set {}: T_E = {:.5}  T_U = {:.5}  dU/h^3 = {:.5}  dE/h^3 = {:.5}",
                i + 1,
                s.td_enthalpy,
                s.td_energy,
                s.delta_energy,
                s.delta_enthalpy
            );
        }
        println!(
            "  strain mismatch {:.1e}, energy spread {:.4} (measured {:.4}), enthalpy spread {:.1e}",
            run.matching_defect, run.energy_spread, run.measured_energy_spread, run.enthalpy_spread
        );
    }
    Ok(())
}
