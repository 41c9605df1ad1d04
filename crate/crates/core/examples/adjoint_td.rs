//! Topological derivative of a least-squares functional through the
//! adjoint state, term by term.

use piezotopo::commands::converge_row;
use piezotopo::config::RunConfig;
use piezotopo::mesh::MeshParams;
use piezotopo::polarization::polarization_matrix;

fn main() -> Result<(), piezotopo::Error> {
    let cfg = RunConfig { mesh: MeshParams::with_panel(8), ..RunConfig::default() };
    let material = cfg.material();
    let pol = polarization_matrix(&material, &cfg.shape, &cfg.absolute_radii(), &cfg.mesh)?;
    let h = 0.08;
    let row = converge_row(&cfg, &material, &cfg.load_set(), &pol, h)?;
    for t in &row.td_general.terms {
        println!("{:>12}: {:10.5}", t.name, t.value);
    }
    println!("{:>12}: {:10.5}", "total", row.td_general.value);
    println!("(J(u_h) - J(u)) / h^3 = {:.5} at h = {h}", row.delta_functional / h.powi(3));
    Ok(())
}
