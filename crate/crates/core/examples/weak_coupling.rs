//! First-order expansion of the polarization matrix and of the enthalpy
//! derivative in the amplitude of the piezoelectric coupling.

use piezotopo::commands::weak_coupling;
use piezotopo::config::RunConfig;
use piezotopo::mesh::MeshParams;
use piezotopo::voigt::Mat9;

fn main() -> Result<(), piezotopo::Error> {
    let cfg = RunConfig { mesh: MeshParams::with_panel(8), h: vec![0.1], ..RunConfig::default() };
    let r = weak_coupling(&cfg)?;
    let m1 = Mat9::from_fn(|i, j| r.m1[i][j]);
    println!("M1 =\n{m1:.3}");
    println!("diagonal blocks of M1 relative to M1: {:.2e}", r.m1_diagonal_defect);
    println!("M1^ME + (M1^EM)^T relative to M1: {:.2e}", r.m1_antisymmetry_defect);
    println!("remainder ratio {:.3} (quadratic: {:.1})", r.residual_ratio, r.expected_ratio);
    for row in &r.rows {
        println!("t = {:.3}: T_weak = {:.6}  T_full = {:.6}  |diff| = {:.2e}", row.amplitude, row.td_weak.value, row.td_full, row.difference);
    }
    Ok(())
}
