//! Polarization matrix of a spherical void in a decoupled isotropic
//! medium, compared with the closed form of its electric block.

use piezotopo::material::Preset;
use piezotopo::mesh::{MeshParams, VoidShape};
use piezotopo::polarization::polarization_matrix;
use piezotopo::voigt::split_blocks;
use std::f64::consts::PI;

fn main() -> Result<(), piezotopo::Error> {
    let panel = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let material = Preset::IsoDecoupled.tensor();
    let pol = polarization_matrix(&material, &VoidShape::Sphere, &[12.0, 18.0, 24.0], &MeshParams::with_panel(panel))?;

    // a unit sphere in a unit-permeability medium: 3/2 of its volume
    let oracle = 1.5 * 4.0 / 3.0 * PI;
    let b = split_blocks(&pol.modified);
    for i in 0..3 {
        let v = b.ee[(i, i)];
        println!("M=^EE[{i}{i}] = {v:.4}  (closed form {oracle:.4}, error {:.2}%)", 100.0 * (v / oracle - 1.0));
    }
    let (neg, pos) = pol.inertia();
    println!("inertia of M=: {neg} negative, {pos} positive");
    println!("asymmetry after extrapolation: {:.2e}", pol.reciprocity_symmetry_defect());
    println!("eigenvalues: {:.4?}", pol.modified_eigenvalues());
    for e in &pol.entries {
        println!("R = {:5.1}: {} dofs, trace M=^EE = {:.4}", e.radius, e.dofs, split_blocks(&e.modified).ee.trace());
    }
    Ok(())
}
