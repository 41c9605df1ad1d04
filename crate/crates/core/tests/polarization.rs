use piezotopo::material::Preset;
use piezotopo::mesh::{MeshParams, VoidShape};
use piezotopo::polarization::{polarization_matrix, symmetry_defect};
use piezotopo::topo::td_enthalpy;
use piezotopo::voigt::{split_blocks, StrainColumn};
use std::f64::consts::PI;

const RADII: [f64; 3] = [12.0, 18.0, 24.0];

#[test]
fn dipole_moment_of_the_electric_block_matches_the_energy_formula() {
    // the reciprocity pairing with linear potentials is the dipole moment of
    // the far field; for an insulating sphere both should give 2π
    let pol = polarization_matrix(&Preset::IsoDecoupled.tensor(), &VoidShape::Sphere, &RADII, &MeshParams::with_panel(12)).unwrap();
    let energy = split_blocks(&pol.modified).ee;
    let dipole = split_blocks(&pol.reciprocity).ee;
    let rel = (energy - dipole).norm() / energy.norm();
    assert!(rel < 0.02, "energy and dipole routes differ by {rel}");
    for i in 0..3 {
        assert!((dipole[(i, i)] / (2.0 * PI) - 1.0).abs() < 0.06);
    }
    // symmetric by construction, up to round-off
    assert!(symmetry_defect(&pol.modified) < 1e-14);
}

#[test]
fn homogeneity_and_decoupled_structure() {
    let params = MeshParams::with_panel(4);
    let m = Preset::IsoDecoupled.tensor();
    let one = polarization_matrix(&m, &VoidShape::Sphere, &[6.0, 8.0, 10.0], &params).unwrap();
    let three = polarization_matrix(&m, &VoidShape::Ellipsoid { a: 3.0, b: 3.0, c: 3.0 }, &[18.0, 24.0, 30.0], &params).unwrap();
    assert!((three.matrix - one.matrix * 27.0).norm() <= 1e-8 * three.matrix.norm());
    let b = split_blocks(&one.matrix);
    assert_eq!(b.me.amax(), 0.0);
    assert_eq!(b.em.amax(), 0.0);
    assert_eq!(one.inertia(), (6, 3));
}

#[test]
fn electric_void_raises_the_enthalpy() {
    // removing a dielectric removes negative electric enthalpy
    let pol = polarization_matrix(&Preset::IsoDecoupled.tensor(), &VoidShape::Sphere, &[6.0, 8.0, 10.0], &MeshParams::with_panel(4)).unwrap();
    let e = StrainColumn::from([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, -0.2, 1.0]);
    assert!(td_enthalpy(&e, &pol.modified) > 0.0);
    let m = StrainColumn::from([1.0, 0.0, -0.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(td_enthalpy(&m, &pol.modified) < 0.0);
}

#[test]
fn ellipsoid_is_anisotropic_along_its_axes() {
    let pol = polarization_matrix(
        &Preset::IsoDecoupled.tensor(),
        &VoidShape::Ellipsoid { a: 1.0, b: 1.0, c: 0.5 },
        &[6.0, 8.0, 10.0],
        &MeshParams::with_panel(4),
    )
    .unwrap();
    let ee = split_blocks(&pol.modified).ee;
    // a flat void obstructs the field across it more than along it
    assert!(ee[(2, 2)] > ee[(0, 0)]);
    assert!((ee[(0, 0)] - ee[(1, 1)]).abs() < 1e-2 * ee[(0, 0)]);
}
