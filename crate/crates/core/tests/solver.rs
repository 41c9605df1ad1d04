use nalgebra::{SVector, Vector4};
use piezotopo::fem::{assemble_load, assemble_matrix, Constraints, FactoredSystem};
use piezotopo::interior::{solve_intact, solve_perforated};
use piezotopo::load::LoadSet;
use piezotopo::manufactured::{h1_seminorm_error, nodal_error, solve_dirichlet, Exact};
use piezotopo::material::Preset;
use piezotopo::mesh::{mesh_cube, mesh_cube_with_void, BoundaryTag, MeshParams, Point, VoidShape};
use piezotopo::voigt::{linear_field, rigid_matrix};
use std::sync::Arc;

#[test]
fn smooth_solution_converges_at_first_order_in_h1() {
    let material = Preset::SyntheticCoupled.tensor();
    let u: Exact = Arc::new(|x: &Point| {
        Vector4::new((x[0] + 0.3 * x[1]).sin(), (2.0 * x[2]).cos() * x[0], 0.2 * (x[0] * x[1] + x[2]).exp(), (1.5 * x[1] - x[2]).sin())
    });
    let errors: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| {
            let mesh = mesh_cube(n).unwrap();
            let uh = solve_dirichlet(&mesh, &material, u.clone()).unwrap();
            h1_seminorm_error(&mesh, &uh, u.as_ref())
        })
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 0.9, "rate {rate}, errors {errors:?}");
    }
}

#[test]
fn affine_manufactured_solution_is_exact() {
    let a = SVector::<f64, 7>::from([0.1, -0.2, 0.3, 0.05, -0.4, 0.2, 0.7]);
    let c = SVector::<f64, 9>::from([0.3, -0.1, 0.2, 0.4, -0.5, 0.1, 1.0, -0.3, 0.6]);
    let u: Exact = Arc::new(move |x: &Point| rigid_matrix(x) * a + linear_field(x) * c);
    for preset in [Preset::IsoDecoupled, Preset::SyntheticCoupled] {
        let mesh = mesh_cube(3).unwrap();
        let uh = solve_dirichlet(&mesh, &preset.tensor(), u.clone()).unwrap();
        assert!(nodal_error(&mesh, &uh, u.as_ref()) <= 1e-9);
    }
}

#[test]
fn solution_is_linear_in_the_load() {
    let mesh = mesh_cube(3).unwrap();
    let m = Preset::SyntheticCoupled.tensor();
    let l = LoadSet::default_test();
    let a = solve_intact(&mesh, &m, &l).unwrap();
    let b = solve_intact(&mesh, &m, &LoadSet::combination(&[(2.0, &l)])).unwrap();
    let mut d = b.field.clone();
    d.add_scaled(-2.0, &a.field);
    assert!(d.max_abs() <= 1e-10 * a.field.max_abs());
    assert!((b.enthalpy - 4.0 * a.enthalpy).abs() <= 1e-9 * a.enthalpy.abs());
    let z = solve_intact(&mesh, &m, &LoadSet::default()).unwrap();
    assert_eq!(z.field.max_abs(), 0.0);
}

#[test]
fn residual_is_small_and_solves_are_repeatable() {
    let params = MeshParams::with_panel(4);
    let mesh = mesh_cube_with_void(&params, &VoidShape::Sphere, 0.15).unwrap();
    let m = Preset::SyntheticCoupled.tensor();
    let k = assemble_matrix(&mesh, &m.full());
    let b = assemble_load(&mesh, &LoadSet::default_test());
    let cons = Constraints::homogeneous(&mesh, BoundaryTag::Clamped);
    let sys = FactoredSystem::new(&k, &cons).unwrap();
    let u = sys.solve(&b).unwrap();
    let r = k.matvec(&u.0);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..b.len() {
        if !sys.is_fixed(i) {
            num += (r[i] - b[i]).powi(2);
            den += b[i].powi(2);
        }
    }
    assert!((num / den).sqrt() <= 1e-10);
    let again = solve_perforated(&mesh, &m, &LoadSet::default_test()).unwrap();
    assert_eq!(again.field, u);
}
