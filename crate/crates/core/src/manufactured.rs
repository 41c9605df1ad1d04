//! Manufactured solutions: volume loads obtained by applying the operator
//! to a given field, and error norms against it.

use crate::error::Error;
use crate::fem::{assemble_matrix, assemble_volume_load, cell_geometry, tet_quadrature, Constraints, FactoredSystem, StateField};
use crate::load::VectorField;
use crate::material::MaterialTensor;
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::voigt::{strain_from_gradient, strain_operator, Mat9};
use nalgebra::{SMatrix, Vector3, Vector4};
use rayon::prelude::*;
use std::sync::Arc;

/// Exact field, shared between the load and the error norms.
pub type Exact = Arc<dyn Fn(&Point) -> Vector4<f64> + Send + Sync>;

const STEP: f64 = 1e-4;

/// Gradient of `u` by central differences.
pub fn gradient(u: &(dyn Fn(&Point) -> Vector4<f64> + Sync), x: &Point) -> SMatrix<f64, 4, 3> {
    let mut g = SMatrix::<f64, 4, 3>::zeros();
    for k in 0..3 {
        let e = Vector3::ith(k, STEP);
        g.set_column(k, &((u(&(x + e)) - u(&(x - e))) / (2.0 * STEP)));
    }
    g
}

/// `f = D(-∇)ᵀ A D(∇) u`, with the derivatives of the stress taken by
/// central differences. Exact up to round-off for quadratic `u`.
pub fn volume_load(material: &MaterialTensor, u: Exact) -> VectorField {
    let a: Mat9 = material.full();
    VectorField::new(move |x| {
        let stress = |y: &Point| a * strain_from_gradient(&gradient(u.as_ref(), y)).0;
        let mut f = Vector4::zeros();
        for k in 0..3 {
            let e = Vector3::ith(k, STEP);
            let ds = (stress(&(x + e)) - stress(&(x - e))) / (2.0 * STEP);
            f -= strain_operator(&Vector3::ith(k, 1.0)).transpose() * ds;
        }
        f
    })
}

/// Solve with the manufactured load and Dirichlet data of `u` on the
/// whole boundary.
pub fn solve_dirichlet(mesh: &Mesh, material: &MaterialTensor, u: Exact) -> Result<StateField, Error> {
    let matrix = assemble_matrix(mesh, &material.full());
    let rhs = assemble_volume_load(mesh, &volume_load(material, u.clone()), None);
    let constraints = Constraints::from_function(mesh, &[BoundaryTag::Clamped, BoundaryTag::Loaded], |x| u(x));
    FactoredSystem::new(&matrix, &constraints)?.solve(&rhs)
}

/// `|u_h - u|` in the H¹ seminorm, all four components.
pub fn h1_seminorm_error(mesh: &Mesh, uh: &StateField, u: &(dyn Fn(&Point) -> Vector4<f64> + Sync)) -> f64 {
    let parts: Vec<f64> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let g = cell_geometry(mesh, c);
            let t = mesh.cells[c];
            let p = mesh.cell_points(c);
            let mut gh = SMatrix::<f64, 4, 3>::zeros();
            for k in 0..4 {
                gh += uh.node(t[k]).0 * g.grads[k].transpose();
            }
            let vol = mesh.cell_volume(c);
            tet_quadrature()
                .iter()
                .map(|(b, w)| {
                    let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2] + p[3] * b[3];
                    w * vol * (gh - gradient(u, &x)).norm_squared()
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// Largest nodal error.
pub fn nodal_error(mesh: &Mesh, uh: &StateField, u: &dyn Fn(&Point) -> Vector4<f64>) -> f64 {
    mesh.nodes
        .iter()
        .enumerate()
        .map(|(n, x)| (uh.node(n).0 - u(x)).amax())
        .fold(0.0, f64::max)
}
