//! Drivers for the boundary value problem on the cube, with or without a
//! void, and the functionals evaluated on its solution.

use crate::error::Error;
use crate::fem::{
    assemble_load, assemble_matrix, eval_form, integrate, recover_affine, Cells, Constraints,
    CsrMatrix, FactoredSystem, StateField,
};
use crate::load::LoadSet;
use crate::material::MaterialTensor;
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::voigt::{StateColumn, StrainColumn};
use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

/// Integrand of a shape functional `∫ J(u(x)) dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `weight · |u - reference|²`.
    LeastSquares { weight: f64, reference: [f64; 4] },
    /// `weight · |u|²`.
    Quadratic { weight: f64 },
}

impl DensitySpec {
    fn parts(&self) -> (f64, Vector4<f64>) {
        match *self {
            DensitySpec::LeastSquares { weight, reference } => (weight, Vector4::from(reference)),
            DensitySpec::Quadratic { weight } => (weight, Vector4::zeros()),
        }
    }

    pub fn value(&self, u: &StateColumn) -> f64 {
        let (w, r) = self.parts();
        w * (u.0 - r).norm_squared()
    }

    /// Derivative with respect to the state.
    pub fn derivative(&self, u: &StateColumn) -> Vector4<f64> {
        let (w, r) = self.parts();
        (u.0 - r) * (2.0 * w)
    }
}

/// `∫ J(u)` over all cells of the mesh.
pub fn functional_j(mesh: &Mesh, u: &StateField, density: &DensitySpec) -> f64 {
    integrate(mesh, u, Cells::All, |_, s| density.value(s))
}

/// Solution of one boundary value problem and its functionals.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: StateField,
    /// Strain at the origin (intact domains only).
    pub eps0: Option<StrainColumn>,
    /// State at the origin (intact domains only).
    pub value0: Option<StateColumn>,
    /// `½ Q(u, u) - (f, u) - (g, u)`.
    pub energy: f64,
    /// `½ Q₋(u, u) - (f, u₋) - (g, u₋)`.
    pub enthalpy: f64,
    /// `(f, u) + (g, u)`.
    pub work: f64,
    /// `(f, u₋) + (g, u₋)`.
    pub flipped_work: f64,
}

/// Assembled problem on a cube mesh, clamped on the bottom face.
pub struct CubeProblem {
    pub matrix: CsrMatrix,
    pub load: Vec<f64>,
    pub constraints: Constraints,
}

impl CubeProblem {
    pub fn assemble(mesh: &Mesh, material: &MaterialTensor, loads: &LoadSet) -> Self {
        Self {
            matrix: assemble_matrix(mesh, &material.full()),
            load: assemble_load(mesh, loads),
            constraints: Constraints::homogeneous(mesh, BoundaryTag::Clamped),
        }
    }
}

fn finish(
    mesh: &Mesh,
    material: &MaterialTensor,
    load: &[f64],
    field: StateField,
    intact: bool,
) -> Result<SolveResult, Error> {
    let q = eval_form(mesh, &material.full(), &field, &field, Cells::All);
    let flipped = field.flip_electric();
    let q_minus = eval_form(mesh, &material.enthalpy(), &field, &field, Cells::All);
    let work = field.dot(load);
    let flipped_work = flipped.dot(load);
    let (value0, eps0) = if intact {
        let (v, e) = recover_affine(mesh, &field, &Point::zeros(), None)?;
        (Some(v), Some(e))
    } else {
        (None, None)
    };
    Ok(SolveResult {
        energy: 0.5 * q - work,
        enthalpy: 0.5 * q_minus - flipped_work,
        work,
        flipped_work,
        field,
        eps0,
        value0,
    })
}

fn check_clamped(mesh: &Mesh) -> Result<(), Error> {
    if mesh.tagged_area(BoundaryTag::Clamped) <= 0.0 {
        return Err(Error::Mesh("mesh has no clamped boundary".into()));
    }
    Ok(())
}

/// Solve on a mesh of the whole cube; the strain at the origin is
/// recovered from the cells around it.
pub fn solve_intact(mesh: &Mesh, material: &MaterialTensor, loads: &LoadSet) -> Result<SolveResult, Error> {
    material.validate()?;
    check_clamped(mesh)?;
    let p = CubeProblem::assemble(mesh, material, loads);
    let field = FactoredSystem::new(&p.matrix, &p.constraints)?.solve(&p.load)?;
    finish(mesh, material, &p.load, field, true)
}

/// Solve on a mesh with a traction-free, charge-free void.
pub fn solve_perforated(mesh: &Mesh, material: &MaterialTensor, loads: &LoadSet) -> Result<SolveResult, Error> {
    material.validate()?;
    check_clamped(mesh)?;
    if mesh.facets_tagged(BoundaryTag::VoidBoundary).next().is_none() {
        return Err(Error::Mesh("perforated solve needs a void boundary".into()));
    }
    let p = CubeProblem::assemble(mesh, material, loads);
    let field = FactoredSystem::new(&p.matrix, &p.constraints)?.solve(&p.load)?;
    finish(mesh, material, &p.load, field, false)
}

/// Solve several load sets with one factorization.
pub fn solve_many(
    mesh: &Mesh,
    material: &MaterialTensor,
    loads: &[LoadSet],
    intact: bool,
) -> Result<Vec<SolveResult>, Error> {
    material.validate()?;
    check_clamped(mesh)?;
    let matrix = assemble_matrix(mesh, &material.full());
    let constraints = Constraints::homogeneous(mesh, BoundaryTag::Clamped);
    let system = FactoredSystem::new(&matrix, &constraints)?;
    let rhs: Vec<Vec<f64>> = loads.iter().map(|l| assemble_load(mesh, l)).collect();
    let fields = system.solve_many(&rhs)?;
    fields
        .into_iter()
        .zip(&rhs)
        .map(|(f, b)| finish(mesh, material, b, f, intact))
        .collect()
}

/// Mechanical-only and electric-only parts of a load set.
pub fn split_loads(loads: &LoadSet) -> (LoadSet, LoadSet) {
    (loads.mechanical_part(), loads.electric_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::Preset;
    use crate::mesh::mesh_cube;

    #[test]
    fn energy_and_enthalpy_identities() {
        let mesh = mesh_cube(4).unwrap();
        let mat = Preset::SyntheticCoupled.tensor();
        let r = solve_intact(&mesh, &mat, &LoadSet::default_test()).unwrap();
        // stationarity: energy = -work / 2, enthalpy = -flipped work / 2
        assert!((r.energy + 0.5 * r.work).abs() < 1e-9 * r.work.abs());
        assert!((r.enthalpy + 0.5 * r.flipped_work).abs() < 1e-9 * r.flipped_work.abs());
    }

    #[test]
    fn least_squares_density_vanishes_at_reference() {
        let mesh = mesh_cube(2).unwrap();
        let d = DensitySpec::LeastSquares { weight: 1.0, reference: [0.1, 0.2, 0.3, 0.4] };
        let u = StateField::interpolate(&mesh, |_| Vector4::new(0.1, 0.2, 0.3, 0.4));
        assert!(functional_j(&mesh, &u, &d).abs() < 1e-15);
        assert!(d.derivative(&u.node(0)).norm() < 1e-15);
    }
}
