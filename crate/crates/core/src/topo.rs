//! Closed-form topological derivatives: enthalpy, energy increment, general
//! shape functionals through an adjoint state, and the weak-coupling form.

use crate::error::Error;
use crate::fem::{
    assemble_matrix, recover_affine, tet_quadrature, Constraints, CsrMatrix, FactoredSystem,
    StateField,
};
use crate::interior::DensitySpec;
use crate::material::MaterialTensor;
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::voigt::{split_blocks, Mat9, StateColumn, StrainColumn};
use rayon::prelude::*;
use serde::Serialize;

/// One named contribution to a topological derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdTerm {
    pub name: &'static str,
    pub value: f64,
}

/// Coefficient of `h³` in the expansion of a functional, with the terms it
/// is made of and the local data it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdResult {
    pub functional: &'static str,
    pub value: f64,
    pub terms: Vec<TdTerm>,
    pub ingredients: TdIngredients,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TdIngredients {
    pub eps0: Option<[f64; 9]>,
    pub matrix: Option<Vec<[f64; 9]>>,
    pub adjoint_strain0: Option<[f64; 9]>,
    pub adjoint_value0: Option<[f64; 4]>,
    pub state0: Option<[f64; 4]>,
    pub load0: Option<[f64; 4]>,
    pub density0: Option<f64>,
    pub void_volume: Option<f64>,
}

pub fn matrix_rows(m: &Mat9) -> Vec<[f64; 9]> {
    (0..9).map(|i| std::array::from_fn(|j| m[(i, j)])).collect()
}

fn strain_array(e: &StrainColumn) -> [f64; 9] {
    std::array::from_fn(|i| e.0[i])
}

fn state_array(u: &StateColumn) -> [f64; 4] {
    std::array::from_fn(|i| u.0[i])
}

impl TdResult {
    fn new(functional: &'static str, terms: Vec<TdTerm>, ingredients: TdIngredients) -> Self {
        Self { functional, value: terms.iter().map(|t| t.value).sum(), terms, ingredients }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// `½ εᵀ M₌ ε`: the enthalpy derivative for a void free of volume loads.
pub fn td_enthalpy(eps0: &StrainColumn, modified: &Mat9) -> f64 {
    0.5 * eps0.0.dot(&(modified * eps0.0))
}

/// Enthalpy derivative including the volume load removed with the void:
/// `½ εᵀ M₌ ε + |ω| f(0)ᵀ u₋(0)`.
pub fn td_enthalpy_full(
    eps0: &StrainColumn,
    modified: &Mat9,
    load0: &StateColumn,
    state0: &StateColumn,
    void_volume: f64,
) -> TdResult {
    let terms = vec![
        TdTerm { name: "strain", value: td_enthalpy(eps0, modified) },
        TdTerm { name: "volume_load", value: void_volume * load0.0.dot(&state0.flip_electric().0) },
    ];
    TdResult::new(
        "enthalpy",
        terms,
        TdIngredients {
            eps0: Some(strain_array(eps0)),
            matrix: Some(matrix_rows(modified)),
            state0: Some(state_array(state0)),
            load0: Some(state_array(load0)),
            void_volume: Some(void_volume),
            ..Default::default()
        },
    )
}

/// Energy increment for loads without volume part:
/// `½ (ε⁰)ᵀ M (e^M₋ - e^E₋)`, where `e^M` and `e^E` are the strains at the
/// void of the problems driven by the forces alone and by the charges alone.
pub fn energy_increment_prediction(
    eps0: &StrainColumn,
    matrix: &Mat9,
    e_mech: &StrainColumn,
    e_elec: &StrainColumn,
) -> f64 {
    let z = e_mech.flip_electric() - e_elec.flip_electric();
    0.5 * eps0.0.dot(&(matrix * z.0))
}

/// Adjoint state of a shape functional and its values at the void centre.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub field: StateField,
    pub strain0: StrainColumn,
    pub value0: StateColumn,
}

/// Load vector `∫ J'(u) · φ` of the adjoint problem.
pub fn assemble_density_load(mesh: &Mesh, u: &StateField, density: &DensitySpec) -> Vec<f64> {
    let parts: Vec<[f64; 16]> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let t = mesh.cells[c];
            let vol = mesh.cell_volume(c);
            let mut out = [0.0; 16];
            for (bary, w) in tet_quadrature() {
                let mut val = StateColumn::zeros();
                for k in 0..4 {
                    val.0 += u.node(t[k]).0 * bary[k];
                }
                let d = density.derivative(&val) * (w * vol);
                for k in 0..4 {
                    for comp in 0..4 {
                        out[4 * k + comp] += d[comp] * bary[k];
                    }
                }
            }
            out
        })
        .collect();
    let mut b = vec![0.0; 4 * mesh.num_nodes()];
    for (c, part) in parts.iter().enumerate() {
        for (k, &n) in mesh.cells[c].iter().enumerate() {
            for comp in 0..4 {
                b[4 * n + comp] += part[4 * k + comp];
            }
        }
    }
    b
}

/// Matrix of the adjoint problem: the form with the transposed material.
pub fn adjoint_matrix(mesh: &Mesh, material: &MaterialTensor) -> CsrMatrix {
    assemble_matrix(mesh, &material.full().transpose())
}

/// Solve the adjoint problem on an intact cube mesh (clamped bottom, same
/// boundary conditions as the state) and recover it at the origin.
pub fn solve_adjoint(
    mesh: &Mesh,
    material: &MaterialTensor,
    u: &StateField,
    density: &DensitySpec,
) -> Result<AdjointState, Error> {
    let matrix = adjoint_matrix(mesh, material);
    let constraints = Constraints::homogeneous(mesh, BoundaryTag::Clamped);
    let rhs = assemble_density_load(mesh, u, density);
    let field = FactoredSystem::new(&matrix, &constraints)?.solve(&rhs)?;
    let (value0, strain0) = recover_affine(mesh, &field, &Point::zeros(), None)?;
    Ok(AdjointState { field, strain0, value0 })
}

/// Derivative of `∫ J(u)` for a void at the origin:
/// `-(J(u(0)) + P(0)ᵀ f(0)) |ω| - (ε⁰)ᵀ M D(∇)P(0)`.
///
/// The polarization matrix acts on the adjoint strain: the pairing is the
/// same as in [`energy_increment_prediction`], whose adjoint strain is
/// `e^M₋ - e^E₋`.
pub fn td_general(
    j0: f64,
    p0: &StateColumn,
    f0: &StateColumn,
    strain_p0: &StrainColumn,
    matrix: &Mat9,
    eps0: &StrainColumn,
    void_volume: f64,
) -> TdResult {
    let terms = vec![
        TdTerm { name: "density", value: -j0 * void_volume },
        TdTerm { name: "volume_load", value: -p0.0.dot(&f0.0) * void_volume },
        TdTerm { name: "strain", value: -eps0.0.dot(&(matrix * strain_p0.0)) },
    ];
    TdResult::new(
        "general",
        terms,
        TdIngredients {
            eps0: Some(strain_array(eps0)),
            matrix: Some(matrix_rows(matrix)),
            adjoint_strain0: Some(strain_array(strain_p0)),
            adjoint_value0: Some(state_array(p0)),
            load0: Some(state_array(f0)),
            density0: Some(j0),
            void_volume: Some(void_volume),
            ..Default::default()
        },
    )
}

/// Enthalpy derivative from the decoupled polarization matrix `m0`, the
/// first-order correction `m1`, the decoupled strain `e0` and the strain
/// `e1` of the correction problem, at coupling amplitude `t`.
pub fn td_weak_coupling(e0: &StrainColumn, e1: &StrainColumn, m0: &Mat9, m1: &Mat9, t: f64) -> TdResult {
    let b0 = split_blocks(m0);
    let b1 = split_blocks(m1);
    let (m, g) = (e0.mechanical(), e0.electric());
    let (m1s, g1s) = (e1.mechanical(), e1.electric());
    let terms = vec![
        TdTerm { name: "decoupled", value: 0.5 * (m.dot(&(b0.mm * m)) - g.dot(&(b0.ee * g))) },
        TdTerm { name: "correction", value: t * (m.dot(&(b0.mm * m1s)) - g.dot(&(b0.ee * g1s))) },
        TdTerm { name: "coupling", value: t * g.dot(&(b1.em * m)) },
    ];
    TdResult::new(
        "weak_coupling",
        terms,
        TdIngredients { eps0: Some(strain_array(e0)), matrix: Some(matrix_rows(m0)), ..Default::default() },
    )
}

/// First-order correction `u1` of the state in the coupling amplitude:
/// `Q0(u1, v) = -Q1(u0, v)` with the decoupled form `Q0`, the coupling form
/// `Q1` and the decoupled state `u0`.
pub fn solve_weak_correction(mesh: &Mesh, material: &MaterialTensor, u0: &StateField) -> Result<StateField, Error> {
    let (a0, a1) = material.weak_split();
    let k0 = assemble_matrix(mesh, &a0);
    let k1 = assemble_matrix(mesh, &a1);
    let rhs: Vec<f64> = k1.matvec(&u0.0).iter().map(|v| -v).collect();
    let constraints = Constraints::homogeneous(mesh, BoundaryTag::Clamped);
    FactoredSystem::new(&k0, &constraints)?.solve(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::eval_form;
    use crate::fem::Cells;
    use crate::material::Preset;
    use crate::mesh::mesh_cube;
    use nalgebra::Vector4;

    #[test]
    fn pure_volume_term() {
        let z = StrainColumn::zeros();
        let r = td_general(1.0, &StateColumn::zeros(), &StateColumn::zeros(), &z, &Mat9::identity(), &z, 0.7);
        assert!((r.value + 0.7).abs() < 1e-15);
        assert_eq!(td_enthalpy(&z, &Mat9::identity()), 0.0);
    }

    #[test]
    fn enthalpy_sees_only_symmetric_part() {
        let e = StrainColumn::from([0.3, -0.1, 0.2, 0.05, 0.0, 0.1, 1.0, -0.5, 0.2]);
        let m = Mat9::from_fn(|i, j| ((i * 9 + j) as f64).sin());
        let sym = 0.5 * (m + m.transpose());
        assert!((td_enthalpy(&e, &m) - td_enthalpy(&e, &sym)).abs() < 1e-14);
    }

    #[test]
    fn adjoint_form_is_transposed() {
        let mesh = mesh_cube(2).unwrap();
        let mat = Preset::SyntheticCoupled.tensor();
        let p = StateField::interpolate(&mesh, |x| Vector4::new(x[0] * x[1], x[2], x[0].sin(), x[1] - x[2]));
        let v = StateField::interpolate(&mesh, |x| Vector4::new(x[2] * x[2], -x[0], x[1], x[0] * x[2]));
        let at = mat.full().transpose();
        let lhs = eval_form(&mesh, &at, &p, &v, Cells::All);
        let rhs = eval_form(&mesh, &mat.full(), &v, &p, Cells::All);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn adjoint_vanishes_at_reference() {
        let mesh = mesh_cube(2).unwrap();
        let u = StateField::interpolate(&mesh, |_| Vector4::new(0.1, 0.0, 0.0, 0.0));
        let d = DensitySpec::LeastSquares { weight: 1.0, reference: [0.1, 0.0, 0.0, 0.0] };
        let a = solve_adjoint(&mesh, &Preset::SyntheticCoupled.tensor(), &u, &d).unwrap();
        assert!(a.field.max_abs() < 1e-14);
    }

    #[test]
    fn weak_coupling_reduces_without_coupling() {
        let e = StrainColumn::from([0.3, -0.1, 0.2, 0.05, 0.0, 0.1, 1.0, -0.5, 0.2]);
        let m0 = Mat9::from_diagonal(&nalgebra::SVector::<f64, 9>::from([-3.0, -3.0, -3.0, -2.0, -2.0, -2.0, 1.0, 1.0, 1.0]));
        let r = td_weak_coupling(&e, &StrainColumn::zeros(), &m0, &Mat9::zeros(), 0.0);
        let expect = td_enthalpy(&e, &(m0 * crate::voigt::electric_flip_strain()));
        assert!((r.value - expect).abs() < 1e-14);
    }
}
