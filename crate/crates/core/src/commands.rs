//! The studies behind the command-line subcommands. Each one writes
//! `report.json`, `config.json` and CSV tables into an output directory
//! that only appears once everything has been written.

use crate::config::RunConfig;
use crate::error::Error;
use crate::fem::recover_affine;
use crate::interior::{functional_j, solve_intact, solve_many, solve_perforated};
use crate::load::{LoadSet, VectorField};
use crate::material::MaterialTensor;
use crate::mesh::{mesh_cube_filled, mesh_cube_with_void, CubeFace, Mesh, Point};
use crate::output::{num, opt, OutputDir, Table};
use crate::polarization::{
    polarization_matrix, sorted_eigenvalues, weak_coupling_from_matrices, PolarizationMatrix,
};
use crate::topo::{
    energy_increment_prediction, matrix_rows, solve_adjoint, solve_weak_correction, td_enthalpy,
    td_enthalpy_full, td_general, td_weak_coupling, TdResult,
};
use crate::voigt::{split_blocks, Mat9, StateColumn, StrainColumn};
use crate::vtk::{unstructured_grid, NamedField};
use nalgebra::{DMatrix, DVector, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Largest relative asymmetry accepted for a computed polarization matrix.
pub const SYMMETRY_LIMIT: f64 = 0.02;

/// Coupling ratio up to which the sign pattern of the polarization matrix
/// is enforced.
pub const WEAK_COUPLING_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Polarization,
    Converge,
    EnergyNonlocality,
    WeakCoupling,
    ExportVtk,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Polarization => "polarization",
            Command::Converge => "converge",
            Command::EnergyNonlocality => "energy-nonlocality",
            Command::WeakCoupling => "weak-coupling",
            Command::ExportVtk => "export-vtk",
        }
    }
}

/// Run `command` and commit its outputs to `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<PathBuf, Error> {
    cfg.validate()?;
    let dir = OutputDir::create(out)?;
    dir.write_text("config.json", &(cfg.to_json() + "\n"))?;
    match command {
        Command::Polarization => write_polarization(cfg, &dir)?,
        Command::Converge => write_converge(cfg, &dir)?,
        Command::EnergyNonlocality => write_nonlocality(cfg, &dir)?,
        Command::WeakCoupling => write_weak_coupling(cfg, &dir)?,
        Command::ExportVtk => write_vtk(cfg, &dir)?,
    }
    dir.commit()
}

fn void_volume(cfg: &RunConfig, pol: &PolarizationMatrix) -> f64 {
    match cfg.shape {
        crate::mesh::VoidShape::Sphere => 4.0 / 3.0 * PI,
        crate::mesh::VoidShape::Ellipsoid { a, b, c } => 4.0 / 3.0 * PI * a * b * c,
        crate::mesh::VoidShape::Star { .. } => pol.void_volume,
    }
}

fn compute_polarization(cfg: &RunConfig, material: &MaterialTensor) -> Result<PolarizationMatrix, Error> {
    polarization_matrix(material, &cfg.shape, &cfg.absolute_radii(), &cfg.mesh)
}

// ---------------------------------------------------------------- polarization

#[derive(Debug, Clone, Serialize)]
pub struct BlockRows {
    pub mm: Vec<Vec<f64>>,
    pub me: Vec<Vec<f64>>,
    pub em: Vec<Vec<f64>>,
    pub ee: Vec<Vec<f64>>,
}

fn rows_of<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Vec<Vec<f64>> {
    (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Inertia {
    pub negative: usize,
    pub positive: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiusRow {
    pub radius: f64,
    pub dofs: usize,
    pub void_volume: f64,
    pub symmetry_defect: f64,
    pub modified: Vec<[f64; 9]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolarizationReport {
    pub command: &'static str,
    pub material: String,
    pub shape: crate::mesh::VoidShape,
    pub radii: Vec<f64>,
    pub matrix: Vec<[f64; 9]>,
    pub modified: Vec<[f64; 9]>,
    pub blocks: BlockRows,
    /// Eigenvalues of the modified matrix, ascending.
    pub eigenvalues: Vec<f64>,
    pub inertia: Inertia,
    /// Eigenvalues of the mechanical block, ascending.
    pub mechanical_eigenvalues: Vec<f64>,
    /// Eigenvalues of the electric block of the modified matrix, ascending.
    pub electric_eigenvalues: Vec<f64>,
    /// Coupling blocks relative to the whole matrix (Frobenius norms).
    pub coupling_fraction: f64,
    /// Asymmetry of the matrix obtained from the reciprocity identity.
    pub symmetry_defect: f64,
    pub reciprocity: Vec<[f64; 9]>,
    pub decay_order: f64,
    pub order_estimated: bool,
    pub extrapolated: bool,
    pub void_volume: f64,
    pub extrapolation: Vec<RadiusRow>,
}

impl PolarizationReport {
    pub fn new(material: String, pol: &PolarizationMatrix) -> Self {
        let b = split_blocks(&pol.modified);
        let (negative, positive) = pol.inertia();
        let coupling = (b.me.norm_squared() + b.em.norm_squared()).sqrt();
        Self {
            command: "polarization",
            material,
            shape: pol.shape,
            radii: pol.entries.iter().map(|e| e.radius).collect(),
            matrix: matrix_rows(&pol.matrix),
            modified: matrix_rows(&pol.modified),
            blocks: {
                let m = split_blocks(&pol.matrix);
                BlockRows { mm: rows_of(&m.mm), me: rows_of(&m.me), em: rows_of(&m.em), ee: rows_of(&m.ee) }
            },
            eigenvalues: pol.modified_eigenvalues(),
            inertia: Inertia { negative, positive },
            mechanical_eigenvalues: sorted_eigenvalues(&(0.5 * (b.mm + b.mm.transpose()))),
            electric_eigenvalues: sorted_eigenvalues(&(0.5 * (b.ee + b.ee.transpose()))),
            coupling_fraction: coupling / pol.modified.norm(),
            symmetry_defect: pol.reciprocity_symmetry_defect(),
            reciprocity: matrix_rows(&pol.reciprocity),
            decay_order: pol.decay_order,
            order_estimated: pol.order_estimated,
            extrapolated: pol.extrapolated,
            void_volume: pol.void_volume,
            extrapolation: pol
                .entries
                .iter()
                .map(|e| RadiusRow {
                    radius: e.radius,
                    dofs: e.dofs,
                    void_volume: e.void_volume,
                    symmetry_defect: crate::polarization::symmetry_defect(&e.reciprocity),
                    modified: matrix_rows(&e.modified),
                })
                .collect(),
        }
    }
}

fn matrix_table(m: &Mat9) -> Table {
    let mut t = Table::new(&["row", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"]);
    for i in 0..9 {
        let mut row = vec![(i + 1).to_string()];
        row.extend((0..9).map(|j| num(m[(i, j)])));
        t.push(row);
    }
    t
}

/// Sign and symmetry checks on a computed polarization matrix.
pub fn check_polarization(material: &MaterialTensor, pol: &PolarizationMatrix) -> Result<(), Error> {
    let defect = pol.reciprocity_symmetry_defect();
    if !(defect <= SYMMETRY_LIMIT) {
        return Err(Error::Invariant(format!(
            "polarization matrix asymmetry {defect:.3e} exceeds {SYMMETRY_LIMIT}"
        )));
    }
    if material.coupling_ratio() <= WEAK_COUPLING_RATIO + 1e-12 {
        let (neg, pos) = pol.inertia();
        if (neg, pos) != (6, 3) {
            return Err(Error::Invariant(format!(
                "weakly coupled material gives inertia ({neg}, {pos}) instead of (6, 3)"
            )));
        }
    }
    Ok(())
}

fn write_polarization(cfg: &RunConfig, dir: &OutputDir) -> Result<(), Error> {
    let material = cfg.material();
    let pol = compute_polarization(cfg, &material)?;
    check_polarization(&material, &pol)?;
    let report = PolarizationReport::new(cfg.material.name(), &pol);
    dir.write_json("report.json", &report)?;
    dir.write_csv("polarization.csv", &matrix_table(&pol.matrix))?;
    dir.write_csv("modified.csv", &matrix_table(&pol.modified))?;
    let mut t = Table::new(&["radius", "dofs", "void_volume", "symmetry_defect", "trace_mm", "trace_ee", "frobenius"]);
    for e in &pol.entries {
        let b = split_blocks(&e.modified);
        t.push(vec![
            num(e.radius),
            e.dofs.to_string(),
            num(e.void_volume),
            num(crate::polarization::symmetry_defect(&e.reciprocity)),
            num(b.mm.trace()),
            num(b.ee.trace()),
            num(e.modified.norm()),
        ]);
    }
    dir.write_csv("extrapolation.csv", &t)?;
    Ok(())
}

// -------------------------------------------------------------------- converge

/// Least-squares slope of `log |y|` against `log x`; `None` with fewer than
/// three usable points.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && y.abs() > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Does the volume load vanish? Checked on a grid of sample points.
fn volume_load_vanishes(loads: &LoadSet) -> bool {
    let s = [-0.5, -0.25, 0.0, 0.25, 0.5];
    s.iter().all(|&a| {
        s.iter().all(|&b| s.iter().all(|&c| loads.volume.eval(&Point::new(a, b, c)).norm() == 0.0))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeRow {
    pub h: f64,
    pub nodes_intact: usize,
    pub nodes_perforated: usize,
    pub energy_intact: f64,
    pub energy_perforated: f64,
    pub enthalpy_intact: f64,
    pub enthalpy_perforated: f64,
    pub functional_intact: f64,
    pub functional_perforated: f64,
    pub delta_energy: f64,
    pub delta_enthalpy: f64,
    pub delta_functional: f64,
    pub td_enthalpy: TdResult,
    pub td_energy: Option<f64>,
    pub td_general: TdResult,
    /// `Δℰ / (h³ 𝒯_ℰ)` with the strain term only.
    pub ratio_enthalpy_strain: f64,
    /// `Δℰ / (h³ 𝒯_ℰ)` with the volume-load term included.
    pub ratio_enthalpy: f64,
    pub ratio_energy: Option<f64>,
    pub ratio_functional: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Slopes {
    pub enthalpy: Option<f64>,
    pub energy: Option<f64>,
    pub functional: Option<f64>,
    /// Slope of `|Δℰ - h³ 𝒯_ℰ|`.
    pub enthalpy_remainder: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeReport {
    pub command: &'static str,
    pub material: String,
    pub polarization: PolarizationReport,
    pub rows: Vec<ConvergeRow>,
    pub failures: Vec<(f64, String)>,
    pub slopes: Slopes,
}

/// Intact and perforated solves on the matched meshes for one `h`, with
/// every increment and prediction.
pub fn converge_row(
    cfg: &RunConfig,
    material: &MaterialTensor,
    loads: &LoadSet,
    pol: &PolarizationMatrix,
    h: f64,
) -> Result<ConvergeRow, Error> {
    let perf_mesh = mesh_cube_with_void(&cfg.mesh, &cfg.shape, h)?;
    let full_mesh = mesh_cube_filled(&cfg.mesh, &cfg.shape, h)?;
    let without_f = volume_load_vanishes(loads);
    let mut sets = vec![loads.clone()];
    if without_f {
        sets.push(loads.mechanical_part());
        sets.push(loads.electric_part());
    }
    let intact = solve_many(&full_mesh, material, &sets, true)?;
    let a = &intact[0];
    let b = solve_perforated(&perf_mesh, material, loads)?;
    let eps0 = a.eps0.expect("intact solve recovers strain");
    let state0 = a.value0.expect("intact solve recovers state");
    let f0 = StateColumn(loads.volume.eval(&Point::zeros()));
    let vol = void_volume(cfg, pol);
    let td_e = td_enthalpy_full(&eps0, &pol.modified, &f0, &state0, vol);
    let td_u = without_f.then(|| {
        energy_increment_prediction(
            &eps0,
            &pol.matrix,
            &intact[1].eps0.expect("strain"),
            &intact[2].eps0.expect("strain"),
        )
    });
    let adj = solve_adjoint(&full_mesh, material, &a.field, &cfg.density)?;
    let j0 = cfg.density.value(&state0);
    let td_j = td_general(j0, &adj.value0, &f0, &adj.strain0, &pol.matrix, &eps0, vol);
    let ja = functional_j(&full_mesh, &a.field, &cfg.density);
    let jb = functional_j(&perf_mesh, &b.field, &cfg.density);
    let h3 = h.powi(3);
    let de = b.enthalpy - a.enthalpy;
    let du = b.energy - a.energy;
    let dj = jb - ja;
    Ok(ConvergeRow {
        h,
        nodes_intact: full_mesh.num_nodes(),
        nodes_perforated: perf_mesh.num_nodes(),
        energy_intact: a.energy,
        energy_perforated: b.energy,
        enthalpy_intact: a.enthalpy,
        enthalpy_perforated: b.enthalpy,
        functional_intact: ja,
        functional_perforated: jb,
        delta_energy: du,
        delta_enthalpy: de,
        delta_functional: dj,
        ratio_enthalpy_strain: de / (h3 * td_e.term("strain").unwrap_or(f64::NAN)),
        ratio_enthalpy: de / (h3 * td_e.value),
        ratio_energy: td_u.map(|t| du / (h3 * t)),
        ratio_functional: dj / (h3 * td_j.value),
        td_enthalpy: td_e,
        td_energy: td_u,
        td_general: td_j,
    })
}

pub fn converge(cfg: &RunConfig) -> Result<ConvergeReport, Error> {
    let material = cfg.material();
    let loads = cfg.load_set();
    let pol = compute_polarization(cfg, &material)?;
    let results: Vec<Result<ConvergeRow, Error>> =
        cfg.h.par_iter().map(|&h| converge_row(cfg, &material, &loads, &pol, h)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (h, r) in cfg.h.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e @ (Error::Mesh(_) | Error::Config(_))) => {
                log::warn!("h = {h}: {e}");
                failures.push((*h, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::Mesh("no h value could be meshed".into()));
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let de: Vec<f64> = rows.iter().map(|r| r.delta_enthalpy).collect();
    let du: Vec<f64> = rows.iter().map(|r| r.delta_energy).collect();
    let dj: Vec<f64> = rows.iter().map(|r| r.delta_functional).collect();
    let rem: Vec<f64> = rows.iter().map(|r| r.delta_enthalpy - r.h.powi(3) * r.td_enthalpy.value).collect();
    let degenerate = de.iter().all(|v| *v == 0.0);
    let slopes = Slopes {
        enthalpy: fit_slope(&hs, &de),
        energy: fit_slope(&hs, &du),
        functional: fit_slope(&hs, &dj),
        enthalpy_remainder: fit_slope(&hs, &rem),
        degenerate,
    };
    Ok(ConvergeReport {
        command: "converge",
        material: cfg.material.name(),
        polarization: PolarizationReport::new(cfg.material.name(), &pol),
        rows,
        failures,
        slopes,
    })
}

fn write_converge(cfg: &RunConfig, dir: &OutputDir) -> Result<(), Error> {
    let report = converge(cfg)?;
    let mut t = Table::new(&[
        "h",
        "nodes_intact",
        "nodes_perforated",
        "delta_enthalpy",
        "delta_energy",
        "delta_functional",
        "td_enthalpy",
        "td_energy",
        "td_general",
        "ratio_enthalpy",
        "ratio_enthalpy_strain",
        "ratio_energy",
        "ratio_functional",
    ]);
    for r in &report.rows {
        t.push(vec![
            num(r.h),
            r.nodes_intact.to_string(),
            r.nodes_perforated.to_string(),
            num(r.delta_enthalpy),
            num(r.delta_energy),
            num(r.delta_functional),
            num(r.td_enthalpy.value),
            opt(r.td_energy),
            num(r.td_general.value),
            num(r.ratio_enthalpy),
            num(r.ratio_enthalpy_strain),
            opt(r.ratio_energy),
            num(r.ratio_functional),
        ]);
    }
    dir.write_csv("converge.csv", &t)?;
    dir.write_json("report.json", &report)?;
    Ok(())
}

// ----------------------------------------------------------- energy non-locality

/// Eight loads symmetric under the rotations of the cube about the third
/// axis, with no volume part: four mechanical, then four electric.
pub fn nonlocality_basis() -> Vec<LoadSet> {
    use CubeFace::*;
    let lateral = [XMinus, XPlus, YMinus, YPlus];
    let inward = |x: &Point| -> Vector4<f64> {
        let n = CubeFace::containing(x).map(|f| f.outward_normal()).unwrap_or_default();
        Vector4::new(-n[0], -n[1], -n[2], 0.0)
    };
    vec![
        LoadSet::default().with_surface(&[ZPlus], VectorField::constant([0.0, 0.0, -1.0, 0.0])),
        LoadSet::default().with_surface(
            &[ZPlus],
            VectorField::new(|x| Vector4::new(0.0, 0.0, -4.0 * (x[0] * x[0] + x[1] * x[1]), 0.0)),
        ),
        LoadSet::default().with_surface(&lateral, VectorField::new(inward)),
        LoadSet::default().with_surface(&lateral, VectorField::constant([0.0, 0.0, -1.0, 0.0])),
        LoadSet::default().with_surface(&[ZPlus], VectorField::constant([0.0, 0.0, 0.0, 1.0])),
        LoadSet::default().with_surface(
            &[ZPlus],
            VectorField::new(|x| Vector4::new(0.0, 0.0, 0.0, 4.0 * (x[0] * x[0] + x[1] * x[1]))),
        ),
        LoadSet::default().with_surface(&lateral, VectorField::constant([0.0, 0.0, 0.0, 1.0])),
        LoadSet::default().with_surface(&lateral, VectorField::new(|x| Vector4::new(0.0, 0.0, 0.0, 2.0 * x[2]))),
    ]
}

pub const MECHANICAL_BASIS: usize = 4;

/// One load combination and its local data.
#[derive(Debug, Clone, Serialize)]
pub struct LoadPair {
    pub coefficients: Vec<f64>,
    pub eps0: [f64; 9],
    pub e_mech: [f64; 9],
    pub e_elec: [f64; 9],
    pub td_enthalpy: f64,
    pub td_energy: f64,
    pub delta_energy: f64,
    pub delta_enthalpy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlocalityRun {
    pub material: String,
    pub h: f64,
    pub sets: [LoadPair; 2],
    /// `|ε1 - ε2| / |ε1|`.
    pub matching_defect: f64,
    /// `½ |M₌|₂ |ε1 - ε2| (|ε1| + |ε2|)` plus the rounding error of the
    /// two quadratic forms: bound on the enthalpy difference caused by the
    /// mismatch.
    pub propagated_defect: f64,
    pub energy_spread: f64,
    pub measured_energy_spread: f64,
    pub enthalpy_spread: f64,
    /// Largest `|td_energy - td_enthalpy|` over both sets.
    pub energy_enthalpy_gap: f64,
}

fn arr9(e: &StrainColumn) -> [f64; 9] {
    std::array::from_fn(|i| e.0[i])
}

fn spectral_norm(m: &Mat9) -> f64 {
    DMatrix::from_column_slice(9, 9, m.as_slice()).singular_values().max()
}

/// Two load combinations with the same strain at the void but different
/// splits between forces and charges, with their predicted and measured
/// energy increments.
pub fn nonlocality_run(
    cfg: &RunConfig,
    material: &MaterialTensor,
    material_name: String,
    pol: &PolarizationMatrix,
    h: f64,
) -> Result<NonlocalityRun, Error> {
    let basis = nonlocality_basis();
    let full_mesh = mesh_cube_filled(&cfg.mesh, &cfg.shape, h)?;
    let perf_mesh = mesh_cube_with_void(&cfg.mesh, &cfg.shape, h)?;
    let intact = solve_many(&full_mesh, material, &basis, true)?;
    let eps: Vec<StrainColumn> = intact.iter().map(|r| r.eps0.expect("strain")).collect();
    let nb = basis.len();
    let e = DMatrix::from_fn(9, nb, |i, j| eps[j].0[i]);

    // the fixed electric load: among those that act on the strain at the void
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let largest = (MECHANICAL_BASIS..nb).map(|k| eps[k].norm()).fold(0.0, f64::max);
    let active: Vec<usize> = (MECHANICAL_BASIS..nb).filter(|&k| eps[k].norm() > 0.1 * largest).collect();
    let fixed = active[rng.gen_range(0..active.len())];
    let amplitude = rng.gen_range(0.5..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 };

    let mut c1 = vec![0.0; nb];
    c1[0] = 1.0;
    let target = &e * DVector::from_vec(c1.clone()) - e.column(fixed) * amplitude;
    let free: Vec<usize> = (0..nb).filter(|&k| k != fixed).collect();
    let ef = DMatrix::from_fn(9, free.len(), |i, j| e[(i, free[j])]);
    let svd = ef.svd(true, true);
    let x = svd
        .solve(&target, 1e-10 * svd.singular_values.max())
        .map_err(|m| Error::Solver(format!("load matching failed: {m}")))?;
    let mut c2 = vec![0.0; nb];
    c2[fixed] = amplitude;
    for (j, &k) in free.iter().enumerate() {
        c2[k] = x[j];
    }

    let combine = |c: &[f64], range: std::ops::Range<usize>| -> StrainColumn {
        let mut s = StrainColumn::zeros();
        for k in range {
            s = s + eps[k] * c[k];
        }
        s
    };
    let sets_c = [c1, c2];
    let loads: Vec<LoadSet> = sets_c
        .iter()
        .map(|c| {
            let terms: Vec<(f64, &LoadSet)> = c.iter().copied().zip(basis.iter()).collect();
            LoadSet::combination(&terms)
        })
        .collect();
    let perforated = solve_many(&perf_mesh, material, &loads, false)?;
    let intact_combined = solve_many(&full_mesh, material, &loads, true)?;
    let h3 = h.powi(3);
    let mut pairs = Vec::new();
    for (i, c) in sets_c.iter().enumerate() {
        let eps0 = intact_combined[i].eps0.expect("strain");
        let e_mech = combine(c, 0..MECHANICAL_BASIS);
        let e_elec = combine(c, MECHANICAL_BASIS..nb);
        pairs.push(LoadPair {
            coefficients: c.clone(),
            eps0: arr9(&eps0),
            e_mech: arr9(&e_mech),
            e_elec: arr9(&e_elec),
            td_enthalpy: td_enthalpy(&eps0, &pol.modified),
            td_energy: energy_increment_prediction(&eps0, &pol.matrix, &e_mech, &e_elec),
            delta_energy: (perforated[i].energy - intact_combined[i].energy) / h3,
            delta_enthalpy: (perforated[i].enthalpy - intact_combined[i].enthalpy) / h3,
        });
    }
    let e1 = StrainColumn::from(pairs[0].eps0);
    let e2 = StrainColumn::from(pairs[1].eps0);
    let diff = (e1 - e2).norm();
    let norm_m = spectral_norm(&pol.modified);
    // rounding in the two quadratic forms, nine-term dot products twice
    let rounding = 32.0 * f64::EPSILON * norm_m * (e1.0.norm_squared() + e2.0.norm_squared());
    let propagated = 0.5 * norm_m * diff * (e1.norm() + e2.norm()) + rounding;
    let gap = pairs.iter().map(|p| (p.td_energy - p.td_enthalpy).abs()).fold(0.0, f64::max);
    let [p1, p2]: [LoadPair; 2] = pairs.try_into().expect("two sets");
    Ok(NonlocalityRun {
        material: material_name,
        h,
        matching_defect: diff / e1.norm(),
        propagated_defect: propagated,
        energy_spread: (p1.td_energy - p2.td_energy).abs(),
        measured_energy_spread: (p1.delta_energy - p2.delta_energy).abs(),
        enthalpy_spread: (p1.td_enthalpy - p2.td_enthalpy).abs(),
        energy_enthalpy_gap: gap,
        sets: [p1, p2],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlocalityReport {
    pub command: &'static str,
    pub coupled: NonlocalityRun,
    pub control: NonlocalityRun,
}

pub fn energy_nonlocality(cfg: &RunConfig) -> Result<NonlocalityReport, Error> {
    let material = cfg.material();
    let decoupled = material.with_coupling_scale(0.0);
    let h = cfg.smallest_h();
    let pol = compute_polarization(cfg, &material)?;
    let pol0 = compute_polarization(cfg, &decoupled)?;
    let coupled = nonlocality_run(cfg, &material, cfg.material.name(), &pol, h)?;
    let control = nonlocality_run(cfg, &decoupled, format!("{} without coupling", cfg.material.name()), &pol0, h)?;
    Ok(NonlocalityReport { command: "energy-nonlocality", coupled, control })
}

fn write_nonlocality(cfg: &RunConfig, dir: &OutputDir) -> Result<(), Error> {
    let report = energy_nonlocality(cfg)?;
    let mut t = Table::new(&["run", "set", "td_enthalpy", "td_energy", "delta_enthalpy", "delta_energy", "eps0_norm"]);
    for (name, run) in [("coupled", &report.coupled), ("control", &report.control)] {
        for (i, s) in run.sets.iter().enumerate() {
            t.push(vec![
                name.to_string(),
                (i + 1).to_string(),
                num(s.td_enthalpy),
                num(s.td_energy),
                num(s.delta_enthalpy),
                num(s.delta_energy),
                num(StrainColumn::from(s.eps0).norm()),
            ]);
        }
    }
    dir.write_csv("nonlocality.csv", &t)?;
    dir.write_json("report.json", &report)?;
    Ok(())
}

// --------------------------------------------------------------- weak coupling

#[derive(Debug, Clone, Serialize)]
pub struct WeakRow {
    pub amplitude: f64,
    pub td_weak: TdResult,
    pub td_full: f64,
    pub difference: f64,
    /// `|M(t) - M0 - t M1|`.
    pub matrix_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakReport {
    pub command: &'static str,
    pub material: String,
    pub h: f64,
    pub m0: Vec<[f64; 9]>,
    pub m1: Vec<[f64; 9]>,
    pub m0_block_defect: f64,
    pub m1_diagonal_defect: f64,
    pub m1_antisymmetry_defect: f64,
    pub residual_ratio: f64,
    pub expected_ratio: f64,
    /// Ratio of the TD differences at the two largest amplitudes.
    pub td_difference_ratio: Option<f64>,
    pub rows: Vec<WeakRow>,
}

pub fn weak_coupling(cfg: &RunConfig) -> Result<WeakReport, Error> {
    let material = cfg.material();
    let mut positive: Vec<f64> = cfg.amplitudes.iter().copied().filter(|t| *t > 0.0).collect();
    positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
    positive.dedup();
    if positive.len() < 2 {
        return Err(Error::Config("amplitudes: need two distinct positive values".into()));
    }
    let mut all: Vec<f64> = cfg.amplitudes.clone();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut with_zero = all.clone();
    if with_zero[0] != 0.0 {
        with_zero.insert(0, 0.0);
    }
    let mats: Vec<Mat9> = with_zero
        .iter()
        .map(|&t| compute_polarization(cfg, &material.with_coupling_scale(t)).map(|p| p.matrix))
        .collect::<Result<_, _>>()?;
    let m_of = |t: f64| mats[with_zero.iter().position(|s| *s == t).expect("computed")];
    let m0 = m_of(0.0);
    let (ta, tb) = (positive[0], positive[1]);
    let w = weak_coupling_from_matrices(&m0, ta, &m_of(ta), tb, &m_of(tb));

    let h = cfg.smallest_h();
    let mesh = mesh_cube_filled(&cfg.mesh, &cfg.shape, h)?;
    let loads = cfg.load_set();
    let u0 = solve_intact(&mesh, &material.with_coupling_scale(0.0), &loads)?;
    let u1 = solve_weak_correction(&mesh, &material, &u0.field)?;
    let (_, e1) = recover_affine(&mesh, &u1, &Point::zeros(), None)?;
    let e0 = u0.eps0.expect("strain");
    let rows: Vec<WeakRow> = with_zero
        .iter()
        .map(|&t| {
            let full = solve_intact(&mesh, &material.with_coupling_scale(t), &loads)?;
            let mt = m_of(t);
            let modified = mt * crate::voigt::electric_flip_strain();
            let td_full = td_enthalpy(&full.eps0.expect("strain"), &modified);
            let td_weak = td_weak_coupling(&e0, &e1, &m0, &w.m1, t);
            Ok(WeakRow {
                amplitude: t,
                difference: (td_weak.value - td_full).abs(),
                td_full,
                td_weak,
                matrix_residual: (mt - m0 - w.m1 * t).norm(),
            })
        })
        .collect::<Result<_, Error>>()?;
    let n = rows.len();
    let td_difference_ratio = (n >= 2 && rows[n - 2].amplitude > 0.0)
        .then(|| rows[n - 1].difference / rows[n - 2].difference);
    Ok(WeakReport {
        command: "weak-coupling",
        material: cfg.material.name(),
        h,
        m0: matrix_rows(&m0),
        m1: matrix_rows(&w.m1),
        m0_block_defect: w.m0_block_defect,
        m1_diagonal_defect: w.m1_diagonal_defect,
        m1_antisymmetry_defect: w.m1_antisymmetry_defect,
        residual_ratio: w.residual_ratio(),
        expected_ratio: w.expected_ratio(),
        td_difference_ratio,
        rows,
    })
}

fn write_weak_coupling(cfg: &RunConfig, dir: &OutputDir) -> Result<(), Error> {
    let report = weak_coupling(cfg)?;
    let mut t = Table::new(&["amplitude", "td_weak", "td_full", "difference", "matrix_residual"]);
    for r in &report.rows {
        t.push(vec![
            num(r.amplitude),
            num(r.td_weak.value),
            num(r.td_full),
            num(r.difference),
            num(r.matrix_residual),
        ]);
    }
    dir.write_csv("weak_coupling.csv", &t)?;
    dir.write_csv("m1.csv", &matrix_table(&Mat9::from_fn(|i, j| report.m1[i][j])))?;
    dir.write_json("report.json", &report)?;
    Ok(())
}

// ------------------------------------------------------------------ export-vtk

#[derive(Debug, Clone, Serialize)]
pub struct VtkReport {
    pub command: &'static str,
    pub h: f64,
    pub files: Vec<&'static str>,
    pub nodes_intact: usize,
    pub nodes_perforated: usize,
}

fn write_vtk(cfg: &RunConfig, dir: &OutputDir) -> Result<(), Error> {
    let material = cfg.material();
    let loads = cfg.load_set();
    let h = cfg.smallest_h();
    let full: Mesh = mesh_cube_filled(&cfg.mesh, &cfg.shape, h)?;
    let perf: Mesh = mesh_cube_with_void(&cfg.mesh, &cfg.shape, h)?;
    let a = solve_intact(&full, &material, &loads)?;
    let b = solve_perforated(&perf, &material, &loads)?;
    // the perforated nodes are a prefix of the intact ones
    let mut layer = b.field.clone();
    layer.add_scaled(-1.0, &a.field.truncated(perf.num_nodes()));
    dir.write_text("intact.vtk", &unstructured_grid(&full, "intact cube", &[NamedField { name: "u", field: &a.field }]))?;
    dir.write_text(
        "perforated.vtk",
        &unstructured_grid(
            &perf,
            &format!("cube with void, h = {h}"),
            &[NamedField { name: "u", field: &b.field }, NamedField { name: "difference", field: &layer }],
        ),
    )?;
    dir.write_json(
        "report.json",
        &VtkReport {
            command: "export-vtk",
            h,
            files: vec!["intact.vtk", "perforated.vtk"],
            nodes_intact: full.num_nodes(),
            nodes_perforated: perf.num_nodes(),
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let h = [0.12, 0.09, 0.06];
        let y = h.map(|x: f64| -2.0 * x.powi(3));
        assert!((fit_slope(&h, &y).unwrap() - 3.0).abs() < 1e-12);
        assert!(fit_slope(&h[..2], &y[..2]).is_none());
        assert!(fit_slope(&h, &[0.0; 3]).is_none());
    }

    #[test]
    fn basis_is_symmetric_about_the_axis() {
        let basis = nonlocality_basis();
        assert_eq!(basis.len(), 8);
        // a quarter turn maps XPlus to YPlus
        for l in &basis {
            let x = Point::new(0.5, 0.1, 0.2);
            let y = Point::new(-0.1, 0.5, 0.2);
            let gx = l.surface_at(CubeFace::XPlus, &x);
            let gy = l.surface_at(CubeFace::YPlus, &y);
            assert!((gx[2] - gy[2]).abs() < 1e-15 && (gx[3] - gy[3]).abs() < 1e-15);
            assert!((gx[0] - gy[1]).abs() < 1e-15);
        }
    }
}
