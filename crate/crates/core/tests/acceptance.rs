//! Acceptance criteria. Everything runs in one test so the expensive
//! polarization matrices are shared and the solves never overlap in
//! memory. Each criterion prints one PASS/FAIL line.

use nalgebra::{SVector, Vector3};
use piezotopo::commands::{converge_row, fit_slope, nonlocality_run, weak_coupling, ConvergeRow};
use piezotopo::config::RunConfig;
use piezotopo::fem::{assemble_load, assemble_matrix, Constraints, FactoredSystem, StateField};
use piezotopo::load::LoadSet;
use piezotopo::material::{MaterialTensor, Preset};
use piezotopo::mesh::{mesh_cube, mesh_cube_with_void, mesh_exterior_shell, BoundaryTag, Mesh, MeshParams, VoidShape};
use piezotopo::polarization::{polarization_matrix, sorted_eigenvalues, PolarizationMatrix};
use piezotopo::voigt::{affine_gradient, linear_field, rigid_coefficients, rigid_matrix, split_blocks, strain_from_gradient};
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

struct Outcome {
    passed: bool,
    detail: String,
}

// written straight to stdout so the lines survive the test harness capture
fn report(n: usize, start: Instant, o: &Outcome) -> bool {
    let line = format!(
        "criterion {n}: {} {} [{:.1} s]\n",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).expect("stdout");
    o.passed
}

fn polarization(material: &MaterialTensor, shape: VoidShape, panel: usize) -> PolarizationMatrix {
    let d = 2.0 * shape.max_radius();
    let radii: Vec<f64> = RunConfig::default().radii.iter().map(|r| r * d).collect();
    polarization_matrix(material, &shape, &radii, &MeshParams::with_panel(panel)).expect("polarization")
}

// ---------------------------------------------------------------------------

fn algebraic_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 0..9 {
        let c = SVector::<f64, 9>::ith(j, 1.0);
        // D(∇) D(x)ᵀ c = c
        let g = affine_gradient(|x| linear_field(x) * c);
        worst = worst.max((strain_from_gradient(&g).0 - c).amax());
        // d(∇)ᵀ D(x)ᵀ c at the origin vanishes
        let v = linear_field(&Vector3::zeros()) * c;
        worst = worst.max(rigid_coefficients(&v, &g).0.amax());
    }
    for j in 0..7 {
        let a = SVector::<f64, 7>::ith(j, 1.0);
        // D(∇) d(x) a = 0
        let g = affine_gradient(|x| rigid_matrix(x) * a);
        worst = worst.max(strain_from_gradient(&g).0.amax());
        // d(∇)ᵀ d(x) a at the origin is a
        let v = rigid_matrix(&Vector3::zeros()) * a;
        worst = worst.max((rigid_coefficients(&v, &g).0 - a).amax());
    }
    Outcome { passed: worst <= 1e-12, detail: format!("largest error {worst:.1e} (limit 1e-12)") }
}

fn polynomial_property() -> Outcome {
    let params = MeshParams::with_panel(4);
    let meshes: Vec<(&str, Mesh)> = vec![
        ("cube", mesh_cube(3).unwrap()),
        ("cube with sphere", mesh_cube_with_void(&params, &VoidShape::Sphere, 0.12).unwrap()),
        ("cube with ellipsoid", mesh_cube_with_void(&params, &VoidShape::Ellipsoid { a: 1.0, b: 0.7, c: 0.5 }, 0.12).unwrap()),
        ("exterior shell", mesh_exterior_shell(&params, &VoidShape::Sphere, 8.0).unwrap()),
    ];
    let material = Preset::SyntheticCoupled.tensor();
    let mut worst: f64 = 0.0;
    for (_, mesh) in &meshes {
        let k = assemble_matrix(mesh, &material.full());
        let norm_k = k.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..7 {
            let a = SVector::<f64, 7>::ith(j, 1.0);
            let r = StateField::interpolate(mesh, |x| rigid_matrix(x) * a);
            let kr = k.matvec(&r.0);
            let n_r = r.0.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n_kr = kr.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(n_kr / (norm_k * n_r));
        }
    }
    Outcome {
        passed: worst <= 1e-10,
        detail: format!("largest |K d a| / (|K| |d a|) = {worst:.1e} over {} meshes (limit 1e-10)", meshes.len()),
    }
}

fn formulation_equivalence() -> Outcome {
    let params = MeshParams::with_panel(8);
    let mut worst: f64 = 0.0;
    let loads = LoadSet::default_test();
    for preset in [Preset::IsoWeakCoupled, Preset::SyntheticCoupled] {
        let m = preset.tensor();
        for mesh in [mesh_cube(6).unwrap(), mesh_cube_with_void(&params, &VoidShape::Sphere, 0.12).unwrap()] {
            let k = assemble_matrix(&mesh, &m.full());
            let km = assemble_matrix(&mesh, &m.enthalpy());
            let b = assemble_load(&mesh, &loads);
            let cons = Constraints::homogeneous(&mesh, BoundaryTag::Clamped);
            let sys = FactoredSystem::new(&k, &cons).unwrap();
            let u = sys.solve(&b).unwrap();
            // electric loads change sign in the enthalpy form
            let bm: Vec<f64> = b.iter().enumerate().map(|(i, v)| if i % 4 == 3 { -v } else { *v }).collect();
            let r = km.matvec(&u.0);
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..b.len() {
                if !sys.is_fixed(i) {
                    num += (r[i] - bm[i]).powi(2);
                    den += bm[i].powi(2);
                }
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    Outcome { passed: worst <= 1e-9, detail: format!("largest enthalpy-form residual {worst:.1e} (limit 1e-9)") }
}

fn symmetry(coarse: &PolarizationMatrix, fine: &PolarizationMatrix) -> Outcome {
    let (a, b) = (coarse.reciprocity_symmetry_defect(), fine.reciprocity_symmetry_defect());
    Outcome {
        passed: a <= 0.02 && b < a,
        detail: format!("asymmetry {a:.2e} at panel 12 (limit 0.02), {b:.2e} at panel 16 (must decrease)"),
    }
}

fn sign_structure(decoupled: &PolarizationMatrix, weak: &PolarizationMatrix) -> Outcome {
    let b = split_blocks(&decoupled.modified);
    let mm = sorted_eigenvalues(&(0.5 * (b.mm + b.mm.transpose())));
    let ee = sorted_eigenvalues(&(0.5 * (b.ee + b.ee.transpose())));
    let coupling = (b.me.norm_squared() + b.em.norm_squared()).sqrt() / decoupled.modified.norm();
    let neg = mm.iter().filter(|v| **v < 0.0).count();
    let pos = ee.iter().filter(|v| **v > 0.0).count();
    let inertia = weak.inertia();
    Outcome {
        passed: neg == 6 && pos == 3 && coupling <= 0.01 && inertia == (6, 3),
        detail: format!(
            "decoupled: {neg}/6 negative mechanical, {pos}/3 positive electric, coupling {coupling:.1e} (limit 0.01); weakly coupled inertia ({}, {})",
            inertia.0, inertia.1
        ),
    }
}

fn sphere_oracle(decoupled: &PolarizationMatrix) -> Outcome {
    let oracle = 1.5 * 4.0 / 3.0 * PI;
    let b = split_blocks(&decoupled.modified);
    let worst = (0..3).map(|i| (b.ee[(i, i)] / oracle - 1.0).abs()).fold(0.0, f64::max);
    Outcome {
        passed: worst <= 0.03,
        detail: format!(
            "diagonal {:.4} {:.4} {:.4} vs {oracle:.4}, largest relative error {:.2}% (limit 3%)",
            b.ee[(0, 0)],
            b.ee[(1, 1)],
            b.ee[(2, 2)],
            100.0 * worst
        ),
    }
}

fn homogeneity(unit: &PolarizationMatrix, double: &PolarizationMatrix) -> Outcome {
    let rel = (double.matrix - unit.matrix * 8.0).norm() / (unit.matrix * 8.0).norm();
    Outcome { passed: rel <= 0.01, detail: format!("|M(2) - 8 M(1)| / |8 M(1)| = {rel:.2e} (limit 0.01)") }
}

fn enthalpy_expansion(rows: &[ConvergeRow]) -> Outcome {
    let last = rows.last().unwrap();
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let de: Vec<f64> = rows.iter().map(|r| r.delta_enthalpy).collect();
    let slope = fit_slope(&hs, &de).unwrap_or(f64::NAN);
    Outcome {
        passed: (0.85..=1.15).contains(&last.ratio_enthalpy) && (2.7..=3.3).contains(&slope),
        detail: format!(
            "ratio {:.4} at h = {} (limit [0.85, 1.15]), strain term alone {:.4}, slope {slope:.3} (limit [2.7, 3.3])",
            last.ratio_enthalpy, last.h, last.ratio_enthalpy_strain
        ),
    }
}

fn energy_nonlocality(cfg: &RunConfig, coupled: &PolarizationMatrix, decoupled: &PolarizationMatrix) -> Outcome {
    let h = cfg.smallest_h();
    let m = cfg.material();
    let c = nonlocality_run(cfg, &m, "coupled".into(), coupled, h).unwrap();
    let d = nonlocality_run(cfg, &m.with_coupling_scale(0.0), "control".into(), decoupled, h).unwrap();
    let scale = d.sets[0].td_enthalpy.abs();
    let control_ok = d.energy_enthalpy_gap <= 1e-9 * scale && d.energy_spread <= 1e-9 * scale;
    let dp = c.propagated_defect;
    let coupled_ok = c.matching_defect <= 0.01
        && c.energy_spread > 5.0 * dp
        && c.measured_energy_spread > 5.0 * dp
        && c.enthalpy_spread <= dp;
    Outcome {
        passed: control_ok && coupled_ok,
        detail: format!(
            "control gap {:.1e}; strain mismatch {:.1e} (limit 0.01), energy spread {:.4} predicted / {:.4} measured vs propagated defect {dp:.1e}, enthalpy spread {:.1e}",
            d.energy_enthalpy_gap, c.matching_defect, c.energy_spread, c.measured_energy_spread, c.enthalpy_spread
        ),
    }
}

fn general_td(row: &ConvergeRow) -> Outcome {
    let measured = row.delta_functional / row.h.powi(3);
    let td = row.td_general.value;
    let rel = (td - measured).abs() / td.abs();
    let f_term = row.td_general.term("volume_load").unwrap_or(0.0);
    Outcome {
        passed: rel <= 0.15 && f_term != 0.0,
        detail: format!("T_J = {td:.4}, measured {measured:.4}, relative difference {rel:.3} (limit 0.15); load term {f_term:.4}"),
    }
}

fn weak(cfg: &RunConfig) -> Outcome {
    let r = weak_coupling(cfg).unwrap();
    let diffs: Vec<f64> = r.rows.iter().map(|w| w.difference).collect();
    let scale = r.rows[0].td_full.abs();
    let td_ratio = r.td_difference_ratio.unwrap_or(f64::NAN);
    let passed = (2.5..=6.0).contains(&r.residual_ratio)
        && r.m1_diagonal_defect <= 0.02
        && r.m1_antisymmetry_defect <= 0.02
        && diffs[0] <= 1e-9 * scale
        && (2.5..=6.0).contains(&td_ratio);
    Outcome {
        passed,
        detail: format!(
            "remainder ratio {:.3} (limit [2.5, 6]); M1 diagonal {:.1e}, antisymmetry {:.1e} (limit 0.02); TD differences {:.1e} {:.1e} {:.1e}, ratio {td_ratio:.3}",
            r.residual_ratio, r.m1_diagonal_defect, r.m1_antisymmetry_defect, diffs[0], diffs[1], diffs[2]
        ),
    }
}

#[test]
fn acceptance() {
    let mut ok = Vec::new();

    let t = Instant::now();
    let o = algebraic_identities();
    ok.push(report(1, t, &o) && t.elapsed().as_secs_f64() < 1.0);

    let t = Instant::now();
    let o = polynomial_property();
    ok.push(report(2, t, &o) && t.elapsed().as_secs_f64() < 10.0);

    let t = Instant::now();
    let o = formulation_equivalence();
    ok.push(report(3, t, &o) && t.elapsed().as_secs_f64() < 120.0);

    let coupled_mat = Preset::SyntheticCoupled.tensor();
    let t = Instant::now();
    let coupled = polarization(&coupled_mat, VoidShape::Sphere, 12);
    let fine = polarization(&coupled_mat, VoidShape::Sphere, 16);
    ok.push(report(4, t, &symmetry(&coupled, &fine)) && t.elapsed().as_secs_f64() < 900.0);
    drop(fine);

    let t = Instant::now();
    let decoupled = polarization(&Preset::IsoDecoupled.tensor(), VoidShape::Sphere, 12);
    let weakly = polarization(&Preset::IsoWeakCoupled.tensor(), VoidShape::Sphere, 12);
    ok.push(report(5, t, &sign_structure(&decoupled, &weakly)));

    let t = Instant::now();
    ok.push(report(6, t, &sphere_oracle(&decoupled)));

    let t = Instant::now();
    let double = polarization(&coupled_mat, VoidShape::Ellipsoid { a: 2.0, b: 2.0, c: 2.0 }, 12);
    ok.push(report(7, t, &homogeneity(&coupled, &double)));

    let cfg = RunConfig::default();
    let t = Instant::now();
    let loads = cfg.load_set();
    let rows: Vec<ConvergeRow> = cfg
        .h
        .iter()
        .map(|&h| converge_row(&cfg, &coupled_mat, &loads, &coupled, h).expect("perforated solve"))
        .collect();
    ok.push(report(8, t, &enthalpy_expansion(&rows)) && t.elapsed().as_secs_f64() < 1800.0);

    let t = Instant::now();
    ok.push(report(9, t, &energy_nonlocality(&cfg, &coupled, &decoupled)));

    let t = Instant::now();
    ok.push(report(10, t, &general_td(rows.last().unwrap())));

    let t = Instant::now();
    ok.push(report(11, t, &weak(&cfg)));

    let failed: Vec<usize> = ok.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn decoupled_nonlocality_control_has_coinciding_predictions() {
    // cheap version of the control run, independent of the full suite
    let cfg = RunConfig { mesh: MeshParams::with_panel(4), h: vec![0.1], radii: vec![3.0, 4.0, 5.0], ..RunConfig::default() };
    let m = Preset::IsoDecoupled.tensor();
    let pol = polarization_matrix(&m, &VoidShape::Sphere, &cfg.absolute_radii(), &cfg.mesh).unwrap();
    let r = nonlocality_run(&cfg, &m, "control".into(), &pol, 0.1).unwrap();
    assert!(r.energy_spread <= 1e-9 * r.sets[0].td_enthalpy.abs());
}
