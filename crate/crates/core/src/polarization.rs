//! Polarization matrix of a void from nine exterior problems on truncated
//! shells, extrapolated in the truncation radius.

use crate::error::Error;
use crate::fem::{
    assemble_facet_load, assemble_matrix, cell_geometry, tet_quadrature, Constraints,
    FactoredSystem, StateField,
};
use crate::material::MaterialTensor;
use crate::mesh::{mesh_exterior_shell, BoundaryTag, Mesh, MeshParams, Point, VoidShape};
use crate::voigt::{
    electric_flip_state, electric_flip_strain, linear_field, split_blocks, strain_operator, Mat9,
};
use nalgebra::{SMatrix, SVector, Vector4};
use rayon::prelude::*;

type Mat9xN = SMatrix<f64, 9, 9>;

/// Traction data of exterior problem `j` on a facet whose outward normal
/// (out of the shell, into the void) is `nu`: the negated traction of the
/// linear field with strain `e_j`.
pub fn special_traction(j: usize, a0: &Mat9, nu: &Point) -> Vector4<f64> {
    -(strain_operator(nu).transpose() * a0.column(j))
}

/// The nine boundary-layer fields on one truncated shell.
pub struct ExteriorSolutions {
    pub mesh: Mesh,
    pub fields: Vec<StateField>,
    pub radius: f64,
    pub void_volume: f64,
}

/// Solve the nine exterior problems with homogeneous Dirichlet data on the
/// truncation sphere.
pub fn solve_exterior(
    material: &MaterialTensor,
    shape: &VoidShape,
    radius: f64,
    params: &MeshParams,
) -> Result<ExteriorSolutions, Error> {
    let mesh = mesh_exterior_shell(params, shape, radius)?;
    let a0 = material.full();
    let matrix = assemble_matrix(&mesh, &a0);
    let constraints = Constraints::homogeneous(&mesh, BoundaryTag::OuterTruncation);
    let system = FactoredSystem::new(&matrix, &constraints)?;
    let rhs: Vec<Vec<f64>> = (0..9)
        .map(|j| assemble_facet_load(&mesh, BoundaryTag::VoidBoundary, |_, _, nu| special_traction(j, &a0, nu)))
        .collect();
    let fields = system.solve_many(&rhs)?;
    let void_volume = mesh.void_volume();
    Ok(ExteriorSolutions { mesh, fields, radius, void_volume })
}

/// Strain columns of all nine fields in one cell.
fn cell_strains(mesh: &Mesh, fields: &[StateField], c: usize) -> Mat9xN {
    let g = cell_geometry(mesh, c);
    let mut e = Mat9xN::zeros();
    for (j, w) in fields.iter().enumerate() {
        let mut col = SVector::<f64, 9>::zeros();
        for (k, &n) in mesh.cells[c].iter().enumerate() {
            col += strain_operator(&g.grads[k]) * w.node(n).0;
        }
        e.set_column(j, &col);
    }
    e
}

/// Modified polarization matrix from the energy formula:
/// `-Q₋(W^j, W^p) - (A₋)_jp |ω|`.
pub fn energy_route(sol: &ExteriorSolutions, material: &MaterialTensor) -> Mat9 {
    let am = material.enthalpy();
    let parts: Vec<Mat9> = (0..sol.mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let e = cell_strains(&sol.mesh, &sol.fields, c);
            e.transpose() * am * e * sol.mesh.cell_volume(c)
        })
        .collect();
    let gram: Mat9 = parts.iter().sum();
    -gram - am * sol.void_volume
}

/// Smooth radial cutoff: 1 inside `inner`, 0 outside `outer`.
fn cutoff_gradient(x: &Point, inner: f64, outer: f64) -> Point {
    let r = x.norm();
    if r <= inner || r >= outer {
        return Point::zeros();
    }
    let t = (r - inner) / (outer - inner);
    let dchi = -6.0 * t * (1.0 - t) / (outer - inner);
    x * (dchi / r)
}

/// Modified polarization matrix from the reciprocity identity on an
/// annulus around the void, pairing each boundary layer with the flipped
/// linear fields. It is not symmetric by construction, so its asymmetry
/// measures discretization error.
pub fn reciprocity_route(sol: &ExteriorSolutions, material: &MaterialTensor, shape: &VoidShape) -> Mat9 {
    let a = material.full();
    let inner = 1.5 * shape.max_radius();
    let outer = 3.0 * shape.max_radius();
    let flip = electric_flip_state();
    let sflip = electric_flip_strain();
    let cells: Vec<usize> = (0..sol.mesh.num_cells())
        .filter(|&c| {
            let r = sol.mesh.cell_centroid(c).norm();
            r > 0.8 * inner && r < 1.25 * outer
        })
        .collect();
    let parts: Vec<Mat9> = cells
        .par_iter()
        .map(|&c| {
            let p = sol.mesh.cell_points(c);
            let t = sol.mesh.cells[c];
            let vol = sol.mesh.cell_volume(c);
            let e = cell_strains(&sol.mesh, &sol.fields, c);
            let ae = a * e;
            let mut out = Mat9::zeros();
            for (bary, w) in tet_quadrature() {
                let x = p[0] * bary[0] + p[1] * bary[1] + p[2] * bary[2] + p[3] * bary[3];
                let gchi = cutoff_gradient(&x, inner, outer);
                if gchi.norm() == 0.0 {
                    continue;
                }
                let dchi = strain_operator(&gchi);
                // v_q = s D(x)ᵀ e_q, strain S e_q
                let v = flip * linear_field(&x);
                let dchi_v = dchi * v;
                let mut wq = SMatrix::<f64, 4, 9>::zeros();
                for (j, f) in sol.fields.iter().enumerate() {
                    let mut val = Vector4::zeros();
                    for k in 0..4 {
                        val += f.node(t[k]).0 * bary[k];
                    }
                    wq.set_column(j, &val);
                }
                let dchi_w = dchi * wq;
                // term[q, j] = (A DW^j)·(Dχ v_q) - (A Dχ W^j)·(S e_q)
                let term = dchi_v.transpose() * ae - sflip * (a * dchi_w);
                out += term * (w * vol);
            }
            out
        })
        .collect();
    let i: Mat9 = parts.iter().sum();
    -i
}

/// Relative Frobenius norm of the antisymmetric part.
pub fn symmetry_defect(m: &Mat9) -> f64 {
    (m - m.transpose()).norm() / m.norm()
}

/// One truncation radius.
#[derive(Debug, Clone)]
pub struct RadiusEntry {
    pub radius: f64,
    pub modified: Mat9,
    pub reciprocity: Mat9,
    pub void_volume: f64,
    pub dofs: usize,
}

/// Extrapolated polarization matrix and its diagnostics.
#[derive(Debug, Clone)]
pub struct PolarizationMatrix {
    /// Polarization matrix.
    pub matrix: Mat9,
    /// Polarization matrix with its electric columns negated.
    pub modified: Mat9,
    /// Same quantity from the reciprocity identity.
    pub reciprocity: Mat9,
    pub shape: VoidShape,
    pub entries: Vec<RadiusEntry>,
    /// Decay exponent used for the extrapolation.
    pub decay_order: f64,
    /// True if the decay exponent was estimated from the radii.
    pub order_estimated: bool,
    pub extrapolated: bool,
    pub void_volume: f64,
}

impl PolarizationMatrix {
    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect(&self.modified)
    }

    pub fn reciprocity_symmetry_defect(&self) -> f64 {
        symmetry_defect(&self.reciprocity)
    }

    /// Eigenvalues of the symmetric part of the modified matrix, ascending.
    pub fn modified_eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&(0.5 * (self.modified + self.modified.transpose())))
    }

    /// Numbers of negative and positive eigenvalues of the modified matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let ev = self.modified_eigenvalues();
        let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let neg = ev.iter().filter(|&&v| v < -1e-9 * scale).count();
        let pos = ev.iter().filter(|&&v| v > 1e-9 * scale).count();
        (neg, pos)
    }
}

pub fn sorted_eigenvalues<const N: usize>(m: &SMatrix<f64, N, N>) -> Vec<f64> {
    let dm = nalgebra::DMatrix::from_column_slice(N, N, m.as_slice());
    let mut ev: Vec<f64> = dm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Decay exponent `p` with `(s1 - s2) / (s2 - s3) = (R1^-p - R2^-p) / (R2^-p - R3^-p)`.
fn estimate_order(r: [f64; 3], s: [f64; 3]) -> Option<f64> {
    let d1 = s[0] - s[1];
    let d2 = s[1] - s[2];
    if d2 == 0.0 || d1 / d2 <= 0.0 {
        return None;
    }
    let target = d1 / d2;
    let f = |p: f64| (r[0].powf(-p) - r[1].powf(-p)) / (r[1].powf(-p) - r[2].powf(-p)) - target;
    let (mut lo, mut hi) = (0.25, 8.0);
    if f(lo).signum() == f(hi).signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Extrapolate `m(R) = m∞ + C R^-p` from the two largest radii.
fn extrapolate(r2: f64, m2: &Mat9, r3: f64, m3: &Mat9, p: f64) -> Mat9 {
    let w = r3.powf(-p) / (r2.powf(-p) - r3.powf(-p));
    m3 + (m3 - m2) * w
}

/// Expected decay exponent of the truncation error.
pub const DEFAULT_DECAY_ORDER: f64 = 3.0;

/// Polarization matrix of `shape` for a homogeneous material, from shells
/// truncated at each of `radii` (absolute, increasing).
pub fn polarization_matrix(
    material: &MaterialTensor,
    shape: &VoidShape,
    radii: &[f64],
    params: &MeshParams,
) -> Result<PolarizationMatrix, Error> {
    material.validate()?;
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("truncation radii must be non-empty and increasing".into()));
    }
    let mut entries = Vec::with_capacity(radii.len());
    for &r in radii {
        let sol = solve_exterior(material, shape, r, params)?;
        let modified = energy_route(&sol, material);
        let reciprocity = reciprocity_route(&sol, material, shape);
        log::info!(
            "radius {r}: {} dofs, symmetry defect {:.3e}",
            4 * sol.mesh.num_nodes(),
            symmetry_defect(&reciprocity)
        );
        entries.push(RadiusEntry {
            radius: r,
            modified,
            reciprocity,
            void_volume: sol.void_volume,
            dofs: 4 * sol.mesh.num_nodes(),
        });
    }
    let n = entries.len();
    let (mut order, mut estimated) = (DEFAULT_DECAY_ORDER, false);
    if n >= 3 {
        let last: Vec<&RadiusEntry> = entries[n - 3..].iter().collect();
        let s = [last[0].modified.trace(), last[1].modified.trace(), last[2].modified.trace()];
        if let Some(p) = estimate_order([last[0].radius, last[1].radius, last[2].radius], s) {
            order = p;
            estimated = true;
        } else {
            log::warn!("non-monotone convergence in the truncation radius; using order {order}");
        }
    }
    let (modified, reciprocity) = if n >= 2 {
        let (a, b) = (&entries[n - 2], &entries[n - 1]);
        (
            extrapolate(a.radius, &a.modified, b.radius, &b.modified, order),
            extrapolate(a.radius, &a.reciprocity, b.radius, &b.reciprocity, order),
        )
    } else {
        (entries[0].modified, entries[0].reciprocity)
    };
    Ok(PolarizationMatrix {
        matrix: modified * electric_flip_strain(),
        modified,
        reciprocity,
        shape: *shape,
        void_volume: entries[n - 1].void_volume,
        entries,
        decay_order: order,
        order_estimated: estimated,
        extrapolated: n >= 2,
    })
}

/// Leading matrix and first-order coupling correction of the polarization
/// matrix for a weakly coupled material.
#[derive(Debug, Clone)]
pub struct WeakCouplingCorrection {
    pub amplitudes: [f64; 2],
    pub m0: Mat9,
    pub m1: Mat9,
    pub m_a: Mat9,
    pub m_b: Mat9,
    /// `|M(ta) - M0 - ta M1|`.
    pub residual_a: f64,
    /// `|M(tb) - M0 - tb M1|`.
    pub residual_b: f64,
    /// Off-diagonal blocks of `M0` relative to `|M0|`.
    pub m0_block_defect: f64,
    /// Diagonal blocks of `M1` relative to `|M1|`.
    pub m1_diagonal_defect: f64,
    /// `|M1^ME + (M1^EM)ᵀ|` relative to `|M1|`.
    pub m1_antisymmetry_defect: f64,
}

impl WeakCouplingCorrection {
    pub fn residual_ratio(&self) -> f64 {
        self.residual_b / self.residual_a
    }

    /// Ratio expected for a quadratic remainder, `(tb / ta)²`.
    pub fn expected_ratio(&self) -> f64 {
        (self.amplitudes[1] / self.amplitudes[0]).powi(2)
    }
}

fn diagonal_blocks(m: &Mat9) -> Mat9 {
    let mut d = *m;
    d.fixed_view_mut::<6, 3>(0, 6).fill(0.0);
    d.fixed_view_mut::<3, 6>(6, 0).fill(0.0);
    d
}

/// First-order coupling correction from polarization matrices at coupling
/// amplitudes `0`, `ta` and `tb`, combined by Richardson extrapolation of
/// the difference quotients.
pub fn weak_coupling_from_matrices(m0: &Mat9, ta: f64, m_a: &Mat9, tb: f64, m_b: &Mat9) -> WeakCouplingCorrection {
    let da = (m_a - m0) / ta;
    let db = (m_b - m0) / tb;
    let m1 = (da * tb - db * ta) / (tb - ta);
    let residual_a = (m_a - m0 - m1 * ta).norm();
    let residual_b = (m_b - m0 - m1 * tb).norm();
    let b1 = split_blocks(&m1);
    let n1 = m1.norm();
    WeakCouplingCorrection {
        amplitudes: [ta, tb],
        m0: *m0,
        m1,
        m_a: *m_a,
        m_b: *m_b,
        residual_a,
        residual_b,
        m0_block_defect: (m0 - diagonal_blocks(m0)).norm() / m0.norm(),
        m1_diagonal_defect: diagonal_blocks(&m1).norm() / n1,
        m1_antisymmetry_defect: (b1.me + b1.em.transpose()).norm() / n1,
    }
}

/// [`weak_coupling_from_matrices`] with the three polarization matrices
/// computed for `material` with its coupling scaled by `0`, `ta`, `tb`.
pub fn weak_coupling_correction(
    material: &MaterialTensor,
    shape: &VoidShape,
    amplitudes: [f64; 2],
    radii: &[f64],
    params: &MeshParams,
) -> Result<WeakCouplingCorrection, Error> {
    let [ta, tb] = amplitudes;
    if !(ta > 0.0 && tb > ta && tb <= 0.1) {
        return Err(Error::Config("coupling amplitudes must satisfy 0 < ta < tb <= 0.1".into()));
    }
    let m = |s: f64| polarization_matrix(&material.with_coupling_scale(s), shape, radii, params).map(|p| p.matrix);
    let m0 = m(0.0)?;
    let m_a = m(ta)?;
    let m_b = m(tb)?;
    Ok(weak_coupling_from_matrices(&m0, ta, &m_a, tb, &m_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::Preset;
    use crate::voigt::rigid_matrix;

    #[test]
    fn special_traction_identity_material() {
        let nu = Point::new(0.6, 0.0, 0.8);
        let a = Mat9::identity();
        let g = special_traction(0, &a, &nu);
        assert!((g - Vector4::new(-0.6, 0.0, 0.0, 0.0)).norm() < 1e-15);
        let g2 = special_traction(0, &(a * 2.0), &nu);
        assert!((g2 - g * 2.0).norm() < 1e-15);
    }

    #[test]
    fn special_tractions_are_self_equilibrated() {
        let mesh = mesh_exterior_shell(&MeshParams::with_panel(6), &VoidShape::Ellipsoid { a: 1.2, b: 1.0, c: 0.8 }, 6.0)
            .unwrap();
        let a0 = Preset::SyntheticCoupled.tensor().full();
        for j in 0..9 {
            let b = assemble_facet_load(&mesh, BoundaryTag::VoidBoundary, |_, _, nu| special_traction(j, &a0, nu));
            let mut moment = SVector::<f64, 7>::zeros();
            for (n, x) in mesh.nodes.iter().enumerate() {
                let bn = Vector4::new(b[4 * n], b[4 * n + 1], b[4 * n + 2], b[4 * n + 3]);
                moment += rigid_matrix(x).transpose() * bn;
            }
            assert!(moment.norm() < 1e-12, "j = {j}: {moment}");
        }
    }

    #[test]
    fn richardson_removes_linear_remainder() {
        let m0 = Mat9::from_fn(|i, j| if i == j { -1.0 - i as f64 } else { 0.0 });
        let m1 = Mat9::from_fn(|i, j| if (i < 6) != (j < 6) { (i + 2 * j) as f64 } else { 0.0 });
        let m2 = Mat9::from_fn(|i, j| if (i < 6) == (j < 6) { 0.5 } else { 0.0 });
        let m = |t: f64| m0 + m1 * t + m2 * (t * t);
        let w = weak_coupling_from_matrices(&m0, 0.05, &m(0.05), 0.1, &m(0.1));
        assert!((w.m1 - m1).norm() < 1e-12);
        assert!(w.residual_a > 0.0);
        assert!((w.residual_ratio() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn order_estimate_recovers_power_law() {
        let r = [12.0, 18.0, 24.0];
        let s = r.map(|x: f64| 2.0 + 5.0 * x.powf(-2.5));
        let p = estimate_order(r, s).unwrap();
        assert!((p - 2.5).abs() < 1e-9);
    }
}
