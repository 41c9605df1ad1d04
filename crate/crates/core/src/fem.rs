//! Linear tetrahedral finite elements for the coupled problem: assembly,
//! Dirichlet elimination, sparse LU solves, form evaluation and strain
//! recovery.

use crate::error::Error;
use crate::load::{LoadSet, VectorField};
use crate::mesh::{BoundaryTag, CubeFace, Facet, Mesh, Point};
use crate::voigt::{strain_operator, Mat9, Mat9x4, StateColumn, StrainColumn};
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMatRef, SparseRowMat, SymbolicSparseColMatRef, SymbolicSparseRowMat};
use faer::{Conj, Mat, MatMut, Par, Side};
use nalgebra::{Matrix4, SMatrix, Vector4};
use rayon::prelude::*;

/// Relative residual every accepted solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Nodal values of a P1 state field, four per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField(pub Vec<f64>);

impl StateField {
    pub fn zeros(num_nodes: usize) -> Self {
        Self(vec![0.0; 4 * num_nodes])
    }

    /// Interpolate a function at the nodes.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(&Point) -> Vector4<f64>) -> Self {
        let mut v = Vec::with_capacity(4 * mesh.num_nodes());
        for x in &mesh.nodes {
            v.extend_from_slice(f(x).as_slice());
        }
        Self(v)
    }

    pub fn num_nodes(&self) -> usize {
        self.0.len() / 4
    }

    pub fn node(&self, i: usize) -> StateColumn {
        StateColumn::from_slice(&self.0[4 * i..4 * i + 4])
    }

    /// Negate the potential.
    pub fn flip_electric(&self) -> Self {
        let mut v = self.0.clone();
        for x in v.iter_mut().skip(3).step_by(4) {
            *x = -*x;
        }
        Self(v)
    }

    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    /// Restriction to the first `n` nodes.
    pub fn truncated(&self, n: usize) -> Self {
        Self(self.0[..4 * n].to_vec())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Shape function gradients and volume of one tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub grads: [Point; 4],
    pub volume: f64,
}

impl CellGeometry {
    pub fn new(p: &[Point; 4]) -> Self {
        let j = nalgebra::Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
        let volume = j.determinant() / 6.0;
        let jinv_t = j.try_inverse().unwrap_or_else(nalgebra::Matrix3::zeros).transpose();
        let g1 = jinv_t.column(0).into_owned();
        let g2 = jinv_t.column(1).into_owned();
        let g3 = jinv_t.column(2).into_owned();
        Self { grads: [-(g1 + g2 + g3), g1, g2, g3], volume }
    }

    /// Strain operator of each node's shape function.
    pub fn strain_blocks(&self) -> [Mat9x4; 4] {
        self.grads.map(|g| strain_operator(&g))
    }
}

pub fn cell_geometry(mesh: &Mesh, c: usize) -> CellGeometry {
    CellGeometry::new(&mesh.cell_points(c))
}

/// Constant strain of `u` in cell `c`.
pub fn cell_strain(mesh: &Mesh, u: &StateField, c: usize) -> StrainColumn {
    let g = cell_geometry(mesh, c);
    let mut e = StrainColumn::zeros();
    for (k, &n) in mesh.cells[c].iter().enumerate() {
        e.0 += strain_operator(&g.grads[k]) * u.node(n).0;
    }
    e
}

/// Barycentric coordinates and weights (fractions of the volume) of a
/// quadrature rule exact for quadratics on tetrahedra.
pub fn tet_quadrature() -> [([f64; 4], f64); 4] {
    const A: f64 = 0.585_410_196_624_968_5;
    const B: f64 = 0.138_196_601_125_010_5;
    [
        ([A, B, B, B], 0.25),
        ([B, A, B, B], 0.25),
        ([B, B, A, B], 0.25),
        ([B, B, B, A], 0.25),
    ]
}

/// Triangle rule exact for quadratics.
pub fn triangle_quadrature() -> [([f64; 3], f64); 3] {
    const A: f64 = 2.0 / 3.0;
    const B: f64 = 1.0 / 6.0;
    [([A, B, B], 1.0 / 3.0), ([B, A, B], 1.0 / 3.0), ([B, B, A], 1.0 / 3.0)]
}

/// Square sparse matrix in compressed row form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Negate the potential rows (test functions with flipped potential).
    pub fn flip_electric_rows(&self) -> Self {
        let mut m = self.clone();
        for i in (3..self.n).step_by(4) {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[k] = -m.values[k];
            }
        }
        m
    }
}

/// Sorted node neighbourhoods (including the node itself).
fn node_adjacency(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); mesh.num_nodes()];
    for t in &mesh.cells {
        for &a in t {
            adj[a].extend_from_slice(t);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Stiffness matrix of the form `∫ (A ε(u)) · ε(v)`; row index is the test
/// function, column index the trial function.
pub fn assemble_matrix(mesh: &Mesh, a: &Mat9) -> CsrMatrix {
    let adj = node_adjacency(mesh);
    let n = 4 * mesh.num_nodes();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for nb in &adj {
        for _ in 0..4 {
            for &b in nb {
                col_idx.extend_from_slice(&[4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3]);
            }
            row_ptr.push(col_idx.len());
        }
    }
    let mut values = vec![0.0; col_idx.len()];
    for (c, t) in mesh.cells.iter().enumerate() {
        let g = cell_geometry(mesh, c);
        let b = g.strain_blocks();
        let ab: Vec<Mat9x4> = b.iter().map(|bb| a * bb).collect();
        for (i, &na) in t.iter().enumerate() {
            for (j, &nb) in t.iter().enumerate() {
                let kab: SMatrix<f64, 4, 4> = b[i].transpose() * ab[j] * g.volume;
                let pos = adj[na].binary_search(&nb).expect("neighbour");
                for r in 0..4 {
                    let start = row_ptr[4 * na + r] + 4 * pos;
                    for s in 0..4 {
                        values[start + s] += kab[(r, s)];
                    }
                }
            }
        }
    }
    CsrMatrix { n, row_ptr, col_idx, values }
}

/// `∫ f · φ` over the given cells (all cells if `None`).
pub fn assemble_volume_load(mesh: &Mesh, f: &VectorField, cells: Option<&[usize]>) -> Vec<f64> {
    let mut b = vec![0.0; 4 * mesh.num_nodes()];
    let all: Vec<usize>;
    let cells = match cells {
        Some(c) => c,
        None => {
            all = (0..mesh.num_cells()).collect();
            &all
        }
    };
    for &c in cells {
        let p = mesh.cell_points(c);
        let vol = mesh.cell_volume(c);
        for (bary, w) in tet_quadrature() {
            let x = p[0] * bary[0] + p[1] * bary[1] + p[2] * bary[2] + p[3] * bary[3];
            let v = f.eval(&x) * (w * vol);
            for (k, &n) in mesh.cells[c].iter().enumerate() {
                for comp in 0..4 {
                    b[4 * n + comp] += v[comp] * bary[k];
                }
            }
        }
    }
    b
}

/// `∫ g(x, ν) · φ` over facets with the given tag; `ν` is the unit outward
/// normal of the mesh domain.
pub fn assemble_facet_load(
    mesh: &Mesh,
    tag: BoundaryTag,
    g: impl Fn(&Facet, &Point, &Point) -> Vector4<f64>,
) -> Vec<f64> {
    let mut b = vec![0.0; 4 * mesh.num_nodes()];
    for f in mesh.facets_tagged(tag) {
        let p = mesh.facet_points(f);
        let an = mesh.facet_area_normal(f);
        let area = an.norm();
        let nu = an / area;
        for (bary, w) in triangle_quadrature() {
            let x = p[0] * bary[0] + p[1] * bary[1] + p[2] * bary[2];
            let v = g(f, &x, &nu) * (w * area);
            for (k, &n) in f.nodes.iter().enumerate() {
                for comp in 0..4 {
                    b[4 * n + comp] += v[comp] * bary[k];
                }
            }
        }
    }
    b
}

/// Load vector of a load set on a cube mesh: volume load over all cells and
/// surface loads on the loaded faces.
pub fn assemble_load(mesh: &Mesh, loads: &LoadSet) -> Vec<f64> {
    let mut b = assemble_volume_load(mesh, &loads.volume, None);
    let s = assemble_facet_load(mesh, BoundaryTag::Loaded, |f, x, _| {
        let face = CubeFace::containing(&mesh.facet_centroid(f)).expect("loaded facet on a cube face");
        loads.surface_at(face, x)
    });
    for (a, v) in b.iter_mut().zip(s) {
        *a += v;
    }
    b
}

/// Prescribed values of constrained degrees of freedom.
#[derive(Debug, Clone, Default)]
pub struct Constraints {
    /// `(dof, value)`, sorted by dof.
    pub fixed: Vec<(usize, f64)>,
}

impl Constraints {
    /// All four components vanish on every node of the tagged facets.
    pub fn homogeneous(mesh: &Mesh, tag: BoundaryTag) -> Self {
        let fixed = mesh
            .tagged_nodes(tag)
            .into_iter()
            .flat_map(|n| (0..4).map(move |c| (4 * n + c, 0.0)))
            .collect();
        Self { fixed }
    }

    /// Nodal values of `f` on every node of the tagged facets.
    pub fn from_function(mesh: &Mesh, tags: &[BoundaryTag], f: impl Fn(&Point) -> Vector4<f64>) -> Self {
        let mut nodes: Vec<usize> = tags.iter().flat_map(|t| mesh.tagged_nodes(*t)).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let fixed = nodes
            .into_iter()
            .flat_map(|n| {
                let v = f(&mesh.nodes[n]);
                (0..4).map(move |c| (4 * n + c, v[c]))
            })
            .collect();
        Self { fixed }
    }
}

/// Sparse matrix and right-hand side before constraints are applied.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// LU factorization of the constrained system, reusable for many loads.
pub struct FactoredSystem {
    n: usize,
    /// Free index of each dof, `usize::MAX` if constrained.
    map: Vec<usize>,
    free: Vec<usize>,
    fixed_values: Vec<f64>,
    /// Coupling of free rows to constrained values, applied to the rhs.
    lift: Vec<f64>,
    reduced: CsrMatrix,
    factor: Factor,
}

enum Factor {
    /// The system with its potential rows negated is symmetric and
    /// quasi-definite, so a fill-reducing LDLᵀ without pivoting applies.
    Ldlt { symbolic: SymbolicCholesky<usize>, values: Vec<f64>, signs: Vec<f64> },
    Lu(Lu<usize, f64>),
}

impl Factor {
    fn new(reduced: &CsrMatrix, electric: &[bool]) -> Result<Self, Error> {
        let signs: Vec<f64> = electric.iter().map(|&e| if e { -1.0 } else { 1.0 }).collect();
        let scale = reduced.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let symmetric = (0..reduced.n).all(|i| {
            (reduced.row_ptr[i]..reduced.row_ptr[i + 1]).all(|k| {
                let j = reduced.col_idx[k];
                (signs[i] * reduced.values[k] - signs[j] * reduced.get(j, i)).abs() <= 1e-12 * scale
            })
        });
        if symmetric {
            Self::ldlt(reduced, signs)
        } else {
            Self::lu(reduced)
        }
    }

    fn ldlt(reduced: &CsrMatrix, signs: Vec<f64>) -> Result<Self, Error> {
        // lower triangle in column-major order: row i of the CSR matrix with
        // columns >= i is column i of the lower triangle
        let n = reduced.n;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for i in 0..n {
            for k in reduced.row_ptr[i]..reduced.row_ptr[i + 1] {
                let j = reduced.col_idx[k];
                if j >= i {
                    row_idx.push(j);
                    vals.push(signs[i] * reduced.values[k]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let a = SparseColMatRef::new(sym, &vals);
        let symbolic = factorize_symbolic_cholesky(sym, Side::Lower, SymmetricOrdering::Amd, Default::default())
            .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                a,
                Side::Lower,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Solver(format!("LDLT factorization failed: {e:?}")))?;
        Ok(Factor::Ldlt { symbolic, values, signs })
    }

    fn lu(reduced: &CsrMatrix) -> Result<Self, Error> {
        let symbolic = SymbolicSparseRowMat::new_checked(
            reduced.n,
            reduced.n,
            reduced.row_ptr.clone(),
            None,
            reduced.col_idx.clone(),
        );
        let faer_mat = SparseRowMat::new(symbolic, reduced.values.clone());
        let lu = faer_mat.sp_lu().map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
        Ok(Factor::Lu(lu))
    }

    fn solve_in_place(&self, mut x: MatMut<'_, f64>) {
        match self {
            Factor::Ldlt { symbolic, values, signs } => {
                for j in 0..x.ncols() {
                    for (i, s) in signs.iter().enumerate() {
                        x[(i, j)] *= s;
                    }
                }
                let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(x.ncols(), Par::Seq));
                LdltRef::new(symbolic, values).solve_in_place_with_conj(
                    Conj::No,
                    x,
                    Par::Seq,
                    MemStack::new(&mut mem),
                );
            }
            Factor::Lu(lu) => lu.solve_in_place_with_conj(Conj::No, x),
        }
    }
}

impl FactoredSystem {
    pub fn new(matrix: &CsrMatrix, constraints: &Constraints) -> Result<Self, Error> {
        let n = matrix.n;
        let mut map = vec![0usize; n];
        let mut fixed_values = vec![0.0; n];
        for &(d, v) in &constraints.fixed {
            map[d] = usize::MAX;
            fixed_values[d] = v;
        }
        let mut free = Vec::new();
        for (d, m) in map.iter_mut().enumerate() {
            if *m != usize::MAX {
                *m = free.len();
                free.push(d);
            }
        }
        if free.is_empty() {
            return Err(Error::Solver("no free degrees of freedom".into()));
        }
        let lift_full = matrix.matvec(&fixed_values);
        let lift = free.iter().map(|&d| lift_full[d]).collect();
        let mut row_ptr = Vec::with_capacity(free.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &d in &free {
            for k in matrix.row_ptr[d]..matrix.row_ptr[d + 1] {
                let j = map[matrix.col_idx[k]];
                if j != usize::MAX {
                    col_idx.push(j);
                    values.push(matrix.values[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let reduced = CsrMatrix { n: free.len(), row_ptr, col_idx, values };
        let electric: Vec<bool> = free.iter().map(|d| d % 4 == 3).collect();
        let factor = Factor::new(&reduced, &electric)?;
        Ok(Self { n, map, free, fixed_values, lift, reduced, factor })
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    /// Solve for several load vectors at once.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<StateField>, Error> {
        let nf = self.free.len();
        let k = rhs.len();
        let reduced_rhs: Vec<Vec<f64>> = rhs
            .iter()
            .map(|b| {
                assert_eq!(b.len(), self.n, "load vector length");
                self.free.iter().zip(&self.lift).map(|(&d, l)| b[d] - l).collect()
            })
            .collect();
        let mut x = Mat::<f64>::from_fn(nf, k, |i, j| reduced_rhs[j][i]);
        self.factor.solve_in_place(x.as_mut());
        let mut out = Vec::with_capacity(k);
        for (j, b) in reduced_rhs.iter().enumerate() {
            let mut xj: Vec<f64> = (0..nf).map(|i| x[(i, j)]).collect();
            let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut rel = self.relative_residual(&xj, b, bnorm);
            let mut steps = 0;
            while rel > RESIDUAL_TOL && steps < 3 {
                let ax = self.reduced.matvec(&xj);
                let mut r = Mat::<f64>::from_fn(nf, 1, |i, _| b[i] - ax[i]);
                self.factor.solve_in_place(r.as_mut());
                for (i, v) in xj.iter_mut().enumerate() {
                    *v += r[(i, 0)];
                }
                rel = self.relative_residual(&xj, b, bnorm);
                steps += 1;
            }
            if !rel.is_finite() || rel > RESIDUAL_TOL {
                return Err(Error::Solver(format!("relative residual {rel:e} above {RESIDUAL_TOL:e}")));
            }
            let mut full = self.fixed_values.clone();
            for (i, &d) in self.free.iter().enumerate() {
                full[d] = xj[i];
            }
            out.push(StateField(full));
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<StateField, Error> {
        Ok(self.solve_many(&[rhs.to_vec()])?.remove(0))
    }

    fn relative_residual(&self, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
        if bnorm == 0.0 {
            return x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let ax = self.reduced.matvec(x);
        let r: f64 = ax.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        r / bnorm
    }

    /// Is `dof` constrained?
    pub fn is_fixed(&self, dof: usize) -> bool {
        self.map[dof] == usize::MAX
    }
}

/// Assemble, constrain and solve in one go.
pub fn solve(system: &SparseSystem, constraints: &Constraints) -> Result<StateField, Error> {
    FactoredSystem::new(&system.matrix, constraints)?.solve(&system.rhs)
}

/// Which cells a form or integral runs over.
#[derive(Debug, Clone, Copy)]
pub enum Cells<'a> {
    All,
    Subset(&'a [usize]),
}

impl Cells<'_> {
    fn list(&self, mesh: &Mesh) -> Vec<usize> {
        match self {
            Cells::All => (0..mesh.num_cells()).collect(),
            Cells::Subset(s) => s.to_vec(),
        }
    }
}

/// `∫ (A ε(u)) · ε(v)` over the selected cells.
pub fn eval_form(mesh: &Mesh, a: &Mat9, u: &StateField, v: &StateField, cells: Cells<'_>) -> f64 {
    let list = cells.list(mesh);
    let parts: Vec<f64> = list
        .par_iter()
        .map(|&c| {
            let eu = cell_strain(mesh, u, c);
            let ev = cell_strain(mesh, v, c);
            (a * eu.0).dot(&ev.0) * mesh.cell_volume(c)
        })
        .collect();
    parts.iter().sum()
}

/// `∫ F(x, u(x))` over the selected cells with the quadratic rule.
pub fn integrate(
    mesh: &Mesh,
    u: &StateField,
    cells: Cells<'_>,
    f: impl Fn(&Point, &StateColumn) -> f64 + Sync,
) -> f64 {
    let list = cells.list(mesh);
    let parts: Vec<f64> = list
        .par_iter()
        .map(|&c| {
            let p = mesh.cell_points(c);
            let t = mesh.cells[c];
            let vol = mesh.cell_volume(c);
            tet_quadrature()
                .iter()
                .map(|(bary, w)| {
                    let x = p[0] * bary[0] + p[1] * bary[1] + p[2] * bary[2] + p[3] * bary[3];
                    let mut val = StateColumn::zeros();
                    for k in 0..4 {
                        val.0 += u.node(t[k]).0 * bary[k];
                    }
                    w * vol * f(&x, &val)
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum()
}

/// Value of `u` at `x` by barycentric interpolation.
pub fn evaluate_at(mesh: &Mesh, u: &StateField, x: &Point) -> Option<StateColumn> {
    let c = mesh.locate(x)?;
    let p = mesh.cell_points(c);
    let g = cell_geometry(mesh, c);
    let mut val = StateColumn::zeros();
    for k in 0..4 {
        let phi = if k == 0 {
            1.0 - (1..4).map(|j| g.grads[j].dot(&(x - p[0]))).sum::<f64>()
        } else {
            g.grads[k].dot(&(x - p[0]))
        };
        val.0 += u.node(mesh.cells[c][k]).0 * phi;
    }
    Some(val)
}

/// State and strain at `center` from a volume-weighted least-squares fit of
/// an affine field to the cell-centroid values of `u`. With `radius = None`
/// the patch radius is three diameters of the cell containing the centre.
pub fn recover_affine(
    mesh: &Mesh,
    u: &StateField,
    center: &Point,
    radius: Option<f64>,
) -> Result<(StateColumn, StrainColumn), Error> {
    let mut r = match radius {
        Some(r) => r,
        None => {
            let c = mesh
                .locate(center)
                .ok_or_else(|| Error::Invariant("recovery point outside the mesh".into()))?;
            let p = mesh.cell_points(c);
            let mut d: f64 = 0.0;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    d = d.max((p[i] - p[j]).norm());
                }
            }
            3.0 * d
        }
    };
    for _ in 0..8 {
        let cells = mesh.cells_within(center, r);
        if cells.len() >= 8 {
            let mut normal = Matrix4::<f64>::zeros();
            let mut rhs = SMatrix::<f64, 4, 4>::zeros();
            for &c in &cells {
                let w = mesh.cell_volume(c);
                let x = mesh.cell_centroid(c) - center;
                let basis = Vector4::new(1.0, x[0], x[1], x[2]);
                let t = mesh.cells[c];
                let mut val = Vector4::zeros();
                for n in t {
                    val += u.node(n).0 * 0.25;
                }
                normal += basis * basis.transpose() * w;
                rhs += basis * val.transpose() * w;
            }
            if let Some(inv) = normal.try_inverse() {
                // coef row 0: value; rows 1..4: gradient components
                let coef = inv * rhs;
                let value = StateColumn(coef.row(0).transpose());
                let mut grad = SMatrix::<f64, 4, 3>::zeros();
                for comp in 0..4 {
                    for k in 0..3 {
                        grad[(comp, k)] = coef[(k + 1, comp)];
                    }
                }
                return Ok((value, crate::voigt::strain_from_gradient(&grad)));
            }
        }
        r *= 1.5;
    }
    Err(Error::Invariant("strain recovery patch is degenerate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::Preset;
    use crate::mesh::mesh_cube;
    use crate::voigt::linear_field;
    use nalgebra::SVector;

    #[test]
    fn rigid_modes_in_kernel() {
        let mesh = mesh_cube(2).unwrap();
        let k = assemble_matrix(&mesh, &Preset::SyntheticCoupled.tensor().full());
        for r in 0..7 {
            let u = StateField::interpolate(&mesh, |x| crate::voigt::rigid_matrix(x).column(r).into_owned());
            let ku = k.matvec(&u.0);
            assert!(ku.iter().all(|v| v.abs() < 1e-13), "mode {r}");
        }
    }

    #[test]
    fn linear_fields_have_exact_strain() {
        let mesh = mesh_cube(2).unwrap();
        let e = SVector::<f64, 9>::from_fn(|i, _| 0.1 * i as f64 - 0.3);
        let u = StateField::interpolate(&mesh, |x| linear_field(x) * e);
        for c in 0..mesh.num_cells() {
            assert!((cell_strain(&mesh, &u, c).0 - e).norm() < 1e-13);
        }
        let (val, strain) = recover_affine(&mesh, &u, &Point::new(0.1, 0.0, 0.0), None).unwrap();
        assert!((strain.0 - e).norm() < 1e-12);
        assert!((val.0 - linear_field(&Point::new(0.1, 0.0, 0.0)) * e).norm() < 1e-12);
    }

    #[test]
    fn form_matches_matrix() {
        let mesh = mesh_cube(2).unwrap();
        let a = Preset::SyntheticCoupled.tensor().full();
        let k = assemble_matrix(&mesh, &a);
        let u = StateField::interpolate(&mesh, |x| Vector4::new(x[0] * x[1], x[2].sin(), x[0], x[1] * x[1]));
        let v = StateField::interpolate(&mesh, |x| Vector4::new(x[2], x[0] * x[2], x[1].cos(), x[0]));
        let direct = eval_form(&mesh, &a, &u, &v, Cells::All);
        let via = v.dot(&k.matvec(&u.0));
        assert!((direct - via).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn quadrature_integrates_quadratics() {
        let mesh = mesh_cube(3).unwrap();
        let u = StateField::interpolate(&mesh, |x| Vector4::new(x[0] + 1.0, x[1], 0.0, 0.0));
        // ∫ |u|² over the unit cube: ∫ (x+1)² + y² = 1 + 1/12 + 1/12
        let val = integrate(&mesh, &u, Cells::All, |_, s| s.0.norm_squared());
        assert!((val - (1.0 + 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn surface_load_totals() {
        let mesh = mesh_cube(4).unwrap();
        let loads = LoadSet::default().with_surface(&[CubeFace::ZPlus], VectorField::constant([0.0, 0.0, -2.0, 1.0]));
        let b = assemble_load(&mesh, &loads);
        let fz: f64 = b.iter().skip(2).step_by(4).sum();
        let q: f64 = b.iter().skip(3).step_by(4).sum();
        assert!((fz + 2.0).abs() < 1e-12);
        assert!((q - 1.0).abs() < 1e-12);
    }
}
