//! Tetrahedral meshes: the unit cube, the unit cube with a small graded
//! void, its filled twin, and truncated exterior shells around a void.
//!
//! Void meshes are built from a cubed sphere. Directions are indexed by the
//! surface lattice of an index cube `[0, m]³`; nodes sit on rays through
//! the origin, one per radial layer. Every hexahedron between two layers
//! is split into six tetrahedra along its diagonal from the lowest to the
//! highest corner in global index order, which keeps the split conforming
//! across panel edges and against the filled core.

use crate::error::Error;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};

pub type Point = Vector3<f64>;

/// Role of a boundary facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Homogeneous Dirichlet part of the outer boundary (the bottom face).
    Clamped,
    /// Outer boundary carrying surface loads.
    Loaded,
    /// Boundary of the void.
    VoidBoundary,
    /// Artificial outer sphere of an exterior shell.
    OuterTruncation,
}

/// Faces of the unit cube `[-1/2, 1/2]³`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeFace {
    XMinus,
    XPlus,
    YMinus,
    YPlus,
    ZMinus,
    ZPlus,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::XMinus,
        CubeFace::XPlus,
        CubeFace::YMinus,
        CubeFace::YPlus,
        CubeFace::ZMinus,
        CubeFace::ZPlus,
    ];

    pub fn outward_normal(self) -> Point {
        match self {
            CubeFace::XMinus => Point::new(-1.0, 0.0, 0.0),
            CubeFace::XPlus => Point::new(1.0, 0.0, 0.0),
            CubeFace::YMinus => Point::new(0.0, -1.0, 0.0),
            CubeFace::YPlus => Point::new(0.0, 1.0, 0.0),
            CubeFace::ZMinus => Point::new(0.0, 0.0, -1.0),
            CubeFace::ZPlus => Point::new(0.0, 0.0, 1.0),
        }
    }

    /// Face whose plane contains `x`, if any.
    pub fn containing(x: &Point) -> Option<CubeFace> {
        const TOL: f64 = 1e-9;
        CubeFace::ALL
            .into_iter()
            .find(|f| (f.outward_normal().dot(x) - 0.5).abs() < TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    /// Node indices ordered so that the right-hand normal points out of
    /// the domain.
    pub nodes: [usize; 3],
    pub tag: BoundaryTag,
}

/// Unstructured linear tetrahedral mesh.
#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Positively oriented tetrahedra.
    pub cells: Vec<[usize; 4]>,
    pub facets: Vec<Facet>,
}

/// Star-shaped void given by its radial function on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VoidShape {
    /// Unit ball.
    Sphere,
    /// Ellipsoid with the given semi-axes.
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Ball perturbed by `amplitude · cos(lobes · azimuth) · sin²(polar)`.
    Star { amplitude: f64, lobes: u32 },
}

impl VoidShape {
    /// Distance from the origin to the boundary along unit direction `e`.
    pub fn radius(&self, e: &Point) -> f64 {
        match *self {
            VoidShape::Sphere => 1.0,
            VoidShape::Ellipsoid { a, b, c } => {
                1.0 / ((e[0] / a).powi(2) + (e[1] / b).powi(2) + (e[2] / c).powi(2)).sqrt()
            }
            VoidShape::Star { amplitude, lobes } => {
                let phi = e[1].atan2(e[0]);
                let sin2 = 1.0 - e[2] * e[2];
                1.0 + amplitude * (lobes as f64 * phi).cos() * sin2
            }
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            VoidShape::Sphere => Ok(()),
            VoidShape::Ellipsoid { a, b, c } => {
                if a > 0.0 && b > 0.0 && c > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config("ellipsoid semi-axes must be positive".into()))
                }
            }
            VoidShape::Star { amplitude, .. } => {
                if amplitude.abs() < 0.5 {
                    Ok(())
                } else {
                    Err(Error::Config("star amplitude must be below 0.5".into()))
                }
            }
        }
    }

    /// Largest radius (sampled).
    pub fn max_radius(&self) -> f64 {
        match *self {
            VoidShape::Sphere => 1.0,
            VoidShape::Ellipsoid { a, b, c } => a.max(b).max(c),
            VoidShape::Star { amplitude, .. } => 1.0 + amplitude.abs(),
        }
    }
}

/// Resolution of the cubed-sphere meshes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshParams {
    /// Cells per panel edge; must be even.
    pub panel: usize,
    /// Ratio between consecutive layer radii near the void. Defaults to
    /// `1 + π / (2 panel)`, which keeps cells roughly isotropic.
    #[serde(default)]
    pub grading: Option<f64>,
    /// Radius up to which layers keep the void's shape, as a fraction of
    /// the cube's half width.
    #[serde(default = "default_core_fraction")]
    pub core_fraction: f64,
    /// Layer ratio of exterior shells beyond four void radii, where the
    /// fields are smooth and radially elongated cells suffice.
    #[serde(default = "default_outer_grading")]
    pub outer_grading: f64,
}

fn default_outer_grading() -> f64 {
    1.3
}

fn default_core_fraction() -> f64 {
    0.4
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            panel: 12,
            grading: None,
            core_fraction: default_core_fraction(),
            outer_grading: default_outer_grading(),
        }
    }
}

impl MeshParams {
    pub fn with_panel(panel: usize) -> Self {
        Self { panel, ..Self::default() }
    }

    pub fn ratio(&self) -> f64 {
        self.grading.unwrap_or(1.0 + PI / (2.0 * self.panel as f64))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.panel < 2 || self.panel % 2 != 0 {
            return Err(Error::Config("panel resolution must be even and at least 2".into()));
        }
        let q = self.ratio();
        if !(q > 1.0 && q < 2.0) {
            return Err(Error::Config("grading ratio must lie in (1, 2)".into()));
        }
        if !(self.outer_grading > 1.0 && self.outer_grading < 2.0) {
            return Err(Error::Config("outer grading must lie in (1, 2)".into()));
        }
        if !(self.core_fraction > 0.0 && self.core_fraction < 1.0) {
            return Err(Error::Config("core fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn tet_volume(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_points(&self, c: usize) -> [Point; 4] {
        let t = self.cells[c];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]], self.nodes[t[3]]]
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        tet_volume(&p[0], &p[1], &p[2], &p[3])
    }

    pub fn cell_centroid(&self, c: usize) -> Point {
        let p = self.cell_points(c);
        (p[0] + p[1] + p[2] + p[3]) / 4.0
    }

    pub fn volume(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_volume(c)).sum()
    }

    pub fn facet_points(&self, f: &Facet) -> [Point; 3] {
        [self.nodes[f.nodes[0]], self.nodes[f.nodes[1]], self.nodes[f.nodes[2]]]
    }

    /// Outward normal scaled by the facet area.
    pub fn facet_area_normal(&self, f: &Facet) -> Point {
        let p = self.facet_points(f);
        (p[1] - p[0]).cross(&(p[2] - p[0])) * 0.5
    }

    pub fn facet_area(&self, f: &Facet) -> f64 {
        self.facet_area_normal(f).norm()
    }

    pub fn facet_centroid(&self, f: &Facet) -> Point {
        let p = self.facet_points(f);
        (p[0] + p[1] + p[2]) / 3.0
    }

    pub fn facets_tagged(&self, tag: BoundaryTag) -> impl Iterator<Item = &Facet> {
        self.facets.iter().filter(move |f| f.tag == tag)
    }

    pub fn tagged_area(&self, tag: BoundaryTag) -> f64 {
        self.facets_tagged(tag).map(|f| self.facet_area(f)).sum()
    }

    /// Volume enclosed by the void boundary, from the divergence theorem.
    pub fn void_volume(&self) -> f64 {
        -self
            .facets_tagged(BoundaryTag::VoidBoundary)
            .map(|f| self.facet_centroid(f).dot(&self.facet_area_normal(f)))
            .sum::<f64>()
            / 3.0
    }

    /// Nodes lying on facets with the given tag, sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets_tagged(tag).flat_map(|f| f.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Smallest dihedral angle over all cells, in degrees.
    pub fn min_dihedral_deg(&self) -> f64 {
        const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
        let mut min = f64::INFINITY;
        for c in 0..self.cells.len() {
            let p = self.cell_points(c);
            let n: Vec<Point> = FACES
                .iter()
                .map(|f| (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]])).normalize())
                .collect();
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let cosang = (-n[i].dot(&n[j])).clamp(-1.0, 1.0);
                    min = min.min(cosang.acos().to_degrees());
                }
            }
        }
        min
    }

    /// Check positivity of all cells and consistency of facet orientation.
    pub fn check(&self) -> Result<(), Error> {
        for c in 0..self.cells.len() {
            if self.cell_volume(c) <= 0.0 {
                return Err(Error::Mesh(format!("cell {c} is degenerate or inverted")));
            }
        }
        let total: Point = self.facets.iter().map(|f| self.facet_area_normal(f)).sum();
        let scale: f64 = self.facets.iter().map(|f| self.facet_area(f)).sum();
        if total.norm() > 1e-9 * scale {
            return Err(Error::Mesh("boundary facets do not close".into()));
        }
        Ok(())
    }

    /// Cells whose centroid lies within `radius` of `center`.
    pub fn cells_within(&self, center: &Point, radius: f64) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&c| (self.cell_centroid(c) - center).norm() <= radius)
            .collect()
    }

    /// Cell containing `x`, if any (brute force).
    pub fn locate(&self, x: &Point) -> Option<usize> {
        (0..self.cells.len()).find(|&c| {
            let p = self.cell_points(c);
            let v = self.cell_volume(c);
            let tol = -1e-12 * v;
            tet_volume(x, &p[1], &p[2], &p[3]) >= tol
                && tet_volume(&p[0], x, &p[2], &p[3]) >= tol
                && tet_volume(&p[0], &p[1], x, &p[3]) >= tol
                && tet_volume(&p[0], &p[1], &p[2], x) >= tol
        })
    }

    /// Rebuild the facet list from the cells; `classify` receives the
    /// facet's node indices.
    fn extract_facets(&mut self, classify: impl Fn(&Mesh, &[usize; 3]) -> BoundaryTag) {
        const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
        let mut seen: HashMap<[usize; 3], ([usize; 3], u32)> = HashMap::new();
        for t in &self.cells {
            for f in FACES {
                let tri = [t[f[0]], t[f[1]], t[f[2]]];
                let mut key = tri;
                key.sort_unstable();
                seen.entry(key).and_modify(|e| e.1 += 1).or_insert((tri, 1));
            }
        }
        let mut boundary: Vec<[usize; 3]> =
            seen.into_values().filter(|(_, n)| *n == 1).map(|(tri, _)| tri).collect();
        boundary.sort_unstable();
        self.facets = boundary
            .into_iter()
            .map(|tri| Facet { nodes: tri, tag: classify(self, &tri) })
            .collect();
    }

    fn push_tet(&mut self, mut t: [usize; 4]) {
        let p = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]], self.nodes[t[3]]];
        if tet_volume(&p[0], &p[1], &p[2], &p[3]) < 0.0 {
            t.swap(2, 3);
        }
        self.cells.push(t);
    }

    /// Split a hexahedron given by its corners `h[u + 2v + 4w]` into six
    /// tetrahedra along the diagonal `h[0]`–`h[7]`.
    fn push_hex(&mut self, h: [usize; 8]) {
        const PERMS: [[usize; 3]; 6] =
            [[1, 2, 4], [1, 4, 2], [2, 1, 4], [2, 4, 1], [4, 1, 2], [4, 2, 1]];
        for p in PERMS {
            let a = p[0];
            let b = a + p[1];
            self.push_tet([h[0], h[a], h[b], h[7]]);
        }
    }

    /// Uniformly scaled copy.
    pub fn scaled(&self, s: f64) -> Mesh {
        Mesh {
            nodes: self.nodes.iter().map(|x| x * s).collect(),
            cells: self.cells.clone(),
            facets: self.facets.clone(),
        }
    }
}

fn classify_cube_facet(m: &Mesh, tri: &[usize; 3]) -> BoundaryTag {
    let c = (m.nodes[tri[0]] + m.nodes[tri[1]] + m.nodes[tri[2]]) / 3.0;
    match CubeFace::containing(&c) {
        Some(CubeFace::ZMinus) => BoundaryTag::Clamped,
        Some(_) => BoundaryTag::Loaded,
        None => BoundaryTag::VoidBoundary,
    }
}

/// Structured mesh of `[-1/2, 1/2]³` with `n` cells per edge: `(n+1)³`
/// nodes and `6n³` tetrahedra. The bottom face is clamped.
pub fn mesh_cube(n: usize) -> Result<Mesh, Error> {
    if n == 0 {
        return Err(Error::Config("cube subdivision must be positive".into()));
    }
    let id = |i: usize, j: usize, k: usize| i + (n + 1) * (j + (n + 1) * k);
    let mut m = Mesh::default();
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let s = |a: usize| a as f64 / n as f64 - 0.5;
                m.nodes.push(Point::new(s(i), s(j), s(k)));
            }
        }
    }
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let mut h = [0; 8];
                for (l, hl) in h.iter_mut().enumerate() {
                    *hl = id(i + (l & 1), j + ((l >> 1) & 1), k + ((l >> 2) & 1));
                }
                m.push_hex(h);
            }
        }
    }
    m.extract_facets(classify_cube_facet);
    Ok(m)
}

/// Surface lattice of the index cube `[0, m]³`.
struct CubedSphere {
    m: usize,
    /// Lattice point of every surface index.
    points: Vec<[usize; 3]>,
    /// Surface index of a lattice point, `usize::MAX` for interior points.
    lookup: Vec<usize>,
}

impl CubedSphere {
    fn new(m: usize) -> Self {
        let n = m + 1;
        let mut lookup = vec![usize::MAX; n * n * n];
        let mut points = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let on = [i, j, k].iter().any(|&a| a == 0 || a == m);
                    if on {
                        lookup[i + n * (j + n * k)] = points.len();
                        points.push([i, j, k]);
                    }
                }
            }
        }
        Self { m, points, lookup }
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn index(&self, q: [usize; 3]) -> usize {
        let n = self.m + 1;
        self.lookup[q[0] + n * (q[1] + n * q[2])]
    }

    /// Point on the cube `[-1, 1]³` (equiangular) and the unit direction of a
    /// lattice point `p ∈ [-1, 1]³`, projected radially onto the surface.
    fn direction(p: &Point) -> (Point, Point) {
        let s = p.amax();
        let c = Point::new(
            (FRAC_PI_4 * p[0] / s).tan(),
            (FRAC_PI_4 * p[1] / s).tan(),
            (FRAC_PI_4 * p[2] / s).tan(),
        );
        let e = c.normalize();
        (c, e)
    }

    fn unit(&self, q: [usize; 3]) -> Point {
        let m = self.m as f64;
        Point::new(
            2.0 * q[0] as f64 / m - 1.0,
            2.0 * q[1] as f64 / m - 1.0,
            2.0 * q[2] as f64 / m - 1.0,
        )
    }

    /// Surface quads: the four corners in `(u, v)` order along the two
    /// in-panel axes, increasing in global index.
    fn quads(&self) -> Vec<[usize; 4]> {
        let m = self.m;
        let mut quads = Vec::new();
        for axis in 0..3 {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let (a, b) = (a.min(b), a.max(b));
            for side in [0, m] {
                for i in 0..m {
                    for j in 0..m {
                        let mut corners = [0; 4];
                        for (l, cl) in corners.iter_mut().enumerate() {
                            let mut q = [0; 3];
                            q[axis] = side;
                            q[a] = i + (l & 1);
                            q[b] = j + ((l >> 1) & 1);
                            *cl = self.index(q);
                        }
                        quads.push(corners);
                    }
                }
            }
        }
        quads
    }
}

/// Radii of every layer along one ray.
type LayerRule<'a> = dyn Fn(&Point, &Point) -> Vec<f64> + 'a;

/// Layered mesh between an inner star-shaped surface and an outer surface,
/// optionally filled with a core. Layer radii come from `rule(c, e)`.
fn layered_mesh(
    sphere: &CubedSphere,
    rule: &LayerRule<'_>,
    fill_core: Option<&dyn Fn(&Point) -> f64>,
) -> Mesh {
    let ns = sphere.len();
    let mut mesh = Mesh::default();
    let mut radii = Vec::with_capacity(ns);
    let mut dirs = Vec::with_capacity(ns);
    for q in &sphere.points {
        let (c, e) = CubedSphere::direction(&sphere.unit(*q));
        radii.push(rule(&c, &e));
        dirs.push(e);
    }
    let layers = radii[0].len();
    for l in 0..layers {
        for s in 0..ns {
            mesh.nodes.push(dirs[s] * radii[s][l]);
        }
    }
    let quads = sphere.quads();
    for l in 0..layers - 1 {
        for quad in &quads {
            let mut h = [0; 8];
            for (idx, hv) in h.iter_mut().enumerate() {
                let corner = quad[idx & 3];
                let layer = l + (idx >> 2);
                *hv = layer * ns + corner;
            }
            mesh.push_hex(h);
        }
    }
    if let Some(inner_radius) = fill_core {
        fill_void(&mut mesh, sphere, &quads, inner_radius);
    }
    mesh
}

/// Fill the region inside layer 0 with a straight inner cube of half
/// width `CORE_CUBE` (relative to the void) and a few layers blending its
/// surface into the void boundary.
fn fill_void(
    mesh: &mut Mesh,
    sphere: &CubedSphere,
    quads: &[[usize; 4]],
    inner_radius: &dyn Fn(&Point) -> f64,
) {
    const CORE_CUBE: f64 = 0.45;
    let m = sphere.m;
    let n = m + 1;
    let ns = sphere.len();
    let blend = (m / 4).max(1);
    let mut cube_ids = vec![0; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = sphere.unit([i, j, k]);
                let c = p.map(|v| (FRAC_PI_4 * v).tan());
                let x = if c.norm() == 0.0 {
                    Point::zeros()
                } else {
                    c * (CORE_CUBE * inner_radius(&c.normalize()))
                };
                cube_ids[i + n * (j + n * k)] = mesh.nodes.len();
                mesh.nodes.push(x);
            }
        }
    }
    let mut layer_ids: Vec<Vec<usize>> = Vec::with_capacity(blend + 1);
    layer_ids.push(sphere.points.iter().map(|q| cube_ids[q[0] + n * (q[1] + n * q[2])]).collect());
    for l in 1..blend {
        let t = l as f64 / blend as f64;
        let mut ids = Vec::with_capacity(ns);
        for q in &sphere.points {
            let (c, e) = CubedSphere::direction(&sphere.unit(*q));
            let r = ((1.0 - t) * CORE_CUBE * c.norm() + t) * inner_radius(&e);
            ids.push(mesh.nodes.len());
            mesh.nodes.push(e * r);
        }
        layer_ids.push(ids);
    }
    layer_ids.push((0..ns).collect());
    for l in 0..blend {
        for quad in quads {
            let mut h = [0; 8];
            for (idx, hv) in h.iter_mut().enumerate() {
                *hv = layer_ids[l + (idx >> 2)][quad[idx & 3]];
            }
            mesh.push_hex(h);
        }
    }
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let mut h = [0; 8];
                for (l, hl) in h.iter_mut().enumerate() {
                    let (a, b, c) = (i + (l & 1), j + ((l >> 1) & 1), k + ((l >> 2) & 1));
                    *hl = cube_ids[a + n * (b + n * c)];
                }
                mesh.push_hex(h);
            }
        }
    }
}

/// Radii for the cube-with-void meshes: layers keep the void's shape and
/// grow geometrically up to the core radius, then blend into the cube.
fn cube_layer_radii(
    shape: &VoidShape,
    params: &MeshParams,
    h: f64,
) -> impl Fn(&Point, &Point) -> Vec<f64> {
    let q = params.ratio();
    let rho_max = shape.max_radius();
    let core = params.core_fraction * 0.5;
    let inner = ((core / (h * rho_max)).ln() / q.ln()).floor().max(0.0) as usize;
    let reach = h * rho_max * q.powi(inner as i32);
    let blend = (((0.5 * 1.25) / reach).ln() / q.ln()).round().max(2.0) as usize;
    let shape = *shape;
    move |c: &Point, e: &Point| {
        let start = h * shape.radius(e);
        let mut r: Vec<f64> = (0..=inner).map(|l| start * q.powi(l as i32)).collect();
        let from = r[inner];
        let to = c.norm() * 0.5;
        for l in 1..=blend {
            let t = l as f64 / blend as f64;
            r.push(from.powf(1.0 - t) * to.powf(t));
        }
        r
    }
}

/// Unit cube with the void `h · shape` removed around the origin. The
/// graded layers near the void are the same template at every `h`.
pub fn mesh_cube_with_void(params: &MeshParams, shape: &VoidShape, h: f64) -> Result<Mesh, Error> {
    validate_void(params, shape, h)?;
    let sphere = CubedSphere::new(params.panel);
    let rule = cube_layer_radii(shape, params, h);
    let mut mesh = layered_mesh(&sphere, &rule, None);
    mesh.extract_facets(classify_cube_facet);
    Ok(mesh)
}

/// The mesh of [`mesh_cube_with_void`] with the void filled. Nodes and
/// cells of the perforated mesh come first, in the same order.
pub fn mesh_cube_filled(params: &MeshParams, shape: &VoidShape, h: f64) -> Result<Mesh, Error> {
    validate_void(params, shape, h)?;
    let sphere = CubedSphere::new(params.panel);
    let rule = cube_layer_radii(shape, params, h);
    let shape_c = *shape;
    let inner = move |e: &Point| h * shape_c.radius(e);
    let mut mesh = layered_mesh(&sphere, &rule, Some(&inner));
    mesh.extract_facets(classify_cube_facet);
    Ok(mesh)
}

fn validate_void(params: &MeshParams, shape: &VoidShape, h: f64) -> Result<(), Error> {
    params.validate()?;
    shape.validate()?;
    if !(h > 0.0 && h * shape.max_radius() < 0.25) {
        return Err(Error::Config(format!(
            "void scale {h} must be positive and keep the void inside the inner half of the cube"
        )));
    }
    Ok(())
}

/// Layer radii of an exterior shell before shaping, in units of the void
/// radius: ratio `grading` up to four, then the larger of both ratios up to
/// `outer_radius`.
fn shell_layer_bases(params: &MeshParams, outer_radius: f64) -> Vec<f64> {
    const NEAR: f64 = 4.0;
    let q = params.ratio();
    let q_out = params.outer_grading.max(q);
    let stop = NEAR.min(outer_radius / q_out);
    let near = (stop.ln() / q.ln()).floor() as usize;
    let mut bases: Vec<f64> = (0..=near).map(|l| q.powi(l as i32)).collect();
    let from = bases[near];
    let far = ((outer_radius / from).ln() / q_out.ln()).ceil().max(1.0) as usize;
    bases.extend((1..=far).map(|l| from * (outer_radius / from).powf(l as f64 / far as f64)));
    bases
}

/// Shell between the boundary of `shape` and the sphere of radius
/// `outer_radius`. The inner boundary is tagged as the void, the outer one
/// as the truncation.
pub fn mesh_exterior_shell(
    params: &MeshParams,
    shape: &VoidShape,
    outer_radius: f64,
) -> Result<Mesh, Error> {
    params.validate()?;
    shape.validate()?;
    if outer_radius < 4.0 * shape.max_radius() {
        return Err(Error::Config(
            "truncation radius must be at least four times the void radius".into(),
        ));
    }
    // scaled by the void size so that the mesh of a scaled void is the
    // scaled mesh
    let scale = shape.max_radius();
    let bases = shell_layer_bases(params, outer_radius / scale);
    let layers = bases.len() - 1;
    let shape_c = *shape;
    let rule = move |_c: &Point, e: &Point| {
        let rho = shape_c.radius(e) / scale;
        bases
            .iter()
            .enumerate()
            .map(|(l, b)| scale * b * rho.powf(1.0 - l as f64 / layers as f64))
            .collect::<Vec<_>>()
    };
    let sphere = CubedSphere::new(params.panel);
    let mut mesh = layered_mesh(&sphere, &rule, None);
    let inner_count = sphere.len();
    mesh.extract_facets(move |_, tri| {
        if tri.iter().all(|&n| n < inner_count) {
            BoundaryTag::VoidBoundary
        } else {
            BoundaryTag::OuterTruncation
        }
    });
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cube_counts_and_volume() {
        let m = mesh_cube(3).unwrap();
        assert_eq!(m.num_nodes(), 64);
        assert_eq!(m.num_cells(), 162);
        assert_relative_eq!(m.volume(), 1.0, epsilon = 1e-12);
        m.check().unwrap();
        assert_relative_eq!(m.tagged_area(BoundaryTag::Clamped), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.tagged_area(BoundaryTag::Loaded), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn void_mesh_volume_and_conformity() {
        let p = MeshParams::with_panel(8);
        let h = 0.1;
        let m = mesh_cube_with_void(&p, &VoidShape::Sphere, h).unwrap();
        m.check().unwrap();
        let exact = 1.0 - 4.0 / 3.0 * PI * h.powi(3);
        assert!((m.volume() - exact).abs() < 0.02 * exact);
        // every facet is either on the cube or on the void
        let cube_area = m.tagged_area(BoundaryTag::Clamped) + m.tagged_area(BoundaryTag::Loaded);
        assert_relative_eq!(cube_area, 6.0, epsilon = 1e-9);
        let filled = mesh_cube_filled(&p, &VoidShape::Sphere, h).unwrap();
        filled.check().unwrap();
        assert_relative_eq!(filled.volume(), 1.0, epsilon = 1e-12);
        assert!(filled.facets_tagged(BoundaryTag::VoidBoundary).next().is_none());
        assert_eq!(&filled.nodes[..m.num_nodes()], &m.nodes[..]);
        assert_eq!(&filled.cells[..m.num_cells()], &m.cells[..]);
    }

    #[test]
    fn void_facets_do_not_depend_on_scale() {
        let p = MeshParams::with_panel(6);
        let a = mesh_cube_with_void(&p, &VoidShape::Sphere, 0.1).unwrap();
        let b = mesh_cube_with_void(&p, &VoidShape::Sphere, 0.05).unwrap();
        let count = |m: &Mesh| m.facets_tagged(BoundaryTag::VoidBoundary).count();
        assert_eq!(count(&a), count(&b));
        assert_eq!(count(&a), 6 * 6 * 6 * 2);
    }

    #[test]
    fn unit_ellipsoid_matches_sphere() {
        let p = MeshParams::with_panel(4);
        let a = mesh_cube_with_void(&p, &VoidShape::Sphere, 0.1).unwrap();
        let b = mesh_cube_with_void(&p, &VoidShape::Ellipsoid { a: 1.0, b: 1.0, c: 1.0 }, 0.1)
            .unwrap();
        assert_eq!(a.cells, b.cells);
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn exterior_shell_measures() {
        let p = MeshParams::with_panel(12);
        let m = mesh_exterior_shell(&p, &VoidShape::Sphere, 8.0).unwrap();
        m.check().unwrap();
        let inner = m.tagged_area(BoundaryTag::VoidBoundary);
        assert!((inner - 4.0 * PI).abs() < 0.02 * 4.0 * PI);
        let vol = 4.0 / 3.0 * PI * (512.0 - 1.0);
        assert!((m.volume() - vol).abs() < 0.02 * vol);
        assert!((m.void_volume() - 4.0 / 3.0 * PI).abs() < 0.02 * 4.0 / 3.0 * PI);
        let coarse = mesh_exterior_shell(&MeshParams::with_panel(6), &VoidShape::Sphere, 8.0).unwrap();
        let count = |m: &Mesh| m.facets_tagged(BoundaryTag::VoidBoundary).count();
        assert_eq!(count(&m), 4 * count(&coarse));
    }

    #[test]
    fn rejects_bad_truncation() {
        assert!(mesh_exterior_shell(&MeshParams::default(), &VoidShape::Sphere, 3.0).is_err());
        assert!(mesh_cube_with_void(&MeshParams::with_panel(5), &VoidShape::Sphere, 0.1).is_err());
    }

    #[test]
    fn mesh_quality() {
        let p = MeshParams::default();
        let shapes = [
            VoidShape::Sphere,
            VoidShape::Ellipsoid { a: 1.5, b: 1.0, c: 0.7 },
            VoidShape::Star { amplitude: 0.2, lobes: 3 },
        ];
        for s in shapes {
            let m = mesh_cube_filled(&p, &s, 0.08).unwrap();
            let d = m.min_dihedral_deg();
            assert!(d >= 5.0, "{s:?}: {d}");
            let e = mesh_exterior_shell(&p, &s, 12.0).unwrap();
            assert!(e.min_dihedral_deg() >= 5.0);
        }
    }
}
