//! Legacy ASCII VTK output of meshes and state fields.

use crate::fem::{cell_strain, StateField};
use crate::mesh::Mesh;
use std::fmt::Write;

const VTK_TETRA: u8 = 10;

/// A named nodal state field to attach to the grid.
pub struct NamedField<'a> {
    pub name: &'a str,
    pub field: &'a StateField,
}

/// Unstructured grid with, for every field, the displacement as point
/// vectors, the potential as point scalars, and per cell the strain tensor
/// and the potential gradient.
pub fn unstructured_grid(mesh: &Mesh, title: &str, fields: &[NamedField<'_>]) -> String {
    let mut s = String::new();
    let title = title.replace('\n', " ");
    writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", mesh.num_nodes()).unwrap();
    for x in &mesh.nodes {
        writeln!(s, "{:e} {:e} {:e}", x[0], x[1], x[2]).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.num_cells(), 5 * mesh.num_cells()).unwrap();
    for t in &mesh.cells {
        writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.num_cells()).unwrap();
    for _ in &mesh.cells {
        writeln!(s, "{VTK_TETRA}").unwrap();
    }
    if fields.is_empty() {
        return s;
    }
    writeln!(s, "POINT_DATA {}", mesh.num_nodes()).unwrap();
    for f in fields {
        writeln!(s, "VECTORS {}_displacement double", f.name).unwrap();
        for n in 0..mesh.num_nodes() {
            let v = f.field.node(n).0;
            writeln!(s, "{:e} {:e} {:e}", v[0], v[1], v[2]).unwrap();
        }
        writeln!(s, "SCALARS {}_potential double 1\nLOOKUP_TABLE default", f.name).unwrap();
        for n in 0..mesh.num_nodes() {
            writeln!(s, "{:e}", f.field.node(n).0[3]).unwrap();
        }
    }
    writeln!(s, "CELL_DATA {}", mesh.num_cells()).unwrap();
    for f in fields {
        writeln!(s, "TENSORS {}_strain double", f.name).unwrap();
        for c in 0..mesh.num_cells() {
            let e = cell_strain(mesh, f.field, c).0;
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let t = [
                e[0], r * e[5], r * e[4],
                r * e[5], e[1], r * e[3],
                r * e[4], r * e[3], e[2],
            ];
            let row: Vec<String> = t.iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        writeln!(s, "VECTORS {}_potential_gradient double", f.name).unwrap();
        for c in 0..mesh.num_cells() {
            let e = cell_strain(mesh, f.field, c).0;
            writeln!(s, "{:e} {:e} {:e}", e[6], e[7], e[8]).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_cube;
    use nalgebra::Vector4;

    #[test]
    fn header_and_counts() {
        let mesh = mesh_cube(1).unwrap();
        let u = StateField::interpolate(&mesh, |x| Vector4::new(x[0], 0.0, 0.0, x[2]));
        let s = unstructured_grid(&mesh, "cube", &[NamedField { name: "u", field: &u }]);
        assert!(s.starts_with("# vtk DataFile Version 3.0\ncube\nASCII\n"));
        assert!(s.contains("POINTS 8 double"));
        assert!(s.contains("CELLS 6 30"));
        assert!(s.contains("TENSORS u_strain double"));
        assert!(s.contains("1e0 0e0 0e0 0e0 0e0 0e0 0e0 0e0 0e0"));
        assert_eq!(s.lines().filter(|l| *l == "10").count(), 6);
    }
}
