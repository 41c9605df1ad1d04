//! Convergence of the coupled solver on a smooth manufactured solution.

use nalgebra::Vector4;
use piezotopo::manufactured::{h1_seminorm_error, solve_dirichlet, Exact};
use piezotopo::material::Preset;
use piezotopo::mesh::{mesh_cube, Point};
use std::sync::Arc;

fn main() -> Result<(), piezotopo::Error> {
    let material = Preset::SyntheticCoupled.tensor();
    let u: Exact = Arc::new(|x: &Point| {
        Vector4::new(
            (x[0] + 0.3 * x[1]).sin(),
            (2.0 * x[2]).cos() * x[0],
            (x[0] * x[1] + x[2]).exp() * 0.2,
            (1.5 * x[1] - x[2]).sin(),
        )
    });
    let mut prev: Option<(f64, f64)> = None;
    for n in [2, 4, 8, 16] {
        let mesh = mesh_cube(n)?;
        let uh = solve_dirichlet(&mesh, &material, u.clone())?;
        let e = h1_seminorm_error(&mesh, &uh, u.as_ref());
        let h = 1.0 / n as f64;
        let rate = prev.map(|(h0, e0)| (e0 / e).ln() / (h0 / h).ln());
        println!("n = {n:2}: H1 error {e:.3e}  rate {}", rate.map_or("-".into(), |r| format!("{r:.3}")));
        prev = Some((h, e));
    }
    Ok(())
}
