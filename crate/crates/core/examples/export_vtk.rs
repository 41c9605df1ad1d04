//! Write the intact and perforated solutions as legacy VTK files.

use piezotopo::commands::{run, Command};
use piezotopo::config::RunConfig;
use piezotopo::mesh::MeshParams;
use std::path::PathBuf;

fn main() -> Result<(), piezotopo::Error> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("vtk-out"));
    let cfg = RunConfig { mesh: MeshParams::with_panel(8), h: vec![0.15], ..RunConfig::default() };
    let dir = run(Command::ExportVtk, &cfg, &out)?;
    println!("wrote {}", dir.display());
    Ok(())
}
