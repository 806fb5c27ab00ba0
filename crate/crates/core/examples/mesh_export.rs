//! Builds the curved cell mesh for a wobbly inclusion and writes it as text.
//!
//! `cargo run --release --example mesh_export -- [level] [path]`

use microshape::geometry::RadialShape;
use microshape::mesh::{Case, CellMesh};

fn main() -> microshape::Result<()> {
    let mut args = std::env::args().skip(1);
    let level = args.next().map_or(2, |s| s.parse().expect("level"));
    let path = args.next().unwrap_or_else(|| "mesh.txt".into());
    let shape = RadialShape::from_coeffs(vec![0.25, 0.02, 0.0, 0.0, 0.03])?;
    for case in [Case::Mixture, Case::Perforated] {
        let mesh = CellMesh::build(&shape, case, level)?;
        println!(
            "{case:?}: {} macro patches, {} triangles, {} vertices, {} periodic dofs, {} interface edges",
            mesh.layout.patches.len(),
            mesh.triangles.len(),
            mesh.vertices.len(),
            mesh.dof_count,
            mesh.interface_edges.len()
        );
    }
    let mesh = CellMesh::build(&shape, Case::Mixture, level)?;
    std::fs::write(&path, mesh.export_text())?;
    println!("wrote {path}");
    Ok(())
}
