//! Effective conductivity of a circular inclusion with its Voigt-Reuss bounds.
//!
//! `cargo run --release --example effective_tensor -- [level]`

use microshape::coeff::SigmaPair;
use microshape::geometry::RadialShape;
use microshape::homogenize::CellState;
use microshape::mesh::Case;

fn main() -> microshape::Result<()> {
    let level = std::env::args().nth(1).map_or(5, |s| s.parse().expect("level"));
    let shape = RadialShape::circle(8, 0.25)?;
    let sigma = SigmaPair::constants(1.0, 10.0);
    let state = CellState::solve(&shape, Case::Mixture, level, &sigma, None)?;
    let t = &state.tensor;
    let (lower, upper) = t.bounds.expect("mixture cells carry bounds");
    println!("level {level}: {} triangles", state.mesh.triangles.len());
    println!("A = [[{:.10}, {:.3e}], [{:.3e}, {:.10}]]", t.a11, t.a12, t.a21, t.a22);
    println!("Reuss {lower:.6} <= eigenvalues {:?} <= Voigt {upper:.6}", t.eigenvalues());
    println!("CG iterations {}", state.solver_stats().iterations);
    Ok(())
}
