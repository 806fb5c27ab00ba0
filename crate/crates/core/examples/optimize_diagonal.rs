//! Steepest descent from a circle to the anisotropic target diag(1.5, 1.4).
//!
//! `cargo run --release --example optimize_diagonal`

use microshape::coeff::SigmaPair;
use microshape::geometry::RadialShape;
use microshape::homogenize::TargetTensor;
use microshape::mesh::Case;
use microshape::optimize::{minimize, MatchingProblem, OptimizeConfig};

fn main() -> microshape::Result<()> {
    let problem = MatchingProblem {
        case: Case::Mixture,
        sigma: SigmaPair::constants(1.0, 10.0),
        target: TargetTensor::diagonal(1.5, 1.4),
    };
    let config = OptimizeConfig {
        level: 5,
        ..OptimizeConfig::default()
    };
    let record = minimize(&RadialShape::circle(16, 0.25)?, &problem, &config)?;
    for r in &record.history {
        println!("{:>3}  J = {:.3e}  |g| = {:.3e}  a11 = {:.8}  a22 = {:.8}", r.iter, r.objective, r.gradient_norm, r.a11, r.a22);
    }
    let c = &record.last().coeffs;
    println!("{}; r(phi) = {:.5} + {:.5} cos 2phi + {:.5} cos 4phi + ...", record.termination, c[0], c[3], c[7]);
    Ok(())
}
