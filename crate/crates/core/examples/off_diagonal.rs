//! Targets with b12 = +0.1 and -0.1 give mirror-image inclusions.
//!
//! `cargo run --release --example off_diagonal`

use microshape::coeff::SigmaPair;
use microshape::geometry::{sup_distance, RadialShape};
use microshape::homogenize::TargetTensor;
use microshape::mesh::Case;
use microshape::optimize::{minimize, MatchingProblem, OptimizeConfig};
use microshape::report::shape_svg;

fn main() -> microshape::Result<()> {
    let config = OptimizeConfig {
        level: 5,
        ..OptimizeConfig::default()
    };
    let start = RadialShape::circle(16, 0.25)?;
    let mut finals = Vec::new();
    for b12 in [0.1, -0.1] {
        let problem = MatchingProblem {
            case: Case::Mixture,
            sigma: SigmaPair::constants(1.0, 10.0),
            target: TargetTensor::new(1.4, b12, 1.4),
        };
        let record = minimize(&start, &problem, &config)?;
        println!("b12 = {b12:+}: {} after {} steps, J = {:.2e}", record.termination, record.accepted_steps(), record.last().objective);
        let shape = record.final_shape();
        let name = if b12 > 0.0 { "offdiag_plus.svg" } else { "offdiag_minus.svg" };
        std::fs::write(name, shape_svg(&shape, false))?;
        finals.push(shape);
    }
    let d = sup_distance(&finals[0], &finals[1].mirrored())?;
    println!("sup distance between the +0.1 shape and the mirrored -0.1 shape: {d:.2e}");
    Ok(())
}
