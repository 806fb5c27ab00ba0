//! Different random starts reach the same isotropic tensor with different shapes.
//!
//! `cargo run --release --example non_uniqueness`

use microshape::coeff::SigmaPair;
use microshape::geometry::{sup_distance, RadialShape};
use microshape::homogenize::TargetTensor;
use microshape::mesh::Case;
use microshape::optimize::{minimize, MatchingProblem, OptimizeConfig};

fn main() -> microshape::Result<()> {
    let problem = MatchingProblem {
        case: Case::Mixture,
        sigma: SigmaPair::constants(1.0, 10.0),
        target: TargetTensor::diagonal(1.4, 1.4),
    };
    let config = OptimizeConfig {
        level: 5,
        ..OptimizeConfig::default()
    };
    let mut shapes = Vec::new();
    for seed in 1..=3 {
        let start = RadialShape::perturbed_circle(16, 0.25, 0.02, seed)?;
        let record = minimize(&start, &problem, &config)?;
        println!("seed {seed}: {} with J = {:.2e}", record.termination, record.last().objective);
        shapes.push(record.final_shape());
    }
    for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            println!("distance({}, {}) = {:.3e}", i + 1, j + 1, sup_distance(&shapes[i], &shapes[j])?);
        }
    }
    Ok(())
}
