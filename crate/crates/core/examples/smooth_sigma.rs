//! Optimization with a spatially varying inclusion conductivity.
//!
//! `cargo run --release --example smooth_sigma`

use microshape::coeff::{CoefficientField, SigmaPair};
use microshape::geometry::RadialShape;
use microshape::homogenize::TargetTensor;
use microshape::mesh::Case;
use microshape::optimize::{minimize, MatchingProblem, OptimizeConfig};

fn main() -> microshape::Result<()> {
    let sigma2 = CoefficientField::parse("5*(11/10 + cos(2*pi*x) + 4*(y-1/2)^2)")?;
    let report = sigma2.verify_bounds(0.1, 100.0);
    println!("sigma2 ranges over [{:.3}, {:.3}] on the probe grid", report.min, report.max);
    let problem = MatchingProblem {
        case: Case::Mixture,
        sigma: SigmaPair::mixture(CoefficientField::Constant(1.0), sigma2),
        target: TargetTensor::diagonal(1.4, 1.4),
    };
    let config = OptimizeConfig {
        level: 5,
        ..OptimizeConfig::default()
    };
    let record = minimize(&RadialShape::circle(16, 0.25)?, &problem, &config)?;
    let last = record.last();
    println!(
        "{} after {} steps: J = {:.2e}, A = [[{:.6}, {:.2e}], [., {:.6}]]",
        record.termination,
        record.accepted_steps(),
        last.objective,
        last.a11,
        last.a12,
        last.a22
    );
    Ok(())
}
