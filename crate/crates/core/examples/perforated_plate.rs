//! Perforated plate: the hole shape is tuned to the target diag(0.8, 0.6).
//!
//! `cargo run --release --example perforated_plate`

use microshape::coeff::{CoefficientField, SigmaPair};
use microshape::geometry::RadialShape;
use microshape::homogenize::{CellState, TargetTensor};
use microshape::mesh::Case;
use microshape::optimize::{minimize, MatchingProblem, OptimizeConfig};

fn main() -> microshape::Result<()> {
    let sigma = SigmaPair::perforated(CoefficientField::Constant(1.0));
    let start = RadialShape::circle(16, 0.25)?;
    let base = CellState::solve(&start, Case::Perforated, 5, &sigma, None)?;
    println!("circular hole: a11 = a22 = {:.8}", base.tensor.a11);
    let problem = MatchingProblem {
        case: Case::Perforated,
        sigma,
        target: TargetTensor::diagonal(0.8, 0.6),
    };
    let config = OptimizeConfig {
        level: 5,
        ..OptimizeConfig::default()
    };
    let record = minimize(&start, &problem, &config)?;
    let last = record.last();
    println!("{} after {} steps: a11 = {:.8}, a22 = {:.8}", record.termination, record.accepted_steps(), last.a11, last.a22);
    std::fs::write("perforated_history.csv", record.history_csv())?;
    Ok(())
}
