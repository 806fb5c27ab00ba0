//! Interface shape gradient against central differences of the full pipeline.
//!
//! `cargo run --release --example gradient_check -- [seed]`

use microshape::coeff::SigmaPair;
use microshape::geometry::RadialShape;
use microshape::homogenize::TargetTensor;
use microshape::mesh::Case;
use microshape::shapecalc::{evaluate, finite_difference_gradient, relative_l2_error, GradientMethod};

fn main() -> microshape::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let shape = RadialShape::perturbed_circle(8, 0.25, 0.02, seed)?;
    let sigma = SigmaPair::constants(1.0, 10.0);
    let target = TargetTensor::diagonal(1.5, 1.4);
    let level = 5;
    let boundary = evaluate(&shape, Case::Mixture, level, &sigma, &target, GradientMethod::Boundary, None)?;
    let discrete = evaluate(&shape, Case::Mixture, level, &sigma, &target, GradientMethod::Discrete, None)?;
    let fd = finite_difference_gradient(&shape, Case::Mixture, level, &sigma, &target, 1e-4)?;
    println!("{:>3} {:>14} {:>14} {:>14}", "k", "interface", "discrete", "central FD");
    for k in 0..shape.len() {
        println!(
            "{k:>3} {:>14.6e} {:>14.6e} {:>14.6e}",
            boundary.gradient.objective[k], discrete.gradient.objective[k], fd.objective[k]
        );
    }
    println!("relative l2 error, interface: {:.3e}", relative_l2_error(&boundary.gradient.objective, &fd.objective));
    println!("relative l2 error, discrete:  {:.3e}", relative_l2_error(&discrete.gradient.objective, &fd.objective));
    Ok(())
}
