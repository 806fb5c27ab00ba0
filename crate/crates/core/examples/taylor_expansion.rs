//! Second-order shape Taylor surrogate for a perforated cell, checked by re-solving.
//!
//! `cargo run --release --example taylor_expansion -- [level]`

use microshape::coeff::{CoefficientField, SigmaPair};
use microshape::experiment::taylor_study;
use microshape::geometry::RadialShape;

fn main() -> microshape::Result<()> {
    let level = std::env::args().nth(1).map_or(5, |s| s.parse().expect("level"));
    let shape = RadialShape::circle(4, 0.25)?;
    let sigma = SigmaPair::perforated(CoefficientField::Constant(1.0));
    // grow the hole and stretch it along x
    let direction = [0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let (report, _) = taylor_study(&shape, &sigma, level, &direction, &[0.04, 0.02, 0.01, 0.005])?;
    println!("a' = {:?}\na'' = {:?}", report.first, report.second);
    println!("a'' from the interface formula = {:?}", report.interface_second);
    println!("{:>7} {:>12} {:>12} {:>12}", "eps", "a11", "1st-order r", "2nd-order r");
    for r in &report.rows {
        println!("{:>7} {:>12.8} {:>12.3e} {:>12.3e}", r.eps, r.resolved[0], r.first_remainder, r.second_remainder);
    }
    println!("observed orders: first {:.2?}, second {:.2?}", report.first_orders, report.second_orders);
    Ok(())
}
