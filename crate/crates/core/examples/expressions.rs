//! Conductivity expressions: parsing, evaluation and error positions.
//!
//! `cargo run --example expressions -- "<expression>" [x y]`

use microshape::coeff::{CoefficientField, Expr};
use microshape::geometry::Vec2;

fn main() {
    let mut args = std::env::args().skip(1);
    let text = args.next().unwrap_or_else(|| "5*(11/10 + cos(2*pi*x) + 4*(y-1/2)^2)".into());
    let x: f64 = args.next().map_or(0.0, |s| s.parse().expect("x"));
    let y: f64 = args.next().map_or(0.5, |s| s.parse().expect("y"));
    match CoefficientField::parse(&text) {
        Ok(field) => {
            match field.eval(Vec2::new(x, y)) {
                Ok(v) => println!("{text} at ({x}, {y}) = {v}"),
                Err(e) => println!("{e}"),
            }
            let r = field.verify_bounds(0.1, 100.0);
            println!("grid range [{:.4}, {:.4}], within [0.1, 100]: {}", r.min, r.max, r.is_ok());
        }
        Err(e) => {
            println!("{e}");
        }
    }
    for bad in ["2 * (x + ", "sin(x, y)", "1 + q"] {
        let err = Expr::parse(bad).unwrap_err();
        println!("{bad:>12}  ->  {err}");
    }
}
