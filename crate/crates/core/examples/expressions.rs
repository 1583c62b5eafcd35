//! Building, printing, parsing and evaluating expressions, including
//! evaluation faults and numeric equivalence.
//!
//!     cargo run --example expressions

use syran::expr::{numeric_equivalence, parse_with_names, Expression, Node, TextFormat};
use syran::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = ["T", "a"];

    // a * (a / T)^2, built directly
    let (t, a) = (Node::feature(0), Node::feature(1));
    let built = Expression::new(a.clone() * (a / t).pow(Node::constant(2.0)), 2)?;
    println!("infix : {}", built.to_text_named(TextFormat::Infix, &names));
    println!("sexpr : {}", built.to_text_named(TextFormat::Sexpr, &names));
    println!("complexity {}, size {}, height {}", built.complexity(), built.size(), built.height());

    // the same law written another way
    let kepler = parse_with_names("(div (mul a (mul a a)) (mul T T))", &names)?;
    let domain = [(0.2, 600.0), (0.3, 70.0)];
    let same = numeric_equivalence(&built, &kepler, &domain, 256, 1e-9, &mut stream(&[1]));
    println!("equivalent to a^3/T^2: {same}");

    println!("at Earth (1, 1): {:?}", built.evaluate(&[1.0, 1.0]));
    println!("at T = 0: {:?}", built.evaluate(&[0.0, 1.0]));

    let wine = parse_with_names("(div 1.0759 (sub x 11.1282))", &["x"])?;
    println!("{} at 12.2041 = {:?}", wine.to_text_named(TextFormat::Infix, &["x"]), wine.evaluate(&[12.2041]));

    match parse_with_names("(div T", &names) {
        Ok(_) => unreachable!(),
        Err(e) => println!("parse error: {e}"),
    }
    Ok(())
}
