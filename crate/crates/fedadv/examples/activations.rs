//! Walks the activation catalog: values, derivatives, kink locations, and a
//! finite-difference agreement check for every function.
//!
//!     cargo run --release --example activations

use fedadv::activation::ALL_ACTIVATIONS;
use fedadv::check::relative_error;

fn main() {
    println!(
        "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9}  kinks",
        "name", "f(-2)", "f(0)", "f(2)", "f'(-2)", "f'(2)"
    );
    for kind in ALL_ACTIVATIONS {
        let kinks: Vec<String> = kind.kinks().iter().map(|k| format!("{k}")).collect();
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  [{}]",
            kind.name(),
            kind.eval(-2.0),
            kind.eval(0.0),
            kind.eval(2.0),
            kind.derivative(-2.0),
            kind.derivative(2.0),
            kinks.join(", ")
        );
    }

    // Central differences double as an independent oracle: the analytic
    // derivative must agree everywhere a stencil cannot straddle a kink.
    let h = 1e-5;
    println!("\nworst |analytic - finite difference| relative error over x in [-4, 4]:");
    for kind in ALL_ACTIVATIONS {
        let mut worst = 0.0f64;
        let mut x = -4.0;
        while x <= 4.0 {
            let clear = kind.kinks().iter().all(|k| (x - k).abs() > 1e-3);
            if clear {
                let numeric = (kind.eval(x + h) - kind.eval(x - h)) / (2.0 * h);
                worst = worst.max(relative_error(numeric, kind.derivative(x)));
            }
            x += 0.037;
        }
        println!("  {:<10} {worst:.3e}", kind.name());
    }
}
