//! Shows how tightly the four McCormick planes bracket `p * tau` over a
//! charging box.

use evgrid::energy::{envelope_lower, envelope_upper};

fn main() {
    let (pb, tb) = ([10.0, 50.0], [0.0, 30.0]);
    println!("{:>6} {:>6} {:>9} {:>9} {:>9}", "p", "tau", "lower", "p*tau", "upper");
    for p in [10.0, 20.0, 30.0, 40.0, 50.0] {
        for tau in [0.0, 10.0, 20.0, 30.0] {
            let lo = envelope_lower(p, tau, pb, tb);
            let hi = envelope_upper(p, tau, pb, tb);
            println!("{p:>6} {tau:>6} {lo:>9.1} {:>9.1} {hi:>9.1}", p * tau);
        }
    }
}
