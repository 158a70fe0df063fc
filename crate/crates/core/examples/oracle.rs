//! Cross-checks branch-and-bound against exhaustive enumeration on a tiny
//! instance.

use evgrid::instance::generate_synthetic;
use evgrid::model::solve_instance;
use evgrid::oracle::{enumerate_optimal, MAX_CUSTOMERS};
use evgrid::{BnbOptions, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = generate_synthetic(11, 4, 2, 35.0)?;
    let brute = enumerate_optimal(&inst, MAX_CUSTOMERS, &vec![0.0; inst.num_customers()])?;
    let opts = BnbOptions { gap_tol: 1e-9, ..Default::default() };
    let milp = solve_instance(&inst, Mode::Deterministic, &opts)?;

    println!("enumeration: {:.9} over {} candidate plans", brute.objective, brute.evaluated);
    println!("branch-and-bound: {:.9} in {} nodes", milp.result.objective, milp.result.node_count);
    println!("difference {:.2e}", (brute.objective - milp.result.objective).abs());
    Ok(())
}
