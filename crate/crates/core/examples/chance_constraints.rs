//! Compares deterministic and chance-constrained plans on the same instance.
//! Each plan is checked by sampling net demand and counting capacity or
//! load-plan breaches per stop.

use evgrid::instance::generate_synthetic;
use evgrid::model::solve_instance;
use evgrid::stochastic::{empirical_violation_rate, RiskSpec};
use evgrid::{BnbOptions, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = generate_synthetic(1, 5, 3, 224.0)?;
    let opts = BnbOptions { node_limit: Some(200), ..Default::default() };
    let risk = RiskSpec::uniform(&inst, 0.05)?;

    for mode in [Mode::Deterministic, Mode::ChanceConstrained(risk.clone())] {
        let out = solve_instance(&inst, mode.clone(), &opts)?;
        let Some(sol) = out.solution.as_ref() else {
            println!("{}: no solution ({:?})", mode.code_prefix(), out.result.status);
            continue;
        };
        let visits = out.assembled.planned_visits(&inst, sol);
        let rates = empirical_violation_rate(&visits, &inst, &risk, 10_000, 42);
        let worst = rates.iter().map(|r| r.rate).fold(0.0, f64::max);
        println!(
            "{}: objective {:.4}, {} vehicles, worst stop violation rate {:.4}",
            mode.code_prefix(),
            sol.objective,
            sol.deployed(),
            worst
        );
    }
    println!("buffers per stop: {:?}", risk.buffers().iter().map(|b| format!("{b:.2}")).collect::<Vec<_>>());
    Ok(())
}
