//! Generates a small synthetic instance, solves the deterministic model and
//! prints the routes, the cost split and the battery levels.

use evgrid::instance::generate_synthetic;
use evgrid::model::solve_instance;
use evgrid::report::objective_breakdown;
use evgrid::{BnbOptions, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = generate_synthetic(7, 5, 2, 60.0)?;
    let out = solve_instance(&inst, Mode::Deterministic, &BnbOptions::default())?;
    let Some(sol) = out.solution.as_ref() else {
        println!("status {:?}, no solution", out.result.status);
        return Ok(());
    };
    println!(
        "status {:?}, objective {:.4}, bound {:.4}, {} nodes",
        out.result.status, out.result.objective, out.result.bound, out.result.node_count
    );
    for r in sol.routes.iter().filter(|r| !r.is_empty()) {
        let stops: Vec<String> = r.nodes.iter().map(|&j| inst.label(j).to_string()).collect();
        println!("vehicle {}: {}", r.vehicle, stops.join(" -> "));
    }
    let b = objective_breakdown(&out.assembled, sol, &inst);
    println!("travel {:.4} + energy {:.4} = {:.4}", b.travel_cost, b.energy_cost, b.total);
    for t in &sol.traces {
        let levels: Vec<String> = t.entries.iter().map(|e| format!("{:.1}", e.energy_kwh)).collect();
        println!("battery of vehicle {}: {}", t.vehicle, levels.join(" "));
    }
    Ok(())
}
