//! Tailpipe-equivalent emissions of a solved fleet against liquid-fuel
//! baselines.

use evgrid::instance::generate_synthetic;
use evgrid::model::solve_instance;
use evgrid::report::{emissions_report, energy_used, reduction, write_emissions, EmissionFactors};
use evgrid::{BnbOptions, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = generate_synthetic(4, 5, 2, 80.0)?;
    let out = solve_instance(&inst, Mode::Deterministic, &BnbOptions::default())?;
    let sol = out.solution.ok_or("no solution")?;
    let kwh = energy_used(&sol.traces);
    let passengers: f64 = inst.demand.nodes.iter().map(|d| d.mean_pickup).sum();
    let rows = emissions_report(kwh, sol.deployed(), passengers, &EmissionFactors::default(), "synthetic");
    write_emissions(&rows, std::io::stdout())?;
    for row in &rows[1..] {
        if let Some(r) = reduction(rows[0].emissions_kg, row.emissions_kg) {
            println!("ev relative to {}: {:+.1}%", row.kind, -100.0 * r);
        }
    }
    Ok(())
}
