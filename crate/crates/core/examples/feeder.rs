//! Solves LinDistFlow on a five-bus radial feeder as an LP and compares the
//! squared voltages with a direct backward/forward sweep.

use evgrid::grid::{build_lindistflow, couple_demand, radial_sweep, GridLine, GridNetwork, GridNode, GridState};
use evgrid::milp::{solve_lp, MilpModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridNetwork {
        slack: 0,
        base_kva: 1000.0,
        flow_limits: false,
        nodes: vec![
            GridNode::substation("sub", 5000.0),
            GridNode::load("b1", 120.0, 40.0),
            GridNode::load("b2", 80.0, 20.0),
            GridNode::load("b3", 200.0, 60.0),
            GridNode::load("b4", 50.0, 10.0),
        ],
        lines: vec![
            GridLine::new(0, 1, 0.003, 0.002),
            GridLine::new(1, 2, 0.004, 0.003),
            GridLine::new(1, 3, 0.002, 0.002),
            GridLine::new(3, 4, 0.005, 0.004),
        ],
    };

    let mut model = MilpModel::new();
    let vars = build_lindistflow(&mut model, &grid)?;
    couple_demand(&mut model, &grid, &vars, &[])?;
    let lp = solve_lp(&model)?;
    let solved = GridState::from_values(&vars, &lp.values);

    let demand: Vec<f64> = grid.nodes.iter().map(|n| n.base_p_kw).collect();
    let sweep = radial_sweep(&grid, &demand)?;

    println!("{:>4} {:>12} {:>12} {:>10}", "bus", "u (LP)", "u (sweep)", "|V| pu");
    for (k, node) in grid.nodes.iter().enumerate() {
        println!("{:>4} {:>12.8} {:>12.8} {:>10.6}", node.label, solved.u[k], sweep.u[k], solved.voltage(k));
    }
    Ok(())
}
