//! Seeded random instances shaped like the clustered taxi data.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ChargingStation, Costs, DemandProfile, InstanceError, NodeDemand, ProblemInstance, VehicleSpec,
};
use crate::grid::{GridLine, GridNetwork, GridNode};
use crate::stochastic::inv_norm_cdf;

/// Knobs of the synthetic generator. Distances are abstract units on a
/// square map; travel time is distance over `speed`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOptions {
    pub side: f64,
    pub speed: f64,
    /// Share of customers hosting a charging station.
    pub station_share: f64,
    /// Net-demand deviation as a share of the node's mean traffic.
    pub std_share: f64,
    pub risk_tolerance: f64,
    /// Tolerance the fleet capacity is sized for.
    pub sizing_risk: f64,
    pub costs: Costs,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            side: 10.0,
            speed: 0.5,
            station_share: 0.3,
            std_share: 0.1,
            risk_tolerance: 0.05,
            sizing_risk: 0.005,
            costs: Costs { time: 0.02, energy: 0.15 },
        }
    }
}

/// Generates an instance with default [`SyntheticOptions`].
pub fn generate_synthetic(
    seed: u64,
    num_locations: usize,
    num_vehicles: usize,
    scale: f64,
) -> Result<ProblemInstance, InstanceError> {
    SyntheticOptions::default().generate(seed, num_locations, num_vehicles, scale)
}

impl SyntheticOptions {
    /// Builds an instance around a sweep-based reference plan, so that time
    /// windows, capacity and battery limits admit at least that plan.
    pub fn generate(
        &self,
        seed: u64,
        num_locations: usize,
        num_vehicles: usize,
        scale: f64,
    ) -> Result<ProblemInstance, InstanceError> {
        if num_locations < 1 {
            return Err(InstanceError::Invalid("at least one location is required".into()));
        }
        if num_vehicles < 1 {
            return Err(InstanceError::NoVehicles);
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(InstanceError::Invalid(format!("scale {scale}")));
        }
        let n = num_locations;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut pts = vec![(self.side / 2.0, self.side / 2.0)];
        for _ in 0..n {
            pts.push((rng.random_range(0.0..self.side), rng.random_range(0.0..self.side)));
        }
        let travel: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| (a.0 - b.0).hypot(a.1 - b.1) / self.speed).collect())
            .collect();

        let pick_w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let drop_w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let (ps, ds) = (pick_w.iter().sum::<f64>(), drop_w.iter().sum::<f64>());
        let mut nodes: Vec<NodeDemand> = (0..n)
            .map(|k| {
                let p = scale * pick_w[k] / ps;
                let d = scale * drop_w[k] / ds;
                NodeDemand {
                    mean_dropoff: d,
                    mean_pickup: p,
                    net_demand_std: self.std_share * 0.5 * (p + d),
                    risk_tolerance: self.risk_tolerance,
                    earliest_arrival: 0.0,
                    latest_arrival: 0.0,
                }
            })
            .collect();

        // Reference plan: angular sweep split into contiguous groups.
        let mut order: Vec<usize> = (1..=n).collect();
        let angle = |j: usize| (pts[j].1 - pts[0].1).atan2(pts[j].0 - pts[0].0);
        order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
        let groups = num_vehicles.saturating_sub(1).clamp(1, n);
        let mut routes: Vec<Vec<usize>> = Vec::with_capacity(groups);
        let mut start = 0;
        for g in 0..groups {
            let size = n / groups + usize::from(g < n % groups);
            routes.push(order[start..start + size].to_vec());
            start += size;
        }

        let z = inv_norm_cdf(1.0 - self.sizing_risk).unwrap_or(0.0).max(0.0);
        let mut peak_load: f64 = 1.0;
        let mut longest: f64 = 0.0;
        let mut latest_return: f64 = 0.0;
        for route in &routes {
            let (mut t, mut prev) = (0.0, 0usize);
            // Vehicles leave carrying every expected drop-off of the tour.
            let mut load: f64 = route.iter().map(|&j| nodes[j - 1].mean_dropoff).sum();
            peak_load = peak_load.max(load);
            for &j in route {
                t += travel[prev][j];
                let d = &mut nodes[j - 1];
                d.earliest_arrival = (t - rng.random_range(0.0..15.0)).max(0.0);
                d.latest_arrival = t + rng.random_range(30.0..60.0);
                load = (load - d.mean_net() + z * d.net_demand_std).max(0.0);
                peak_load = peak_load.max(load);
                prev = j;
            }
            t += travel[prev][0];
            longest = longest.max(t);
            latest_return = latest_return.max(t);
        }
        let max_lt = nodes.iter().map(|d| d.latest_arrival).fold(0.0, f64::max);
        let max_back = (1..=n).map(|j| travel[j][0]).fold(0.0, f64::max);
        let horizon = (latest_return.max(max_lt + max_back) + 30.0).ceil();

        let charge_rate = 50.0 / 60.0;
        let consumption = 0.2;
        let battery_min = 7.5;
        let battery_max = (1.2 * consumption * longest + battery_min).max(75.0).ceil();
        let max_leg = travel.iter().flatten().copied().fold(0.0, f64::max);
        let vehicle = VehicleSpec {
            capacity: (1.1 * peak_load).ceil().max(1.0),
            battery_min,
            battery_max,
            consumption_rate: consumption,
            charge_rate,
            max_time_before_recharge: (max_leg + 1.0).ceil().max(60.0),
        };

        let mut station_nodes: Vec<usize> =
            (1..=n).filter(|_| rng.random_bool(self.station_share)).collect();
        if station_nodes.is_empty() {
            station_nodes.push(rng.random_range(1..=n));
        }
        let mut grid_nodes = vec![GridNode::substation("substation", 5000.0)];
        let mut lines = Vec::new();
        let mut stations = Vec::new();
        for (k, &j) in station_nodes.iter().enumerate() {
            let bus = k + 1;
            let p = rng.random_range(50.0..200.0);
            grid_nodes.push(GridNode { v_min: 0.95, v_max: 1.05, ..GridNode::load(format!("bus{bus}"), p, 0.3 * p) });
            lines.push(GridLine {
                from: rng.random_range(0..bus),
                to: bus,
                r: rng.random_range(0.001..0.003),
                x: rng.random_range(0.001..0.003),
                p_max: 5000.0,
                q_max: 5000.0,
            });
            stations.push(ChargingStation {
                transport_node: j,
                grid_node: bus,
                min_charge_time: 0.0,
                max_charge_time: 30.0,
                power_bounds: Some([charge_rate, charge_rate]),
            });
        }
        grid_nodes[0].v_min = 0.95;
        grid_nodes[0].v_max = 1.05;
        let grid = GridNetwork { slack: 0, base_kva: 1000.0, flow_limits: false, nodes: grid_nodes, lines };

        let inst = ProblemInstance {
            depot_label: "depot".into(),
            demand: DemandProfile { labels: (1..=n).map(|j| format!("L{j}")).collect(), nodes },
            travel_time: travel,
            vehicles: vec![vehicle; num_vehicles],
            stations,
            grid,
            costs: self.costs,
            horizon,
            depot_grid_node: Some(0),
            depot_power: Some([charge_rate, charge_rate]),
        };
        inst.validate()?;
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pickups_sum_to_scale() {
        let inst = generate_synthetic(1, 5, 3, 224.0).unwrap();
        let total: f64 = inst.demand.nodes.iter().map(|d| d.mean_pickup).sum();
        assert!((212.0..=236.0).contains(&total), "{total}");
        assert_eq!(inst.num_nodes(), 6);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_synthetic(9, 6, 2, 100.0).unwrap(), generate_synthetic(9, 6, 2, 100.0).unwrap());
        assert_ne!(generate_synthetic(9, 6, 2, 100.0).unwrap(), generate_synthetic(10, 6, 2, 100.0).unwrap());
    }

    #[test]
    fn single_location() {
        let inst = generate_synthetic(3, 1, 1, 10.0).unwrap();
        assert_eq!(inst.num_nodes(), 2);
        assert_eq!(inst.stations.len(), 1);
    }

    #[test]
    fn rejects_zero_locations() {
        assert!(generate_synthetic(3, 0, 1, 10.0).is_err());
    }
}
