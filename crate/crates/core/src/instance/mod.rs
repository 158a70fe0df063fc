//! Input data: trips, demand profiles, fleet, charging stations, and the
//! validated [`ProblemInstance`] that every model builder consumes.
//!
//! Transport nodes are indexed `0..=n` with the depot at 0 and customer `j`
//! described by `demand.nodes[j - 1]`.

mod synthetic;
mod trips;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridNetwork};

pub use synthetic::{generate_synthetic, SyntheticOptions};
pub use trips::{
    clusterize, location_map_from_trips, parse_trip_records, write_trip_records, ClusterDefaults,
    DayWindow, TripRecord, TRIP_HEADER,
};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("line {line}, field {field}: {message}")]
    Parse { line: u64, field: String, message: String },
    #[error("location ids without a node: {0:?}")]
    UnmappedLocations(Vec<u32>),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("dangling reference: {0}")]
    Dangling(String),
    #[error("instance has no vehicles")]
    NoVehicles,
    #[error("travel-time matrix is empty; the depot is missing")]
    MissingDepot,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("instance file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> InstanceError {
    InstanceError::Invalid(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDemand {
    pub mean_dropoff: f64,
    pub mean_pickup: f64,
    pub net_demand_std: f64,
    pub risk_tolerance: f64,
    /// Minutes from the start of the horizon.
    pub earliest_arrival: f64,
    pub latest_arrival: f64,
}

impl NodeDemand {
    /// Expected net change in on-board load when serving the node,
    /// `E[D] - E[P]`.
    pub fn mean_net(&self) -> f64 {
        self.mean_dropoff - self.mean_pickup
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandProfile {
    /// Customer labels, aligned with `nodes`.
    pub labels: Vec<String>,
    pub nodes: Vec<NodeDemand>,
}

impl DemandProfile {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.labels.len() != self.nodes.len() {
            return Err(invalid(format!("{} labels for {} nodes", self.labels.len(), self.nodes.len())));
        }
        for (k, d) in self.nodes.iter().enumerate() {
            let j = k + 1;
            let finite = [d.mean_dropoff, d.mean_pickup, d.net_demand_std, d.earliest_arrival, d.latest_arrival]
                .iter()
                .all(|x| x.is_finite());
            if !finite {
                return Err(invalid(format!("node {j}: non-finite demand data")));
            }
            if d.mean_dropoff < 0.0 || d.mean_pickup < 0.0 || d.net_demand_std < 0.0 {
                return Err(invalid(format!("node {j}: negative mean or deviation")));
            }
            if !(d.risk_tolerance > 0.0 && d.risk_tolerance < 1.0) {
                return Err(invalid(format!("node {j}: risk tolerance {} not in (0, 1)", d.risk_tolerance)));
            }
            if d.earliest_arrival > d.latest_arrival {
                return Err(invalid(format!("node {j}: empty time window")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Passengers.
    pub capacity: f64,
    /// kWh.
    pub battery_min: f64,
    pub battery_max: f64,
    /// kWh per minute of travel.
    pub consumption_rate: f64,
    /// kWh per minute of charging.
    pub charge_rate: f64,
    /// Longest single leg, minutes.
    pub max_time_before_recharge: f64,
}

impl VehicleSpec {
    pub fn validate(&self) -> Result<(), InstanceError> {
        let ok = self.battery_min >= 0.0
            && self.battery_min < self.battery_max
            && self.battery_max.is_finite()
            && self.capacity >= 1.0
            && self.capacity.is_finite()
            && self.consumption_rate > 0.0
            && self.charge_rate > 0.0
            && self.max_time_before_recharge > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("vehicle parameters out of range: {self:?}")))
        }
    }

    /// Charger draw in kW.
    pub fn charge_power_kw(&self) -> f64 {
        self.charge_rate * 60.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargingStation {
    pub transport_node: usize,
    pub grid_node: usize,
    pub min_charge_time: f64,
    pub max_charge_time: f64,
    /// Bounds on the priced charging power, kWh/min. Defaults to the
    /// fleet's battery range when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_bounds: Option<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    /// $ per minute of travel.
    pub time: f64,
    /// $ per kWh charged.
    pub energy: f64,
}

/// A place where a vehicle may charge: every station plus the depot.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeSite {
    pub node: usize,
    pub grid_node: Option<usize>,
    pub min_time: f64,
    pub max_time: f64,
    pub power: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub depot_label: String,
    pub demand: DemandProfile,
    /// Minutes, `(n + 1) x (n + 1)`, depot first.
    pub travel_time: Vec<Vec<f64>>,
    pub vehicles: Vec<VehicleSpec>,
    pub stations: Vec<ChargingStation>,
    pub grid: GridNetwork,
    pub costs: Costs,
    /// Latest return to the depot, minutes.
    pub horizon: f64,
    /// Feeder bus supplying the depot charger, if any.
    pub depot_grid_node: Option<usize>,
    /// Priced power bounds for depot charging.
    pub depot_power: Option<[f64; 2]>,
}

/// Assembles and validates an instance. The horizon defaults to the latest
/// time-window end plus the longest return leg.
pub fn build_instance(
    demand: DemandProfile,
    vehicles: Vec<VehicleSpec>,
    stations: Vec<ChargingStation>,
    grid: GridNetwork,
    costs: Costs,
    travel_time: Vec<Vec<f64>>,
) -> Result<ProblemInstance, InstanceError> {
    let max_lt = demand.nodes.iter().map(|d| d.latest_arrival).fold(0.0, f64::max);
    let max_back = travel_time.iter().skip(1).map(|row| row.first().copied().unwrap_or(0.0)).fold(0.0, f64::max);
    let inst = ProblemInstance {
        depot_label: "depot".into(),
        demand,
        travel_time,
        vehicles,
        stations,
        grid,
        costs,
        horizon: max_lt + max_back,
        depot_grid_node: None,
        depot_power: None,
    };
    inst.validate()?;
    Ok(inst)
}

impl ProblemInstance {
    /// Number of customers `|J|`.
    pub fn num_customers(&self) -> usize {
        self.demand.len()
    }

    /// Number of transport nodes `|J0|`.
    pub fn num_nodes(&self) -> usize {
        self.demand.len() + 1
    }

    pub fn num_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// Demand data of customer `j >= 1`.
    pub fn node(&self, j: usize) -> &NodeDemand {
        &self.demand.nodes[j - 1]
    }

    pub fn label(&self, j: usize) -> &str {
        if j == 0 {
            &self.depot_label
        } else {
            &self.demand.labels[j - 1]
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self, InstanceError> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn with_depot_grid_node(mut self, bus: Option<usize>) -> Result<Self, InstanceError> {
        self.depot_grid_node = bus;
        self.validate()?;
        Ok(self)
    }

    fn default_power(&self) -> [f64; 2] {
        let lo = self.vehicles.iter().map(|v| v.battery_min).fold(f64::INFINITY, f64::min);
        let hi = self.vehicles.iter().map(|v| v.battery_max).fold(0.0, f64::max);
        [lo, hi]
    }

    /// Charging sites: stations in file order, then the depot unless a
    /// station already sits there.
    pub fn charge_sites(&self) -> Vec<ChargeSite> {
        let default = self.default_power();
        let mut sites: Vec<ChargeSite> = self
            .stations
            .iter()
            .map(|s| ChargeSite {
                node: s.transport_node,
                grid_node: Some(s.grid_node),
                min_time: s.min_charge_time,
                max_time: s.max_charge_time,
                power: s.power_bounds.unwrap_or(default),
            })
            .collect();
        if !sites.iter().any(|s| s.node == 0) {
            sites.push(ChargeSite {
                node: 0,
                grid_node: self.depot_grid_node,
                min_time: 0.0,
                max_time: self.horizon,
                power: self.depot_power.unwrap_or(default),
            });
        }
        sites
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.num_nodes();
        if self.travel_time.is_empty() {
            return Err(InstanceError::MissingDepot);
        }
        self.demand.validate()?;
        if self.travel_time.len() != n || self.travel_time.iter().any(|r| r.len() != n) {
            return Err(InstanceError::Dangling(format!(
                "travel-time matrix must be {n}x{n} for {} customers",
                n - 1
            )));
        }
        for (i, row) in self.travel_time.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(invalid(format!("travel time {i}->{j} = {t}")));
                }
                if i == j && t != 0.0 {
                    return Err(invalid(format!("nonzero diagonal travel time at {i}")));
                }
            }
        }
        if self.vehicles.is_empty() {
            return Err(InstanceError::NoVehicles);
        }
        for v in &self.vehicles {
            v.validate()?;
        }
        self.grid.topology()?;
        let buses = self.grid.num_nodes();
        let mut seen = vec![false; n];
        for (k, s) in self.stations.iter().enumerate() {
            if s.transport_node >= n {
                return Err(InstanceError::Dangling(format!("station {k}: transport node {}", s.transport_node)));
            }
            if s.grid_node >= buses {
                return Err(InstanceError::Dangling(format!("station {k}: grid node {}", s.grid_node)));
            }
            if std::mem::replace(&mut seen[s.transport_node], true) {
                return Err(invalid(format!("two stations at node {}", s.transport_node)));
            }
            if !(s.min_charge_time >= 0.0 && s.min_charge_time <= s.max_charge_time && s.max_charge_time.is_finite()) {
                return Err(invalid(format!("station {k}: charge-time bounds")));
            }
            if let Some([lo, hi]) = s.power_bounds {
                if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                    return Err(invalid(format!("station {k}: power bounds")));
                }
            }
        }
        if let Some(b) = self.depot_grid_node {
            if b >= buses {
                return Err(InstanceError::Dangling(format!("depot grid node {b}")));
            }
        }
        if let Some([lo, hi]) = self.depot_power {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(invalid("depot power bounds"));
            }
        }
        if !(self.costs.time >= 0.0 && self.costs.energy >= 0.0) {
            return Err(invalid("costs must be nonnegative"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon {}", self.horizon)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, InstanceError> {
        toml::to_string(&InstanceFile::from(self)).map_err(|e| InstanceError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = toml::from_str(text).map_err(|e| InstanceError::Format(e.to_string()))?;
        let inst = file.into_instance();
        inst.validate()?;
        Ok(inst)
    }

    pub fn read(path: &Path) -> Result<Self, InstanceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct NodesSection {
    depot: String,
    labels: Vec<String>,
    horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depot_grid_node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depot_power: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct TravelSection {
    minutes: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DemandSection {
    #[serde(default)]
    node: Vec<NodeDemand>,
}

#[derive(Serialize, Deserialize)]
struct VehiclesSection {
    #[serde(default)]
    vehicle: Vec<VehicleSpec>,
}

#[derive(Serialize, Deserialize)]
struct StationsSection {
    #[serde(default)]
    station: Vec<ChargingStation>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    nodes: NodesSection,
    travel_time: TravelSection,
    demand: DemandSection,
    vehicles: VehiclesSection,
    stations: StationsSection,
    grid: GridNetwork,
    costs: Costs,
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(p: &ProblemInstance) -> Self {
        InstanceFile {
            nodes: NodesSection {
                depot: p.depot_label.clone(),
                labels: p.demand.labels.clone(),
                horizon: p.horizon,
                depot_grid_node: p.depot_grid_node,
                depot_power: p.depot_power,
            },
            travel_time: TravelSection { minutes: p.travel_time.clone() },
            demand: DemandSection { node: p.demand.nodes.clone() },
            vehicles: VehiclesSection { vehicle: p.vehicles.clone() },
            stations: StationsSection { station: p.stations.clone() },
            grid: p.grid.clone(),
            costs: p.costs,
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> ProblemInstance {
        ProblemInstance {
            depot_label: self.nodes.depot,
            demand: DemandProfile { labels: self.nodes.labels, nodes: self.demand.node },
            travel_time: self.travel_time.minutes,
            vehicles: self.vehicles.vehicle,
            stations: self.stations.station,
            grid: self.grid,
            costs: self.costs,
            horizon: self.nodes.horizon,
            depot_grid_node: self.nodes.depot_grid_node,
            depot_power: self.nodes.depot_power,
        }
    }
}
