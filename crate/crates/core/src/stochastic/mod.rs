//! Gaussian chance constraints on nodal net demand: quantile buffers for
//! the load-propagation rows and Monte-Carlo checks of realised violation
//! rates.

mod normal;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::instance::{InstanceError, ProblemInstance};
use crate::milp::LinearConstraint;
use crate::vrp::{load_propagation_rows, replay, BigM, Route, RouteError, RoutingVariables};

pub use normal::{inv_norm_cdf, norm_cdf, norm_pdf, norm_sf};

/// Per-customer risk data; index `j - 1` belongs to customer `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskSpec {
    pub epsilon: Vec<f64>,
    /// `Φ⁻¹(1 - ε_j)`.
    pub quantile: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RiskSpec {
    /// Tolerances and deviations as stored in the instance.
    pub fn from_instance(inst: &ProblemInstance) -> Result<Self, InstanceError> {
        let eps: Vec<f64> = inst.demand.nodes.iter().map(|d| d.risk_tolerance).collect();
        Self::new(eps, inst.demand.nodes.iter().map(|d| d.net_demand_std).collect())
    }

    /// Same tolerance at every customer.
    pub fn uniform(inst: &ProblemInstance, epsilon: f64) -> Result<Self, InstanceError> {
        let sigma = inst.demand.nodes.iter().map(|d| d.net_demand_std).collect();
        Self::new(vec![epsilon; inst.num_customers()], sigma)
    }

    pub fn new(epsilon: Vec<f64>, sigma: Vec<f64>) -> Result<Self, InstanceError> {
        if epsilon.len() != sigma.len() {
            return Err(InstanceError::Invalid(format!(
                "{} tolerances for {} deviations",
                epsilon.len(),
                sigma.len()
            )));
        }
        let mut quantile = Vec::with_capacity(epsilon.len());
        for (k, (&e, &s)) in epsilon.iter().zip(&sigma).enumerate() {
            let z = inv_norm_cdf(1.0 - e).ok_or_else(|| {
                InstanceError::Invalid(format!("customer {}: risk tolerance {e} not in (0, 1)", k + 1))
            })?;
            if !(s >= 0.0 && s.is_finite()) {
                return Err(InstanceError::Invalid(format!("customer {}: deviation {s}", k + 1)));
            }
            quantile.push(z);
        }
        Ok(RiskSpec { epsilon, quantile, sigma })
    }

    /// Extra retained load `Φ⁻¹(1 - ε_j) σ_j` per customer.
    pub fn buffers(&self) -> Vec<f64> {
        self.quantile.iter().zip(&self.sigma).map(|(z, s)| z * s).collect()
    }

    /// Largest quantile in use, floored at zero.
    pub fn zmax(&self) -> f64 {
        self.quantile.iter().copied().fold(0.0, f64::max)
    }
}

/// Chance-constrained replacement of the load-propagation family.
pub fn reformulate_chance_constraints(
    inst: &ProblemInstance,
    vars: &RoutingVariables,
    bigm: &BigM,
    risk: &RiskSpec,
) -> Result<Vec<LinearConstraint>, RouteError> {
    load_propagation_rows(inst, vars, bigm, &risk.buffers())
}

/// One planned customer visit: load before and after serving `node`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannedVisit {
    pub node: usize,
    pub vehicle: usize,
    pub load_before: f64,
    pub load_after: f64,
    pub capacity: f64,
}

/// Measured violation frequency at one customer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeRate {
    pub node: usize,
    pub epsilon: f64,
    pub rate: f64,
    pub samples: usize,
}

const CHUNK: usize = 1024;

fn stream_seed(seed: u64, node: usize, chunk: usize) -> u64 {
    // splitmix64 over the packed triple
    let mut z = seed ^ ((node as u64) << 40) ^ (chunk as u64);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Samples net demand `ξ_j ~ N(E[D_j - P_j], σ_j)` and counts samples where
/// the realised load `load_before - ξ_j` exceeds the planned load after the
/// visit or the capacity. Each `(node, chunk)` pair draws from its own
/// stream, so results do not depend on the thread count.
pub fn empirical_violation_rate(
    visits: &[PlannedVisit],
    inst: &ProblemInstance,
    risk: &RiskSpec,
    num_samples: usize,
    seed: u64,
) -> Vec<NodeRate> {
    const TOL: f64 = 1e-6;
    visits
        .par_iter()
        .map(|pv| {
            let d = inst.node(pv.node);
            let normal = Normal::new(d.mean_net(), d.net_demand_std).expect("finite deviation");
            let chunks = num_samples.div_ceil(CHUNK);
            let violations: usize = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, pv.node, c));
                    let len = CHUNK.min(num_samples - c * CHUNK);
                    (0..len)
                        .filter(|_| {
                            let realised = pv.load_before - normal.sample(&mut rng);
                            realised > pv.load_after + TOL || realised > pv.capacity + TOL
                        })
                        .count()
                })
                .sum();
            let rate = if num_samples == 0 { 0.0 } else { violations as f64 / num_samples as f64 };
            NodeRate { node: pv.node, epsilon: risk.epsilon[pv.node - 1], rate, samples: num_samples }
        })
        .collect()
}

/// Planned visits of explicit routes, with the smallest loads the routes
/// admit.
pub fn visits_from_routes(routes: &[Route], inst: &ProblemInstance, buffers: &[f64]) -> Vec<PlannedVisit> {
    let mut out = Vec::new();
    for r in routes.iter().filter(|r| !r.is_empty()) {
        let rep = replay(r, inst, buffers);
        for k in 1..r.nodes.len() - 1 {
            out.push(PlannedVisit {
                node: r.nodes[k],
                vehicle: r.vehicle,
                load_before: rep.loads[k - 1],
                load_after: rep.loads[k],
                capacity: inst.vehicles[r.vehicle].capacity,
            });
        }
    }
    out
}

/// Three-sigma binomial allowance on a measured rate.
pub fn rate_bound(epsilon: f64, samples: usize) -> f64 {
    epsilon + 3.0 * (epsilon * (1.0 - epsilon) / samples as f64).sqrt()
}

/// Writes `node,epsilon,measured_rate,samples`.
pub fn write_violations<W: Write>(rates: &[NodeRate], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "epsilon", "measured_rate", "samples"])?;
    for r in rates {
        out.write_record([r.node.to_string(), r.epsilon.to_string(), r.rate.to_string(), r.samples.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
