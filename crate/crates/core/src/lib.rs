//! Electric-vehicle fleet routing with stochastic pick-up/drop-off demand,
//! co-optimized with the operation of a radial distribution feeder.
//!
//! The crate assembles a single mixed-integer linear program out of four
//! constraint groups and solves it with a built-in branch-and-bound:
//!
//! * [`vrp`]: routing with time windows, vehicle loads and Miller-Tucker-Zemlin
//!   sub-tour elimination,
//! * [`energy`]: battery dynamics, charging stops and a McCormick envelope for
//!   the charging-power times charging-time product,
//! * [`grid`]: LinDistFlow power flow on a radial feeder and its coupling to the
//!   charging stations,
//! * [`stochastic`]: Gaussian chance constraints on nodal net demand, turned into
//!   quantile-buffered linear rows.
//!
//! [`instance`] ingests trip records and builds problem instances, [`oracle`]
//! is a brute-force reference for tiny instances, and [`report`] produces the
//! cost, emissions and summary tables. Runnable walkthroughs live in the
//! `examples/` directory of this crate.

pub mod cli;
pub mod energy;
pub mod grid;
pub mod instance;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod report;
pub mod stochastic;
pub mod vrp;

mod error;

pub use error::{Error, Result};
pub use instance::ProblemInstance;
pub use milp::{BnbOptions, SolveResult, SolveStatus};
pub use model::{assemble, AssembledModel, Mode, Solution};
