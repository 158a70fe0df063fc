use thiserror::Error;

use crate::{energy::EnergyError, grid::GridError, instance::InstanceError, milp::MilpError, oracle::OracleError, vrp::RouteError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Config(String),
}
