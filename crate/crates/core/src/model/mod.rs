//! Domain types, configuration loading and experiment scenarios.

mod config;
mod instance;
mod rate;
mod scenario;

pub use config::{
    load_config, save_config, AlgorithmParams, ArrivalModel, BudgetAccounting, SimConfig, StepRule,
    DEFAULT_CHECK_INTERVAL, DEFAULT_GRID_DT, DEFAULT_MU,
};
pub use instance::{validate_instance, Budget, ProblemInstance, ValidatedInstance};
pub use rate::{PieceKind, RateFunction, RatePiece};
pub use scenario::{
    scenario_nonstationary, scenario_rate_functions, scenario_stationary, NonStationaryKind,
    BETA_PREFERENCE, GAUSSIAN_PREFERENCE, SCENARIO_ITEMS, SCENARIO_TYPES,
};
