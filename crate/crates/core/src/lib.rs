//! General equilibrium and endogenous network formation in Cobb-Douglas
//! production economies.
//!
//! The crate solves for equilibrium revenues, prices and welfare of a given
//! input-output network, analyses the game in which firms choose their
//! suppliers, and studies replicated economies made of several countries:
//! clustered equilibria, their welfare ranking, disruption risk and trade
//! policies that select among them.

pub mod economy;
pub mod error;
pub mod game;
pub mod instances;
mod linalg;
pub mod oracles;
pub mod partition;
pub mod policy;
pub mod replicate;
pub mod risk;
pub mod verify;
pub mod walks;

pub use economy::{
    build_flow_matrix, compute_welfare, solve_equilibrium, validate_assumptions, CategoryMap,
    EconomySpec, EquilibriumResult, FlowMatrix, ProductionNetwork, ProductivityModel,
};
pub use error::{ModelError, Result};
pub use game::{best_response, best_response_dynamics, is_nash, potential_value, Schedule, TiePolicy};
pub use linalg::xlogx;
pub use partition::Partition;
pub use replicate::ReplicateGame;
