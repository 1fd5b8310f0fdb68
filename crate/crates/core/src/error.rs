use thiserror::Error;

use crate::netmodel::Action;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("no device type covers the deficient information types {deficient:?} in area {area}")]
    EmptyFeasibleSet { area: usize, deficient: Vec<usize> },

    #[error("defender action {defender:?} is not available after attacker action {attacker:?}")]
    InvalidAction { attacker: Action, defender: Action },

    #[error("no payoff case for the pair ({attacker:?}, {defender:?})")]
    UnhandledCase { attacker: Action, defender: Action },

    #[error("every candidate stage program was infeasible")]
    NoFeasibleStage,

    #[error("no activated local sink remains")]
    NoActivatedSink,

    #[error("the attacker has no legal action")]
    NoAttackerAction,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible instance: {0}")]
    InfeasibleInstance(String),
}

pub type Result<T> = std::result::Result<T, GameError>;
