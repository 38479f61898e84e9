use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-physical covariance: {0}")]
    NonPhysical(String),

    #[error(
        "infeasible memory: noise diagonal constraint [V1]_{index} = {value:.3e} < 0 \
         (s = {memory} too large for N = {noise}, epsilon = {epsilon})"
    )]
    InfeasibleMemory {
        index: usize,
        value: f64,
        memory: f64,
        noise: f64,
        epsilon: f64,
    },

    #[error(
        "infeasible correlation: modulation diagonal constraint [K1]_{index} = {value:.3e} < 0 \
         (|y| = {correlation} too large for residual budget {budget}, theta = {theta})"
    )]
    InfeasibleCorrelation {
        index: usize,
        value: f64,
        correlation: f64,
        budget: f64,
        theta: f64,
    },

    #[error("infeasible squeezing: squeezed photons {squeezed} exceed the budget {nbar}")]
    InfeasibleSqueezing { squeezed: f64, nbar: f64 },

    #[error("empty feasible region: {0}")]
    EmptyRegion(String),
}
