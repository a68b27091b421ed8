//! Liquidating inventory into a fee-banded constant-product pool over time.
mod dp;
mod model;
mod sim;

pub use dp::{value_iteration, Grid, Policy, ValueFunction};
pub use model::{
    clamp_mispricing, exchange_at_price, jump, reward, step_mispricing, DynamicsMode, MdpConfig,
    MispricingParams, PoolParams,
};
pub use sim::{compare_vs_twamm, simulate_policy, twamm_outputs, twamm_value, Comparison, SimResult};
