//! Market primitives: trading functions, forward exchange, limit-order trading
//! sets and their composition with pools.

mod curve;
mod limit_order;
mod liquidity;
mod market;

pub use curve::{modified_forward_exchange, solve_breakpoint, Breakpoints, ModifiedExchangeCurve};
pub use limit_order::{best_fill, minkowski_contains, LimitOrder, Trade2};
pub use liquidity::{liquidity_step_sequence, LiquidityStep};
pub use market::{Market, MarketKind};
