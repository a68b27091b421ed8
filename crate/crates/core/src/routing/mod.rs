//! Optimal routing of a liquidation through pools and limit orders.

mod curve;
mod oracle;
mod problem;
mod solver;
mod subproblem;

pub use curve::{kink_points, output_curve, second_differences, shape_violations, CurvePoint};
pub use oracle::{brute_force_route, MAX_COMPOSITIONS};
pub use problem::{scenarios, MarketEntry, RoutingProblem, Utility};
pub use solver::{solve_routing, Residuals, RoutingSolution, SolveOptions, Status};
pub use subproblem::{arbitrage_subproblem, limit_order_subproblem, DualPrices, MarketTrade};
