use rayon::prelude::*;

use super::problem::RoutingProblem;
use super::solver::{solve_routing, RoutingSolution, SolveOptions};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub s: f64,
    pub utility: f64,
    pub solution: RoutingSolution,
}

/// Solves the problem once per budget in `s_grid`; points are independent and
/// solved in parallel, results come back in grid order.
pub fn output_curve(
    p: &RoutingProblem,
    s_grid: &[f64],
    opts: SolveOptions,
) -> Result<Vec<CurvePoint>> {
    if s_grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return invalid("budget grid must be finite and nonnegative");
    }
    if s_grid.windows(2).any(|w| w[1] < w[0]) {
        return invalid("budget grid must be increasing");
    }
    s_grid
        .par_iter()
        .map(|&s| {
            let solution = solve_routing(&p.with_budget(s), opts)?;
            Ok(CurvePoint {
                s,
                utility: solution.utility_value,
                solution,
            })
        })
        .collect()
}

/// Second differences `u[i−1] − 2u[i] + u[i+1]` over a uniform grid, indexed by
/// the centre point.
pub fn second_differences(u: &[f64]) -> Vec<f64> {
    u.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// Grid values of `s` at which the curve switches between a linear stretch
/// (|second difference| ≤ `tol`) and a curved one — the kinks produced when a
/// limit order starts or stops filling.
pub fn kink_points(s: &[f64], u: &[f64], tol: f64) -> Vec<f64> {
    let d2 = second_differences(u);
    let flat: Vec<bool> = d2.iter().map(|d| d.abs() <= tol).collect();
    flat.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| s[i + 1])
        .collect()
}

/// Checks that `u` is nondecreasing and midpoint-concave on a uniform grid,
/// returning the worst violation of each (zero when both hold exactly).
pub fn shape_violations(u: &[f64]) -> (f64, f64) {
    let mono = u.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let conc = second_differences(u).into_iter().fold(0.0, f64::max);
    (mono, conc)
}
