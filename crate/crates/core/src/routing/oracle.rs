use super::problem::RoutingProblem;
use super::solver::{RoutingSolution, Status};
use super::subproblem::MarketTrade;
use crate::cfmm::Trade2;
use crate::error::{Error, Result};

/// Largest number of grid compositions the oracle will enumerate.
pub const MAX_COMPOSITIONS: f64 = 2e8;

enum Leg {
    Market { idx: usize, input: usize, output: usize },
    Order(usize),
}

/// Exhaustive search over splits of the budget into multiples of `budget/resolution`
/// across direct input→output legs (pools holding both assets, orders on the pair).
///
/// Multi-hop paths and cyclic arbitrage are not explored, so the oracle only
/// matches the solver on arbitrage-free instances whose markets all touch the
/// input and output asset.
pub fn brute_force_route(p: &RoutingProblem, resolution: usize) -> Result<RoutingSolution> {
    p.validate()?;
    if p.markets.len() > 2 || p.orders.len() > 2 {
        return Err(Error::OracleRefused(format!(
            "{} markets and {} orders exceed the oracle scale (2 + 2)",
            p.markets.len(),
            p.orders.len()
        )));
    }
    if resolution == 0 {
        return Err(Error::OracleRefused("resolution must be positive".into()));
    }
    let (a, b) = (p.input(), p.output());
    let mut legs = Vec::new();
    for (idx, e) in p.markets.iter().enumerate() {
        let input = e.assets.iter().position(|&g| g == a);
        let output = e.assets.iter().position(|&g| g == b);
        match (input, output) {
            (Some(input), Some(output)) => legs.push(Leg::Market { idx, input, output }),
            _ => {
                return Err(Error::OracleRefused(format!(
                    "market {idx} is not a direct leg between assets {a} and {b}"
                )))
            }
        }
    }
    for (j, o) in p.orders.iter().enumerate() {
        if (o.input(), o.output()) != (a, b) {
            return Err(Error::OracleRefused(format!(
                "order {j} is not a direct leg between assets {a} and {b}"
            )));
        }
        legs.push(Leg::Order(j));
    }
    if legs.is_empty() {
        return Err(Error::NoFeasibleRoute {
            input: a,
            output: b,
        });
    }
    let count = compositions(resolution, legs.len());
    if count > MAX_COMPOSITIONS {
        return Err(Error::OracleRefused(format!(
            "{count:.3e} grid points exceed the oracle limit"
        )));
    }

    let s = p.budget();
    let unit = s / resolution as f64;
    // tabulate each leg once per grid multiple
    let table: Vec<Vec<f64>> = legs
        .iter()
        .map(|leg| {
            (0..=resolution)
                .map(|k| {
                    let x = unit * k as f64;
                    match *leg {
                        Leg::Market { idx, input, output } => p.markets[idx]
                            .market
                            .forward_exchange(input, output, x)
                            .expect("validated leg"),
                        Leg::Order(j) => p.orders[j].fill(x),
                    }
                })
                .collect()
        })
        .collect();

    let mut best = (f64::NEG_INFINITY, vec![0usize; legs.len()]);
    let mut split = vec![0usize; legs.len()];
    search(&table, resolution, 0, 0.0, &mut split, &mut best);

    let mut market_trades: Vec<MarketTrade> = p
        .markets
        .iter()
        .map(|e| MarketTrade::zero(e.market.n_assets()))
        .collect();
    let mut order_trades = vec![Trade2::default(); p.orders.len()];
    let mut psi = vec![0.0; p.n_assets];
    for (leg, &k) in legs.iter().zip(&best.1) {
        let x = unit * k as f64;
        let y = match *leg {
            Leg::Market { idx, input, output } => {
                let y = p.markets[idx].market.forward_exchange(input, output, x)?;
                market_trades[idx].tendered[input] = x;
                market_trades[idx].received[output] = y;
                y
            }
            Leg::Order(j) => {
                let y = p.orders[j].fill(x);
                order_trades[j] = Trade2::new(x, y);
                y
            }
        };
        psi[a] -= x;
        psi[b] += y;
    }
    Ok(RoutingSolution {
        utility_value: psi[b],
        // no dual bound is available from enumeration
        dual_value: f64::INFINITY,
        psi,
        market_trades,
        order_trades,
        status: Status::Optimal,
        nu: None,
        iterations: count as usize,
    })
}

fn compositions(n: usize, k: usize) -> f64 {
    // C(n + k − 1, k − 1)
    (1..k).fold(1.0, |acc, i| acc * (n + i) as f64 / i as f64)
}

fn search(
    table: &[Vec<f64>],
    left: usize,
    leg: usize,
    acc: f64,
    split: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    if leg + 1 == table.len() {
        split[leg] = left;
        let v = acc + table[leg][left];
        if v > best.0 {
            *best = (v, split.clone());
        }
        return;
    }
    for k in 0..=left {
        split[leg] = k;
        search(table, left - k, leg + 1, acc + table[leg][k], split, best);
    }
}
