use serde::{Deserialize, Serialize};

use crate::cfmm::{LimitOrder, Market, MarketKind, Trade2};
use crate::error::{invalid, Result};

/// Strictly positive price vector over the global assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPrices {
    pub nu: Vec<f64>,
}

impl DualPrices {
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        if nu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("dual prices must be finite and strictly positive");
        }
        Ok(Self { nu })
    }
}

/// Trade against one market, in the market's local coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketTrade {
    pub tendered: Vec<f64>,
    pub received: Vec<f64>,
}

impl MarketTrade {
    pub fn zero(n: usize) -> Self {
        Self {
            tendered: vec![0.0; n],
            received: vec![0.0; n],
        }
    }

    pub fn net(&self, k: usize) -> f64 {
        self.received[k] - self.tendered[k]
    }

    pub fn scale(&mut self, f: f64) {
        self.tendered.iter_mut().for_each(|t| *t *= f);
        self.received.iter_mut().for_each(|r| *r *= f);
    }

    pub fn is_zero(&self) -> bool {
        self.tendered.iter().chain(&self.received).all(|v| *v == 0.0)
    }

    /// `φ(R + γ·tendered − received) − φ(R)`, relative to `φ(R)`; nonnegative
    /// for a feasible trade.
    pub fn invariant_slack(&self, m: &Market) -> Result<f64> {
        let g = m.fee();
        let after: Vec<f64> = m
            .reserves()
            .iter()
            .enumerate()
            .map(|(k, r)| r + g * self.tendered[k] - self.received[k])
            .collect();
        if after.iter().any(|r| *r < 0.0) {
            return Ok(-1.0);
        }
        let before = m.trading_function(m.reserves())?;
        Ok((m.trading_function(&after)? - before) / before)
    }
}

/// Best trade against `m` at prices `nu` (global), maximizing the value of
/// received minus tendered assets. Returns the trade and its value.
pub fn arbitrage_subproblem(
    m: &Market,
    assets: &[usize],
    nu: &DualPrices,
) -> Result<(MarketTrade, f64)> {
    if assets.len() != m.n_assets() {
        return invalid("index map length does not match market");
    }
    let prices: Vec<f64> = assets.iter().map(|&a| nu.nu[a]).collect();
    if prices.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return invalid("dual prices must be finite and strictly positive");
    }
    let trade = match m.kind() {
        MarketKind::ConstantProduct => product_arb(m, &prices),
        MarketKind::ConstantSum => sum_arb(m, &prices),
        MarketKind::GeometricMean { weights } => geometric_mean_arb(m, weights, &prices),
    };
    let value = (0..m.n_assets()).map(|k| prices[k] * trade.net(k)).sum();
    Ok((trade, value))
}

fn product_arb(m: &Market, nu: &[f64]) -> MarketTrade {
    let r = m.reserves();
    let g = m.fee();
    let k = r[0] * r[1];
    let mut t = MarketTrade::zero(2);
    for (i, o) in [(0usize, 1usize), (1, 0)] {
        // first-order condition ν_o·γk/(R_i')² = ν_i
        let ri = (k * g * nu[o] / nu[i]).sqrt();
        if ri > r[i] {
            t.tendered[i] = (ri - r[i]) / g;
            t.received[o] = (r[o] - k / ri).max(0.0);
            break;
        }
    }
    t
}

fn sum_arb(m: &Market, nu: &[f64]) -> MarketTrade {
    let r = m.reserves();
    let g = m.fee();
    let mut t = MarketTrade::zero(2);
    for (i, o) in [(0usize, 1usize), (1, 0)] {
        if g * nu[o] > nu[i] {
            t.tendered[i] = r[o] / g;
            t.received[o] = r[o];
            break;
        }
    }
    t
}

/// Post-trade reserve per coordinate for the invariant multiplier `eta`.
fn gm_reserve(r: f64, w: f64, nu: f64, g: f64, eta: f64) -> f64 {
    let recv = eta * w / nu;
    if recv < r {
        return recv;
    }
    let tend = eta * g * w / nu;
    if tend > r {
        tend
    } else {
        r
    }
}

fn geometric_mean_arb(m: &Market, w: &[f64], nu: &[f64]) -> MarketTrade {
    let r = m.reserves();
    let g = m.fee();
    let n = r.len();
    let target: f64 = w.iter().zip(r).map(|(w, r)| w * r.ln()).sum();
    let level = |eta: f64| -> f64 {
        (0..n)
            .map(|k| w[k] * gm_reserve(r[k], w[k], nu[k], g, eta).ln())
            .sum::<f64>()
            - target
    };
    // level(η) is nondecreasing; bracket the root in log η
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..n {
        let a = (r[k] * nu[k] / w[k]).ln();
        lo = lo.min(a);
        hi = hi.max(a - g.ln());
    }
    lo -= 1.0;
    hi += 1.0;
    while level(lo.exp()) > 0.0 {
        lo -= 1.0;
    }
    while level(hi.exp()) < 0.0 {
        hi += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-15 {
            break;
        }
        if level(mid.exp()) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the upper end keeps the invariant satisfied
    let eta = hi.exp();
    let mut t = MarketTrade::zero(n);
    for k in 0..n {
        let rk = gm_reserve(r[k], w[k], nu[k], g, eta);
        if rk < r[k] {
            t.received[k] = r[k] - rk;
        } else if rk > r[k] {
            t.tendered[k] = (rk - r[k]) / g;
        }
    }
    if t.tendered.iter().all(|v| *v == 0.0) {
        // rounding inside the no-trade region
        return MarketTrade::zero(n);
    }
    t
}

/// Best fill of a limit order at prices `nu`. Indifference fills the order fully.
pub fn limit_order_subproblem(o: &LimitOrder, nu: &DualPrices) -> Result<(Trade2, f64)> {
    let (a, b) = (nu.nu[o.input()], nu.nu[o.output()]);
    if !(a > 0.0 && b > 0.0) {
        return invalid("dual prices must be strictly positive");
    }
    if b * o.price() >= a {
        let t = Trade2::new(o.full_input(), o.volume());
        Ok((t, b * t.z2 - a * t.z1))
    } else {
        Ok((Trade2::default(), 0.0))
    }
}
