use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A (tendered, received) pair against a two-asset venue.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Trade2 {
    pub z1: f64,
    pub z2: f64,
}

impl Trade2 {
    pub fn new(z1: f64, z2: f64) -> Self {
        Self { z1, z2 }
    }
}

/// Standing order offering up to `volume` of `output` at no worse than `price`
/// units of `output` per unit of `input`.
///
/// Only the buy side is materialised; see [`LimitOrder::from_sell`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrderRecord", into = "OrderRecord")]
pub struct LimitOrder {
    price: f64,
    volume: f64,
    input: usize,
    output: usize,
}

impl LimitOrder {
    pub fn new(price: f64, volume: f64, input: usize, output: usize) -> Result<Self> {
        if !(price.is_finite() && price > 0.0) {
            return invalid(format!("limit price must be positive, got {price}"));
        }
        if !(volume.is_finite() && volume >= 0.0) {
            return invalid(format!("limit volume must be nonnegative, got {volume}"));
        }
        if input == output {
            return invalid("limit order input and output asset must differ");
        }
        Ok(Self {
            price,
            volume,
            input,
            output,
        })
    }

    /// A sell order giving away `volume` of `sold` for at least `price` units of
    /// `bought` each, expressed from the router's side: tender `bought`, receive
    /// `sold` at `1/price`.
    pub fn from_sell(price: f64, volume: f64, sold: usize, bought: usize) -> Result<Self> {
        if !(price.is_finite() && price > 0.0) {
            return invalid(format!("limit price must be positive, got {price}"));
        }
        Self::new(1.0 / price, volume, bought, sold)
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn output(&self) -> usize {
        self.output
    }

    /// Input needed to exhaust the order.
    pub fn full_input(&self) -> f64 {
        self.volume / self.price
    }

    /// Output obtained by tendering `input` against this order alone.
    pub fn fill(&self, input: f64) -> f64 {
        (self.price * input.max(0.0)).min(self.volume)
    }

    /// Membership in `{p₀z₁ − z₂ ≥ 0, z₂ ≤ V₀, z ≥ 0}`.
    pub fn contains(&self, t: Trade2) -> bool {
        t.z1 >= 0.0 && t.z2 >= 0.0 && self.price * t.z1 - t.z2 >= 0.0 && t.z2 <= self.volume
    }
}

/// Tests whether `t` splits into per-order trades each feasible for its order.
///
/// The Minkowski sum of the trapezoids is `{z₁ ≥ 0, 0 ≤ z₂ ≤ F(z₁)}` where `F` is the
/// best total output for input `z₁`, i.e. a fractional knapsack filled best price first.
pub fn minkowski_contains(orders: &[LimitOrder], t: Trade2, tol: f64) -> Result<bool> {
    let Some(first) = orders.first() else {
        return Ok(t.z1.abs() <= tol && t.z2.abs() <= tol);
    };
    if orders
        .iter()
        .any(|o| o.input != first.input || o.output != first.output)
    {
        return Err(Error::InvalidInput(
            "minkowski composition requires orders on the same asset pair".into(),
        ));
    }
    if t.z1 < -tol || t.z2 < -tol {
        return Ok(false);
    }
    Ok(t.z2 <= best_fill(orders, t.z1.max(0.0)) + tol)
}

/// Maximum output obtainable from `orders` (same pair) for a total input.
pub fn best_fill(orders: &[LimitOrder], input: f64) -> f64 {
    let mut sorted: Vec<&LimitOrder> = orders.iter().collect();
    sorted.sort_by(|a, b| b.price.total_cmp(&a.price));
    let mut left = input;
    let mut out = 0.0;
    for o in sorted {
        if left <= 0.0 {
            break;
        }
        let used = left.min(o.full_input());
        out += if used == o.full_input() {
            o.volume
        } else {
            o.price * used
        };
        left -= used;
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderRecord {
    price: f64,
    volume: f64,
    input: usize,
    output: usize,
}

impl TryFrom<OrderRecord> for LimitOrder {
    type Error = Error;

    fn try_from(r: OrderRecord) -> Result<Self> {
        LimitOrder::new(r.price, r.volume, r.input, r.output)
    }
}

impl From<LimitOrder> for OrderRecord {
    fn from(o: LimitOrder) -> Self {
        OrderRecord {
            price: o.price,
            volume: o.volume,
            input: o.input,
            output: o.output,
        }
    }
}
