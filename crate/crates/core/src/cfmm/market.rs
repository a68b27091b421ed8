use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Trading-function family of a market.
#[derive(Debug, Clone, PartialEq)]
pub enum MarketKind {
    /// `φ(R) = R₀·R₁`.
    ConstantProduct,
    /// `φ(R) = ∏ Rᵢ^{wᵢ}`.
    GeometricMean { weights: Vec<f64> },
    /// `φ(R) = R₀ + R₁`.
    ConstantSum,
}

/// A constant function market maker: trading function, reserves and fee `γ ∈ (0, 1]`.
///
/// A trade tendering `Δ` of one asset and receiving `Δ'` of another is accepted when
/// `φ(R + γΔ·e_in − Δ'·e_out) ≥ φ(R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarketRecord", into = "MarketRecord")]
pub struct Market {
    kind: MarketKind,
    reserves: Vec<f64>,
    fee: f64,
}

impl Market {
    pub fn new(kind: MarketKind, reserves: Vec<f64>, fee: f64) -> Result<Self> {
        let expected = match &kind {
            MarketKind::ConstantProduct | MarketKind::ConstantSum => 2,
            MarketKind::GeometricMean { weights } => {
                if weights.len() < 2 {
                    return invalid("geometric mean market needs at least two weights");
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return invalid("geometric mean weights must be strictly positive");
                }
                weights.len()
            }
        };
        if reserves.len() != expected {
            return invalid(format!(
                "market expects {expected} reserves, got {}",
                reserves.len()
            ));
        }
        if reserves.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return invalid("reserves must be strictly positive");
        }
        if !(fee > 0.0 && fee <= 1.0) {
            return invalid(format!("fee must lie in (0, 1], got {fee}"));
        }
        Ok(Self {
            kind,
            reserves,
            fee,
        })
    }

    pub fn product(r0: f64, r1: f64, fee: f64) -> Result<Self> {
        Self::new(MarketKind::ConstantProduct, vec![r0, r1], fee)
    }

    pub fn sum(r0: f64, r1: f64, fee: f64) -> Result<Self> {
        Self::new(MarketKind::ConstantSum, vec![r0, r1], fee)
    }

    pub fn geometric_mean(weights: Vec<f64>, reserves: Vec<f64>, fee: f64) -> Result<Self> {
        Self::new(MarketKind::GeometricMean { weights }, reserves, fee)
    }

    pub fn kind(&self) -> &MarketKind {
        &self.kind
    }

    pub fn reserves(&self) -> &[f64] {
        &self.reserves
    }

    pub fn fee(&self) -> f64 {
        self.fee
    }

    pub fn n_assets(&self) -> usize {
        self.reserves.len()
    }

    /// Evaluates the trading function at an arbitrary reserve vector.
    pub fn trading_function(&self, reserves: &[f64]) -> Result<f64> {
        if reserves.len() != self.n_assets() {
            return invalid(format!(
                "reserve vector has length {}, market has {} assets",
                reserves.len(),
                self.n_assets()
            ));
        }
        if reserves.iter().any(|r| !(*r >= 0.0)) {
            return invalid("reserves must be nonnegative");
        }
        Ok(match &self.kind {
            MarketKind::ConstantProduct => reserves[0] * reserves[1],
            MarketKind::ConstantSum => reserves[0] + reserves[1],
            MarketKind::GeometricMean { weights } => weights
                .iter()
                .zip(reserves)
                .map(|(w, r)| r.powf(*w))
                .product(),
        })
    }

    fn check_pair(&self, input: usize, output: usize) -> Result<()> {
        let n = self.n_assets();
        if input >= n || output >= n {
            return invalid(format!(
                "asset index out of range ({input}, {output}) for a {n}-asset market"
            ));
        }
        if input == output {
            return invalid("input and output asset must differ");
        }
        Ok(())
    }

    /// Output received for tendering `delta` of `input`, holding the invariant fixed.
    ///
    /// Constant-sum output is capped at the output reserve.
    pub fn forward_exchange(&self, input: usize, output: usize, delta: f64) -> Result<f64> {
        self.check_pair(input, output)?;
        if !(delta >= 0.0) || delta.is_nan() {
            return invalid(format!("trade size must be nonnegative, got {delta}"));
        }
        if delta == 0.0 {
            return Ok(0.0);
        }
        let r_in = self.reserves[input];
        let r_out = self.reserves[output];
        let g = self.fee;
        Ok(match &self.kind {
            MarketKind::ConstantProduct => {
                if delta.is_infinite() {
                    r_out
                } else {
                    g * r_out * delta / (r_in + g * delta)
                }
            }
            MarketKind::ConstantSum => (g * delta).min(r_out),
            MarketKind::GeometricMean { weights } => {
                geometric_mean_output(weights[input], weights[output], r_in, r_out, g * delta)
            }
        })
    }

    /// Marginal forward exchange rate `g(Δ) = dG/dΔ`.
    pub fn marginal_rate(&self, input: usize, output: usize, delta: f64) -> Result<f64> {
        self.check_pair(input, output)?;
        if !(delta >= 0.0) || !delta.is_finite() {
            return invalid(format!("trade size must be finite and nonnegative, got {delta}"));
        }
        let r_in = self.reserves[input];
        let r_out = self.reserves[output];
        let g = self.fee;
        match &self.kind {
            MarketKind::ConstantProduct => {
                let d = r_in + g * delta;
                Ok(g * r_in * r_out / (d * d))
            }
            MarketKind::ConstantSum => {
                let cap = r_out / g;
                if delta > cap {
                    Err(Error::Domain {
                        size: delta,
                        max: cap,
                    })
                } else {
                    Ok(g)
                }
            }
            MarketKind::GeometricMean { weights } => {
                // implicit differentiation of the invariant
                let out = self.forward_exchange(input, output, delta)?;
                Ok(weights[input] / weights[output] * g * (r_out - out) / (r_in + g * delta))
            }
        }
    }

    /// Marginal rate of an infinitesimal trade.
    pub fn spot_rate(&self, input: usize, output: usize) -> Result<f64> {
        self.marginal_rate(input, output, 0.0)
    }

    /// Largest input for which the marginal rate is defined.
    pub fn input_domain(&self, input: usize, output: usize) -> f64 {
        match self.kind {
            MarketKind::ConstantSum => self.reserves[output] / self.fee,
            _ => {
                let _ = input;
                f64::INFINITY
            }
        }
    }
}

/// Solves `w_out·ln(1 − Δ'/R_out) + w_in·ln(1 + x/R_in) = 0` for `Δ'` by bisection,
/// where `x = γΔ` is the effective input.
fn geometric_mean_output(w_in: f64, w_out: f64, r_in: f64, r_out: f64, x: f64) -> f64 {
    let gain = w_in * (x / r_in).ln_1p();
    if gain.is_infinite() {
        return r_out;
    }
    let residual = |out: f64| w_out * (-out / r_out).ln_1p() + gain;
    let (mut lo, mut hi) = (0.0_f64, r_out);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Product,
    GeometricMean,
    Sum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketRecord {
    kind: KindTag,
    reserves: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    fee: f64,
}

impl TryFrom<MarketRecord> for Market {
    type Error = Error;

    fn try_from(rec: MarketRecord) -> Result<Self> {
        let kind = match (rec.kind, rec.weights) {
            (KindTag::Product, None) => MarketKind::ConstantProduct,
            (KindTag::Sum, None) => MarketKind::ConstantSum,
            (KindTag::GeometricMean, Some(weights)) => MarketKind::GeometricMean { weights },
            (KindTag::GeometricMean, None) => {
                return invalid("geometric_mean market requires `weights`")
            }
            (_, Some(_)) => return invalid("`weights` is only valid for geometric_mean markets"),
        };
        Market::new(kind, rec.reserves, rec.fee)
    }
}

impl From<Market> for MarketRecord {
    fn from(m: Market) -> Self {
        let (kind, weights) = match m.kind {
            MarketKind::ConstantProduct => (KindTag::Product, None),
            MarketKind::ConstantSum => (KindTag::Sum, None),
            MarketKind::GeometricMean { weights } => (KindTag::GeometricMean, Some(weights)),
        };
        MarketRecord {
            kind,
            reserves: m.reserves,
            weights,
            fee: m.fee,
        }
    }
}
