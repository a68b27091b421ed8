use serde::{Deserialize, Serialize};

use crate::cfmm::{LimitOrder, Market};
use crate::error::{invalid, Error, Result};

/// A market together with the global id of each of its local asset slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EntryRecord", into = "EntryRecord")]
pub struct MarketEntry {
    pub market: Market,
    pub assets: Vec<usize>,
}

impl MarketEntry {
    pub fn new(market: Market, assets: Vec<usize>) -> Result<Self> {
        if assets.len() != market.n_assets() {
            return invalid(format!(
                "market has {} assets but {} global ids were given",
                market.n_assets(),
                assets.len()
            ));
        }
        let mut seen = assets.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return invalid("a market cannot map two local slots to the same asset");
        }
        Ok(Self { market, assets })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    /// Tender up to `budget` of `input` and maximize the amount of `output` received.
    Liquidate {
        input: usize,
        output: usize,
        budget: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingProblem {
    pub n_assets: usize,
    pub markets: Vec<MarketEntry>,
    #[serde(default)]
    pub orders: Vec<LimitOrder>,
    pub utility: Utility,
}

impl RoutingProblem {
    pub fn new(
        n_assets: usize,
        markets: Vec<MarketEntry>,
        orders: Vec<LimitOrder>,
        utility: Utility,
    ) -> Result<Self> {
        let p = Self {
            n_assets,
            markets,
            orders,
            utility,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return invalid("n_assets must be positive");
        }
        for (i, m) in self.markets.iter().enumerate() {
            if let Some(&a) = m.assets.iter().find(|&&a| a >= self.n_assets) {
                return invalid(format!("market {i} references asset {a} >= n_assets"));
            }
        }
        for (j, o) in self.orders.iter().enumerate() {
            if o.input() >= self.n_assets || o.output() >= self.n_assets {
                return invalid(format!("order {j} references an asset >= n_assets"));
            }
        }
        let Utility::Liquidate {
            input,
            output,
            budget,
        } = self.utility;
        if input >= self.n_assets || output >= self.n_assets || input == output {
            return invalid("utility input/output must be distinct valid assets");
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return invalid(format!("budget must be finite and nonnegative, got {budget}"));
        }
        Ok(())
    }

    pub fn input(&self) -> usize {
        let Utility::Liquidate { input, .. } = self.utility;
        input
    }

    pub fn output(&self) -> usize {
        let Utility::Liquidate { output, .. } = self.utility;
        output
    }

    pub fn budget(&self) -> f64 {
        let Utility::Liquidate { budget, .. } = self.utility;
        budget
    }

    pub fn with_budget(&self, budget: f64) -> Self {
        let mut p = self.clone();
        let Utility::Liquidate { input, output, .. } = self.utility;
        p.utility = Utility::Liquidate {
            input,
            output,
            budget,
        };
        p
    }

    pub fn without_orders(&self) -> Self {
        Self {
            orders: Vec::new(),
            ..self.clone()
        }
    }

    /// Directed adjacency: every market links all of its assets both ways, every
    /// order links its input to its output.
    pub(crate) fn edges(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_assets];
        for m in &self.markets {
            for &a in &m.assets {
                for &b in &m.assets {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for o in &self.orders {
            adj[o.input()].push(o.output());
        }
        adj
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let p: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            message: format!("{}: {}", e.path(), e.inner()),
            suggested: None,
        })?;
        p.validate()?;
        Ok(p)
    }
}

// unknown keys are rejected by the inner market record
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryRecord {
    #[serde(flatten)]
    market: serde_json::Map<String, serde_json::Value>,
    assets: Vec<usize>,
}

impl TryFrom<EntryRecord> for MarketEntry {
    type Error = Error;

    fn try_from(r: EntryRecord) -> Result<Self> {
        let market: Market = serde_json::from_value(serde_json::Value::Object(r.market))
            .map_err(|e| Error::InvalidInput(format!("market: {e}")))?;
        MarketEntry::new(market, r.assets)
    }
}

impl From<MarketEntry> for EntryRecord {
    fn from(e: MarketEntry) -> Self {
        let serde_json::Value::Object(market) =
            serde_json::to_value(&e.market).expect("market serializes to an object")
        else {
            unreachable!("market serializes to an object")
        };
        EntryRecord {
            market,
            assets: e.assets,
        }
    }
}

/// Named problem instances shipped with the crate.
pub mod scenarios {
    use super::*;

    pub const PIGOU_JSON: &str = include_str!("../../scenarios/pigou.json");
    pub const TABLE1_JSON: &str = include_str!("../../scenarios/table1.json");

    /// One constant-product pool `(1, 4)` without fee next to a limit order at
    /// price 1 for 1 unit, both converting asset 0 into asset 1.
    pub fn pigou() -> RoutingProblem {
        RoutingProblem::from_json(PIGOU_JSON).expect("embedded pigou scenario is valid")
    }

    /// Three assets, five pools and two limit orders selling asset 2 for asset 0.
    pub fn table1() -> RoutingProblem {
        RoutingProblem::from_json(TABLE1_JSON).expect("embedded table1 scenario is valid")
    }

    pub fn by_name(name: &str) -> Option<RoutingProblem> {
        match name {
            "pigou" => Some(pigou()),
            "table1" => Some(table1()),
            _ => None,
        }
    }

    /// Pigou pool and order as standalone objects, for building the composed curve.
    pub fn pigou_parts() -> (Market, LimitOrder) {
        let p = pigou();
        (p.markets[0].market.clone(), p.orders[0])
    }
}
