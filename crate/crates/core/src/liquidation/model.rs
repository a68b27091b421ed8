use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Constant-product pool the inventory is sold into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoolRecord", into = "PoolRecord")]
pub struct PoolParams {
    pub r: f64,
    pub r_prime: f64,
    /// `L = √(R·R′)`.
    pub liquidity: f64,
    /// Upper and lower edge of the no-arbitrage band, in log-price units.
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// External reference price `p′`, in units of the output asset per unit sold.
    pub p_ext: f64,
}

impl PoolParams {
    /// Pool with the given reserves; the external price defaults to the pool price `R′/R`.
    pub fn new(r: f64, r_prime: f64, gamma_plus: f64, gamma_minus: f64) -> Result<Self> {
        Self::with_price(r, r_prime, gamma_plus, gamma_minus, r_prime / r)
    }

    pub fn with_price(
        r: f64,
        r_prime: f64,
        gamma_plus: f64,
        gamma_minus: f64,
        p_ext: f64,
    ) -> Result<Self> {
        if !(r.is_finite() && r > 0.0 && r_prime.is_finite() && r_prime > 0.0) {
            return invalid("pool reserves must be positive");
        }
        if !(gamma_plus >= 0.0 && gamma_minus >= 0.0) {
            return invalid("fee bounds must be nonnegative");
        }
        if !(p_ext.is_finite() && p_ext > 0.0) {
            return invalid("external price must be positive");
        }
        Ok(Self {
            r,
            r_prime,
            liquidity: (r * r_prime).sqrt(),
            gamma_plus,
            gamma_minus,
            p_ext,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRecord {
    r: f64,
    r_prime: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    #[serde(default)]
    p_ext: Option<f64>,
}

impl TryFrom<PoolRecord> for PoolParams {
    type Error = Error;

    fn try_from(p: PoolRecord) -> Result<Self> {
        let price = p.p_ext.unwrap_or(p.r_prime / p.r);
        PoolParams::with_price(p.r, p.r_prime, p.gamma_plus, p.gamma_minus, price)
    }
}

impl From<PoolParams> for PoolRecord {
    fn from(p: PoolParams) -> Self {
        PoolRecord {
            r: p.r,
            r_prime: p.r_prime,
            gamma_plus: p.gamma_plus,
            gamma_minus: p.gamma_minus,
            p_ext: Some(p.p_ext),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MispricingParams {
    pub mu: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl MispricingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return invalid("sigma must be finite and nonnegative");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid("dt must be positive");
        }
        if !self.mu.is_finite() {
            return invalid("mu must be finite");
        }
        Ok(())
    }

    /// `(μ − σ²/2)·dt`.
    pub fn drift(&self) -> f64 {
        (self.mu - 0.5 * self.sigma * self.sigma) * self.dt
    }

    /// `σ·√dt`.
    pub fn diffusion(&self) -> f64 {
        self.sigma * self.dt.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    /// `z′ = z*·exp(drift + diffusion·ε + J)`; zero is absorbing and the sign of
    /// `z*` is preserved.
    #[default]
    MultiplicativeLiteral,
    /// `z′ = z* + drift + diffusion·ε + J`.
    Additive,
}

/// Horizon, costs and discretization of the liquidation problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpConfig {
    pub horizon: usize,
    pub inventory: f64,
    pub gas: f64,
    pub inventory_cost: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_points")]
    pub n_inventory: usize,
    #[serde(default = "default_points")]
    pub n_mispricing: usize,
    #[serde(default = "default_actions")]
    pub n_actions: usize,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default)]
    pub dynamics_mode: DynamicsMode,
    /// Mispricing at the first block of simulated paths.
    #[serde(default)]
    pub z0: f64,
    /// Explicit mispricing grid; defaults to the fee band.
    #[serde(default)]
    pub z_bounds: Option<(f64, f64)>,
}

fn default_discount() -> f64 {
    0.01
}
fn default_points() -> usize {
    101
}
fn default_actions() -> usize {
    51
}
fn default_order() -> usize {
    9
}

impl MdpConfig {
    pub fn new(horizon: usize, inventory: f64, gas: f64, inventory_cost: f64) -> Self {
        Self {
            horizon,
            inventory,
            gas,
            inventory_cost,
            discount: default_discount(),
            n_inventory: default_points(),
            n_mispricing: default_points(),
            n_actions: default_actions(),
            quadrature_order: default_order(),
            dynamics_mode: DynamicsMode::default(),
            z0: 0.0,
            z_bounds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return invalid("horizon must be at least one block");
        }
        if !(self.inventory > 0.0 && self.inventory.is_finite()) {
            return invalid("inventory must be positive");
        }
        if !(self.gas >= 0.0 && self.inventory_cost >= 0.0) {
            return invalid("gas and inventory cost must be nonnegative");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return invalid("discount must lie in (0, 1]");
        }
        if self.n_inventory < 2
            || self.n_mispricing < 2
            || self.n_actions < 2
            || self.quadrature_order < 2
        {
            return invalid("grid sizes and quadrature order must be at least 2");
        }
        if !self.z0.is_finite() {
            return invalid("z0 must be finite");
        }
        Ok(())
    }

    /// Mispricing grid bounds. Every transition clamps to the fee band before
    /// anything else, so the band is exactly the set of values the value function
    /// is ever queried on; a grid that does not cover it is rejected.
    pub fn z_range(&self, pool: &PoolParams) -> Result<(f64, f64)> {
        let band = (-pool.gamma_minus, pool.gamma_plus);
        match self.z_bounds {
            None => Ok(band),
            Some((lo, hi)) if lo <= band.0 && hi >= band.1 && lo < hi => Ok((lo, hi)),
            Some((lo, hi)) => Err(Error::Config {
                message: format!(
                    "mispricing grid [{lo}, {hi}] does not cover the fee band [{}, {}]",
                    band.0, band.1
                ),
                suggested: Some(band),
            }),
        }
    }
}

/// Mispricing left after arbitrageurs trade the pool back inside the fee band.
pub fn clamp_mispricing(z: f64, gamma_plus: f64, gamma_minus: f64) -> f64 {
    if z > gamma_plus {
        gamma_plus
    } else if z < -gamma_minus {
        -gamma_minus
    } else {
        z
    }
}

/// Log price impact `−2·log(1 + Δ√p/L)` of selling `delta` into a
/// constant-product pool at price `p` with liquidity `l`.
pub fn jump(delta: f64, p: f64, l: f64) -> f64 {
    -2.0 * (delta * p.sqrt() / l).ln_1p()
}

/// One block of the mispricing process: clamp, then diffuse and apply the trade's jump.
pub fn step_mispricing(
    z: f64,
    delta: f64,
    eps: f64,
    params: &MispricingParams,
    pool: &PoolParams,
    mode: DynamicsMode,
) -> f64 {
    let zs = clamp_mispricing(z, pool.gamma_plus, pool.gamma_minus);
    let p = pool.p_ext * (-zs).exp();
    let shock = params.drift() + params.diffusion() * eps + jump(delta, p, pool.liquidity);
    apply_shock(zs, shock, mode)
}

#[inline]
pub(crate) fn apply_shock(zs: f64, shock: f64, mode: DynamicsMode) -> f64 {
    match mode {
        DynamicsMode::MultiplicativeLiteral => zs * shock.exp(),
        DynamicsMode::Additive => zs + shock,
    }
}

/// Output of selling `delta` into a fee-free constant-product pool with liquidity
/// `l` quoting price `p`, i.e. reserves `(L/√p, L√p)`.
pub fn exchange_at_price(delta: f64, p: f64, l: f64) -> f64 {
    let sp = p.sqrt();
    let r = l / sp;
    let rp = l * sp;
    // R′ − L²/(R+Δ) rearranged to avoid cancellation
    rp * delta / (r + delta)
}

/// Per-block reward: excess output from trading at the arbitrage-adjusted price
/// over trading at the external price, less gas and inventory carry. The
/// mispricing is the post-arbitrage value the trader acts on.
pub fn reward(
    inventory: f64,
    z: f64,
    delta: f64,
    cfg: &MdpConfig,
    pool: &PoolParams,
) -> Result<f64> {
    if delta > inventory || delta < 0.0 {
        return invalid(format!(
            "trade {delta} must lie between zero and the inventory {inventory}"
        ));
    }
    Ok(reward_unchecked(inventory, z, delta, cfg, pool))
}

#[inline]
pub(crate) fn reward_unchecked(
    inventory: f64,
    z: f64,
    delta: f64,
    cfg: &MdpConfig,
    pool: &PoolParams,
) -> f64 {
    let zs = clamp_mispricing(z, pool.gamma_plus, pool.gamma_minus);
    let l = pool.liquidity;
    let gas = if delta > 0.0 { cfg.gas } else { 0.0 };
    exchange_at_price(delta, pool.p_ext * (-zs).exp(), l) - exchange_at_price(delta, pool.p_ext, l)
        - gas
        - cfg.inventory_cost * inventory
}
