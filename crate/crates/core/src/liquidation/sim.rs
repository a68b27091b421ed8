use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dp::{value_iteration, Policy};
use super::model::{
    apply_shock, clamp_mispricing, exchange_at_price, jump, reward_unchecked, MdpConfig,
    MispricingParams, PoolParams,
};
use crate::error::{invalid, Result};

/// Monte Carlo paths of a liquidation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    /// Inventory before each block and after the last, `T + 1` entries per path.
    pub inventory: Vec<Vec<f64>>,
    /// Per-block MDP reward realized along each path.
    pub rewards: Vec<Vec<f64>>,
    /// Numeraire received per path, net of gas, including the forced sale of any
    /// inventory left at the horizon.
    pub output: Vec<f64>,
}

impl SimResult {
    pub fn mean_output(&self) -> f64 {
        mean(&self.output)
    }

    /// Mean inventory before block `t`.
    pub fn mean_inventory(&self, t: usize) -> f64 {
        mean(&self.inventory.iter().map(|p| p[t]).collect::<Vec<_>>())
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Generator for one path. Paths with the same index see the same shocks under
/// every strategy, which is what makes strategy comparisons low-variance.
pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub fn simulate_policy(
    policy: &Policy,
    cfg: &MdpConfig,
    pool: &PoolParams,
    params: &MispricingParams,
    n_paths: usize,
    seed: u64,
) -> Result<SimResult> {
    cfg.validate()?;
    params.validate()?;
    if policy.horizon != cfg.horizon
        || policy.inventory.n != cfg.n_inventory
        || policy.mispricing.n != cfg.n_mispricing
        || policy.n_actions != cfg.n_actions
        || policy.inventory.hi != cfg.inventory
    {
        return invalid("policy shape does not match the configuration");
    }
    let l = pool.liquidity;
    let paths: Vec<_> = (0..n_paths)
        .into_par_iter()
        .map(|n| {
            let mut rng = path_rng(seed, n);
            let mut inv = cfg.inventory;
            let mut z = cfg.z0;
            let mut out = 0.0;
            let mut inventory = Vec::with_capacity(cfg.horizon + 1);
            let mut rewards = Vec::with_capacity(cfg.horizon);
            for t in 0..cfg.horizon {
                let eps: f64 = rng.sample(StandardNormal);
                inventory.push(inv);
                let zs = clamp_mispricing(z, pool.gamma_plus, pool.gamma_minus);
                let delta = policy.lookup(t, inv, zs);
                let price = pool.p_ext * (-zs).exp();
                rewards.push(reward_unchecked(inv, zs, delta, cfg, pool));
                if delta > 0.0 {
                    out += exchange_at_price(delta, price, l) - cfg.gas;
                }
                inv = (inv - delta).max(0.0);
                z = apply_shock(
                    zs,
                    params.drift() + params.diffusion() * eps + jump(delta, price, l),
                    cfg.dynamics_mode,
                );
            }
            inventory.push(inv);
            if inv > 0.0 {
                let zs = clamp_mispricing(z, pool.gamma_plus, pool.gamma_minus);
                out += exchange_at_price(inv, pool.p_ext * (-zs).exp(), l) - cfg.gas;
            }
            (inventory, rewards, out)
        })
        .collect();
    let mut res = SimResult {
        seed,
        inventory: Vec::with_capacity(n_paths),
        rewards: Vec::with_capacity(n_paths),
        output: Vec::with_capacity(n_paths),
    };
    for (i, r, o) in paths {
        res.inventory.push(i);
        res.rewards.push(r);
        res.output.push(o);
    }
    Ok(res)
}

/// Output of the discrete TWAMM on each path: `D/T` sold every block at the
/// arbitrage-adjusted pool price, one gas fee up front.
pub fn twamm_outputs(
    cfg: &MdpConfig,
    pool: &PoolParams,
    params: &MispricingParams,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if cfg.horizon == 0 {
        return invalid("horizon must be at least one block");
    }
    params.validate()?;
    let piece = cfg.inventory / cfg.horizon as f64;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|n| {
            let mut rng = path_rng(seed, n);
            let mut z = cfg.z0;
            let mut out = 0.0;
            for _ in 0..cfg.horizon {
                let eps: f64 = rng.sample(StandardNormal);
                let zs = clamp_mispricing(z, pool.gamma_plus, pool.gamma_minus);
                let price = pool.p_ext * (-zs).exp();
                out += price * piece;
                z = apply_shock(
                    zs,
                    params.drift() + params.diffusion() * eps + jump(piece, price, pool.liquidity),
                    cfg.dynamics_mode,
                );
            }
            out - cfg.gas
        })
        .collect())
}

/// Monte Carlo estimate of the TWAMM's expected output.
pub fn twamm_value(
    cfg: &MdpConfig,
    pool: &PoolParams,
    params: &MispricingParams,
    n_paths: usize,
    seed: u64,
) -> Result<f64> {
    if n_paths == 0 {
        return invalid("at least one path is required");
    }
    Ok(mean(&twamm_outputs(cfg, pool, params, n_paths, seed)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sigma: f64,
    pub mean_excess: f64,
    pub stderr: f64,
}

/// Mean and standard error of optimal-policy output minus TWAMM output, path by
/// path on shared shocks, for each volatility.
pub fn compare_vs_twamm(
    sigma_grid: &[f64],
    cfg: &MdpConfig,
    pool: &PoolParams,
    params: &MispricingParams,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Comparison>> {
    if n_paths < 2 {
        return invalid("at least two paths are needed for a standard error");
    }
    if let Some(s) = sigma_grid.iter().find(|s| !(**s >= 0.0)) {
        return invalid(format!("volatility {s} must be nonnegative"));
    }
    sigma_grid
        .iter()
        .map(|&sigma| {
            let params = MispricingParams { sigma, ..*params };
            let (_, policy) = value_iteration(cfg, pool, &params)?;
            let sim = simulate_policy(&policy, cfg, pool, &params, n_paths, seed)?;
            let twamm = twamm_outputs(cfg, pool, &params, n_paths, seed)?;
            let diff: Vec<f64> = sim.output.iter().zip(&twamm).map(|(a, b)| a - b).collect();
            let m = mean(&diff);
            let var = diff.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n_paths - 1) as f64;
            Ok(Comparison {
                sigma,
                mean_excess: m,
                stderr: (var / n_paths as f64).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liquidation::model::DynamicsMode;
    use approx::assert_relative_eq;

    fn cfg() -> MdpConfig {
        let mut c = MdpConfig::new(20, 100.0, 2.0, 0.5);
        c.n_inventory = 21;
        c.n_mispricing = 21;
        c.n_actions = 11;
        c.quadrature_order = 5;
        c
    }

    fn pool() -> PoolParams {
        PoolParams::new(1e5, 5000.0 * 1e5, 0.003, 0.003).unwrap()
    }

    fn params(sigma: f64) -> MispricingParams {
        MispricingParams { mu: 0.0, sigma, dt: 1.0 }
    }

    #[test]
    fn idle_policy_keeps_inventory() {
        let mut c = cfg();
        c.gas = 1e12;
        c.inventory_cost = 0.0;
        let (_, policy) = value_iteration(&c, &pool(), &params(0.002)).unwrap();
        let sim = simulate_policy(&policy, &c, &pool(), &params(0.002), 5, 1).unwrap();
        for path in &sim.inventory[..] {
            assert!(path[..c.horizon].iter().all(|&x| x == 100.0));
        }
    }

    #[test]
    fn paths_are_monotone_and_reproducible() {
        for mode in [DynamicsMode::MultiplicativeLiteral, DynamicsMode::Additive] {
            let c = MdpConfig { dynamics_mode: mode, z0: 0.001, ..cfg() };
            let (_, policy) = value_iteration(&c, &pool(), &params(0.002)).unwrap();
            let a = simulate_policy(&policy, &c, &pool(), &params(0.002), 40, 9).unwrap();
            let b = simulate_policy(&policy, &c, &pool(), &params(0.002), 40, 9).unwrap();
            assert_eq!(a, b);
            for path in &a.inventory {
                assert_eq!(path.len(), c.horizon + 1);
                assert!(path.windows(2).all(|w| w[1] <= w[0] && w[1] >= 0.0));
            }
        }
    }

    #[test]
    fn noiseless_additive_paths_coincide() {
        let c = MdpConfig { dynamics_mode: DynamicsMode::Additive, ..cfg() };
        let (_, policy) = value_iteration(&c, &pool(), &params(0.0)).unwrap();
        let sim = simulate_policy(&policy, &c, &pool(), &params(0.0), 6, 3).unwrap();
        assert!(sim.inventory.iter().all(|p| p == &sim.inventory[0]));
        assert!(sim.output.iter().all(|&o| o == sim.output[0]));
    }

    #[test]
    fn rejects_mismatched_policy() {
        let (_, policy) = value_iteration(&cfg(), &pool(), &params(0.1)).unwrap();
        let other = MdpConfig { horizon: 5, ..cfg() };
        assert!(simulate_policy(&policy, &other, &pool(), &params(0.1), 3, 0).is_err());
    }

    #[test]
    fn twamm_examples() {
        // constant price on a practically infinite pool
        let deep = PoolParams::new(1e18, 5000.0 * 1e18, 0.003, 0.003).unwrap();
        let c = cfg();
        let v = twamm_value(&c, &deep, &params(0.0), 3, 0).unwrap();
        assert_relative_eq!(v, 5000.0 * 100.0 - 2.0, max_relative = 1e-12);

        let empty = MdpConfig { inventory: 0.0, ..c };
        assert_eq!(twamm_value(&empty, &pool(), &params(1.0), 3, 0).unwrap(), -2.0);

        let noisy = params(0.004);
        let add = MdpConfig { dynamics_mode: DynamicsMode::Additive, ..c };
        let base = twamm_value(&add, &pool(), &noisy, 50, 5).unwrap();
        let dearer = twamm_value(&MdpConfig { gas: 7.5, ..add }, &pool(), &noisy, 50, 5).unwrap();
        assert!(dearer < base);
        assert_relative_eq!(base - dearer, 5.5, max_relative = 1e-9);
    }

    #[test]
    fn comparison_is_reproducible() {
        let c = MdpConfig { dynamics_mode: DynamicsMode::Additive, ..cfg() };
        let a = compare_vs_twamm(&[0.0, 0.003], &c, &pool(), &params(0.0), 20, 4).unwrap();
        let b = compare_vs_twamm(&[0.0, 0.003], &c, &pool(), &params(0.0), 20, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].stderr, 0.0);
        assert!(a[0].mean_excess <= 0.0);
        assert!(compare_vs_twamm(&[-1.0], &c, &pool(), &params(0.0), 20, 4).is_err());
    }
}
