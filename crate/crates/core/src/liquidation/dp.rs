use gauss_quad::GaussHermite;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{
    apply_shock, clamp_mispricing, jump, reward_unchecked, MdpConfig, MispricingParams, PoolParams,
};
use crate::error::{invalid, Result};

/// Uniform grid on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Lower cell index and weight of the upper neighbour, clamping to the ends.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let f = (x - self.lo) / self.step();
        if !(f > 0.0) {
            return (0, 0.0);
        }
        let last = (self.n - 1) as f64;
        if f >= last {
            return (self.n - 2, 1.0);
        }
        let i = f as usize;
        (i, f - i as f64)
    }

    #[inline]
    pub fn nearest(&self, x: f64) -> usize {
        let (i, w) = self.locate(x);
        if w >= 0.5 {
            i + 1
        } else {
            i
        }
    }
}

/// Optimal values on the `(t, I, z)` grid, row-major with `z` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub horizon: usize,
    pub inventory: Grid,
    pub mispricing: Grid,
    pub values: Vec<f64>,
}

/// Optimal action index on the same grid. Action `k` at inventory `I` sells
/// `I·k/(N_a − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub horizon: usize,
    pub n_actions: usize,
    pub inventory: Grid,
    pub mispricing: Grid,
    pub actions: Vec<u16>,
}

impl ValueFunction {
    #[inline]
    fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.inventory.n + i) * self.mispricing.n + j
    }

    pub fn at(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[self.index(t, i, j)]
    }

    /// Bilinear interpolation of `V_t` at `(I, z)`.
    pub fn interpolate(&self, t: usize, inventory: f64, z: f64) -> f64 {
        let slice = &self.values[self.index(t, 0, 0)..self.index(t + 1, 0, 0)];
        let (i, a) = self.inventory.locate(inventory);
        let (j, b) = self.mispricing.locate(z);
        bilinear(slice, self.mispricing.n, i, a, j, b)
    }
}

impl Policy {
    #[inline]
    fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.inventory.n + i) * self.mispricing.n + j
    }

    pub fn action(&self, t: usize, i: usize, j: usize) -> usize {
        self.actions[self.index(t, i, j)] as usize
    }

    /// Fraction of the inventory sold by action `k`.
    pub fn fraction(&self, k: usize) -> f64 {
        k as f64 / (self.n_actions - 1) as f64
    }

    /// Trade size stored at a grid point.
    pub fn trade(&self, t: usize, i: usize, j: usize) -> f64 {
        self.inventory.point(i) * self.fraction(self.action(t, i, j))
    }

    /// Trade for an off-grid state: the nearest grid point's sell fraction applied
    /// to the actual inventory.
    pub fn lookup(&self, t: usize, inventory: f64, z: f64) -> f64 {
        let i = self.inventory.nearest(inventory);
        let j = self.mispricing.nearest(z);
        (inventory * self.fraction(self.action(t, i, j))).min(inventory)
    }
}

#[inline]
fn bilinear(slice: &[f64], nz: usize, i: usize, a: f64, j: usize, b: f64) -> f64 {
    let row = |r: usize| {
        let v = &slice[r * nz + j..];
        if b == 0.0 {
            v[0]
        } else {
            v[0] + b * (v[1] - v[0])
        }
    };
    if a == 0.0 {
        row(i)
    } else {
        let lo = row(i);
        lo + a * (row(i + 1) - lo)
    }
}

/// Normal-expectation nodes: `E[f(ε)] = Σ wₖ f(εₖ)`.
pub(crate) fn normal_nodes(order: usize) -> Result<Vec<(f64, f64)>> {
    let gh = match GaussHermite::new(order) {
        Ok(gh) => gh,
        Err(e) => return invalid(format!("quadrature order {order}: {e}")),
    };
    let norm = std::f64::consts::PI.sqrt();
    Ok(gh
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
        .collect())
}

/// Finite-horizon backward induction with `V_T ≡ 0`.
pub fn value_iteration(
    cfg: &MdpConfig,
    pool: &PoolParams,
    params: &MispricingParams,
) -> Result<(ValueFunction, Policy)> {
    cfg.validate()?;
    params.validate()?;
    if cfg.n_actions > u16::MAX as usize {
        return invalid("too many actions");
    }
    let (zlo, zhi) = cfg.z_range(pool)?;
    let ig = Grid::new(0.0, cfg.inventory, cfg.n_inventory);
    let zg = Grid::new(zlo, zhi, cfg.n_mispricing);
    let nodes = normal_nodes(cfg.quadrature_order)?;
    let (ni, nz, na) = (ig.n, zg.n, cfg.n_actions);
    let last = (na - 1) as f64;
    let drift = params.drift();
    let diff = params.diffusion();

    // Transitions do not depend on t: for each (i, k, j) precompute the next
    // inventory cell and, per quadrature node, the next mispricing cell.
    struct Move {
        i: usize,
        a: f64,
        reward: f64,
        z: Vec<(usize, f64)>,
    }
    let moves: Vec<Vec<Move>> = (0..ni * nz)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / nz, ij % nz);
            let inv = ig.point(i);
            let zs = clamp_mispricing(zg.point(j), pool.gamma_plus, pool.gamma_minus);
            let price = pool.p_ext * (-zs).exp();
            let n_moves = if i == 0 { 1 } else { na };
            (0..n_moves)
                .map(|k| {
                    let delta = inv * k as f64 / last;
                    let base = drift + jump(delta, price, pool.liquidity);
                    let (ni_, a) = if k == 0 {
                        (i, 0.0)
                    } else {
                        let f = i as f64 * (1.0 - k as f64 / last);
                        let lo = (f.floor() as usize).min(ni - 1);
                        (lo, f - lo as f64)
                    };
                    Move {
                        i: ni_,
                        a: if a < 1e-12 { 0.0 } else { a },
                        reward: reward_unchecked(inv, zs, delta, cfg, pool),
                        z: nodes
                            .iter()
                            .map(|&(x, _)| {
                                zg.locate(apply_shock(zs, base + diff * x, cfg.dynamics_mode))
                            })
                            .collect(),
                    }
                })
                .collect()
        })
        .collect();

    let slice = ni * nz;
    let mut values = vec![0.0; (cfg.horizon + 1) * slice];
    let mut actions = vec![0u16; cfg.horizon * slice];
    for t in (0..cfg.horizon).rev() {
        let (head, tail) = values.split_at_mut((t + 1) * slice);
        let next = &tail[..slice];
        let cur = &mut head[t * slice..];
        let acts = &mut actions[t * slice..(t + 1) * slice];
        cur.par_iter_mut()
            .zip(acts.par_iter_mut())
            .zip(moves.par_iter())
            .for_each(|((v, act), mv)| {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (k, m) in mv.iter().enumerate() {
                    let mut ev = 0.0;
                    for (&(j, b), &(_, w)) in m.z.iter().zip(&nodes) {
                        ev += w * bilinear(next, nz, m.i, m.a, j, b);
                    }
                    let q = m.reward + cfg.discount * ev;
                    // strict: ties keep the smallest trade
                    if q > best {
                        best = q;
                        arg = k;
                    }
                }
                *v = best;
                *act = arg as u16;
            });
    }
    values.truncate(cfg.horizon * slice);
    Ok((
        ValueFunction {
            horizon: cfg.horizon,
            inventory: ig,
            mispricing: zg,
            values,
        },
        Policy {
            horizon: cfg.horizon,
            n_actions: na,
            inventory: ig,
            mispricing: zg,
            actions,
        },
    ))
}
