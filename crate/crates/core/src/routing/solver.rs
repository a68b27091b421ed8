use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::RoutingProblem;
use super::subproblem::{arbitrage_subproblem, DualPrices, MarketTrade};
use crate::cfmm::{MarketKind, Trade2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative duality gap accepted as optimal.
    pub tol: f64,
    /// Cap on Newton iterations summed over all smoothing stages.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSolution {
    /// Net trade per global asset.
    pub psi: Vec<f64>,
    pub market_trades: Vec<MarketTrade>,
    pub order_trades: Vec<Trade2>,
    pub utility_value: f64,
    /// Dual bound at the final prices; `dual_value − utility_value` is the gap.
    pub dual_value: f64,
    pub status: Status,
    /// Final dual prices; absent for solutions that carry no dual certificate.
    pub nu: Option<DualPrices>,
    pub iterations: usize,
}

/// Worst violations of the solution invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `max |Ψ − ΣAᵢΔᵢ − ΣBⱼzⱼ|`.
    pub reconstruction: f64,
    /// Most negative relative invariant slack over the markets.
    pub market: f64,
    /// Most negative limit-order constraint slack.
    pub order: f64,
    /// Most negative coordinate of `Ψ + h`.
    pub budget: f64,
}

impl RoutingSolution {
    pub fn residuals(&self, p: &RoutingProblem) -> Result<Residuals> {
        let mut psi = vec![0.0; p.n_assets];
        let mut market = 0.0f64;
        for (e, t) in p.markets.iter().zip(&self.market_trades) {
            for (k, &a) in e.assets.iter().enumerate() {
                psi[a] += t.net(k);
            }
            if !t.is_zero() {
                market = market.min(t.invariant_slack(&e.market)?);
            }
        }
        let mut order = 0.0f64;
        for (o, z) in p.orders.iter().zip(&self.order_trades) {
            psi[o.input()] -= z.z1;
            psi[o.output()] += z.z2;
            order = order
                .min(z.z1)
                .min(z.z2)
                .min(o.price() * z.z1 - z.z2)
                .min(o.volume() - z.z2);
        }
        let reconstruction = psi
            .iter()
            .zip(&self.psi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut budget = 0.0f64;
        for (k, v) in self.psi.iter().enumerate() {
            let h = if k == p.input() { p.budget() } else { 0.0 };
            budget = budget.min(v + h);
        }
        Ok(Residuals {
            reconstruction,
            market,
            order,
            budget,
        })
    }

    /// Output delivered by the limit orders.
    pub fn order_output(&self) -> f64 {
        self.order_trades.iter().map(|z| z.z2).sum()
    }

    pub fn gap(&self) -> f64 {
        self.dual_value - self.utility_value
    }
}

/// Which primal variable a piecewise-linear piece belongs to.
#[derive(Debug, Clone, Copy)]
enum Owner {
    Order(usize),
    /// Direction `dir` of a constant-sum market.
    Sum(usize, usize),
}

/// A piece whose trading set is a segment `θ·a`, `θ ∈ [0, 1]`.
#[derive(Debug, Clone)]
struct Linear {
    owner: Owner,
    /// Full-fill net trade, as (global asset, amount).
    a: Vec<(usize, f64)>,
}

impl Linear {
    fn value(&self, nu: &[f64]) -> f64 {
        self.a.iter().map(|&(k, v)| nu[k] * v).sum()
    }
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    /// Fill fraction of each linear piece.
    theta: Vec<f64>,
}

struct Model<'a> {
    p: &'a RoutingProblem,
    /// Markets with strictly convex trading sets, by index.
    smooth: Vec<usize>,
    linear: Vec<Linear>,
    /// Markets and orders excluded because they touch assets that cannot reach the output.
    active_market: Vec<bool>,
    active_order: Vec<bool>,
    free: Vec<usize>,
}

impl<'a> Model<'a> {
    fn new(p: &'a RoutingProblem) -> Result<Self> {
        let (input, output) = (p.input(), p.output());
        let mut active_market = vec![true; p.markets.len()];
        let mut active_order = vec![true; p.orders.len()];
        // assets that cannot be converted into the output are worthless; anything
        // touching them is dropped until the active set is stable
        loop {
            let mut sub = p.clone();
            sub.markets = p
                .markets
                .iter()
                .zip(&active_market)
                .filter(|(_, a)| **a)
                .map(|(m, _)| m.clone())
                .collect();
            sub.orders = p
                .orders
                .iter()
                .zip(&active_order)
                .filter(|(_, a)| **a)
                .map(|(o, _)| *o)
                .collect();
            let reach = reaches(&sub.edges(), output);
            let mut changed = false;
            for (i, m) in p.markets.iter().enumerate() {
                if active_market[i] && m.assets.iter().any(|&a| !reach[a]) {
                    active_market[i] = false;
                    changed = true;
                }
            }
            for (j, o) in p.orders.iter().enumerate() {
                if active_order[j] && !(reach[o.input()] && reach[o.output()]) {
                    active_order[j] = false;
                    changed = true;
                }
            }
            if !changed {
                if !reach[input] {
                    return Err(Error::NoFeasibleRoute { input, output });
                }
                break;
            }
        }

        let mut smooth = Vec::new();
        let mut linear = Vec::new();
        let mut live = vec![false; p.n_assets];
        live[input] = true;
        for (i, e) in p.markets.iter().enumerate() {
            if !active_market[i] {
                continue;
            }
            e.assets.iter().for_each(|&a| live[a] = true);
            match e.market.kind() {
                MarketKind::ConstantSum => {
                    let r = e.market.reserves();
                    let g = e.market.fee();
                    for (dir, (t, o)) in [(0usize, 1usize), (1, 0)].into_iter().enumerate() {
                        linear.push(Linear {
                            owner: Owner::Sum(i, dir),
                            a: vec![(e.assets[t], -r[o] / g), (e.assets[o], r[o])],
                        });
                    }
                }
                _ => smooth.push(i),
            }
        }
        for (j, o) in p.orders.iter().enumerate() {
            if !active_order[j] {
                continue;
            }
            live[o.input()] = true;
            live[o.output()] = true;
            linear.push(Linear {
                owner: Owner::Order(j),
                a: vec![(o.input(), -o.full_input()), (o.output(), o.volume())],
            });
        }
        let free = (0..p.n_assets)
            .filter(|&k| live[k] && k != output)
            .collect();
        Ok(Self {
            p,
            smooth,
            linear,
            active_market,
            active_order,
            free,
        })
    }

    fn smooth_trade(&self, i: usize, nu: &DualPrices) -> Result<(MarketTrade, f64)> {
        let e = &self.p.markets[i];
        arbitrage_subproblem(&e.market, &e.assets, nu)
    }

    /// Dual objective; `mu` smooths the linear pieces (`None` is exact).
    fn eval(&self, nu: &[f64], mu: Option<&[f64]>) -> Result<Eval> {
        let prices = DualPrices { nu: nu.to_vec() };
        let mut grad = vec![0.0; self.p.n_assets];
        grad[self.p.input()] += self.p.budget();
        let mut f = self.p.budget() * nu[self.p.input()];
        for &i in &self.smooth {
            let (t, v) = self.smooth_trade(i, &prices)?;
            f += v;
            for (k, &a) in self.p.markets[i].assets.iter().enumerate() {
                grad[a] += t.net(k);
            }
        }
        let mut theta = Vec::with_capacity(self.linear.len());
        for (l, piece) in self.linear.iter().enumerate() {
            let c = piece.value(nu);
            let th = match mu {
                None => {
                    if c > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Some(mu) => (c / mu[l]).clamp(0.0, 1.0),
            };
            f += match mu {
                None => c.max(0.0),
                Some(mu) => th * c - 0.5 * mu[l] * th * th,
            };
            for &(k, v) in &piece.a {
                grad[k] += th * v;
            }
            theta.push(th);
        }
        Ok(Eval { f, grad, theta })
    }

    /// Hessian of the smoothed dual in ν.
    fn hessian(&self, nu: &[f64], mu: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.p.n_assets;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for &i in &self.smooth {
            let assets = &self.p.markets[i].assets;
            for &col in assets {
                let step = 1e-6 * nu[col];
                let mut up = nu.to_vec();
                up[col] += step;
                let mut dn = nu.to_vec();
                dn[col] -= step;
                let (tu, _) = self.smooth_trade(i, &DualPrices { nu: up })?;
                let (td, _) = self.smooth_trade(i, &DualPrices { nu: dn })?;
                for (k, &row) in assets.iter().enumerate() {
                    h[(row, col)] += (tu.net(k) - td.net(k)) / (2.0 * step);
                }
            }
        }
        for (l, piece) in self.linear.iter().enumerate() {
            if theta[l] > 0.0 && theta[l] < 1.0 {
                for &(r, vr) in &piece.a {
                    for &(c, vc) in &piece.a {
                        h[(r, c)] += vr * vc / mu[l];
                    }
                }
            }
        }
        Ok(0.5 * (&h + h.transpose()))
    }

    fn initial_prices(&self) -> Vec<f64> {
        // value each asset by its best spot conversion toward the output
        let p = self.p;
        let mut nu = vec![0.0f64; p.n_assets];
        nu[p.output()] = 1.0;
        for _ in 0..p.n_assets {
            for (i, e) in p.markets.iter().enumerate() {
                if !self.active_market[i] {
                    continue;
                }
                for (a, &ga) in e.assets.iter().enumerate() {
                    for (b, &gb) in e.assets.iter().enumerate() {
                        if a == b || nu[gb] == 0.0 || ga == p.output() {
                            continue;
                        }
                        let rate = e.market.spot_rate(a, b).unwrap_or(0.0) / e.market.fee();
                        if nu[ga] == 0.0 {
                            nu[ga] = nu[gb] * rate;
                        }
                    }
                }
            }
            for (j, o) in p.orders.iter().enumerate() {
                if self.active_order[j] && nu[o.input()] == 0.0 && nu[o.output()] > 0.0 {
                    nu[o.input()] = nu[o.output()] * o.price();
                }
            }
        }
        nu.iter().map(|v| if *v > 0.0 { *v } else { 1.0 }).collect()
    }

    fn primal(&self, nu: &[f64], theta: &[f64]) -> Result<(Vec<MarketTrade>, Vec<Trade2>)> {
        let prices = DualPrices { nu: nu.to_vec() };
        let mut smooth = Vec::with_capacity(self.smooth.len());
        for &i in &self.smooth {
            smooth.push((i, self.smooth_trade(i, &prices)?.0));
        }
        let mut best = self.assemble(&smooth, theta);
        project(self.p, &mut best.0, &mut best.1);
        if let Some(th) = self.polish(nu, theta, &smooth) {
            let mut alt = self.assemble(&smooth, &th);
            project(self.p, &mut alt.0, &mut alt.1);
            let out = self.p.output();
            if net_trade(self.p, &alt.0, &alt.1)[out] > net_trade(self.p, &best.0, &best.1)[out] {
                best = alt;
            }
        }
        Ok(best)
    }

    fn assemble(&self, smooth: &[(usize, MarketTrade)], theta: &[f64]) -> (Vec<MarketTrade>, Vec<Trade2>) {
        let p = self.p;
        let mut mt: Vec<MarketTrade> = p
            .markets
            .iter()
            .map(|e| MarketTrade::zero(e.market.n_assets()))
            .collect();
        let mut ot = vec![Trade2::default(); p.orders.len()];
        for (i, t) in smooth {
            mt[*i] = t.clone();
        }
        for (piece, &th) in self.linear.iter().zip(theta) {
            match piece.owner {
                Owner::Order(j) => {
                    let o = &p.orders[j];
                    ot[j] = Trade2::new(th * o.full_input(), th * o.volume());
                }
                Owner::Sum(i, dir) => {
                    let r = p.markets[i].market.reserves();
                    let g = p.markets[i].market.fee();
                    let (t, o) = if dir == 0 { (0, 1) } else { (1, 0) };
                    mt[i].tendered[t] += th * r[o] / g;
                    mt[i].received[o] += th * r[o];
                }
            }
        }
        (mt, ot)
    }

    /// Fill fractions of the near-indifferent linear pieces chosen to close the
    /// asset balances. Under tiny smoothing those fractions are set by `c/μ` with
    /// `c` at rounding level, so they carry no information; at the optimum every
    /// priced asset balances exactly, which pins them down.
    fn polish(&self, nu: &[f64], theta: &[f64], smooth: &[(usize, MarketTrade)]) -> Option<Vec<f64>> {
        let active: Vec<usize> = (0..self.linear.len())
            .filter(|&l| {
                let scale: f64 = self.linear[l].a.iter().map(|&(k, v)| v.abs() * nu[k]).sum();
                (theta[l] > 0.0 && theta[l] < 1.0) || self.linear[l].value(nu).abs() <= 1e-9 * scale
            })
            .collect();
        if active.is_empty() {
            return None;
        }
        let row: Vec<Option<usize>> = (0..self.p.n_assets)
            .map(|k| self.free.iter().position(|&f| f == k))
            .collect();
        let mut jac = DMatrix::<f64>::zeros(self.free.len(), active.len());
        for (c, &l) in active.iter().enumerate() {
            for &(k, v) in &self.linear[l].a {
                if let Some(r) = row[k] {
                    jac[(r, c)] += v;
                }
            }
        }
        let svd = jac.svd(true, true);
        let mut th = theta.to_vec();
        for _ in 0..4 {
            let (mt, ot) = self.assemble(smooth, &th);
            let psi = net_trade(self.p, &mt, &ot);
            let resid = DVector::from_iterator(
                self.free.len(),
                self.free.iter().map(|&k| {
                    -(psi[k] + if k == self.p.input() { self.p.budget() } else { 0.0 })
                }),
            );
            let step = svd.solve(&resid, 1e-12).ok()?;
            for (c, &l) in active.iter().enumerate() {
                th[l] = (th[l] + step[c]).clamp(0.0, 1.0);
            }
        }
        Some(th)
    }
}

fn reaches(adj: &[Vec<usize>], target: usize) -> Vec<bool> {
    // reverse search from the target
    let n = adj.len();
    let mut rev = vec![Vec::new(); n];
    for (a, outs) in adj.iter().enumerate() {
        for &b in outs {
            rev[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    seen[target] = true;
    let mut stack = vec![target];
    while let Some(v) = stack.pop() {
        for &u in &rev[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

fn net_trade(p: &RoutingProblem, mt: &[MarketTrade], ot: &[Trade2]) -> Vec<f64> {
    let mut psi = vec![0.0; p.n_assets];
    for (e, t) in p.markets.iter().zip(mt) {
        for (k, &a) in e.assets.iter().enumerate() {
            psi[a] += t.net(k);
        }
    }
    for (o, z) in p.orders.iter().zip(ot) {
        psi[o.input()] -= z.z1;
        psi[o.output()] += z.z2;
    }
    psi
}

/// Removes small deficits `Ψ + h < 0` by shrinking every trade that tenders the
/// short asset. Shrinking a trade toward zero keeps it inside its (convex)
/// trading set; the lost receipts can open deficits downstream, so repeat.
fn project(p: &RoutingProblem, mt: &mut [MarketTrade], ot: &mut [Trade2]) {
    for _ in 0..1000 {
        let psi = net_trade(p, mt, ot);
        let mut tendered = vec![0.0; p.n_assets];
        for (e, t) in p.markets.iter().zip(mt.iter()) {
            for (k, &a) in e.assets.iter().enumerate() {
                tendered[a] += t.tendered[k];
            }
        }
        for (o, z) in p.orders.iter().zip(ot.iter()) {
            tendered[o.input()] += z.z1;
        }
        let mut factor = vec![1.0; p.n_assets];
        let mut any = false;
        for k in 0..p.n_assets {
            let h = if k == p.input() { p.budget() } else { 0.0 };
            let bal = psi[k] + h;
            if bal < 0.0 && tendered[k] > 0.0 {
                // a slightly stronger cut absorbs rounding in the rescaled sums
                factor[k] = ((tendered[k] + bal) / tendered[k] * (1.0 - 4.0 * f64::EPSILON)).max(0.0);
                any = true;
            }
        }
        if !any {
            return;
        }
        for (e, t) in p.markets.iter().zip(mt.iter_mut()) {
            let f = e
                .assets
                .iter()
                .enumerate()
                .filter(|(k, _)| t.tendered[*k] > 0.0)
                .map(|(_, &a)| factor[a])
                .fold(1.0, f64::min);
            if f < 1.0 {
                t.scale(f);
            }
        }
        for (o, z) in p.orders.iter().zip(ot.iter_mut()) {
            let f = factor[o.input()];
            if f < 1.0 && z.z1 > 0.0 {
                z.z1 *= f;
                z.z2 *= f;
            }
        }
    }
}

/// Maximizes the amount of the output asset obtainable for the budget by
/// minimizing the dual over log-prices, smoothing piecewise-linear trading sets
/// with a shrinking quadratic penalty.
pub fn solve_routing(p: &RoutingProblem, opts: SolveOptions) -> Result<RoutingSolution> {
    p.validate()?;
    let model = Model::new(p)?;
    let free = &model.free;
    let mut nu = model.initial_prices();
    let mut iterations = 0usize;
    let mut best: Option<RoutingSolution> = None;

    let stages: Vec<f64> = (2..=14).map(|e| 10f64.powi(-e)).collect();
    'stages: for &mu_rel in &stages {
        let mu: Vec<f64> = model
            .linear
            .iter()
            .map(|l| mu_rel * l.a.iter().map(|&(k, v)| v.abs() * nu[k]).sum::<f64>())
            .collect();
        loop {
            let ev = model.eval(&nu, Some(&mu))?;
            let gx: Vec<f64> = free.iter().map(|&k| nu[k] * ev.grad[k]).collect();
            let gnorm = gx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if gnorm <= 1e-14 * ev.f.abs().max(1.0) || free.is_empty() {
                break;
            }
            if iterations >= opts.max_iter {
                break 'stages;
            }
            iterations += 1;

            let h = model.hessian(&nu, &mu, &ev.theta)?;
            let m = free.len();
            let mut hx = DMatrix::<f64>::zeros(m, m);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    hx[(a, b)] = nu[i] * h[(i, j)] * nu[j];
                }
                hx[(a, a)] += gx[a];
            }
            let g = DVector::from_vec(gx.clone());
            let mut d = newton_direction(&hx, &g);
            let cap = d.amax();
            if cap > 2.0 {
                d *= 2.0 / cap;
            }
            let mut slope = g.dot(&d);
            if !(slope < 0.0) {
                d = -&g * (1.0 / gnorm);
                slope = g.dot(&d);
            }
            // Newton decrement below rounding of the objective
            if -slope <= 1e-15 * ev.f.abs().max(1.0) {
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-12 {
                let mut trial = nu.clone();
                for (a, &k) in free.iter().enumerate() {
                    trial[k] = nu[k] * (alpha * d[a]).exp();
                }
                let ft = model.eval(&trial, Some(&mu))?.f;
                if ft <= ev.f + 1e-4 * alpha * slope && ft < ev.f {
                    nu = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // no representable decrease left at this smoothing level
                break;
            }
        }
        if mu_rel <= 1e-8 || free.is_empty() {
            let ev = model.eval(&nu, Some(&mu))?;
            let sol = finish(&model, &nu, &ev.theta, iterations)?;
            let done = sol.gap() <= opts.tol * sol.utility_value.abs().max(1.0);
            let better = best
                .as_ref()
                .map_or(true, |b| sol.gap() < b.gap());
            if better {
                best = Some(sol);
            }
            if done {
                break;
            }
        }
    }
    let mut sol = match best {
        Some(s) => s,
        None => {
            let mu: Vec<f64> = vec![f64::MIN_POSITIVE; model.linear.len()];
            let ev = model.eval(&nu, Some(&mu))?;
            finish(&model, &nu, &ev.theta, iterations)?
        }
    };
    sol.iterations = iterations;
    sol.status = if sol.gap() <= opts.tol * sol.utility_value.abs().max(1.0) {
        Status::Optimal
    } else {
        Status::MaxIter
    };
    Ok(sol)
}

fn newton_direction(hx: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let m = hx.nrows();
    let scale = (0..m).map(|i| hx[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut lambda = 0.0;
    loop {
        let mut a = hx.clone();
        for i in 0..m {
            a[(i, i)] += lambda;
        }
        if let Some(ch) = a.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        lambda = if lambda == 0.0 { 1e-12 * scale } else { lambda * 10.0 };
        if lambda > 1e30 * scale {
            return -g.clone();
        }
    }
}

fn finish(model: &Model, nu: &[f64], theta: &[f64], iterations: usize) -> Result<RoutingSolution> {
    let p = model.p;
    let (market_trades, order_trades) = model.primal(nu, theta)?;
    let psi = net_trade(p, &market_trades, &order_trades);
    let dual_value = model.eval(nu, None)?.f;
    Ok(RoutingSolution {
        utility_value: psi[p.output()],
        psi,
        market_trades,
        order_trades,
        dual_value,
        status: Status::MaxIter,
        nu: Some(DualPrices { nu: nu.to_vec() }),
        iterations,
    })
}

