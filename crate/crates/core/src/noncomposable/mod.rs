//! Splitting a trade between a constant-product pool and a hook whose fill is
//! uncertain, under a mean-variance criterion.
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance on the hook trade for every 1-D search in this module.
pub const DELTA_TOL: f64 = 1e-9;

/// Output of the composable constant-product pool for input `delta`.
pub fn g1(delta: f64, r: f64, r_prime: f64) -> f64 {
    // R′ − R·R′/(R+Δ), without the cancellation
    r_prime * delta / (r + delta)
}

/// Quoted output of the hook: `2Δ − (R_n′/R_n)·Δ^{1+α}`.
pub fn g2(delta: f64, r_n: f64, r_n_prime: f64, alpha: f64) -> f64 {
    2.0 * delta - r_n_prime / r_n * delta.powf(1.0 + alpha)
}

/// Fill-risk variance as a function of the hook trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceForm {
    Constant { beta: f64 },
    Linear { beta: f64 },
    Superlinear { beta: f64, gamma: f64 },
    Quadratic { beta: f64 },
}

impl VarianceForm {
    pub fn beta(&self) -> f64 {
        match *self {
            VarianceForm::Constant { beta }
            | VarianceForm::Linear { beta }
            | VarianceForm::Superlinear { beta, .. }
            | VarianceForm::Quadratic { beta } => beta,
        }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        match self {
            VarianceForm::Constant { .. } => VarianceForm::Constant { beta },
            VarianceForm::Linear { .. } => VarianceForm::Linear { beta },
            VarianceForm::Superlinear { gamma, .. } => VarianceForm::Superlinear { beta, gamma },
            VarianceForm::Quadratic { .. } => VarianceForm::Quadratic { beta },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VarianceForm::Constant { .. } => "constant",
            VarianceForm::Linear { .. } => "linear",
            VarianceForm::Superlinear { .. } => "superlinear",
            VarianceForm::Quadratic { .. } => "quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta() >= 0.0 && self.beta().is_finite()) {
            return invalid("beta must be finite and nonnegative");
        }
        if let VarianceForm::Superlinear { gamma, .. } = *self {
            if !(gamma > 1.0 && gamma < 2.0) {
                return invalid(format!("superlinear exponent {gamma} must lie in (1, 2)"));
            }
        }
        Ok(())
    }
}

pub fn variance(delta: f64, form: &VarianceForm) -> f64 {
    match *form {
        VarianceForm::Constant { beta } => beta,
        VarianceForm::Linear { beta } => beta * delta,
        VarianceForm::Superlinear { beta, gamma } => beta * delta.powf(gamma),
        VarianceForm::Quadratic { beta } => beta * delta * delta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HookScenario {
    /// Total amount to trade.
    pub d: f64,
    /// Constant-product reserves `(R, R′)`.
    pub cpmm: (f64, f64),
    /// Hook reserves `(R_n, R_n′)`.
    pub hook: (f64, f64),
    pub alpha: f64,
    pub variance: VarianceForm,
    pub lambda: f64,
}

impl Default for HookScenario {
    fn default() -> Self {
        Self {
            d: 100.0,
            cpmm: (100.0, 100.0),
            hook: (100.0, 100.0),
            alpha: 0.1,
            variance: VarianceForm::Linear { beta: 1.0 },
            lambda: 1.0,
        }
    }
}

impl HookScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return invalid("total trade must be positive");
        }
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.cpmm.0) && pos(self.cpmm.1) && pos(self.hook.0) && pos(self.hook.1)) {
            return invalid("reserves must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return invalid(format!("alpha {} must lie in [0, 1]", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid("lambda must be finite and nonnegative");
        }
        self.variance.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            message: format!("{}: {}", e.path(), e.inner()),
            suggested: None,
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Combined deterministic output with `delta` routed through the hook.
    pub fn total_output(&self, delta: f64) -> f64 {
        g1(self.d - delta, self.cpmm.0, self.cpmm.1)
            + g2(delta, self.hook.0, self.hook.1, self.alpha)
    }

    pub fn objective(&self, delta: f64) -> f64 {
        self.total_output(delta) - self.lambda * variance(delta, &self.variance)
    }
}

/// Maximizer of a concave function on `[lo, hi]`, to within `DELTA_TOL`.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > DELTA_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the search interval shrinks onto an endpoint only approximately
    [lo, mid, hi]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::NEG_INFINITY), |best, (x, v)| if v > best.1 { (x, v) } else { best })
        .0
}

/// Optimal hook trade and the objective it attains.
pub fn mean_variance_solve(s: &HookScenario) -> Result<(f64, f64)> {
    s.validate()?;
    // search on the Δ-dependent part only, so a constant variance cannot perturb
    // the comparisons through rounding
    let v0 = variance(0.0, &s.variance);
    let delta = golden_max(
        |x| s.total_output(x) - s.lambda * (variance(x, &s.variance) - v0),
        0.0,
        s.d,
    );
    Ok((delta, s.objective(delta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub tau: f64,
    pub delta_star: f64,
    pub variance_star: f64,
    pub feasible: bool,
}

/// Least-variance hook trade reaching each target output. Variance never
/// decreases in the hook trade, so the answer is the smallest trade on the
/// target's superlevel set.
pub fn efficient_frontier(s: &HookScenario, tau_grid: &[f64]) -> Result<Vec<FrontierPoint>> {
    s.validate()?;
    if let Some(t) = tau_grid.iter().find(|t| !t.is_finite()) {
        return invalid(format!("target return {t} must be finite"));
    }
    let peak = golden_max(|x| s.total_output(x), 0.0, s.d);
    let best = s.total_output(peak);
    let base = s.total_output(0.0);
    Ok(tau_grid
        .iter()
        .map(|&tau| {
            let (delta, feasible) = if tau <= base {
                (0.0, true)
            } else if tau > best {
                (f64::NAN, false)
            } else {
                // output rises on [0, peak]; keep `hi` feasible
                let (mut lo, mut hi) = (0.0, peak);
                while hi - lo > DELTA_TOL {
                    let mid = 0.5 * (lo + hi);
                    if s.total_output(mid) >= tau {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                (hi, true)
            };
            FrontierPoint {
                tau,
                delta_star: delta,
                variance_star: if feasible {
                    variance(delta, &s.variance)
                } else {
                    f64::NAN
                },
                feasible,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub variance_form: &'static str,
    pub delta_star: f64,
    pub objective: f64,
}

/// Optimal hook trade over an `(α, β)` grid, rows ordered by α then β.
pub fn mean_variance_sweep(s: &HookScenario, alphas: &[f64], betas: &[f64]) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha, beta)| {
            let sc = HookScenario {
                alpha,
                variance: s.variance.with_beta(beta),
                ..*s
            };
            let (delta_star, objective) = mean_variance_solve(&sc)?;
            Ok(SweepRow {
                alpha,
                beta,
                variance_form: sc.variance.name(),
                delta_star,
                objective,
            })
        })
        .collect()
}
