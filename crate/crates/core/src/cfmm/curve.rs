use crate::cfmm::{LimitOrder, Market};
use crate::error::Result;

/// Where a limit order enters and leaves the composed exchange curve, in input units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoints {
    /// Input at which the pool's marginal rate first falls to the limit price.
    /// `+∞` when the order never activates.
    pub delta1: f64,
    /// `delta1 + V₀/p₀`.
    pub delta2: f64,
}

impl Breakpoints {
    pub fn activates(&self) -> bool {
        self.delta1.is_finite()
    }
}

/// Locates the input at which `market`'s marginal rate reaches the order's price.
///
/// Returns `Δ₁ = 0` when the order already beats the pool at the margin, and an
/// infinite `Δ₁` when the rate never falls to the limit price inside the market's domain.
pub fn solve_breakpoint(
    market: &Market,
    input: usize,
    output: usize,
    order: &LimitOrder,
) -> Result<Breakpoints> {
    let p0 = order.price();
    let width = order.full_input();
    let rate = |d: f64| market.marginal_rate(input, output, d);

    if rate(0.0)? <= p0 {
        return Ok(Breakpoints {
            delta1: 0.0,
            delta2: width,
        });
    }

    let domain = market.input_domain(input, output);
    let mut lo = 0.0;
    let mut hi = market.reserves()[input].min(domain);
    loop {
        if rate(hi)? <= p0 {
            break;
        }
        if hi >= domain || hi > 1e300 {
            return Ok(Breakpoints {
                delta1: f64::INFINITY,
                delta2: f64::INFINITY,
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(domain);
    }
    // bisection on the nonincreasing marginal rate
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid)? > p0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta1 = 0.5 * (lo + hi);
    Ok(Breakpoints {
        delta1,
        delta2: delta1 + width,
    })
}

/// Forward exchange of a pool composed with one limit order on the same pair:
/// the pool curve up to `Δ₁`, a linear segment of slope `p₀` until the order is
/// exhausted at `Δ₂`, then the pool curve shifted right by `Δ₂ − Δ₁`.
#[derive(Debug, Clone)]
pub struct ModifiedExchangeCurve {
    market: Market,
    input: usize,
    output: usize,
    order: LimitOrder,
    breaks: Breakpoints,
}

impl ModifiedExchangeCurve {
    pub fn new(market: Market, input: usize, output: usize, order: LimitOrder) -> Result<Self> {
        let breaks = solve_breakpoint(&market, input, output, &order)?;
        Ok(Self {
            market,
            input,
            output,
            order,
            breaks,
        })
    }

    pub fn breakpoints(&self) -> Breakpoints {
        self.breaks
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn order(&self) -> &LimitOrder {
        &self.order
    }

    pub fn delta1(&self) -> f64 {
        self.breaks.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.breaks.delta2
    }

    fn base(&self, d: f64) -> Result<f64> {
        self.market.forward_exchange(self.input, self.output, d)
    }

    pub fn eval(&self, delta: f64) -> Result<f64> {
        let Breakpoints { delta1, delta2 } = self.breaks;
        if !delta1.is_finite() || delta <= delta1 {
            return self.base(delta);
        }
        let p0 = self.order.price();
        if delta < delta2 {
            Ok(self.base(delta1)? + p0 * (delta - delta1))
        } else {
            let width = self.order.full_input();
            Ok(self.base((delta - width).max(0.0))? + self.order.volume())
        }
    }
}

/// Composed curve value `G̃(Δ)`.
pub fn modified_forward_exchange(curve: &ModifiedExchangeCurve, delta: f64) -> Result<f64> {
    curve.eval(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_pool() -> Market {
        Market::product(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn breakpoint_of_unit_pool() {
        // oracle: g(Δ) = 1/(1+Δ)² = 1/2 at Δ = √2 − 1, bracketed by direct evaluation
        let m = unit_pool();
        let g = |d: f64| m.marginal_rate(0, 1, d).unwrap();
        let target = 2f64.sqrt() - 1.0;
        assert!(g(target - 1e-9) > 0.5 && g(target + 1e-9) < 0.5);

        let o = LimitOrder::new(0.5, 1.0, 0, 1).unwrap();
        let b = solve_breakpoint(&m, 0, 1, &o).unwrap();
        assert_relative_eq!(b.delta1, target, max_relative = 1e-10);
        assert_relative_eq!(b.delta2, target + 2.0, max_relative = 1e-10);
    }

    #[test]
    fn order_above_spot_is_used_first() {
        let m = unit_pool();
        let o = LimitOrder::new(2.0, 1.0, 0, 1).unwrap();
        let b = solve_breakpoint(&m, 0, 1, &o).unwrap();
        assert_eq!(b.delta1, 0.0);
        assert_eq!(b.delta2, 0.5);
        let c = ModifiedExchangeCurve::new(m, 0, 1, o).unwrap();
        assert_relative_eq!(c.eval(0.25).unwrap(), 0.5);
        assert_relative_eq!(c.eval(1.5).unwrap(), 1.0 + 0.5);
    }

    #[test]
    fn empty_order_is_a_no_op() {
        let m = unit_pool();
        let o = LimitOrder::new(0.5, 0.0, 0, 1).unwrap();
        let b = solve_breakpoint(&m, 0, 1, &o).unwrap();
        assert_eq!(b.delta1, b.delta2);
        let c = ModifiedExchangeCurve::new(m.clone(), 0, 1, o).unwrap();
        for d in [0.0, 0.3, 1.0, 4.0] {
            assert_relative_eq!(c.eval(d).unwrap(), m.forward_exchange(0, 1, d).unwrap());
        }
    }

    #[test]
    fn constant_sum_above_price_never_activates() {
        let m = Market::sum(10.0, 10.0, 0.99).unwrap();
        let o = LimitOrder::new(0.5, 3.0, 0, 1).unwrap();
        let b = solve_breakpoint(&m, 0, 1, &o).unwrap();
        assert!(!b.activates());
        let c = ModifiedExchangeCurve::new(m.clone(), 0, 1, o).unwrap();
        assert_eq!(c.eval(5.0).unwrap(), m.forward_exchange(0, 1, 5.0).unwrap());
    }

    #[test]
    fn curve_endpoints() {
        let c = ModifiedExchangeCurve::new(
            unit_pool(),
            0,
            1,
            LimitOrder::new(0.5, 1.0, 0, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(c.eval(0.0).unwrap(), 0.0);
        let g1 = unit_pool().forward_exchange(0, 1, c.delta1()).unwrap();
        assert_relative_eq!(c.eval(c.delta2()).unwrap(), g1 + 1.0, max_relative = 1e-12);
    }

    #[test]
    fn derivative_equals_limit_price_at_breakpoints() {
        let markets = [
            unit_pool(),
            Market::product(20.0, 50.0, 0.97).unwrap(),
            Market::geometric_mean(vec![3.0, 2.0, 1.0], vec![3.0, 0.2, 1.0], 0.98).unwrap(),
        ];
        for m in markets {
            let spot = m.spot_rate(0, 1).unwrap();
            let o = LimitOrder::new(0.4 * spot, 0.7, 0, 1).unwrap();
            let c = ModifiedExchangeCurve::new(m, 0, 1, o).unwrap();
            let h = 1e-6;
            for x in [c.delta1(), c.delta2()] {
                let d = (c.eval(x + h).unwrap() - c.eval(x - h).unwrap()) / (2.0 * h);
                assert!((d - o.price()).abs() < 1e-6, "slope {d} vs {}", o.price());
            }
        }
    }

    proptest! {
        #[test]
        fn composed_curve_is_continuous_and_concave(
            r0 in 0.5f64..50.0, r1 in 0.5f64..50.0, fee in 0.9f64..=1.0,
            frac in 0.05f64..1.5, vol in 0.0f64..20.0,
        ) {
            let m = Market::product(r0, r1, fee).unwrap();
            let p0 = frac * m.spot_rate(0, 1).unwrap();
            let c = ModifiedExchangeCurve::new(m, 0, 1, LimitOrder::new(p0, vol, 0, 1).unwrap()).unwrap();
            for x in [c.delta1(), c.delta2()] {
                if x > 1e-8 {
                    let jump = (c.eval(x * (1.0 + 1e-13)).unwrap() - c.eval(x * (1.0 - 1e-13)).unwrap()).abs();
                    prop_assert!(jump < 1e-9);
                }
            }
            let top = 2.0 * c.delta2() + r0;
            let n = 400;
            let h = top / n as f64;
            let mut prev = f64::INFINITY;
            for i in 0..n {
                let x = i as f64 * h;
                let slope = (c.eval(x + h).unwrap() - c.eval(x).unwrap()) / h;
                prop_assert!(slope <= prev + 1e-9 * prev.abs().max(1.0));
                prev = slope;
            }
        }
    }
}
